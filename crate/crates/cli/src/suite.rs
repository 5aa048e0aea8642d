//! The invariant suite run by `roughflow verify`.
//!
//! Each criterion is a pure function of the run seed. Randomness comes from the
//! named sub-streams in [`crate::seeds`], ensembles are evaluated with rayon and
//! collected in index order, so reports are reproducible byte for byte.

use std::time::{Duration, Instant};

use anyhow::{anyhow, ensure, Result};
use rand::Rng;
use rayon::prelude::*;
use roughflow_core::controlled::ControlledPath;
use roughflow_core::cutoff::{
    cutoff_chi, solve_cutoff_radius, CutoffConfig, LinearConstant, TruncatedNonlinearity,
};
use roughflow_core::integrator::{local_error_probe, rough_convolution, OrderProbe};
use roughflow_core::manifold::{
    extract_graph, invariance_defect, lp_fixed_point, DriverFamily, LPConfig, ManifoldContext,
};
use roughflow_core::math;
use roughflow_core::nonlinearity::{Nonlinearity, ScalarMap, Term};
use roughflow_core::rough_driver::{HolderNorms, RoughPath, TimeGrid};
use roughflow_core::solver::{cocycle_eval, solve_global, solve_local, Equation, SolveConfig};
use roughflow_core::spectral::{Coefficients, SpectralOperator};

use crate::config::{smooth_lift, DriverKind, SmoothComponent};
use crate::report::{Check, Criterion};
use crate::seeds;

const CHEN_TOL: f64 = 1e-10;
const ROUGH_INTEGRAL_TOL: f64 = 1e-6;
const PATH_INTEGRAL_TOL: f64 = 1e-8;
const ORDER_SLACK: f64 = 0.15;
const SMOOTHING_SPREAD: f64 = 0.10;
const EXPONENT_TOL: f64 = 0.1;
const RK4_TOL: f64 = 1e-5;
const CONTRACTION_TOL: f64 = 0.55;
const LP_ITERATION_CAP: usize = 25;
const CLASSICAL_GRAPH_TOL: f64 = 1e-4;

/// Chen audit of a user-supplied driver file, computed by the caller.
#[derive(Debug, Clone)]
pub struct DriverFileAudit {
    pub label: String,
    pub defect: std::result::Result<f64, String>,
}

#[derive(Debug, Clone)]
pub struct SuiteOptions {
    pub seed: u64,
    pub chen_seeds: usize,
    pub driver_file: Option<DriverFileAudit>,
}

impl SuiteOptions {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            chen_seeds: 100,
            driver_file: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Timed {
    pub criterion: Criterion,
    pub elapsed: Duration,
}

/// Run every criterion in order.
pub fn run(opts: &SuiteOptions) -> Vec<Timed> {
    let s = opts.seed;
    let jobs: Vec<Box<dyn Fn() -> Criterion + '_>> = vec![
        Box::new(|| chen_relation(s, opts.chen_seeds, opts.driver_file.as_ref())),
        Box::new(|| rough_integral_oracle(s)),
        Box::new(|| local_error_order(s)),
        Box::new(|| semigroup_estimates(s)),
        Box::new(|| solver_correctness(s)),
        Box::new(|| cocycle_property(s)),
        Box::new(|| gap_and_contraction(s)),
        Box::new(|| manifold_correctness(s)),
        Box::new(|| cutoff_semantics(s)),
        Box::new(|| controlled_increment_bound(s)),
    ];
    jobs.iter()
        .map(|job| {
            let start = Instant::now();
            let criterion = job();
            Timed {
                criterion,
                elapsed: start.elapsed(),
            }
        })
        .collect()
}

fn criterion(id: &str, title: &str, body: impl FnOnce() -> Result<Vec<Check>>) -> Criterion {
    let checks = body().unwrap_or_else(|e| vec![Check::error("aborted", e)]);
    Criterion::new(id, title, checks)
}

/// Largest value, NaN-propagating.
fn worst(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, |a: f64, b| {
        if a.is_nan() || b.is_nan() {
            f64::NAN
        } else {
            a.max(b)
        }
    })
}

fn probe_rng(seed: u64, tag: &str) -> impl Rng {
    math::rng_for(
        seeds::substream(seeds::substream(seed, seeds::PROBES), tag),
        0,
    )
}

/// `a t + b t² + c sin(f t + φ)` per component.
pub fn random_components(rng: &mut impl Rng, dim: usize) -> Vec<SmoothComponent> {
    (0..dim)
        .map(|_| SmoothComponent {
            poly: vec![
                0.0,
                rng.random_range(-1.0..1.0),
                rng.random_range(-0.5..0.5),
            ],
            sin: vec![[
                rng.random_range(0.2..0.8),
                rng.random_range(1.0..5.0),
                rng.random_range(0.0..std::f64::consts::TAU),
            ]],
        })
        .collect()
}

pub fn random_antisymmetric(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    let mut a = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in i + 1..dim {
            let v = rng.random_range(-2.0..2.0);
            a[i * dim + j] = v;
            a[j * dim + i] = -v;
        }
    }
    a
}

// ---------------------------------------------------------------- C1

pub fn chen_relation(seed: u64, n_seeds: usize, file: Option<&DriverFileAudit>) -> Criterion {
    criterion("C1", "Chen relation for every driver constructor", || {
        let grid = TimeGrid::new(0.0, 1.0, 257)?;
        let defects: Vec<[f64; 3]> = (0..n_seeds as u64)
            .into_par_iter()
            .map(|i| {
                let s = seeds::member(seed, seeds::DRIVER, i);
                let mut rng = math::rng_for(s, 1);
                let comps = random_components(&mut rng, 2);
                let area = random_antisymmetric(&mut rng, 2);
                let audit = |p: Result<RoughPath>| p.map(|p| p.chen_defect()).unwrap_or(f64::NAN);
                [
                    audit(RoughPath::build_bm_lift(s, grid, 2, 8, 0.45).map_err(Into::into)),
                    audit(smooth_lift(&comps, grid, 8, 0.5)),
                    audit(RoughPath::pure_area_path(&area, 2, grid, 0.5).map_err(Into::into)),
                ]
            })
            .collect();
        let mut checks: Vec<Check> = ["bm", "smooth", "pure-area"]
            .iter()
            .enumerate()
            .map(|(k, name)| {
                Check::at_most(
                    format!("max Chen defect, {name}, {n_seeds} seeds"),
                    worst(defects.iter().map(|d| d[k])),
                    CHEN_TOL,
                )
            })
            .collect();
        if let Some(f) = file {
            checks.push(match &f.defect {
                Ok(d) => Check::at_most(format!("Chen defect of {}", f.label), *d, CHEN_TOL),
                Err(e) => Check::error(format!("driver file {}", f.label), e),
            });
        }
        Ok(checks)
    })
}

// ---------------------------------------------------------------- C2

fn map_pick(i: usize) -> ScalarMap {
    [
        ScalarMap::Sin,
        ScalarMap::Tanh,
        ScalarMap::SatCubic,
        ScalarMap::SatSquare,
        ScalarMap::Identity,
    ][i % 5]
}

/// Integrand `Y_j = c_j φ_j(w^{π_j})` for one mode and `d` columns.
struct ScalarIntegrand {
    coeff: Vec<f64>,
    maps: Vec<ScalarMap>,
    source: Vec<usize>,
}

impl ScalarIntegrand {
    fn random(rng: &mut impl Rng, d: usize) -> Self {
        Self {
            coeff: (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
            maps: (0..d).map(|_| map_pick(rng.random_range(0..5))).collect(),
            source: (0..d).map(|_| rng.random_range(0..d)).collect(),
        }
    }

    fn eval(&self, w: &[f64]) -> Vec<f64> {
        (0..self.coeff.len())
            .map(|j| self.coeff[j] * self.maps[j].value(w[self.source[j]]))
            .collect()
    }

    fn controlled(&self, p: &RoughPath) -> Result<ControlledPath> {
        let (n, d) = (p.grid().len(), p.dim());
        let mut y = Vec::with_capacity(n * d);
        let mut yp = vec![0.0; n * d * d];
        for i in 0..n {
            let w = p.value(i);
            y.extend(self.eval(&w));
            for j in 0..d {
                let l = self.source[j];
                yp[(i * d + j) * d + l] = self.coeff[j] * self.maps[j].derivative(1, w[l]);
            }
        }
        Ok(ControlledPath::new(*p.grid(), 1, d, d, y, yp, 0.0, 0.0)?)
    }

    /// Trapezoid Riemann–Stieltjes sum of `∫_s^t Y(w_u)·dw_u` on `steps` cells.
    fn riemann_stieltjes(&self, comps: &[SmoothComponent], s: f64, t: f64, steps: usize) -> f64 {
        let h = (t - s) / steps as f64;
        let at = |u: f64| comps.iter().map(|c| c.eval(u)).collect::<Vec<f64>>();
        let mut w0 = at(s);
        let mut y0 = self.eval(&w0);
        let mut acc = 0.0;
        for i in 1..=steps {
            let w1 = at(s + i as f64 * h);
            let y1 = self.eval(&w1);
            for j in 0..w0.len() {
                acc += 0.5 * (y0[j] + y1[j]) * (w1[j] - w0[j]);
            }
            w0 = w1;
            y0 = y1;
        }
        acc
    }
}

pub fn rough_integral_oracle(seed: u64) -> Criterion {
    criterion(
        "C2",
        "rough integral against Riemann-Stieltjes quadrature",
        || {
            let op = SpectralOperator::new(vec![0.0])?;
            let grid = TimeGrid::new(0.0, 1.0, 2049)?;
            let cases: Vec<Result<(f64, f64)>> = (0..20u64)
                .into_par_iter()
                .map(|i| {
                    let mut rng = probe_rng(seed, &format!("rough-integral/{i}"));
                    let d = 2;
                    let comps = random_components(&mut rng, d);
                    let integrand = ScalarIntegrand::random(&mut rng, d);
                    let p = smooth_lift(&comps, grid, 8, 0.5)?;
                    let y = integrand.controlled(&p)?;
                    let (si, ti) = (
                        rng.random_range(0..512usize),
                        rng.random_range(1536..=2048usize),
                    );
                    let mut err = 0.0f64;
                    for (a, b) in [(0, 2048), (si, ti)] {
                        let (s, t) = (grid.time(a), grid.time(b));
                        let r = rough_convolution(&op, &y, &p, s, t, 5e-7, 14)?;
                        let oracle = integrand.riemann_stieltjes(&comps, s, t, 1 << 18);
                        err = err.max((r.value[0] - oracle).abs());
                    }
                    // ∫ w¹ dw¹ on the same driver
                    let n = grid.len();
                    let mut wy = Vec::with_capacity(n * d);
                    let mut wyp = vec![0.0; n * d * d];
                    for i in 0..n {
                        wy.extend([p.value(i)[0], 0.0]);
                        wyp[i * d * d] = 1.0;
                    }
                    let wcp = ControlledPath::new(grid, 1, d, d, wy, wyp, 0.0, 0.0)?;
                    let r =
                        rough_convolution(&op, &wcp, &p, grid.time(si), grid.time(ti), 1e-12, 14)?;
                    let (ws, wt) = (p.value(si)[0], p.value(ti)[0]);
                    Ok((err, (r.value[0] - 0.5 * (wt * wt - ws * ws)).abs()))
                })
                .collect();
            let cases = cases.into_iter().collect::<Result<Vec<_>>>()?;
            Ok(vec![
                Check::at_most(
                    "max |rough − quadrature|, 20 cases",
                    worst(cases.iter().map(|c| c.0)),
                    ROUGH_INTEGRAL_TOL,
                ),
                Check::at_most(
                    "max |∫w dw − (w_t² − w_s²)/2|",
                    worst(cases.iter().map(|c| c.1)),
                    PATH_INTEGRAL_TOL,
                ),
            ])
        },
    )
}

// ---------------------------------------------------------------- C3

/// `(Y_k, Y′_k) = (c_k sin(w + k), c_k cos(w + k))` with `c_k = 1/(1+k)`.
fn sine_integrand(op: &SpectralOperator, p: &RoughPath) -> Result<ControlledPath> {
    let (n, m) = (p.grid().len(), op.n_modes());
    let mut y = Vec::with_capacity(n * m);
    let mut yp = Vec::with_capacity(n * m);
    for i in 0..n {
        let w = p.value(i)[0];
        for k in 0..m {
            let c = 1.0 / (1.0 + k as f64);
            y.push(c * (w + k as f64).sin());
            yp.push(c * (w + k as f64).cos());
        }
    }
    Ok(ControlledPath::new(
        *p.grid(),
        m,
        1,
        1,
        y,
        yp,
        p.gamma() / 2.0,
        0.0,
    )?)
}

#[derive(Debug, Clone)]
pub struct OrderRun {
    pub label: String,
    pub gamma: f64,
    pub probe: OrderProbe,
}

/// Local-error exponents for every `(driver kind, γ)` pair on `[0, 1]`.
pub fn order_runs(
    seed: u64,
    gammas: &[f64],
    drivers: &[DriverKind],
    beta: f64,
    n_points: usize,
) -> Result<Vec<OrderRun>> {
    let op = SpectralOperator::preset_parabolic(1, 2.5, 4)?;
    let grid = TimeGrid::new(0.0, 1.0, n_points)?;
    let mut jobs = Vec::new();
    for (di, kind) in drivers.iter().enumerate() {
        for &gamma in gammas {
            jobs.push((di as u64, *kind, gamma));
        }
    }
    jobs.into_par_iter()
        .map(|(di, kind, gamma)| {
            let s = seeds::member(seed, seeds::DRIVER, 1000 + di);
            let p = match kind {
                DriverKind::Bm => RoughPath::build_bm_lift(s, grid, 1, 4, gamma)?,
                DriverKind::Smooth => smooth_lift(
                    &random_components(&mut math::rng_for(s, 1), 1),
                    grid,
                    4,
                    gamma,
                )?,
                other => {
                    return Err(anyhow!(
                        "order probe needs a bm or smooth driver, got {other:?}"
                    ))
                }
            };
            let probe = local_error_probe(&op, &sine_integrand(&op, &p)?, &p, beta)?;
            let label = format!(
                "{} γ={gamma}",
                if kind == DriverKind::Bm {
                    "bm"
                } else {
                    "smooth"
                }
            );
            Ok(OrderRun {
                label,
                gamma,
                probe,
            })
        })
        .collect()
}

pub fn order_checks(runs: &[OrderRun], beta: f64, slack: f64) -> Vec<Check> {
    runs.iter()
        .map(|r| {
            Check::at_least(
                format!("local error exponent, {}", r.label),
                r.probe.exponent,
                3.0 * r.gamma - beta - slack,
            )
        })
        .collect()
}

pub fn local_error_order(seed: u64) -> Criterion {
    criterion("C3", "local error order of the compensated sum", || {
        let runs = order_runs(
            seed,
            &[0.4, 0.5],
            &[DriverKind::Smooth, DriverKind::Bm],
            0.0,
            4097,
        )?;
        Ok(order_checks(&runs, 0.0, ORDER_SLACK))
    })
}

// ---------------------------------------------------------------- C4

fn geometric(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}

pub fn semigroup_estimates(seed: u64) -> Criterion {
    criterion(
        "C4",
        "semigroup smoothing and time-regularity estimates",
        || {
            let op = SpectralOperator::preset_parabolic(1, 2.5, 2048)?;
            let grids: Vec<Vec<f64>> = [32, 64, 128]
                .iter()
                .map(|&n| geometric(1e-4, 1e-1, n))
                .collect();
            let mut checks = Vec::new();
            for (alpha, beta) in [(0.5, 0.0), (1.0, 0.0), (0.75, 0.25)] {
                let consts: Vec<f64> = grids
                    .iter()
                    .map(|ts| op.smoothing_constant(ts, alpha, beta))
                    .collect();
                let lo = consts.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = worst(consts.iter().copied());
                let spread = if lo > 0.0 && hi.is_finite() {
                    (hi - lo) / lo
                } else {
                    f64::NAN
                };
                checks.push(Check::at_most(
                    format!("smoothing constant spread, α={alpha} β={beta}"),
                    spread,
                    SMOOTHING_SPREAD,
                ));
                // a random input never beats the operator constant
                let mut rng = probe_rng(seed, &format!("smoothing/{alpha}/{beta}"));
                let x = Coefficients(
                    (0..op.n_modes())
                        .map(|k| rng.random_range(-1.0..1.0) / (1.0 + k as f64))
                        .collect(),
                );
                let ratio = op.smoothing_check(&grids[2], alpha, beta, &x) / consts[2];
                checks.push(Check::at_most(
                    format!("random input / constant, α={alpha} β={beta}"),
                    ratio,
                    1.0 + 1e-12,
                ));
            }
            let ts = geometric(1e-5, 1e-3, 48);
            for gt in [0.25, 0.5, 0.75] {
                let fit = op
                    .fit_difference_exponent(&ts, gt)
                    .ok_or_else(|| anyhow!("regression failed"))?;
                checks.push(Check::at_most(
                    format!("|fitted exponent − {gt}|"),
                    (fit.slope - gt).abs(),
                    EXPONENT_TOL,
                ));
            }
            Ok(checks)
        },
    )
}

// ---------------------------------------------------------------- C5

fn diagonal(modes: usize, coeff: f64, map: ScalarMap) -> Result<Nonlinearity> {
    let terms = (0..modes)
        .map(|k| Term {
            out_mode: k,
            out_col: 0,
            in_mode: k,
            coeff,
            map,
        })
        .collect();
    Ok(Nonlinearity::terms(modes, 1, terms)?)
}

/// Classical RK4 for `y′ = λy + c·y·ẇ(t)`.
fn rk4_linear_noise(
    lambda: f64,
    c: f64,
    w_dot: impl Fn(f64) -> f64,
    y0: f64,
    t1: f64,
    steps: usize,
) -> f64 {
    let rhs = |t: f64, y: f64| lambda * y + c * y * w_dot(t);
    let h = t1 / steps as f64;
    let mut y = y0;
    for i in 0..steps {
        let t = i as f64 * h;
        let k1 = rhs(t, y);
        let k2 = rhs(t + h / 2.0, y + h / 2.0 * k1);
        let k3 = rhs(t + h / 2.0, y + h / 2.0 * k2);
        let k4 = rhs(t + h, y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    y
}

pub fn solver_correctness(seed: u64) -> Criterion {
    criterion(
        "C5",
        "solver: free orbit, linear oracle, Chasles, mild residual",
        || {
            let mut checks = Vec::new();

            let op = SpectralOperator::preset_parabolic(1, 2.5, 4)?;
            let free = Equation::new(
                op.clone(),
                Nonlinearity::zero(4, 1),
                Nonlinearity::zero(4, 2),
            )?;
            let p = RoughPath::build_bm_lift(
                seeds::member(seed, seeds::DRIVER, 2000),
                TimeGrid::new(0.0, 2.0, 257)?,
                2,
                16,
                0.45,
            )?;
            let xi = [0.3, -1.0, 0.5, 2.0];
            let traj = solve_global(&free, &xi, &p, 2.0, &SolveConfig::for_gamma(0.45))?;
            let dev = worst(traj.samples().iter().flat_map(|(t, y)| {
                let f = op.factors(*t);
                (0..4)
                    .map(move |k| (y[k] - f[k] * xi[k]).abs())
                    .collect::<Vec<_>>()
            }));
            checks.push(Check::at_most(
                "f = g = 0: max |y − S_t ξ|",
                dev,
                f64::EPSILON * 2.0,
            ));

            let (lambda, c) = (-0.5, 0.8);
            let w = |t: f64| 0.5 * (3.0 * t).sin() + 0.3 * t;
            let w_dot = |t: f64| 1.5 * (3.0 * t).cos() + 0.3;
            let comps = [SmoothComponent {
                poly: vec![0.0, 0.3],
                sin: vec![[0.5, 3.0, 0.0]],
            }];
            debug_assert!((comps[0].eval(0.7) - w(0.7)).abs() < 1e-15);
            let p = smooth_lift(&comps, TimeGrid::new(0.0, 1.0, 1025)?, 8, 0.5)?;
            let scalar = Equation::new(
                SpectralOperator::new(vec![lambda])?,
                Nonlinearity::zero(1, 1),
                diagonal(1, c, ScalarMap::Identity)?,
            )?;
            let traj = solve_global(&scalar, &[0.7], &p, 1.0, &SolveConfig::for_gamma(0.5))?;
            let err =
                worst(traj.samples().iter().step_by(64).map(|(t, y)| {
                    (y[0] - rk4_linear_noise(lambda, c, w_dot, 0.7, *t, 20_000)).abs()
                }));
            checks.push(Check::at_most("linear noise vs RK4", err, RK4_TOL));

            let op = SpectralOperator::preset_parabolic(1, 2.5, 3)?;
            let eq = Equation::new(
                op,
                diagonal(3, 0.4, ScalarMap::Tanh)?,
                diagonal(3, 0.6, ScalarMap::Sin)?,
            )?;
            let cfg = SolveConfig::for_gamma(0.45);
            let mut residual = 0.0f64;
            let mut chasles = 0.0f64;
            for i in 0..3 {
                let p = RoughPath::build_bm_lift(
                    seeds::member(seed, seeds::DRIVER, 2100 + i),
                    TimeGrid::new(0.0, 1.0, 257)?,
                    1,
                    16,
                    0.45,
                )?;
                let xi = [0.4, -0.2, 0.1];
                let whole = solve_global(&eq, &xi, &p, 1.0, &cfg)?;
                residual = residual.max(whole.max_residual());
                let first = solve_local(&eq, &xi, &p.restrict(0.0, 0.5)?, &cfg)?;
                let mid = first.path.value(first.path.grid().len() - 1).to_vec();
                let second = solve_local(&eq, &mid, &p.restrict(0.5, 1.0)?, &cfg)?;
                ensure!(
                    first.horizon == 0.5 && second.horizon == 0.5,
                    "half-interval solves had to shrink"
                );
                residual = residual.max(first.residual).max(second.residual);
                let end = second.path.value(second.path.grid().len() - 1);
                chasles = chasles.max(worst(
                    whole.endpoint().iter().zip(end).map(|(a, b)| (a - b).abs()),
                ));
            }
            checks.push(Check::at_most(
                "Chasles re-solve gap",
                chasles,
                5.0 * cfg.picard_tol,
            ));
            checks.push(Check::at_most(
                "max mild-equation residual",
                residual,
                2.0 * cfg.picard_tol,
            ));
            Ok(checks)
        },
    )
}

// ---------------------------------------------------------------- C6

pub fn cocycle_property(seed: u64) -> Criterion {
    criterion("C6", "cocycle property over a 3×3 (t, s) sweep", || {
        let op = SpectralOperator::preset_parabolic(1, 2.5, 2)?;
        let eq = Equation::new(
            op,
            diagonal(2, 0.3, ScalarMap::Tanh)?,
            diagonal(2, 0.5, ScalarMap::Sin)?,
        )?;
        let cfg = SolveConfig::for_gamma(0.45);
        let grid = TimeGrid::new(0.0, 2.0, 257)?;
        let mut rng = probe_rng(seed, "cocycle");
        let drivers = [
            (
                "bm",
                RoughPath::build_bm_lift(
                    seeds::member(seed, seeds::DRIVER, 3000),
                    grid,
                    1,
                    16,
                    0.45,
                )?,
            ),
            (
                "smooth",
                smooth_lift(&random_components(&mut rng, 1), grid, 8, 0.45)?,
            ),
        ];
        let mut checks = Vec::new();
        for (name, p) in &drivers {
            let mut jobs = Vec::new();
            for t in [0.25, 0.5, 1.0] {
                for s in [0.25, 0.5, 1.0] {
                    jobs.push((t, s));
                }
            }
            let defects = jobs
                .into_par_iter()
                .map(|(t, s)| cocycle_eval(&eq, &[0.5, -0.3], p, t, s, &cfg).map(|c| c.defect))
                .collect::<roughflow_core::Result<Vec<f64>>>()?;
            checks.push(Check::at_most(
                format!("max cocycle defect, {name}"),
                worst(defects),
                10.0 * cfg.picard_tol,
            ));
        }
        Ok(checks)
    })
}

// ---------------------------------------------------------------- C7, C8

/// Two-mode toy with eigenvalues `±1.5`, cross-coupled saturating drift and
/// diagonal saturating noise.
pub fn toy_equation() -> Result<Equation> {
    let op = SpectralOperator::preset_parabolic(1, 2.5, 2)?.with_gap(1.5, 1.0)?;
    Ok(Equation::new(op, toy_coupling(0.5)?, toy_noise(0.5)?)?)
}

fn toy_coupling(a: f64) -> Result<Nonlinearity> {
    Ok(Nonlinearity::terms(
        2,
        1,
        vec![
            Term {
                out_mode: 0,
                out_col: 0,
                in_mode: 1,
                coeff: a,
                map: ScalarMap::SatSquare,
            },
            Term {
                out_mode: 1,
                out_col: 0,
                in_mode: 0,
                coeff: a,
                map: ScalarMap::SatSquare,
            },
        ],
    )?)
}

fn toy_noise(c: f64) -> Result<Nonlinearity> {
    diagonal(2, c, ScalarMap::SatCubic)
}

/// Brownian driver on `[−history, 1]`, 64 steps per unit time.
pub fn toy_driver(seed: u64, history: usize) -> Result<RoughPath> {
    let grid = TimeGrid::new(-(history as f64), 1.0, (history + 1) * 64 + 1)?;
    Ok(RoughPath::build_bm_lift(seed, grid, 1, 16, 0.45)?)
}

pub fn toy_lp_config() -> LPConfig {
    LPConfig::new(1.5, 1.0, 0.05)
}

pub fn gap_and_contraction(seed: u64) -> Criterion {
    criterion(
        "C7",
        "gap condition and Lyapunov-Perron contraction",
        || {
            let eq = toy_equation()?;
            let cfg = toy_lp_config();
            let p = toy_driver(seeds::member(seed, seeds::DRIVER, 4000), cfg.k_max)?;
            let ctx = ManifoldContext::new(
                &eq,
                &p,
                cfg.clone(),
                1.0,
                seeds::substream(seed, seeds::PROBES),
            )?;
            let samples: Vec<_> = ctx.mesh(9).par_iter().map(|x| ctx.sample(x)).collect();
            Ok(vec![
                Check::at_most("gap condition value", ctx.gap.value, 0.5),
                Check::holds(
                    "every mesh point converged",
                    samples.iter().all(|s| s.converged),
                ),
                Check::at_most(
                    "max contraction rate",
                    worst(samples.iter().map(|s| s.max_rate)),
                    CONTRACTION_TOL,
                ),
                Check::at_most(
                    "max iterations to lp_tol",
                    samples
                        .iter()
                        .map(|s| s.iterations)
                        .max()
                        .unwrap_or(usize::MAX) as f64,
                    LP_ITERATION_CAP as f64,
                ),
                Check::at_most(
                    "max series cross-check gap",
                    worst(samples.iter().map(|s| s.series_gap)),
                    cfg.lp_tol,
                ),
            ])
        },
    )
}

fn sat_square(u: f64) -> f64 {
    u * u / (1.0 + u * u)
}

/// Continuous-time Lyapunov-Perron graph of the deterministic toy (`g = 0`,
/// eigenvalues `±1.5`, coupling `a`) on `[−history, 0]` with `n` cells.
pub fn classical_graph(xi: f64, a: f64, history: f64, n: usize) -> f64 {
    let (lu, ls) = (1.5, -1.5);
    let h = history / n as f64;
    let mut yu = vec![0.0; n + 1];
    let mut ys = vec![0.0; n + 1];
    for _ in 0..200 {
        let fu: Vec<f64> = ys.iter().map(|v| a * sat_square(*v)).collect();
        let fs: Vec<f64> = yu.iter().map(|v| a * sat_square(*v)).collect();
        let mut nu = vec![0.0; n + 1];
        let mut ns = vec![0.0; n + 1];
        let mut b = 0.0;
        nu[n] = xi;
        let eu = (-lu * h).exp();
        for i in (0..n).rev() {
            b = eu * b + 0.5 * h * (fu[i] + eu * fu[i + 1]);
            nu[i] = (lu * (-history + i as f64 * h)).exp() * xi - b;
        }
        let es = (ls * h).exp();
        let mut s = 0.0;
        for i in 0..n {
            s = es * s + 0.5 * h * (es * fs[i] + fs[i + 1]);
            ns[i + 1] = s;
        }
        let diff = worst(
            nu.iter()
                .zip(&yu)
                .chain(ns.iter().zip(&ys))
                .map(|(x, y)| (x - y).abs()),
        );
        yu = nu;
        ys = ns;
        if diff < 1e-15 {
            break;
        }
    }
    ys[n]
}

pub fn manifold_correctness(seed: u64) -> Criterion {
    criterion(
        "C8",
        "unstable manifold: origin, tangency, oracle, invariance, history",
        || {
            let mut checks = Vec::new();
            let eq = toy_equation()?;
            let cfg = toy_lp_config();
            let p = toy_driver(seeds::member(seed, seeds::DRIVER, 5000), 2 * cfg.k_max)?;
            let ctx = ManifoldContext::new(
                &eq,
                &p,
                cfg.clone(),
                1.0,
                seeds::substream(seed, seeds::PROBES),
            )?;

            let origin = ctx.sample(&[0.0]);
            checks.push(Check::holds(
                "h(0) = 0 exactly",
                origin.converged && origin.h_u.iter().all(|v| *v == 0.0),
            ));

            let r = ctx.cutoff().r;
            let slopes: Vec<f64> = [0.1, 0.05, 0.025]
                .iter()
                .map(|f| ctx.sample(&[f * r]).h_u[0].abs() / (f * r))
                .collect();
            let ratio = worst(slopes.windows(2).map(|w| w[1] / w[0]));
            checks.push(Check::at_most(
                "largest successive tangency slope ratio",
                ratio,
                1.0 - 1e-9,
            ));

            let op = eq.op.clone();
            let zero = RoughPath::zero(
                TimeGrid::new(-(cfg.k_max as f64), 1.0, (cfg.k_max + 1) * 64 + 1)?,
                1,
                0.5,
            )?;
            let fam = DriverFamily::from_extended(&zero, cfg.k_max)?;
            let trunc = TruncatedNonlinearity::new(
                toy_coupling(0.5)?,
                Nonlinearity::zero(2, 1),
                CutoffConfig::new(cfg.k, 1.0)?,
                true,
            )?;
            let oracle_err = [-0.5, -0.2, 0.1, 0.3, 0.5]
                .par_iter()
                .map(|&xi| -> Result<f64> {
                    let fp = lp_fixed_point(&[xi], &fam, &cfg, &op, &trunc)?;
                    let h = extract_graph(&fp.sequence, &fam, &op, &trunc, 1)?.h_u[0];
                    Ok((h - classical_graph(xi, 0.5, cfg.k_max as f64, cfg.k_max * 2048)).abs())
                })
                .collect::<Result<Vec<f64>>>()?;
            checks.push(Check::at_most(
                "g = 0 vs classical graph",
                worst(oracle_err),
                CLASSICAL_GRAPH_TOL,
            ));

            let scfg = SolveConfig::for_gamma(0.45);
            let budget = 50.0 * (cfg.lp_tol + scfg.picard_tol);
            let defects = [0.0, 0.1, -0.2]
                .par_iter()
                .map(|f| {
                    invariance_defect(&ctx, &eq, &p, &[f * ctx.radius], 1.0, &scfg)
                        .map(|r| r.defect)
                })
                .collect::<roughflow_core::Result<Vec<f64>>>()?;
            checks.push(Check::at_most(
                "max invariance defect",
                worst(defects),
                budget,
            ));

            let mut long_cfg = cfg.clone();
            long_cfg.k_max *= 2;
            let long =
                ManifoldContext::with_cutoff(&eq, &p, long_cfg, ctx.cutoff(), ctx.constants, 1.0)?;
            let ratio = worst([0.5, 1.0].iter().map(|f| {
                let x = [f * ctx.radius];
                let (a, b) = (ctx.sample(&x), long.sample(&x));
                (a.h_u[0] - b.h_u[0]).abs() / a.tail_bound
            }));
            checks.push(Check::at_most(
                "K_max doubling change / tail bound",
                ratio,
                2.0,
            ));
            Ok(checks)
        },
    )
}

// ---------------------------------------------------------------- C9

fn random_controlled(
    rng: &mut impl Rng,
    op: &SpectralOperator,
    p: &RoughPath,
) -> Result<ControlledPath> {
    let (n, m) = (p.grid().len(), op.n_modes());
    let a: Vec<f64> = (0..3 * m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut y = Vec::with_capacity(n * m);
    let mut yp = Vec::with_capacity(n * m);
    for i in 0..n {
        let t = p.grid().time(i);
        for k in 0..m {
            y.push(a[3 * k] * (1.0 + t) + a[3 * k + 1] * (2.0 * t + k as f64).cos());
            yp.push(a[3 * k + 2] * (1.0 - t * t));
        }
    }
    Ok(ControlledPath::new(
        *p.grid(),
        m,
        1,
        1,
        y,
        yp,
        p.gamma() / 2.0,
        -2.0 * p.gamma(),
    )?)
}

pub fn cutoff_semantics(seed: u64) -> Criterion {
    criterion(
        "C9",
        "cut-off identity/zero regions and radius monotonicity",
        || {
            let op = SpectralOperator::preset_parabolic(1, 0.5, 3)?;
            let grid = TimeGrid::new(0.0, 1.0, 33)?;
            let mut rng = probe_rng(seed, "cutoff");
            let mut region_violations = 0usize;
            for i in 0..50u64 {
                let p = RoughPath::build_bm_lift(
                    seeds::member(seed, seeds::DRIVER, 6000 + i),
                    grid,
                    1,
                    8,
                    0.45,
                )?;
                let y = random_controlled(&mut rng, &op, &p)?;
                let norm = y.d_norm(&p, &op)?;
                let cfg = CutoffConfig::new(0.1, rng.random_range(0.05..1.0))?;
                let inside = y.scaled(rng.random_range(0.0..0.49) * cfg.r / norm);
                let outside = y.scaled(rng.random_range(1.01..4.0) * cfg.r / norm);
                let ci = cutoff_chi(&inside, &cfg, &p, &op)?;
                let co = cutoff_chi(&outside, &cfg, &p, &op)?;
                if ci.values() != inside.values() || ci.derivatives() != inside.derivatives() {
                    region_violations += 1;
                }
                if co
                    .values()
                    .iter()
                    .chain(co.derivatives())
                    .any(|v| *v != 0.0)
                {
                    region_violations += 1;
                }
            }
            let mut monotone_violations = 0usize;
            for _ in 0..50 {
                let norms = HolderNorms {
                    w: rng.random_range(0.0..3.0),
                    w2: rng.random_range(0.0..3.0),
                };
                let (k, c_f, c_g) = (
                    rng.random_range(0.01..1.0),
                    rng.random_range(0.0..0.5),
                    rng.random_range(0.01..1.0),
                );
                let base = solve_cutoff_radius(norms, k, c_f, &LinearConstant(c_g))?.r;
                let more_k = solve_cutoff_radius(
                    norms,
                    k * rng.random_range(1.0..2.0),
                    c_f,
                    &LinearConstant(c_g),
                )?
                .r;
                let rougher = HolderNorms {
                    w: norms.w + rng.random_range(0.0..1.0),
                    ..norms
                };
                let less = solve_cutoff_radius(rougher, k, c_f, &LinearConstant(c_g))?.r;
                if more_k < base || less > base {
                    monotone_violations += 1;
                }
            }
            Ok(vec![
                Check::at_most(
                    "χ_R region violations, 50 paths × 2",
                    region_violations as f64,
                    0.0,
                ),
                Check::at_most(
                    "cut-off radius monotonicity violations, 50 instances",
                    monotone_violations as f64,
                    0.0,
                ),
            ])
        },
    )
}

// ---------------------------------------------------------------- extra

pub fn controlled_increment_bound(seed: u64) -> Criterion {
    criterion("X1", "controlled-path increment bound", || {
        let grid = TimeGrid::new(0.0, 1.0, 33)?;
        let mut rng = probe_rng(seed, "increment-bound");
        let mut ratio = 0.0f64;
        for i in 0..100u64 {
            let op = SpectralOperator::preset_parabolic(1, rng.random_range(-3.0..0.0), 3)?;
            let p = RoughPath::build_bm_lift(
                seeds::member(seed, seeds::DRIVER, 7000 + i),
                grid,
                1,
                8,
                0.45,
            )?;
            let y = random_controlled(&mut rng, &op, &p)?;
            let n = y.norms(&p, &op)?;
            let bound = n.increment_bound(p.holder_norms().w, grid.duration(), p.gamma());
            if bound > 0.0 {
                ratio = ratio.max(n.holder_y_hat / bound);
            }
        }
        Ok(vec![Check::at_most(
            "max ‖y‖_γ / bound, 100 paths",
            ratio,
            1.0 + 1e-12,
        )])
    })
}
