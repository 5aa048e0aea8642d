//! Mild solutions by Picard iteration, global concatenation and cocycle checks.
//!
//! On a segment `[a, a+T₀]` the mild map is
//!
//! ```text
//! ℳ(y, y′)_t = (S_{t−a} ξ + ∫_a^t S_{t−u} f(y_u) du + ∫_a^t S_{t−u} g(y_u) dw_u,  g(y_t))
//! ```
//!
//! evaluated with the exponential trapezoid rule and grid-level compensated sums.
//! Both are additive over adjacent grid intervals, so concatenated segments
//! reproduce a single long solve up to rounding.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::controlled::ControlledPath;
use crate::error::{bail, Error, Result};
use crate::integrator::{convolution_path, drift_path, locate};
use crate::math;
use crate::nonlinearity::Nonlinearity;
use crate::rough_driver::RoughPath;
use crate::spectral::SpectralOperator;

/// `dy = (A y + f(y)) dt + g(y) dw`.
#[derive(Debug, Clone)]
pub struct Equation {
    pub op: SpectralOperator,
    pub f: Nonlinearity,
    pub g: Nonlinearity,
}

impl Equation {
    pub fn new(op: SpectralOperator, f: Nonlinearity, g: Nonlinearity) -> Result<Self> {
        let n = op.n_modes();
        f.check_shape(n, 1, "drift")?;
        g.check_shape(n, g.cols(), "diffusion")?;
        Ok(Self { op, f, g })
    }

    pub fn n_modes(&self) -> usize {
        self.op.n_modes()
    }

    fn check_driver(&self, p: &RoughPath) -> Result<()> {
        if self.g.cols() != p.dim() {
            bail!(
                GridMismatch,
                "diffusion has {} columns, driver dimension is {}",
                self.g.cols(),
                p.dim()
            );
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialGuess {
    /// `(S_t(ξ + g(ξ) δw_{t,0}), S_t g(ξ))`.
    BallCenter,
    /// `(ξ, g(ξ))` held constant.
    Frozen,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    /// Time-regularity exponent of the solution space; must lie in `(0, γ)`.
    pub eta: f64,
    /// Picard stops once successive iterates differ by at most
    /// `picard_tol · max(1, sup ‖y‖)`.
    pub picard_tol: f64,
    pub max_picard: usize,
    /// Horizon multiplier applied when the iteration fails to contract.
    pub step_shrink: f64,
    /// Largest acceptable ratio of successive Picard differences.
    pub contraction_limit: f64,
    pub initial_guess: InitialGuess,
}

impl SolveConfig {
    /// Defaults for a driver of Hölder exponent `gamma`.
    pub fn for_gamma(gamma: f64) -> Self {
        Self {
            eta: gamma / 2.0,
            picard_tol: 1e-10,
            max_picard: 200,
            step_shrink: 0.5,
            contraction_limit: 0.9,
            initial_guess: InitialGuess::BallCenter,
        }
    }

    pub fn validate(&self, gamma: f64) -> Result<()> {
        if !(self.eta > 0.0 && self.eta < gamma) {
            bail!(
                InvalidConfig,
                "η must lie in (0, γ) = (0, {gamma}), got {}",
                self.eta
            );
        }
        if !(self.step_shrink > 0.0 && self.step_shrink < 1.0) {
            bail!(
                InvalidConfig,
                "step_shrink must lie in (0, 1), got {}",
                self.step_shrink
            );
        }
        if !(self.picard_tol > 0.0) || self.max_picard == 0 {
            bail!(
                InvalidConfig,
                "Picard tolerance and iteration cap must be positive"
            );
        }
        if !(self.contraction_limit > 0.0 && self.contraction_limit < 1.0) {
            bail!(InvalidConfig, "contraction limit must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Elementwise `a − b` sup-norm over grid points (H norm per point).
fn sup_distance(a: &ControlledPath, b: &ControlledPath) -> f64 {
    let block = a.modes() * a.cols();
    a.values()
        .chunks(block)
        .zip(b.values().chunks(block))
        .map(|(x, y)| math::sqrt(x.iter().zip(y).map(|(u, v)| (u - v) * (u - v)).sum()))
        .fold(
            0.0,
            |m, v| if v.is_nan() { f64::INFINITY } else { m.max(v) },
        )
}

/// One application of the mild map. `p` is the driver on the segment; the
/// semigroup clock starts at `p.grid().t0()`.
pub fn picard_step(
    eq: &Equation,
    cp: &ControlledPath,
    p: &RoughPath,
    xi: &[f64],
    cfg: &SolveConfig,
) -> Result<ControlledPath> {
    eq.check_driver(p)?;
    let grid = *p.grid();
    let (n, m, d) = (grid.len(), eq.n_modes(), p.dim());
    if xi.len() != m {
        bail!(
            InvalidInput,
            "initial value has {} modes, operator {}",
            xi.len(),
            m
        );
    }
    let mut fv = vec![0.0; n * m];
    for i in 0..n {
        eq.f.eval_into(cp.value(i), &mut fv[i * m..(i + 1) * m]);
    }
    let integrand = cp.compose(&eq.g)?;
    let drift = drift_path(&eq.op, &fv, &grid)?;
    let conv = convolution_path(&eq.op, &integrand, p)?;
    let mut y = vec![0.0; n * m];
    for i in 0..n {
        let s = eq.op.factors(grid.time(i) - grid.t0());
        for k in 0..m {
            y[i * m + k] = s[k] * xi[k] + drift[i * m + k] + conv[i * m + k];
        }
    }
    // g(y) as an `m × 1 × d` derivative block has the same layout as `m × d`
    let yp = integrand.values().to_vec();
    ControlledPath::new(grid, m, 1, d, y, yp, cfg.eta, -2.0 * p.gamma())
}

fn initial_guess(
    eq: &Equation,
    p: &RoughPath,
    xi: &[f64],
    cfg: &SolveConfig,
) -> Result<ControlledPath> {
    let grid = *p.grid();
    let (n, m, d) = (grid.len(), eq.n_modes(), p.dim());
    let gxi = eq.g.eval(xi);
    let mut y = vec![0.0; n * m];
    let mut yp = vec![0.0; n * m * d];
    let mut dw = vec![0.0; d];
    for i in 0..n {
        let s = match cfg.initial_guess {
            InitialGuess::BallCenter => eq.op.factors(grid.time(i) - grid.t0()),
            InitialGuess::Frozen => vec![1.0; m],
        };
        let drive = matches!(cfg.initial_guess, InitialGuess::BallCenter);
        p.increment_into(0, i, &mut dw);
        for k in 0..m {
            let lin: f64 = if drive {
                (0..d).map(|l| gxi[k * d + l] * dw[l]).sum()
            } else {
                0.0
            };
            y[i * m + k] = s[k] * (xi[k] + lin);
            for l in 0..d {
                yp[(i * m + k) * d + l] = s[k] * gxi[k * d + l];
            }
        }
    }
    ControlledPath::new(grid, m, 1, d, y, yp, cfg.eta, -2.0 * p.gamma())
}

/// Replace the derivative of `cp` by `g(y)`.
fn with_coherent_derivative(eq: &Equation, cp: &ControlledPath) -> Result<ControlledPath> {
    let z = cp.compose(&eq.g)?;
    ControlledPath::new(
        *cp.grid(),
        cp.modes(),
        1,
        cp.dim(),
        cp.values().to_vec(),
        z.values().to_vec(),
        cp.eta(),
        cp.alpha(),
    )
}

/// Converged local solution.
#[derive(Debug, Clone)]
pub struct LocalSolution {
    pub path: ControlledPath,
    /// Achieved horizon `T₀`.
    pub horizon: f64,
    pub iterations: usize,
    /// Largest informative ratio of successive Picard differences.
    pub contraction: f64,
    /// `sup_t ‖ℳ(y)_t − y_t‖` at the returned path.
    pub residual: f64,
    /// Horizons tried before success, longest first.
    pub attempts: Vec<f64>,
}

struct PicardOutcome {
    path: ControlledPath,
    iterations: usize,
    contraction: f64,
    converged: bool,
}

fn picard_loop(
    eq: &Equation,
    p: &RoughPath,
    xi: &[f64],
    cfg: &SolveConfig,
) -> Result<PicardOutcome> {
    let mut cur = initial_guess(eq, p, xi, cfg)?;
    let mut prev_diff: Option<f64> = None;
    let mut contraction = 0.0f64;
    for it in 1..=cfg.max_picard {
        let next = picard_step(eq, &cur, p, xi, cfg)?;
        let diff = sup_distance(&next, &cur);
        if !diff.is_finite() {
            return Ok(PicardOutcome {
                path: next,
                iterations: it,
                contraction: f64::INFINITY,
                converged: false,
            });
        }
        let scale = next.sup_norm().max(1.0);
        if let Some(pd) = prev_diff {
            // ratios of differences near rounding level carry no information
            if pd > 1e3 * f64::EPSILON * scale {
                contraction = contraction.max(diff / pd);
            }
        }
        cur = next;
        if diff <= cfg.picard_tol * scale {
            return Ok(PicardOutcome {
                path: cur,
                iterations: it,
                contraction,
                converged: true,
            });
        }
        prev_diff = Some(diff);
    }
    Ok(PicardOutcome {
        path: cur,
        iterations: cfg.max_picard,
        contraction,
        converged: false,
    })
}

/// Local solution from `ξ` at `p.grid().t0()` over as much of `p`'s grid as the
/// iteration contracts on.
pub fn solve_local(
    eq: &Equation,
    xi: &[f64],
    p: &RoughPath,
    cfg: &SolveConfig,
) -> Result<LocalSolution> {
    cfg.validate(p.gamma())?;
    eq.check_driver(p)?;
    if !math::all_finite(xi) {
        bail!(InvalidInput, "initial value must be finite");
    }
    let mut steps = p.grid().len() - 1;
    let mut attempts = Vec::new();
    loop {
        let window = if steps + 1 == p.grid().len() {
            p.clone()
        } else {
            p.restrict_indices(0, steps)?
        };
        attempts.push(window.grid().duration());
        let out = picard_loop(eq, &window, xi, cfg)?;
        if out.converged && out.contraction < cfg.contraction_limit {
            let path = with_coherent_derivative(eq, &out.path)?;
            let residual = sup_distance(&picard_step(eq, &path, &window, xi, cfg)?, &path);
            return Ok(LocalSolution {
                path,
                horizon: window.grid().duration(),
                iterations: out.iterations,
                contraction: out.contraction,
                residual,
                attempts,
            });
        }
        let next = math::floor(steps as f64 * cfg.step_shrink) as usize;
        if next == 0 || next >= steps {
            return Err(Error::StepUnderflow {
                time: p.grid().t0(),
                reason: format!(
                    "Picard iteration failed to contract on a single step (ratio {:.3}, converged: {})",
                    out.contraction, out.converged
                ),
            });
        }
        steps = next;
    }
}

#[derive(Debug, Clone)]
pub struct Segment {
    pub start: f64,
    pub solution: LocalSolution,
}

/// Fitted growth bound `‖y_t‖ ≤ M r̃ e^{M t}` with `r̃ = ‖ξ‖`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AprioriBound {
    pub m: f64,
    /// Largest `‖y_t‖ / (M r̃ e^{M t})` along the trajectory.
    pub worst_ratio: f64,
    /// `worst_ratio ≤ 1.2`.
    pub holds: bool,
}

#[derive(Debug, Clone)]
pub struct SolutionTrajectory {
    pub xi: Vec<f64>,
    pub horizon: f64,
    pub segments: Vec<Segment>,
    pub apriori: AprioriBound,
}

impl SolutionTrajectory {
    /// `y_T` (or `ξ` for an empty trajectory).
    pub fn endpoint(&self) -> Vec<f64> {
        match self.segments.last() {
            Some(seg) => {
                let cp = &seg.solution.path;
                cp.value(cp.grid().len() - 1).to_vec()
            }
            None => self.xi.clone(),
        }
    }

    /// `(t, y_t)` over all grid points, segment junctions listed once.
    pub fn samples(&self) -> Vec<(f64, Vec<f64>)> {
        let mut out: Vec<(f64, Vec<f64>)> = Vec::new();
        if self.segments.is_empty() {
            out.push((0.0, self.xi.clone()));
        }
        for (j, seg) in self.segments.iter().enumerate() {
            let cp = &seg.solution.path;
            let first = if j == 0 { 0 } else { 1 };
            for i in first..cp.grid().len() {
                out.push((cp.grid().time(i), cp.value(i).to_vec()));
            }
        }
        out
    }

    pub fn max_residual(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| s.solution.residual)
            .fold(0.0, f64::max)
    }
}

fn fit_apriori(xi: &[f64], samples: &[(f64, Vec<f64>)]) -> AprioriBound {
    let r = math::norm2(xi);
    if r == 0.0 {
        let worst = samples
            .iter()
            .map(|(_, y)| math::norm2(y))
            .fold(0.0, f64::max);
        return AprioriBound {
            m: 1.0,
            worst_ratio: if worst == 0.0 { 0.0 } else { f64::INFINITY },
            holds: worst == 0.0,
        };
    }
    let (ts, ls): (Vec<f64>, Vec<f64>) = samples
        .iter()
        .filter_map(|(t, y)| {
            let v = math::norm2(y);
            (v > 0.0).then(|| (*t, math::ln(v)))
        })
        .unzip();
    let m = match math::linear_fit(&ts, &ls) {
        Some(fit) => 1f64.max(math::exp(fit.intercept) / r).max(fit.slope),
        None => 1.0,
    };
    let worst_ratio = samples
        .iter()
        .map(|(t, y)| math::norm2(y) / (m * r * math::exp(m * t)))
        .fold(0.0, f64::max);
    AprioriBound {
        m,
        worst_ratio,
        holds: worst_ratio <= 1.2,
    }
}

/// Concatenate local solutions over `[0, horizon]`. On failure the trajectory
/// built so far is returned with the error.
pub fn solve_global_partial(
    eq: &Equation,
    xi: &[f64],
    p: &RoughPath,
    horizon: f64,
    cfg: &SolveConfig,
) -> (SolutionTrajectory, Option<Error>) {
    let mut traj = SolutionTrajectory {
        xi: xi.to_vec(),
        horizon,
        segments: Vec::new(),
        apriori: AprioriBound {
            m: 1.0,
            worst_ratio: 0.0,
            holds: true,
        },
    };
    let located = locate(p.grid(), 0.0).and_then(|a| Ok((a, locate(p.grid(), horizon)?)));
    let (mut cur, end) = match located {
        Ok(v) => v,
        Err(e) => return (traj, Some(e)),
    };
    if end < cur {
        return (
            traj,
            Some(Error::InvalidInput(format!(
                "horizon {horizon} is negative"
            ))),
        );
    }
    let mut state = xi.to_vec();
    let mut next_try = end - cur;
    while cur < end {
        let attempt = next_try.min(end - cur).max(1);
        let local = p
            .restrict_indices(cur, cur + attempt)
            .and_then(|w| solve_local(eq, &state, &w, cfg));
        let sol = match local {
            Ok(s) => s,
            Err(Error::StepUnderflow { reason, .. }) => {
                let time = p.grid().time(cur);
                return (traj, Some(Error::StepUnderflow { time, reason }));
            }
            Err(e) => return (traj, Some(e)),
        };
        let steps = sol.path.grid().len() - 1;
        state = sol.path.value(steps).to_vec();
        traj.segments.push(Segment {
            start: p.grid().time(cur),
            solution: sol,
        });
        cur += steps;
        next_try = 2 * steps;
    }
    traj.apriori = fit_apriori(xi, &traj.samples());
    (traj, None)
}

/// Global solution on `[0, horizon]`; the driver must cover that interval.
pub fn solve_global(
    eq: &Equation,
    xi: &[f64],
    p: &RoughPath,
    horizon: f64,
    cfg: &SolveConfig,
) -> Result<SolutionTrajectory> {
    match solve_global_partial(eq, xi, p, horizon, cfg) {
        (traj, None) => Ok(traj),
        (_, Some(e)) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CocycleCheck {
    /// `φ(t+s, w, ξ)`
    pub left: Vec<f64>,
    /// `φ(t, Θ_s w, φ(s, w, ξ))`
    pub right: Vec<f64>,
    pub defect: f64,
}

/// Evaluate both sides of the cocycle identity.
pub fn cocycle_eval(
    eq: &Equation,
    xi: &[f64],
    p: &RoughPath,
    t: f64,
    s: f64,
    cfg: &SolveConfig,
) -> Result<CocycleCheck> {
    let tol = 1e-9 * p.grid().step();
    if p.grid().t0() > tol || p.grid().t1() < t + s - tol {
        bail!(
            OutOfRange,
            "driver window [{}, {}] does not cover [0, {}]",
            p.grid().t0(),
            p.grid().t1(),
            t + s
        );
    }
    let left = solve_global(eq, xi, p, t + s, cfg)?.endpoint();
    let mid = solve_global(eq, xi, p, s, cfg)?.endpoint();
    let shifted = p.shift(s)?;
    let right = solve_global(eq, &mid, &shifted, t, cfg)?.endpoint();
    let diff: Vec<f64> = left.iter().zip(&right).map(|(a, b)| a - b).collect();
    Ok(CocycleCheck {
        defect: math::norm2(&diff),
        left,
        right,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemperednessReport {
    pub taus: Vec<f64>,
    /// `|Θ_τ w|_γ` on `[0, window]`.
    pub holder: Vec<f64>,
    /// `ln⁺|Θ_τ w|_γ / τ` for `τ > 0`.
    pub growth: Vec<f64>,
    /// Slope of `ln⁺|Θ_τ w|_γ` against `τ` and its standard error.
    pub slope: f64,
    pub slope_stderr: f64,
}

/// Growth statistics of the shifted driver norms over `τ ∈ {0, Δ, …, τ_max}`.
pub fn temperedness_probe(
    p: &RoughPath,
    tau_step: f64,
    tau_max: f64,
    window: f64,
) -> Result<TemperednessReport> {
    if !(tau_step > 0.0) {
        bail!(InvalidInput, "shift step must be positive");
    }
    let count = math::floor(tau_max / tau_step + 1e-9) as usize;
    let mut taus = Vec::with_capacity(count + 1);
    let mut holder = Vec::with_capacity(count + 1);
    for i in 0..=count {
        let tau = i as f64 * tau_step;
        let w = p.window(tau, tau + window)?;
        taus.push(tau);
        holder.push(w.holder_norms().w);
    }
    let logp: Vec<f64> = holder
        .iter()
        .map(|h| if *h > 1.0 { math::ln(*h) } else { 0.0 })
        .collect();
    let growth = taus.iter().zip(&logp).skip(1).map(|(t, l)| l / t).collect();
    let (slope, slope_stderr) = match math::linear_fit(&taus, &logp) {
        Some(fit) => (fit.slope, fit.slope_stderr),
        None => (0.0, 0.0),
    };
    Ok(TemperednessReport {
        taus,
        holder,
        growth,
        slope,
        slope_stderr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::{ScalarMap, Term};
    use crate::rough_driver::TimeGrid;

    fn smooth(t0: f64, t1: f64, n: usize, f: impl Fn(f64) -> f64) -> RoughPath {
        let grid = TimeGrid::new(t0, t1, n).unwrap();
        let r = 4;
        let fine = TimeGrid::new(t0, t1, (n - 1) * r + 1).unwrap();
        let samples: Vec<f64> = (0..fine.len()).map(|i| f(fine.time(i))).collect();
        RoughPath::build_smooth_lift(&samples, 1, grid, 0.5).unwrap()
    }

    fn sine_g(modes: usize, c: f64) -> Nonlinearity {
        let terms = (0..modes)
            .map(|k| Term {
                out_mode: k,
                out_col: 0,
                in_mode: k,
                coeff: c,
                map: ScalarMap::Sin,
            })
            .collect();
        Nonlinearity::terms(modes, 1, terms).unwrap()
    }

    #[test]
    fn linear_free_equation_is_semigroup_orbit() {
        let op = SpectralOperator::preset_parabolic(1, 2.5, 3).unwrap();
        let eq = Equation::new(
            op.clone(),
            Nonlinearity::zero(3, 1),
            Nonlinearity::zero(3, 1),
        )
        .unwrap();
        let p = smooth(0.0, 1.0, 65, |t| t.sin());
        let xi = [1.0, -0.5, 2.0];
        let cfg = SolveConfig::for_gamma(0.5);
        let sol = solve_local(&eq, &xi, &p, &cfg).unwrap();
        assert_eq!(sol.iterations, 1);
        assert_eq!(sol.horizon, 1.0);
        for i in 0..65 {
            let f = op.factors(p.grid().time(i));
            for k in 0..3 {
                assert_eq!(sol.path.value(i)[k], f[k] * xi[k]);
            }
        }
    }

    #[test]
    fn linear_drift_matches_exponential() {
        let op = SpectralOperator::new(vec![0.5, -1.0]).unwrap();
        let f = Nonlinearity::linear_diagonal(&[0.1, -0.2]);
        let eq = Equation::new(op, f, Nonlinearity::zero(2, 1)).unwrap();
        let p = smooth(0.0, 1.0, 1025, |t| t);
        let xi = [1.0, 1.0];
        let traj = solve_global(&eq, &xi, &p, 1.0, &SolveConfig::for_gamma(0.5)).unwrap();
        let y = traj.endpoint();
        assert!((y[0] - 0.6f64.exp()).abs() < 1e-7);
        assert!((y[1] - (-1.2f64).exp()).abs() < 1e-7);
        assert!(traj.apriori.holds);
    }

    #[test]
    fn underflow_is_reported() {
        let op = SpectralOperator::new(vec![0.0]).unwrap();
        // the trapezoid drift is implicit in the endpoint, so a stiff drift defeats Picard
        let eq =
            Equation::new(op, Nonlinearity::linear_diagonal(&[100.0]), sine_g(1, 1.0)).unwrap();
        let p = smooth(0.0, 1.0, 3, |t| t);
        let mut cfg = SolveConfig::for_gamma(0.5);
        cfg.max_picard = 3;
        let (traj, err) = solve_global_partial(&eq, &[1.0], &p, 1.0, &cfg);
        assert!(matches!(err, Some(Error::StepUnderflow { .. })));
        assert!(traj.segments.is_empty());
    }

    #[test]
    fn cocycle_trivial_cases() {
        let op = SpectralOperator::new(vec![-0.5]).unwrap();
        let eq = Equation::new(op, Nonlinearity::zero(1, 1), sine_g(1, 0.5)).unwrap();
        let p = smooth(0.0, 2.0, 129, |t| (2.0 * t).sin());
        let cfg = SolveConfig::for_gamma(0.5);
        let c = cocycle_eval(&eq, &[0.3], &p, 1.0, 0.0, &cfg).unwrap();
        assert!(c.defect <= 1e-12);
        let c = cocycle_eval(&eq, &[0.3], &p, 0.5, 0.5, &cfg).unwrap();
        assert!(c.defect <= 10.0 * cfg.picard_tol, "{}", c.defect);
        assert!(matches!(
            cocycle_eval(&eq, &[0.3], &p, 1.5, 1.0, &cfg),
            Err(Error::OutOfRange(_))
        ));
    }

    #[test]
    fn temperedness_of_bounded_driver() {
        let p = smooth(0.0, 9.0, 289, |t| (3.0 * t).sin());
        let rep = temperedness_probe(&p, 1.0, 8.0, 1.0).unwrap();
        assert_eq!(rep.taus.len(), 9);
        assert!(rep.slope.abs() < 0.1);
    }
}
