//! Local unstable manifolds by the discrete Lyapunov-Perron method.
//!
//! The history `(−∞, 0]` is cut into unit intervals. Segment `j ≥ 0` covers
//! `[−j−1, −j]` and is driven by `Θ_{−j−1} w` on `[0, 1]`. Writing `P_j(t)` for
//! the forward drift-plus-rough convolution of the truncated nonlinearities on
//! segment `j` and `F_j = P_j(1)`, one application of the map reads, per mode,
//!
//! ```text
//! unstable:  e^{λ(t−j−1)} ξ − e^{λ(t−1)} U_j − (e^{λ(t−1)} F_j − P_j(t)),  U_{j+1} = e^{−λ}(U_j + F_j)
//! stable:    e^{λt} V_j + P_j(t),                                         V_j = F_{j+1} + e^{λ} V_{j+1}
//! ```
//!
//! with `U_0 = 0` and the stable history truncated after `K_max` segments.
//! The graph value is `h^u(ξ) = π^s` of segment 0 at `t = 1`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::controlled::ControlledPath;
use crate::cutoff::{solve_cutoff_radius, CutoffConfig, LinearConstant, TruncatedNonlinearity};
use crate::error::{bail, Error, Result};
use crate::integrator::{convolution_path, drift_path};
use crate::math;
use crate::rough_driver::{HolderNorms, RoughPath};
use crate::solver::{solve_global, Equation, SolveConfig};
use crate::spectral::SpectralOperator;

#[derive(Debug, Clone, PartialEq)]
pub struct LPConfig {
    pub alpha: f64,
    pub beta: f64,
    /// Weight rate of the sequence space, `(α − β)/2` by default.
    pub delta: f64,
    /// Contraction budget of the cut-off.
    pub k: f64,
    /// Number of unit history intervals kept.
    pub k_max: usize,
    pub lp_tol: f64,
    pub max_lp_iters: usize,
    /// Refuse to run when the gap condition fails.
    pub enforce_gap: bool,
    /// Check `f(0) = Df(0) = 0` and `g(0) = Dg(0) = D²g(0) = 0`.
    pub check_assumptions: bool,
}

impl LPConfig {
    pub fn new(alpha: f64, beta: f64, k: f64) -> Self {
        Self {
            alpha,
            beta,
            delta: (alpha - beta) / 2.0,
            k,
            k_max: 12,
            lp_tol: 1e-8,
            max_lp_iters: 100,
            enforce_gap: true,
            check_assumptions: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > self.beta && self.beta > 0.0) {
            bail!(
                InvalidConfig,
                "gap rates need α > β > 0, got α = {}, β = {}",
                self.alpha,
                self.beta
            );
        }
        if !(self.delta > 0.0 && self.delta < self.alpha) {
            bail!(InvalidConfig, "δ must lie in (0, α), got {}", self.delta);
        }
        if !(self.k >= 0.0 && self.k.is_finite()) {
            bail!(
                InvalidConfig,
                "contraction budget must be finite and nonnegative"
            );
        }
        if self.k_max < 2 {
            bail!(
                InvalidConfig,
                "history depth must be at least 2, got {}",
                self.k_max
            );
        }
        if !(self.lp_tol > 0.0) || self.max_lp_iters == 0 {
            bail!(
                InvalidConfig,
                "fixed-point tolerance and iteration cap must be positive"
            );
        }
        Ok(())
    }

    /// Number of unstable modes; every eigenvalue must sit outside `(−β, α)`.
    pub fn split(&self, op: &SpectralOperator) -> Result<usize> {
        self.validate()?;
        let lam = op.eigenvalues();
        if let Some(l) = lam.iter().find(|l| **l < self.alpha && **l > -self.beta) {
            bail!(
                InvalidConfig,
                "eigenvalue {l} lies inside the spectral gap (−{}, {})",
                self.beta,
                self.alpha
            );
        }
        let nu = lam.iter().filter(|l| **l >= self.alpha).count();
        if nu == 0 || nu == lam.len() {
            bail!(
                InvalidConfig,
                "manifold construction needs both unstable and stable modes ({nu} of {} unstable)",
                lam.len()
            );
        }
        Ok(nu)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapReport {
    pub value: f64,
    pub ok: bool,
}

/// `K (e^{β+δ}(Ce^{−δ}+1)/(1−e^{−(β+δ)}) + (e^{−(α−δ)}−1)(Ce^{−δ}+e^{α−δ})/(1−e^{α−δ}))`
/// against `½`.
pub fn gap_condition(cfg: &LPConfig, c: f64) -> Result<GapReport> {
    let (a, b, d) = (cfg.alpha, cfg.beta, cfg.delta);
    if a <= d {
        bail!(
            InvalidConfig,
            "gap condition needs α > δ, got α = {a}, δ = {d}"
        );
    }
    if !(c >= 0.0 && c.is_finite()) {
        bail!(
            InvalidConfig,
            "embedding constant must be finite and nonnegative"
        );
    }
    let ce = c * math::exp(-d);
    let first = math::exp(b + d) * (ce + 1.0) / (1.0 - math::exp(-(b + d)));
    let second = (math::exp(-(a - d)) - 1.0) * (ce + math::exp(a - d)) / (1.0 - math::exp(a - d));
    let value = cfg.k * (first + second);
    Ok(GapReport {
        value,
        ok: value <= 0.5,
    })
}

/// Unit-interval drivers `Θ_{−j−1} w` on `[0, 1]`, `j = 0, …, K_max − 1`.
#[derive(Debug, Clone)]
pub struct DriverFamily {
    windows: Vec<RoughPath>,
}

impl DriverFamily {
    pub fn from_extended(p: &RoughPath, k_max: usize) -> Result<Self> {
        let tol = 1e-9 * p.grid().step();
        if p.grid().t0() > -(k_max as f64) + tol || p.grid().t1() < -tol {
            bail!(
                OutOfRange,
                "driver window [{}, {}] does not cover the history [−{k_max}, 0]",
                p.grid().t0(),
                p.grid().t1()
            );
        }
        let windows = (0..k_max)
            .map(|j| p.window(-(j as f64) - 1.0, -(j as f64)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { windows })
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn window(&self, j: usize) -> &RoughPath {
        &self.windows[j]
    }

    /// Componentwise maximum of the Hölder norms over all windows.
    pub fn max_norms(&self) -> HolderNorms {
        self.windows.iter().map(|p| p.holder_norms()).fold(
            HolderNorms { w: 0.0, w2: 0.0 },
            |a, b| HolderNorms {
                w: a.w.max(b.w),
                w2: a.w2.max(b.w2),
            },
        )
    }
}

/// Truncated history `(y^j)_{j < K_max}`; segment `j` lives on `[−j−1, −j]`.
#[derive(Debug, Clone)]
pub struct LPSequence {
    pub segments: Vec<ControlledPath>,
    /// Bound on the dropped stable history of the application that produced
    /// this sequence.
    pub tail_bound: f64,
}

impl LPSequence {
    pub fn zero(family: &DriverFamily, modes: usize) -> Self {
        let segments = family
            .windows
            .iter()
            .map(|p| ControlledPath::zero(*p.grid(), modes, 1, p.dim(), p.gamma()))
            .collect();
        Self {
            segments,
            tail_bound: 0.0,
        }
    }

    /// `sup_j e^{δ(j+1)} ‖y^j‖_𝒟`.
    pub fn bc_norm(&self, family: &DriverFamily, op: &SpectralOperator, delta: f64) -> Result<f64> {
        let mut out = 0.0f64;
        for (j, seg) in self.segments.iter().enumerate() {
            out = out.max(math::exp(delta * (j + 1) as f64) * seg.d_norm(family.window(j), op)?);
        }
        Ok(out)
    }

    pub fn bc_distance(
        &self,
        other: &LPSequence,
        family: &DriverFamily,
        op: &SpectralOperator,
        delta: f64,
    ) -> Result<f64> {
        if self.segments.len() != other.segments.len() {
            bail!(
                GridMismatch,
                "sequences have {} and {} segments",
                self.segments.len(),
                other.segments.len()
            );
        }
        let mut out = 0.0f64;
        for (j, (a, b)) in self.segments.iter().zip(&other.segments).enumerate() {
            let diff = a.combine(1.0, b, -1.0)?;
            out = out.max(math::exp(delta * (j + 1) as f64) * diff.d_norm(family.window(j), op)?);
        }
        Ok(out)
    }

    /// Largest `‖y^j_0 − y^{j+1}_1‖` over junctions.
    pub fn endpoint_mismatch(&self) -> f64 {
        self.segments
            .windows(2)
            .map(|w| {
                let last = w[1].grid().len() - 1;
                w[0].value(0)
                    .iter()
                    .zip(w[1].value(last))
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

/// Forward paths `P_j` (`n × modes`) and the truncated integrands of each segment.
struct SegmentIntegrals {
    paths: Vec<Vec<f64>>,
    derivatives: Vec<Vec<f64>>,
}

fn segment_integrals(
    seq: &LPSequence,
    family: &DriverFamily,
    op: &SpectralOperator,
    trunc: &TruncatedNonlinearity,
) -> Result<SegmentIntegrals> {
    let mut paths = Vec::with_capacity(seq.segments.len());
    let mut derivatives = Vec::with_capacity(seq.segments.len());
    for (j, seg) in seq.segments.iter().enumerate() {
        let p = family.window(j);
        let ev = trunc.evaluate(seg, p, op)?;
        let mut path = drift_path(op, &ev.drift, p.grid())?;
        let conv = convolution_path(op, &ev.integrand, p)?;
        path.iter_mut().zip(&conv).for_each(|(a, b)| *a += b);
        paths.push(path);
        derivatives.push(ev.integrand.values().to_vec());
    }
    Ok(SegmentIntegrals { paths, derivatives })
}

/// One application of the discrete Lyapunov-Perron map.
pub fn lp_apply(
    family: &DriverFamily,
    seq: &LPSequence,
    xi_u: &[f64],
    cfg: &LPConfig,
    op: &SpectralOperator,
    trunc: &TruncatedNonlinearity,
) -> Result<LPSequence> {
    let nu = cfg.split(op)?;
    let m = op.n_modes();
    let kk = family.len();
    if seq.segments.len() != kk {
        bail!(
            GridMismatch,
            "sequence has {} segments, driver family {}",
            seq.segments.len(),
            kk
        );
    }
    if xi_u.len() != nu {
        bail!(
            InvalidInput,
            "unstable coordinate has {} entries, the unstable block {}",
            xi_u.len(),
            nu
        );
    }
    let ints = segment_integrals(seq, family, op, trunc)?;
    let lam = op.eigenvalues();
    let last = |j: usize| family.window(j).grid().len() - 1;
    let big_f: Vec<&[f64]> = (0..kk).map(|j| &ints.paths[j][last(j) * m..]).collect();

    // U_j for unstable modes, V_j for stable modes
    let mut u = vec![vec![0.0; m]; kk];
    for j in 0..kk - 1 {
        for k in 0..nu {
            u[j + 1][k] = math::exp(-lam[k]) * (u[j][k] + big_f[j][k]);
        }
    }
    let mut v = vec![vec![0.0; m]; kk];
    for j in (0..kk - 1).rev() {
        for k in nu..m {
            v[j][k] = big_f[j + 1][k] + math::exp(lam[k]) * v[j + 1][k];
        }
    }

    let mut ys = Vec::with_capacity(kk);
    for j in 0..kk {
        let grid = family.window(j).grid();
        let (path, fj) = (&ints.paths[j], big_f[j]);
        let mut y = vec![0.0; grid.len() * m];
        for i in 0..grid.len() {
            let t = grid.time(i) - grid.t0();
            for k in 0..m {
                let pt = path[i * m + k];
                y[i * m + k] = if k < nu {
                    let back = math::exp(lam[k] * (t - 1.0));
                    math::exp(lam[k] * (t - (j + 1) as f64)) * xi_u[k]
                        - back * u[j][k]
                        - (back * fj[k] - pt)
                } else {
                    math::exp(lam[k] * t) * v[j][k] + pt
                };
            }
        }
        ys.push(y);
    }
    // the recurrences already match junctions up to rounding; make it exact
    for j in (0..kk - 1).rev() {
        let at = last(j + 1) * m;
        let end = ys[j + 1][at..at + m].to_vec();
        ys[j][..m].copy_from_slice(&end);
    }
    let mut segments = Vec::with_capacity(kk);
    for (j, (y, yp)) in ys.into_iter().zip(ints.derivatives).enumerate() {
        let src = &seq.segments[j];
        segments.push(ControlledPath::new(
            *family.window(j).grid(),
            m,
            1,
            src.dim(),
            y,
            yp,
            src.eta(),
            src.alpha(),
        )?);
    }

    let max_fs = big_f
        .iter()
        .map(|f| math::norm2(&f[nu..]))
        .fold(0.0, f64::max);
    let tail_bound = math::exp(-cfg.beta * kk as f64) * max_fs / (1.0 - math::exp(-cfg.beta));
    Ok(LPSequence {
        segments,
        tail_bound,
    })
}

#[derive(Debug, Clone)]
pub struct FixedPoint {
    pub sequence: LPSequence,
    pub iterations: usize,
    /// Ratios of successive BC_δ distances.
    pub rates: Vec<f64>,
    /// Final BC_δ distance between the last two iterates.
    pub residual: f64,
}

impl FixedPoint {
    pub fn max_rate(&self) -> f64 {
        self.rates.iter().copied().fold(0.0, f64::max)
    }
}

/// Iterate [`lp_apply`] from the zero sequence.
pub fn lp_fixed_point(
    xi_u: &[f64],
    family: &DriverFamily,
    cfg: &LPConfig,
    op: &SpectralOperator,
    trunc: &TruncatedNonlinearity,
) -> Result<FixedPoint> {
    let mut cur = LPSequence::zero(family, op.n_modes());
    let mut rates = Vec::new();
    let mut prev: Option<f64> = None;
    for app in 1..=cfg.max_lp_iters + 1 {
        let next = lp_apply(family, &cur, xi_u, cfg, op, trunc)?;
        let diff = next.bc_distance(&cur, family, op, cfg.delta)?;
        if !diff.is_finite() {
            return Err(Error::Convergence {
                reason: "Lyapunov-Perron iterates diverged".to_string(),
                trace: rates,
            });
        }
        if let Some(pd) = prev {
            if pd > 1e3 * f64::EPSILON {
                let r = diff / pd;
                rates.push(r);
                if r >= 0.9 && diff > cfg.lp_tol {
                    return Err(Error::Convergence {
                        reason: format!("Lyapunov-Perron map is not contracting (rate {r:.3})"),
                        trace: rates,
                    });
                }
            }
        }
        cur = next;
        if diff <= cfg.lp_tol {
            return Ok(FixedPoint {
                sequence: cur,
                iterations: app - 1,
                rates,
                residual: diff,
            });
        }
        prev = Some(diff);
    }
    Err(Error::Convergence {
        reason: format!(
            "no Lyapunov-Perron fixed point within {} iterations",
            cfg.max_lp_iters
        ),
        trace: rates,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphValue {
    pub h_u: Vec<f64>,
    /// `Σ_j e^{λ_s j} F^s_j` recomputed from the fixed point.
    pub series: Vec<f64>,
    pub series_gap: f64,
}

/// `h^u = π^s Γ` at the end of segment 0, with the series form as a cross-check.
pub fn extract_graph(
    gamma: &LPSequence,
    family: &DriverFamily,
    op: &SpectralOperator,
    trunc: &TruncatedNonlinearity,
    n_unstable: usize,
) -> Result<GraphValue> {
    let m = op.n_modes();
    let seg0 = &gamma.segments[0];
    let h_u = seg0.value(seg0.grid().len() - 1)[n_unstable..].to_vec();
    let ints = segment_integrals(gamma, family, op, trunc)?;
    let lam = op.eigenvalues();
    let mut series = vec![0.0; m - n_unstable];
    for (j, path) in ints.paths.iter().enumerate() {
        let fj = &path[(family.window(j).grid().len() - 1) * m..];
        for k in n_unstable..m {
            series[k - n_unstable] += math::exp(lam[k] * j as f64) * fj[k];
        }
    }
    let series_gap = h_u
        .iter()
        .zip(&series)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(GraphValue {
        h_u,
        series,
        series_gap,
    })
}

/// Runtime constants entering the gap condition and the cut-off radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasuredConstants {
    /// Orbit embedding constant `‖S_· x, 0‖_𝒟 / ‖x‖`.
    pub c: f64,
    /// Lipschitz constant per unit radius of the truncated drift convolution.
    pub c_f: f64,
    /// Same for the truncated rough convolution, normalised by the driver
    /// amplification factor.
    pub c_g: f64,
}

fn random_controlled(
    op: &SpectralOperator,
    p: &RoughPath,
    rng: &mut impl Rng,
    target: f64,
) -> Result<ControlledPath> {
    let (m, d) = (op.n_modes(), p.dim());
    let grid = *p.grid();
    let a: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..m * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n = grid.len();
    let mut y = vec![0.0; n * m];
    let mut yp = vec![0.0; n * m * d];
    let mut dw = vec![0.0; d];
    for i in 0..n {
        let s = op.factors(grid.time(i) - grid.t0());
        p.increment_into(0, i, &mut dw);
        for k in 0..m {
            let lin: f64 = (0..d).map(|l| b[k * d + l] * dw[l]).sum();
            y[i * m + k] = s[k] * (a[k] + lin);
            for l in 0..d {
                yp[(i * m + k) * d + l] = s[k] * b[k * d + l];
            }
        }
    }
    let cp = ControlledPath::new(grid, m, 1, d, y, yp, p.gamma() / 2.0, -2.0 * p.gamma())?;
    let norm = cp.d_norm(p, op)?;
    Ok(if norm > 0.0 {
        cp.scaled(target / norm)
    } else {
        cp
    })
}

/// Measure `C`, `C_f` and `C_g` on the first history window with `n_pairs`
/// random path pairs of 𝒟 norm at most 1.2 (cut-off radius 1).
pub fn measure_constants(
    eq: &Equation,
    family: &DriverFamily,
    seed: u64,
    n_pairs: usize,
) -> Result<MeasuredConstants> {
    let op = &eq.op;
    let m = op.n_modes();
    let mut c = 0.0f64;
    for p in &family.windows {
        for k in 0..m {
            let mut e = vec![0.0; m];
            e[k] = 1.0;
            let orbit = ControlledPath::semigroup_orbit(op, *p.grid(), &e, p.dim(), p.gamma());
            c = c.max(orbit.d_norm(p, op)?);
        }
    }
    let p = family.window(0);
    let unit = CutoffConfig::new(1.0, 1.0)?;
    let drift_only = TruncatedNonlinearity::new(
        eq.f.clone(),
        crate::nonlinearity::Nonlinearity::zero(m, p.dim()),
        unit,
        false,
    )?;
    let noise_only = TruncatedNonlinearity::new(
        crate::nonlinearity::Nonlinearity::zero(m, 1),
        eq.g.clone(),
        unit,
        false,
    )?;
    let image = |trunc: &TruncatedNonlinearity,
                 y: &ControlledPath,
                 with_noise: bool|
     -> Result<ControlledPath> {
        let ev = trunc.evaluate(y, p, op)?;
        let mut path = drift_path(op, &ev.drift, p.grid())?;
        let mut yp = vec![0.0; y.derivatives().len()];
        if with_noise {
            let conv = convolution_path(op, &ev.integrand, p)?;
            path.iter_mut().zip(&conv).for_each(|(a, b)| *a += b);
            yp.copy_from_slice(ev.integrand.values());
        }
        ControlledPath::new(*p.grid(), m, 1, p.dim(), path, yp, y.eta(), y.alpha())
    };
    let mut rng = math::rng_for(seed, 0x4d43);
    let (mut cf, mut cg) = (0.0f64, 0.0f64);
    for _ in 0..n_pairs {
        let ta = rng.random_range(0.0..1.2);
        let tb = rng.random_range(0.0..1.2);
        let ya = random_controlled(op, p, &mut rng, ta)?;
        let yb = random_controlled(op, p, &mut rng, tb)?;
        let den = ya.combine(1.0, &yb, -1.0)?.d_norm(p, op)?;
        if den <= 1e-12 {
            continue;
        }
        let df =
            image(&drift_only, &ya, false)?.combine(1.0, &image(&drift_only, &yb, false)?, -1.0)?;
        cf = cf.max(df.d_norm(p, op)? / den);
        let dg =
            image(&noise_only, &ya, true)?.combine(1.0, &image(&noise_only, &yb, true)?, -1.0)?;
        cg = cg.max(dg.d_norm(p, op)? / den);
    }
    let n = p.holder_norms();
    let amp = (1.0 + n.w + n.w2) * (1.0 + n.w) * (1.0 + n.w);
    Ok(MeasuredConstants {
        c,
        c_f: cf,
        c_g: cg / amp,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphSample {
    pub xi_u: Vec<f64>,
    pub h_u: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub max_rate: f64,
    pub series_gap: f64,
    pub tail_bound: f64,
    pub failure: Option<String>,
}

/// Everything needed to evaluate `h^u` for one driver realisation.
#[derive(Debug, Clone)]
pub struct ManifoldContext {
    pub op: SpectralOperator,
    pub trunc: TruncatedNonlinearity,
    pub family: DriverFamily,
    pub cfg: LPConfig,
    pub constants: MeasuredConstants,
    pub gap: GapReport,
    pub n_unstable: usize,
    /// Sampling ball radius `ρ`.
    pub radius: f64,
}

impl ManifoldContext {
    /// Measure constants, solve for the cut-off radius `R` and set
    /// `ρ = min(ball_radius, R/4)`.
    pub fn new(
        eq: &Equation,
        p_ext: &RoughPath,
        cfg: LPConfig,
        ball_radius: f64,
        seed: u64,
    ) -> Result<Self> {
        cfg.split(&eq.op)?;
        let family = DriverFamily::from_extended(p_ext, cfg.k_max)?;
        let constants = measure_constants(eq, &family, seed, 16)?;
        let cutoff = solve_cutoff_radius(
            family.max_norms(),
            cfg.k,
            constants.c_f,
            &LinearConstant(constants.c_g),
        )?;
        Self::assemble(eq, family, cfg, cutoff, constants, ball_radius)
    }

    /// Context with a prescribed cut-off radius and constants.
    pub fn with_cutoff(
        eq: &Equation,
        p_ext: &RoughPath,
        cfg: LPConfig,
        cutoff: CutoffConfig,
        constants: MeasuredConstants,
        ball_radius: f64,
    ) -> Result<Self> {
        let family = DriverFamily::from_extended(p_ext, cfg.k_max)?;
        Self::assemble(eq, family, cfg, cutoff, constants, ball_radius)
    }

    fn assemble(
        eq: &Equation,
        family: DriverFamily,
        cfg: LPConfig,
        cutoff: CutoffConfig,
        constants: MeasuredConstants,
        ball_radius: f64,
    ) -> Result<Self> {
        let n_unstable = cfg.split(&eq.op)?;
        if eq.g.cols() != family.window(0).dim() {
            bail!(
                GridMismatch,
                "diffusion has {} columns, driver dimension is {}",
                eq.g.cols(),
                family.window(0).dim()
            );
        }
        let gap = gap_condition(&cfg, constants.c)?;
        if cfg.enforce_gap && !gap.ok {
            bail!(
                InvalidConfig,
                "gap condition fails: value {} > 1/2 with K = {}",
                gap.value,
                cfg.k
            );
        }
        if !(ball_radius > 0.0) {
            bail!(InvalidConfig, "ball radius must be positive");
        }
        let trunc =
            TruncatedNonlinearity::new(eq.f.clone(), eq.g.clone(), cutoff, cfg.check_assumptions)?;
        let radius = ball_radius.min(cutoff.r / 4.0);
        Ok(Self {
            op: eq.op.clone(),
            trunc,
            family,
            cfg,
            constants,
            gap,
            n_unstable,
            radius,
        })
    }

    pub fn cutoff(&self) -> CutoffConfig {
        self.trunc.cfg
    }

    /// Same equation, constants and cut-off on another driver realisation.
    pub fn rebuild(&self, p_ext: &RoughPath) -> Result<Self> {
        let family = DriverFamily::from_extended(p_ext, self.cfg.k_max)?;
        Ok(Self {
            family,
            ..self.clone()
        })
    }

    pub fn fixed_point(&self, xi_u: &[f64]) -> Result<FixedPoint> {
        lp_fixed_point(xi_u, &self.family, &self.cfg, &self.op, &self.trunc)
    }

    pub fn sample(&self, xi_u: &[f64]) -> GraphSample {
        let ns = self.op.n_modes() - self.n_unstable;
        let failed = |e: Error| GraphSample {
            xi_u: xi_u.to_vec(),
            h_u: vec![f64::NAN; ns],
            converged: false,
            iterations: 0,
            max_rate: f64::NAN,
            series_gap: f64::NAN,
            tail_bound: f64::NAN,
            failure: Some(e.to_string()),
        };
        let fp = match self.fixed_point(xi_u) {
            Ok(fp) => fp,
            Err(e) => return failed(e),
        };
        match extract_graph(
            &fp.sequence,
            &self.family,
            &self.op,
            &self.trunc,
            self.n_unstable,
        ) {
            Ok(g) => GraphSample {
                xi_u: xi_u.to_vec(),
                h_u: g.h_u,
                converged: true,
                iterations: fp.iterations,
                max_rate: fp.max_rate(),
                series_gap: g.series_gap,
                tail_bound: fp.sequence.tail_bound,
                failure: None,
            },
            Err(e) => failed(e),
        }
    }

    /// Tensor mesh with `n_per_axis` points per unstable axis, restricted to the
    /// closed ball of radius `ρ`. A single point per axis means the origin.
    pub fn mesh(&self, n_per_axis: usize) -> Vec<Vec<f64>> {
        let nu = self.n_unstable;
        if n_per_axis <= 1 {
            return vec![vec![0.0; nu]];
        }
        let axis: Vec<f64> = (0..n_per_axis)
            .map(|i| self.radius * (2.0 * i as f64 / (n_per_axis - 1) as f64 - 1.0))
            .collect();
        let total = n_per_axis.pow(nu as u32);
        (0..total)
            .map(|mut idx| {
                (0..nu)
                    .map(|_| {
                        let v = axis[idx % n_per_axis];
                        idx /= n_per_axis;
                        v
                    })
                    .collect::<Vec<f64>>()
            })
            .filter(|x| math::norm2(x) <= self.radius * (1.0 + 1e-12))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct ManifoldGraph {
    pub center: Vec<f64>,
    pub radius: f64,
    pub cutoff_radius: f64,
    pub samples: Vec<GraphSample>,
    /// Largest difference quotient over converged sample pairs.
    pub lipschitz_estimate: f64,
    pub constants: MeasuredConstants,
    pub gap: GapReport,
}

impl ManifoldGraph {
    pub fn from_samples(ctx: &ManifoldContext, samples: Vec<GraphSample>) -> Self {
        let ok: Vec<&GraphSample> = samples.iter().filter(|s| s.converged).collect();
        let mut lip = 0.0f64;
        for (i, a) in ok.iter().enumerate() {
            for b in &ok[i + 1..] {
                let dx: Vec<f64> = a.xi_u.iter().zip(&b.xi_u).map(|(u, v)| u - v).collect();
                let dh: Vec<f64> = a.h_u.iter().zip(&b.h_u).map(|(u, v)| u - v).collect();
                let nx = math::norm2(&dx);
                if nx > 0.0 {
                    lip = lip.max(math::norm2(&dh) / nx);
                }
            }
        }
        Self {
            center: vec![0.0; ctx.op.n_modes()],
            radius: ctx.radius,
            cutoff_radius: ctx.cutoff().r,
            samples,
            lipschitz_estimate: lip,
            constants: ctx.constants,
            gap: ctx.gap,
        }
    }

    pub fn all_converged(&self) -> bool {
        self.samples.iter().all(|s| s.converged)
    }
}

/// Sample `h^u` on a tensor mesh of the ball, sequentially.
pub fn build_manifold(
    eq: &Equation,
    p_ext: &RoughPath,
    cfg: LPConfig,
    ball_radius: f64,
    n_per_axis: usize,
    seed: u64,
) -> Result<ManifoldGraph> {
    let ctx = ManifoldContext::new(eq, p_ext, cfg, ball_radius, seed)?;
    let samples = ctx.mesh(n_per_axis).iter().map(|x| ctx.sample(x)).collect();
    Ok(ManifoldGraph::from_samples(&ctx, samples))
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceReport {
    pub defect: f64,
    /// The unstable part of `z(t)` left the sampling ball.
    pub out_of_ball: bool,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
}

/// Evolve `ξ^u + h^u(ξ^u)` over `[0, t_forward]` and compare the stable part
/// with the graph rebuilt for `Θ_{t_forward} w`.
pub fn invariance_defect(
    ctx: &ManifoldContext,
    eq: &Equation,
    p_ext: &RoughPath,
    xi_u: &[f64],
    t_forward: f64,
    solve_cfg: &SolveConfig,
) -> Result<InvarianceReport> {
    let nu = ctx.n_unstable;
    let here = ctx.sample(xi_u);
    if let Some(f) = here.failure {
        return Err(Error::Convergence {
            reason: format!("graph at the start point: {f}"),
            trace: Vec::new(),
        });
    }
    let mut start = xi_u.to_vec();
    start.extend_from_slice(&here.h_u);
    let end = solve_global(eq, &start, p_ext, t_forward, solve_cfg)?.endpoint();
    let shifted = ctx.rebuild(&p_ext.shift(t_forward)?)?;
    let there = shifted.sample(&end[..nu]);
    if let Some(f) = there.failure {
        return Err(Error::Convergence {
            reason: format!("graph at the end point: {f}"),
            trace: Vec::new(),
        });
    }
    let diff: Vec<f64> = end[nu..]
        .iter()
        .zip(&there.h_u)
        .map(|(a, b)| a - b)
        .collect();
    Ok(InvarianceReport {
        defect: math::norm2(&diff),
        out_of_ball: math::norm2(&end[..nu]) > ctx.radius,
        start,
        end,
    })
}
