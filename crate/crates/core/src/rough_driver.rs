//! Level-2 rough paths sampled on uniform time grids.
//!
//! A [`RoughPath`] stores the first level `w` at every grid point and the second
//! level `w²_{t,s}` densely for every ordered grid pair `s ≤ t`. Components follow
//! the convention
//!
//! ```text
//! w²_{t,s}[i][j] = ∫_s^t (w^i_u − w^i_s) dw^j_u
//! ```
//!
//! so Chen's relation reads `w²_{t,s} − w²_{t,u} − w²_{u,s} = δw_{u,s} ⊗ δw_{t,u}`.
//! Norms on `ℝ^d` are Euclidean, norms on `ℝ^{d×d}` are operator norms.
//!
//! Hölder norms are discrete suprema over grid pairs and therefore lower bounds
//! of the continuum quantities.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{bail, Error, Result};
use crate::math;

/// Default tolerance on the Chen defect accepted at construction.
pub const DEFAULT_CHEN_TOL: f64 = 1e-10;

/// Paths up to this many points are Chen-audited over every grid triple; larger
/// ones over a deterministic random sample of triples.
pub const FULL_CHEN_AUDIT_MAX_POINTS: usize = 257;

const SAMPLED_CHEN_TRIPLES: usize = 20_000;
const GENERATED_CHEN_TRIPLES: usize = 1_000;

/// Relative tolerance used when locating times on a grid.
const GRID_LOCATE_TOL: f64 = 1e-9;

/// Uniform partition `t0 = τ_0 < … < τ_{n−1} = t1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    t1: f64,
    n_points: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t1: f64, n_points: usize) -> Result<Self> {
        if !(t0.is_finite() && t1.is_finite()) || t1 <= t0 {
            bail!(
                InvalidInput,
                "time grid needs finite t0 < t1, got [{t0}, {t1}]"
            );
        }
        if n_points < 2 {
            bail!(
                InvalidInput,
                "time grid needs at least 2 points, got {n_points}"
            );
        }
        Ok(Self { t0, t1, n_points })
    }

    /// Grid with `2^level + 1` points.
    pub fn dyadic(t0: f64, t1: f64, level: u32) -> Result<Self> {
        Self::new(t0, t1, (1usize << level) + 1)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn duration(&self) -> f64 {
        self.t1 - self.t0
    }

    pub fn step(&self) -> f64 {
        (self.t1 - self.t0) / (self.n_points - 1) as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            self.t1
        } else {
            self.t0 + i as f64 * self.step()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.time(i)).collect()
    }

    /// Index of `t` if it is a grid point.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = (t - self.t0) / self.step();
        let k = math::round(x);
        if (x - k).abs() > GRID_LOCATE_TOL * x.abs().max(1.0) || k < 0.0 {
            return None;
        }
        let k = k as usize;
        (k < self.n_points).then_some(k)
    }

    /// Number of grid steps spanned by a duration, if it is a whole number.
    pub fn steps_in(&self, duration: f64) -> Option<usize> {
        let x = duration / self.step();
        let k = math::round(x);
        ((x - k).abs() <= GRID_LOCATE_TOL * x.abs().max(1.0) && k >= 0.0).then_some(k as usize)
    }

    /// Same point count and endpoints within rounding.
    pub fn matches(&self, other: &TimeGrid) -> bool {
        let tol = GRID_LOCATE_TOL * self.step();
        self.n_points == other.n_points
            && (self.t0 - other.t0).abs() <= tol
            && (self.t1 - other.t1).abs() <= tol
    }

    /// Sub-grid between two point indices (inclusive).
    pub fn sub(&self, i0: usize, i1: usize) -> Result<Self> {
        if i1 <= i0 || i1 >= self.n_points {
            bail!(
                OutOfRange,
                "sub-grid [{i0}, {i1}] of a {}-point grid",
                self.n_points
            );
        }
        Ok(Self {
            t0: self.time(i0),
            t1: self.time(i1),
            n_points: i1 - i0 + 1,
        })
    }

    fn shifted(&self, tau: f64) -> Self {
        Self {
            t0: self.t0 - tau,
            t1: self.t1 - tau,
            n_points: self.n_points,
        }
    }
}

/// Index of `w²_{t,s}` (with `s ≤ t`) in the packed pair storage.
#[inline]
pub(crate) fn pair_index(s: usize, t: usize) -> usize {
    debug_assert!(s <= t);
    t * (t + 1) / 2 + s
}

#[inline]
fn pair_count(n: usize) -> usize {
    n * (n + 1) / 2
}

/// `(|w|_γ, |w²|_{2γ})` over grid pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderNorms {
    pub w: f64,
    pub w2: f64,
}

/// Value of the inhomogeneous rough metric `|w − w̃|_γ + |w² − w̃²|_{2γ}`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct RoughMetricValue(pub f64);

/// Grid-sampled level-2 rough path. Immutable; clones share storage.
#[derive(Debug, Clone)]
pub struct RoughPath {
    grid: TimeGrid,
    dim: usize,
    gamma: f64,
    /// Raw first-level samples, `n × d`. Increments are always taken from these.
    raw: Arc<[f64]>,
    /// Subtracted from `raw` when reporting values (set by [`RoughPath::shift`]).
    origin: Vec<f64>,
    /// Packed `w²_{t,s}`, `d × d` row-major per pair.
    w2: Arc<[f64]>,
}

impl RoughPath {
    /// Validated constructor: shapes, finiteness, `γ ∈ (1/3, 1/2]`, vanishing
    /// diagonal and a Chen audit within `chen_tol`.
    pub fn from_parts(
        grid: TimeGrid,
        dim: usize,
        gamma: f64,
        w: Vec<f64>,
        w2: Vec<f64>,
        chen_tol: f64,
    ) -> Result<Self> {
        if !(gamma > 1.0 / 3.0 && gamma <= 0.5) {
            bail!(
                InvalidInput,
                "Hölder exponent must lie in (1/3, 1/2], got {gamma}"
            );
        }
        let path = Self::from_parts_unchecked(grid, dim, gamma, w, w2)?;
        if !math::all_finite(&path.raw) || !math::all_finite(&path.w2) {
            bail!(InvalidInput, "rough path samples must be finite");
        }
        let diag = (0..grid.len())
            .map(|i| math::matrix_norm(path.area(i, i), dim))
            .fold(0.0, f64::max);
        if diag > chen_tol {
            bail!(
                InvalidInput,
                "second level must vanish on the diagonal (|w²_tt| = {diag:e})"
            );
        }
        let defect = path.chen_audit();
        if !(defect <= chen_tol) {
            bail!(
                InvalidInput,
                "Chen defect {defect:e} exceeds tolerance {chen_tol:e}"
            );
        }
        Ok(path)
    }

    /// Constructor for lifts built here, which satisfy Chen by construction:
    /// finiteness plus a sampled audit instead of the full one.
    fn from_generated(
        grid: TimeGrid,
        dim: usize,
        gamma: f64,
        w: Vec<f64>,
        w2: Vec<f64>,
    ) -> Result<Self> {
        if !(gamma > 1.0 / 3.0 && gamma <= 0.5) {
            bail!(
                InvalidInput,
                "Hölder exponent must lie in (1/3, 1/2], got {gamma}"
            );
        }
        let path = Self::from_parts_unchecked(grid, dim, gamma, w, w2)?;
        if !math::all_finite(&path.raw) || !math::all_finite(&path.w2) {
            bail!(InvalidInput, "rough path samples must be finite");
        }
        let defect = path.chen_defect_sampled(GENERATED_CHEN_TRIPLES, 0x5eed);
        if !(defect <= DEFAULT_CHEN_TOL) {
            bail!(
                InvalidInput,
                "Chen defect {defect:e} exceeds tolerance {DEFAULT_CHEN_TOL:e}"
            );
        }
        Ok(path)
    }

    /// Shape-checked constructor without the Chen audit, for auditing external data.
    pub fn from_parts_unchecked(
        grid: TimeGrid,
        dim: usize,
        gamma: f64,
        w: Vec<f64>,
        w2: Vec<f64>,
    ) -> Result<Self> {
        let n = grid.len();
        if dim == 0 {
            bail!(InvalidInput, "rough path dimension must be positive");
        }
        if w.len() != n * dim {
            bail!(
                GridMismatch,
                "first level has {} values, expected {}",
                w.len(),
                n * dim
            );
        }
        if w2.len() != pair_count(n) * dim * dim {
            bail!(
                GridMismatch,
                "second level has {} values, expected {}",
                w2.len(),
                pair_count(n) * dim * dim
            );
        }
        Ok(Self {
            grid,
            dim,
            gamma,
            raw: w.into(),
            origin: vec![0.0; dim],
            w2: w2.into(),
        })
    }

    /// Zero driver.
    pub fn zero(grid: TimeGrid, dim: usize, gamma: f64) -> Result<Self> {
        let n = grid.len();
        Self::from_generated(
            grid,
            dim,
            gamma,
            vec![0.0; n * dim],
            vec![0.0; pair_count(n) * dim * dim],
        )
    }

    /// Canonical (piecewise-linear) lift of a path sampled on a uniform grid that
    /// refines `target` by an integer factor.
    ///
    /// `samples` is `m × d` row-major with `m − 1` a multiple of `target.len() − 1`.
    /// The second level is the trapezoid value of `∫ (w_u − w_s) ⊗ dw_u` over the
    /// fine grid, which is exact for the piecewise-linear interpolant.
    pub fn build_smooth_lift(
        samples: &[f64],
        dim: usize,
        target: TimeGrid,
        gamma: f64,
    ) -> Result<Self> {
        if dim == 0 || samples.len() % dim != 0 {
            bail!(
                InvalidInput,
                "sample buffer of length {} is not a multiple of d = {dim}",
                samples.len()
            );
        }
        let m = samples.len() / dim;
        let n = target.len();
        if m < 2 || (m - 1) % (n - 1) != 0 {
            bail!(
                GridMismatch,
                "{m} fine samples do not refine a {n}-point grid"
            );
        }
        if !math::all_finite(samples) {
            bail!(InvalidInput, "samples contain non-finite values");
        }
        let r = (m - 1) / (n - 1);
        let dd = dim * dim;
        let mut w = Vec::with_capacity(n * dim);
        for i in 0..n {
            w.extend_from_slice(&samples[i * r * dim..(i * r + 1) * dim]);
        }
        let mut w2 = vec![0.0; pair_count(n) * dd];
        let mut acc = vec![0.0; dd];
        let mut delta = vec![0.0; dim];
        let mut rel = vec![0.0; dim];
        for s in 0..n {
            acc.iter_mut().for_each(|v| *v = 0.0);
            let base = &samples[s * r * dim..(s * r + 1) * dim];
            for k in s * r..(n - 1) * r {
                let x0 = &samples[k * dim..(k + 1) * dim];
                let x1 = &samples[(k + 1) * dim..(k + 2) * dim];
                for c in 0..dim {
                    delta[c] = x1[c] - x0[c];
                    rel[c] = x0[c] - base[c];
                }
                for i in 0..dim {
                    for j in 0..dim {
                        acc[i * dim + j] += rel[i] * delta[j] + 0.5 * delta[i] * delta[j];
                    }
                }
                if (k + 1) % r == 0 {
                    let t = (k + 1) / r;
                    let at = pair_index(s, t) * dd;
                    w2[at..at + dd].copy_from_slice(&acc);
                }
            }
        }
        Self::from_generated(target, dim, gamma, w, w2)
    }

    /// Geometric lift of a Brownian path sampled on `grid` refined `refinement`
    /// times, started at zero at `grid.t0()`. Deterministic in `seed`.
    pub fn build_bm_lift(
        seed: u64,
        grid: TimeGrid,
        dim: usize,
        refinement: usize,
        gamma: f64,
    ) -> Result<Self> {
        if refinement < 4 {
            bail!(
                InvalidConfig,
                "Brownian lift refinement must be at least 4, got {refinement}"
            );
        }
        let samples = brownian_samples(seed, grid, dim, refinement);
        Self::build_smooth_lift(&samples, dim, grid, gamma)
    }

    /// Stress driver `w ≡ 0`, `w²_{t,s} = (t − s)·a` for antisymmetric `a`.
    pub fn pure_area_path(a: &[f64], dim: usize, grid: TimeGrid, gamma: f64) -> Result<Self> {
        if a.len() != dim * dim {
            bail!(InvalidInput, "area matrix must be {dim}×{dim}");
        }
        let scale = 1.0 + math::max_abs(a);
        for i in 0..dim {
            for j in 0..dim {
                if (a[i * dim + j] + a[j * dim + i]).abs() > 1e-12 * scale {
                    bail!(
                        InvalidInput,
                        "area matrix is not antisymmetric at ({i}, {j})"
                    );
                }
            }
        }
        let n = grid.len();
        let h = grid.step();
        let dd = dim * dim;
        let mut w2 = vec![0.0; pair_count(n) * dd];
        for t in 0..n {
            for s in 0..=t {
                let len = (t - s) as f64 * h;
                let at = pair_index(s, t) * dd;
                for (dst, src) in w2[at..at + dd].iter_mut().zip(a) {
                    *dst = len * src;
                }
            }
        }
        Self::from_generated(grid, dim, gamma, vec![0.0; n * dim], w2)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `w` at grid point `i`.
    pub fn value(&self, i: usize) -> Vec<f64> {
        let d = self.dim;
        self.raw[i * d..(i + 1) * d]
            .iter()
            .zip(&self.origin)
            .map(|(a, o)| a - o)
            .collect()
    }

    /// All first-level values, `n × d` row-major.
    pub fn values(&self) -> Vec<f64> {
        (0..self.grid.len()).flat_map(|i| self.value(i)).collect()
    }

    /// `δw_{t,s} = w_t − w_s` written into `out`.
    #[inline]
    pub fn increment_into(&self, s: usize, t: usize, out: &mut [f64]) {
        let d = self.dim;
        for c in 0..d {
            out[c] = self.raw[t * d + c] - self.raw[s * d + c];
        }
    }

    pub fn increment(&self, s: usize, t: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.increment_into(s, t, &mut out);
        out
    }

    /// `w²_{t,s}` for grid indices `s ≤ t`, as a row-major `d × d` slice.
    #[inline]
    pub fn area(&self, s: usize, t: usize) -> &[f64] {
        let dd = self.dim * self.dim;
        let at = pair_index(s, t) * dd;
        &self.w2[at..at + dd]
    }

    /// Decompose into `(grid, dim, gamma, values, packed second level)`.
    pub fn to_parts(&self) -> (TimeGrid, usize, f64, Vec<f64>, Vec<f64>) {
        (
            self.grid,
            self.dim,
            self.gamma,
            self.values(),
            self.w2.to_vec(),
        )
    }

    /// Chen residual `w²_{t,s} − w²_{t,u} − w²_{u,s} − δw_{u,s} ⊗ δw_{t,u}` for `s ≤ u ≤ t`.
    fn chen_residual(&self, s: usize, u: usize, t: usize, buf: &mut [f64]) -> f64 {
        let d = self.dim;
        let (ts, tu, us) = (self.area(s, t), self.area(u, t), self.area(s, u));
        for i in 0..d {
            let a = self.raw[u * d + i] - self.raw[s * d + i];
            for j in 0..d {
                let b = self.raw[t * d + j] - self.raw[u * d + j];
                let k = i * d + j;
                buf[k] = ts[k] - tu[k] - us[k] - a * b;
            }
        }
        math::matrix_norm(buf, d)
    }

    /// Maximum Chen residual over all grid triples `s ≤ u ≤ t`. O(n³).
    pub fn chen_defect(&self) -> f64 {
        let n = self.grid.len();
        let d = self.dim;
        let dd = d * d;
        let raw = &self.raw;
        let mut buf = vec![0.0; dd];
        let mut dtu = vec![0.0; d];
        let mut worst = 0.0f64;
        for t in 0..n {
            let t_row = &self.w2[pair_index(0, t) * dd..(pair_index(t, t) + 1) * dd];
            for u in 0..=t {
                let tu = &t_row[u * dd..(u + 1) * dd];
                let u_row = &self.w2[pair_index(0, u) * dd..(pair_index(u, u) + 1) * dd];
                for j in 0..d {
                    dtu[j] = raw[t * d + j] - raw[u * d + j];
                }
                for s in 0..=u {
                    let ts = &t_row[s * dd..(s + 1) * dd];
                    let us = &u_row[s * dd..(s + 1) * dd];
                    let mut fro2 = 0.0;
                    for i in 0..d {
                        let a = raw[u * d + i] - raw[s * d + i];
                        for j in 0..d {
                            let k = i * d + j;
                            let r = ts[k] - tu[k] - us[k] - a * dtu[j];
                            buf[k] = r;
                            fro2 += r * r;
                        }
                    }
                    // operator norm never exceeds the Frobenius norm
                    if fro2 <= worst * worst {
                        continue;
                    }
                    let r = math::matrix_norm(&buf, d);
                    if !(r <= worst) {
                        worst = if r.is_nan() { f64::INFINITY } else { r };
                    }
                }
            }
        }
        worst
    }

    /// Chen residual maximised over `samples` random triples plus every
    /// consecutive triple. Deterministic in `seed`.
    pub fn chen_defect_sampled(&self, samples: usize, seed: u64) -> f64 {
        let n = self.grid.len();
        let mut buf = vec![0.0; self.dim * self.dim];
        let mut worst = 0.0f64;
        let consider = |r: f64, worst: &mut f64| {
            if !(r <= *worst) {
                *worst = if r.is_nan() { f64::INFINITY } else { r };
            }
        };
        for s in 0..n.saturating_sub(2) {
            consider(self.chen_residual(s, s + 1, s + 2, &mut buf), &mut worst);
        }
        let mut rng = math::rng_for(seed, 0x43_48_45_4e);
        for _ in 0..samples {
            let mut idx = [
                rng.random_range(0..n),
                rng.random_range(0..n),
                rng.random_range(0..n),
            ];
            idx.sort_unstable();
            consider(
                self.chen_residual(idx[0], idx[1], idx[2], &mut buf),
                &mut worst,
            );
        }
        worst
    }

    fn chen_audit(&self) -> f64 {
        if self.grid.len() <= FULL_CHEN_AUDIT_MAX_POINTS {
            self.chen_defect()
        } else {
            self.chen_defect_sampled(SAMPLED_CHEN_TRIPLES, 0x5eed)
        }
    }

    /// Largest deviation of `Sym(w²_{t,s})` from `½ δw ⊗ δw` (zero for geometric lifts).
    pub fn symmetric_defect(&self) -> f64 {
        let n = self.grid.len();
        let d = self.dim;
        let mut worst = 0.0f64;
        let mut dw = vec![0.0; d];
        for t in 0..n {
            for s in 0..=t {
                self.increment_into(s, t, &mut dw);
                let a = self.area(s, t);
                for i in 0..d {
                    for j in 0..d {
                        let sym = 0.5 * (a[i * d + j] + a[j * d + i]);
                        worst = worst.max((sym - 0.5 * dw[i] * dw[j]).abs());
                    }
                }
            }
        }
        worst
    }

    /// `(|w|_γ, |w²|_{2γ})` as suprema over grid pairs `s < t`.
    pub fn holder_norms(&self) -> HolderNorms {
        self.holder_norms_between(0, self.grid.len() - 1)
    }

    /// Hölder norms restricted to grid indices `[i0, i1]`.
    pub fn holder_norms_between(&self, i0: usize, i1: usize) -> HolderNorms {
        let h = self.grid.step();
        let d = self.dim;
        let lags = i1 - i0 + 1;
        let pw: Vec<f64> = (0..lags)
            .map(|k| math::powf(k as f64 * h, self.gamma))
            .collect();
        let mut dw = vec![0.0; d];
        let (mut nw, mut nw2) = (0.0f64, 0.0f64);
        for t in i0..=i1 {
            for s in i0..t {
                let p = pw[t - s];
                self.increment_into(s, t, &mut dw);
                nw = nw.max(math::norm2(&dw) / p);
                nw2 = nw2.max(math::matrix_norm(self.area(s, t), d) / (p * p));
            }
        }
        HolderNorms { w: nw, w2: nw2 }
    }

    /// Time shift `Θ_τ`: `(θ_τ w)_t = w_{t+τ} − w_τ`, `(θ̃_τ w²)_{t,s} = w²_{t+τ,s+τ}`.
    ///
    /// The result lives on the grid translated by `−τ`; `τ` must be a grid point.
    pub fn shift(&self, tau: f64) -> Result<Self> {
        if tau == 0.0 {
            return Ok(self.clone());
        }
        let tol = GRID_LOCATE_TOL * self.grid.step();
        if tau < self.grid.t0() - tol || tau > self.grid.t1() + tol {
            bail!(
                OutOfRange,
                "shift {tau} leaves the stored window [{}, {}]",
                self.grid.t0(),
                self.grid.t1()
            );
        }
        let k = self.grid.index_of(tau).ok_or_else(|| {
            Error::GridMismatch(format!(
                "shift {tau} is not on the grid (step {})",
                self.grid.step()
            ))
        })?;
        let d = self.dim;
        Ok(Self {
            grid: self.grid.shifted(tau),
            dim: d,
            gamma: self.gamma,
            raw: self.raw.clone(),
            origin: self.raw[k * d..(k + 1) * d].to_vec(),
            w2: self.w2.clone(),
        })
    }

    /// Restriction to grid indices `[i0, i1]`.
    pub fn restrict_indices(&self, i0: usize, i1: usize) -> Result<Self> {
        let grid = self.grid.sub(i0, i1)?;
        let d = self.dim;
        let dd = d * d;
        let n = i1 - i0 + 1;
        let raw = self.raw[i0 * d..(i1 + 1) * d].to_vec();
        let mut w2 = vec![0.0; pair_count(n) * dd];
        for t in 0..n {
            for s in 0..=t {
                let at = pair_index(s, t) * dd;
                w2[at..at + dd].copy_from_slice(self.area(i0 + s, i0 + t));
            }
        }
        Ok(Self {
            grid,
            dim: d,
            gamma: self.gamma,
            raw: raw.into(),
            origin: self.origin.clone(),
            w2: w2.into(),
        })
    }

    /// Restriction to the time window `[start, end]` (both grid points).
    pub fn restrict(&self, start: f64, end: f64) -> Result<Self> {
        let locate = |t: f64| {
            self.grid.index_of(t).ok_or_else(|| {
                Error::OutOfRange(format!(
                    "time {t} is not a grid point of [{}, {}]",
                    self.grid.t0(),
                    self.grid.t1()
                ))
            })
        };
        self.restrict_indices(locate(start)?, locate(end)?)
    }

    /// `Θ_start` restricted to `[0, end − start]`.
    pub fn window(&self, start: f64, end: f64) -> Result<Self> {
        self.shift(start)?.restrict(0.0, end - start)
    }

    /// Dilation `(λ w, λ² w²)`.
    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            grid: self.grid,
            dim: self.dim,
            gamma: self.gamma,
            raw: self
                .raw
                .iter()
                .map(|v| lambda * v)
                .collect::<Vec<_>>()
                .into(),
            origin: self.origin.iter().map(|v| lambda * v).collect(),
            w2: self
                .w2
                .iter()
                .map(|v| lambda * lambda * v)
                .collect::<Vec<_>>()
                .into(),
        }
    }

    /// `ϱ_γ(p, q) = |w − w̃|_γ + |w² − w̃²|_{2γ}` over common grid pairs.
    pub fn rough_metric(&self, other: &RoughPath) -> Result<RoughMetricValue> {
        if !self.grid.matches(&other.grid) || self.dim != other.dim {
            bail!(
                GridMismatch,
                "rough metric needs identical grids and dimensions"
            );
        }
        if self.gamma != other.gamma {
            bail!(InvalidInput, "rough metric needs equal Hölder exponents");
        }
        let n = self.grid.len();
        let h = self.grid.step();
        let d = self.dim;
        let pw: Vec<f64> = (0..n)
            .map(|k| math::powf(k as f64 * h, self.gamma))
            .collect();
        let (mut a, mut b) = (vec![0.0; d], vec![0.0; d]);
        let mut diff = vec![0.0; d * d];
        let (mut mw, mut mw2) = (0.0f64, 0.0f64);
        for t in 0..n {
            for s in 0..t {
                self.increment_into(s, t, &mut a);
                other.increment_into(s, t, &mut b);
                let dw: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
                for ((z, x), y) in diff.iter_mut().zip(self.area(s, t)).zip(other.area(s, t)) {
                    *z = x - y;
                }
                let p = pw[t - s];
                mw = mw.max(math::norm2(&dw) / p);
                mw2 = mw2.max(math::matrix_norm(&diff, d) / (p * p));
            }
        }
        Ok(RoughMetricValue(mw + mw2))
    }
}

/// Brownian samples on the refined grid of `grid`, `((n−1)·r + 1) × d` row-major.
pub fn brownian_samples(seed: u64, grid: TimeGrid, dim: usize, refinement: usize) -> Vec<f64> {
    let m = (grid.len() - 1) * refinement + 1;
    let sd = math::sqrt(grid.step() / refinement as f64);
    let mut rng = math::rng_for(seed, 0);
    let mut out = vec![0.0; m * dim];
    for k in 1..m {
        for c in 0..dim {
            let z: f64 = rng.sample(StandardNormal);
            out[k * dim + c] = out[(k - 1) * dim + c] + sd * z;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_grid(n: usize) -> TimeGrid {
        TimeGrid::new(0.0, 1.0, n).unwrap()
    }

    fn sample_fn(grid: TimeGrid, r: usize, _dim: usize, f: impl Fn(f64) -> Vec<f64>) -> Vec<f64> {
        let fine = TimeGrid::new(grid.t0(), grid.t1(), (grid.len() - 1) * r + 1).unwrap();
        (0..fine.len()).flat_map(|i| f(fine.time(i))).collect()
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(1.0, 1.0, 4).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 1).is_err());
        let g = TimeGrid::dyadic(-2.0, 1.0, 3).unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g.index_of(-2.0 + 3.0 * 3.0 / 8.0), Some(3));
        assert_eq!(g.index_of(0.01), None);
        assert_eq!(g.index_of(1.5), None);
    }

    #[test]
    fn linear_path_has_exact_area() {
        let v = 1.7;
        let grid = unit_grid(17);
        let samples = sample_fn(grid, 4, 1, |t| vec![v * t]);
        let p = RoughPath::build_smooth_lift(&samples, 1, grid, 0.5).unwrap();
        for t in 0..17 {
            for s in 0..=t {
                let len = grid.time(t) - grid.time(s);
                assert!((p.area(s, t)[0] - v * v * len * len / 2.0).abs() < 1e-14);
            }
        }
        assert!(p.chen_defect() < 1e-12);
        // |w|_γ = |v| attained at t − s = 1
        assert!((p.holder_norms().w - v).abs() < 1e-12);
    }

    #[test]
    fn constant_path_is_trivial() {
        let grid = unit_grid(9);
        let samples = sample_fn(grid, 2, 2, |_| vec![0.3, -1.0]);
        let p = RoughPath::build_smooth_lift(&samples, 2, grid, 0.4).unwrap();
        let norms = p.holder_norms();
        assert_eq!((norms.w, norms.w2), (0.0, 0.0));
    }

    #[test]
    fn smooth_lift_cross_integral_matches_quadrature() {
        // ∫_0^1 t d(t²) = 2/3 at internal mesh 1e-4
        let grid = unit_grid(2);
        let samples = sample_fn(grid, 10_000, 2, |t| vec![t, t * t]);
        let p = RoughPath::build_smooth_lift(&samples, 2, grid, 0.5).unwrap();
        assert!((p.area(0, 1)[1] - 2.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn non_nested_samples_are_rejected() {
        let grid = unit_grid(5);
        let err = RoughPath::build_smooth_lift(&[0.0; 6], 1, grid, 0.5).unwrap_err();
        assert!(matches!(err, Error::GridMismatch(_)));
        let mut bad = vec![0.0; 9];
        bad[3] = f64::NAN;
        let err = RoughPath::build_smooth_lift(&bad, 1, grid, 0.5).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn bm_lift_is_geometric_and_deterministic() {
        let grid = unit_grid(33);
        let p = RoughPath::build_bm_lift(11, grid, 2, 8, 0.45).unwrap();
        let q = RoughPath::build_bm_lift(11, grid, 2, 8, 0.45).unwrap();
        assert_eq!(p.to_parts().3, q.to_parts().3);
        assert_eq!(p.to_parts().4, q.to_parts().4);
        assert!(p.symmetric_defect() < 1e-12);
        assert!(p.chen_defect() <= 1e-10);
        assert!(matches!(
            RoughPath::build_bm_lift(1, grid, 1, 3, 0.45),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn corrupted_area_is_detected() {
        let grid = unit_grid(9);
        let samples = sample_fn(grid, 1, 1, |t| vec![t]);
        let p = RoughPath::build_smooth_lift(&samples, 1, grid, 0.5).unwrap();
        let (g, d, gamma, w, mut w2) = p.to_parts();
        w2[pair_index(2, 6)] += 0.1;
        let bad = RoughPath::from_parts_unchecked(g, d, gamma, w.clone(), w2.clone()).unwrap();
        assert!(bad.chen_defect() >= 0.1 - 1e-12);
        assert!(RoughPath::from_parts(g, d, gamma, w, w2, DEFAULT_CHEN_TOL).is_err());
    }

    #[test]
    fn pure_area_driver() {
        let grid = TimeGrid::dyadic(0.0, 1.0, 4).unwrap();
        let a = [0.0, 1.0, -1.0, 0.0];
        let p = RoughPath::pure_area_path(&a, 2, grid, 0.5).unwrap();
        assert_eq!(p.chen_defect(), 0.0);
        let norms = p.holder_norms();
        assert_eq!(norms.w, 0.0);
        assert!((norms.w2 - 1.0).abs() < 1e-14);
        // |w²|_{2γ} = |a| T^{1−2γ}
        let p = RoughPath::pure_area_path(&a, 2, grid, 0.4).unwrap();
        assert!((p.holder_norms().w2 - 1.0).abs() < 1e-14);
        let zero = RoughPath::pure_area_path(&[0.0; 4], 2, grid, 0.5).unwrap();
        let z = RoughPath::zero(grid, 2, 0.5).unwrap();
        assert_eq!(zero.rough_metric(&z).unwrap().0, 0.0);
        assert!(matches!(
            RoughPath::pure_area_path(&[0.0, 1.0, 1.0, 0.0], 2, grid, 0.5),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn shift_relabels_and_recentres() {
        let grid = TimeGrid::new(-2.0, 2.0, 33).unwrap();
        let p = RoughPath::build_bm_lift(3, grid, 2, 4, 0.45).unwrap();
        let same = p.shift(0.0).unwrap();
        assert_eq!(same.to_parts().3, p.to_parts().3);
        let tau = 0.5;
        let q = p.shift(tau).unwrap();
        assert!((q.grid().t0() + 2.5).abs() < 1e-15);
        let k0 = q.grid().index_of(0.0).unwrap();
        assert!(q.value(k0).iter().all(|v| *v == 0.0));
        // cocycle identity: w²_{t+s,s}(p) = w²_{t,0}(shift(p, s))
        let (ps, pt) = (
            p.grid().index_of(tau).unwrap(),
            p.grid().index_of(tau + 1.0).unwrap(),
        );
        let (qs, qt) = (k0, q.grid().index_of(1.0).unwrap());
        assert_eq!(p.area(ps, pt), q.area(qs, qt));
        assert_eq!(q.chen_defect(), p.chen_defect());
        assert!(matches!(p.shift(0.01), Err(Error::GridMismatch(_))));
        assert!(matches!(p.shift(3.0), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn linear_path_shift_stays_linear() {
        let grid = unit_grid(9);
        let samples = sample_fn(grid, 2, 1, |t| vec![2.0 * t + 1.0]);
        let p = RoughPath::build_smooth_lift(&samples, 1, grid, 0.5).unwrap();
        let q = p.shift(0.25).unwrap();
        for i in 0..9 {
            assert!((q.value(i)[0] - 2.0 * q.grid().time(i)).abs() < 1e-14);
        }
    }

    #[test]
    fn window_restricts_to_unit_interval() {
        let grid = TimeGrid::new(-1.0, 1.0, 17).unwrap();
        let p = RoughPath::build_bm_lift(5, grid, 1, 4, 0.45).unwrap();
        let w = p.window(-0.5, 0.5).unwrap();
        assert_eq!(w.grid().len(), 9);
        assert_eq!(w.grid().t0(), 0.0);
        assert!((w.grid().t1() - 1.0).abs() < 1e-15);
        assert_eq!(w.area(0, 8), p.area(4, 12));
        assert_eq!(w.value(0), vec![0.0]);
        assert!(p.restrict(-0.3, 0.5).is_err());
    }

    #[test]
    fn rough_metric_basics() {
        let grid = unit_grid(17);
        let p = RoughPath::build_bm_lift(1, grid, 2, 4, 0.45).unwrap();
        let q = RoughPath::build_bm_lift(2, grid, 2, 4, 0.45).unwrap();
        assert_eq!(p.rough_metric(&p).unwrap().0, 0.0);
        assert_eq!(p.rough_metric(&q).unwrap(), q.rough_metric(&p).unwrap());
        let other = RoughPath::build_bm_lift(1, unit_grid(9), 2, 4, 0.45).unwrap();
        assert!(matches!(
            p.rough_metric(&other),
            Err(Error::GridMismatch(_))
        ));
    }
}
