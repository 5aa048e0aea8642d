//! Mildly controlled rough paths `(y, y′)` on a time grid.
//!
//! Values at each grid point are `modes × cols` blocks (mode-major), Gubinelli
//! derivatives are `modes × cols × d` blocks. Solutions have `cols = 1`; the
//! integrand `g(y)` of a rough integral has `cols = d`.
//!
//! Norm conventions follow the solution space with base index `alpha` (by
//! default `−2γ`) and spatial shift `2γ`:
//!
//! ```text
//! ‖y,y′‖_𝒟 = ‖y₀‖_{α+2γ} + ‖y′₀‖_α + ‖y‖_{η,α+2γ} + ‖y′‖_{∞,α+2γ} + ‖y′‖_{γ,α} + |R^y|_{2γ,α}
//! ```
//!
//! where Hölder quotients use the twisted increment `y_t − S_{t−s} y_s`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::math;
use crate::nonlinearity::Nonlinearity;
use crate::rough_driver::{RoughPath, TimeGrid};
use crate::spectral::SpectralOperator;

#[derive(Debug, Clone, PartialEq)]
pub struct ControlledPath {
    grid: TimeGrid,
    modes: usize,
    cols: usize,
    dim: usize,
    y: Vec<f64>,
    yp: Vec<f64>,
    eta: f64,
    alpha: f64,
}

/// Constituents of the controlled-path norms; all discrete suprema over grid pairs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlledNorms {
    /// `‖y₀‖_{α+2γ}`
    pub y0: f64,
    /// `‖y′₀‖_α`
    pub yp0: f64,
    /// `‖y‖_{γ,α}`
    pub holder_y_hat: f64,
    /// `‖y‖_{η,α+2γ}`
    pub eta_norm: f64,
    /// `‖y′‖_{∞,α+2γ}`
    pub sup_yp: f64,
    /// `‖y′‖_{γ,α}`
    pub holder_yp: f64,
    /// `|R^y|_{2γ,α}`
    pub remainder_2gamma: f64,
    /// `‖y′‖_{γ,α} + |R^y|_{2γ,α}`
    pub seminorm_w: f64,
    pub d_norm: f64,
}

impl ControlledNorms {
    /// Right-hand side of `‖y‖_{γ,α} ≤ (1+|w|_γ)(‖y′₀‖ + ‖y,y′‖_{w,2γ,α} T^γ)`.
    pub fn increment_bound(&self, w_gamma: f64, horizon: f64, gamma: f64) -> f64 {
        (1.0 + w_gamma) * (self.yp0 + self.seminorm_w * math::powf(horizon, gamma))
    }
}

/// Two-parameter field `R_{t,s}` stored densely for grid pairs `s ≤ t`.
#[derive(Debug, Clone)]
pub struct TwoParameterField {
    n: usize,
    block: usize,
    data: Vec<f64>,
}

impl TwoParameterField {
    pub fn at(&self, s: usize, t: usize) -> &[f64] {
        let i = crate::rough_driver::pair_index(s, t) * self.block;
        &self.data[i..i + self.block]
    }

    pub fn n_points(&self) -> usize {
        self.n
    }
}

/// Table of `e^{λ_k ℓ h}` for every lag `ℓ` of a grid.
pub(crate) struct LagFactors {
    modes: usize,
    table: Vec<f64>,
}

impl LagFactors {
    pub(crate) fn new(op: &SpectralOperator, grid: &TimeGrid) -> Self {
        let n = grid.len();
        let h = grid.step();
        let modes = op.n_modes();
        let mut table = Vec::with_capacity(n * modes);
        for lag in 0..n {
            table.extend(op.factors(lag as f64 * h));
        }
        Self { modes, table }
    }

    #[inline]
    pub(crate) fn lag(&self, lag: usize) -> &[f64] {
        &self.table[lag * self.modes..(lag + 1) * self.modes]
    }
}

/// Squared-weight helper: `Σ_k (1+|λ_k|)^{2a} Σ_{j<block} x[k·block + j]²`.
pub(crate) fn weighted_norm(x: &[f64], weights: &[f64], block: usize) -> f64 {
    let mut s = 0.0;
    for (k, w) in weights.iter().enumerate() {
        let w2 = w * w;
        for v in &x[k * block..(k + 1) * block] {
            s += w2 * v * v;
        }
    }
    math::sqrt(s)
}

impl ControlledPath {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: TimeGrid,
        modes: usize,
        cols: usize,
        dim: usize,
        y: Vec<f64>,
        yp: Vec<f64>,
        eta: f64,
        alpha: f64,
    ) -> Result<Self> {
        let n = grid.len();
        if modes == 0 || cols == 0 || dim == 0 {
            bail!(
                InvalidInput,
                "controlled path needs positive modes, columns and dimension"
            );
        }
        if y.len() != n * modes * cols {
            bail!(
                GridMismatch,
                "path values have {} entries, expected {}",
                y.len(),
                n * modes * cols
            );
        }
        if yp.len() != n * modes * cols * dim {
            bail!(
                GridMismatch,
                "Gubinelli derivative has {} entries, expected {}",
                yp.len(),
                n * modes * cols * dim
            );
        }
        if !(eta >= 0.0 && eta.is_finite()) {
            bail!(
                InvalidInput,
                "time-regularity exponent must be nonnegative, got {eta}"
            );
        }
        Ok(Self {
            grid,
            modes,
            cols,
            dim,
            y,
            yp,
            eta,
            alpha,
        })
    }

    /// Zero path with the solution-space defaults `η = γ/2`, `α = −2γ`.
    pub fn zero(grid: TimeGrid, modes: usize, cols: usize, dim: usize, gamma: f64) -> Self {
        let n = grid.len();
        Self {
            grid,
            modes,
            cols,
            dim,
            y: vec![0.0; n * modes * cols],
            yp: vec![0.0; n * modes * cols * dim],
            eta: gamma / 2.0,
            alpha: -2.0 * gamma,
        }
    }

    /// `(S_{t−t0} ξ, 0)`.
    pub fn semigroup_orbit(
        op: &SpectralOperator,
        grid: TimeGrid,
        xi: &[f64],
        dim: usize,
        gamma: f64,
    ) -> Self {
        let mut cp = Self::zero(grid, op.n_modes(), 1, dim, gamma);
        for i in 0..grid.len() {
            let f = op.factors(grid.time(i) - grid.t0());
            for k in 0..op.n_modes() {
                cp.y[i * op.n_modes() + k] = f[k] * xi[k];
            }
        }
        cp
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn with_exponents(mut self, eta: f64, alpha: f64) -> Self {
        self.eta = eta;
        self.alpha = alpha;
        self
    }

    #[inline]
    pub fn value(&self, i: usize) -> &[f64] {
        let b = self.modes * self.cols;
        &self.y[i * b..(i + 1) * b]
    }

    #[inline]
    pub fn derivative(&self, i: usize) -> &[f64] {
        let b = self.modes * self.cols * self.dim;
        &self.yp[i * b..(i + 1) * b]
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    pub fn derivatives(&self) -> &[f64] {
        &self.yp
    }

    #[cfg(test)]
    pub(crate) fn derivatives_mut(&mut self) -> &mut [f64] {
        &mut self.yp
    }

    /// `a·self + b·other` (same shape).
    pub fn combine(&self, a: f64, other: &ControlledPath, b: f64) -> Result<Self> {
        self.check_same_shape(other)?;
        let mut out = self.clone();
        for (o, v) in out.y.iter_mut().zip(&other.y) {
            *o = a * *o + b * v;
        }
        for (o, v) in out.yp.iter_mut().zip(&other.yp) {
            *o = a * *o + b * v;
        }
        Ok(out)
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.y.iter_mut().for_each(|v| *v *= c);
        out.yp.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// `sup_t ‖y_t‖_{H_0}` (Hilbert–Schmidt over columns).
    pub fn sup_norm(&self) -> f64 {
        let b = self.modes * self.cols;
        self.y.chunks(b).map(math::norm2).fold(0.0, f64::max)
    }

    fn check_same_shape(&self, other: &ControlledPath) -> Result<()> {
        if !self.grid.matches(&other.grid)
            || self.modes != other.modes
            || self.cols != other.cols
            || self.dim != other.dim
        {
            bail!(
                GridMismatch,
                "controlled paths have different grids or shapes"
            );
        }
        Ok(())
    }

    fn check_compatible(&self, p: &RoughPath, op: &SpectralOperator) -> Result<()> {
        if !self.grid.matches(p.grid()) {
            bail!(
                GridMismatch,
                "controlled path and driver live on different grids"
            );
        }
        if self.dim != p.dim() {
            bail!(
                GridMismatch,
                "controlled path has dimension {}, driver {}",
                self.dim,
                p.dim()
            );
        }
        if self.modes != op.n_modes() {
            bail!(
                GridMismatch,
                "controlled path has {} modes, operator {}",
                self.modes,
                op.n_modes()
            );
        }
        Ok(())
    }

    /// `R^y_{t,s} = (y_t − S_{t−s} y_s) − S_{t−s} y′_s δw_{t,s}` for all grid pairs.
    pub fn remainder(&self, p: &RoughPath, op: &SpectralOperator) -> Result<TwoParameterField> {
        self.check_compatible(p, op)?;
        let n = self.grid.len();
        let block = self.modes * self.cols;
        let lags = LagFactors::new(op, &self.grid);
        let mut data = vec![0.0; n * (n + 1) / 2 * block];
        let mut dw = vec![0.0; self.dim];
        for t in 0..n {
            for s in 0..=t {
                p.increment_into(s, t, &mut dw);
                let at = crate::rough_driver::pair_index(s, t) * block;
                self.remainder_into(s, t, lags.lag(t - s), &dw, &mut data[at..at + block]);
            }
        }
        Ok(TwoParameterField { n, block, data })
    }

    #[inline]
    fn remainder_into(&self, s: usize, t: usize, f: &[f64], dw: &[f64], out: &mut [f64]) {
        let (ys, yt, dps) = (self.value(s), self.value(t), self.derivative(s));
        let d = self.dim;
        for k in 0..self.modes {
            for c in 0..self.cols {
                let i = k * self.cols + c;
                let mut lin = 0.0;
                for l in 0..d {
                    lin += dps[i * d + l] * dw[l];
                }
                out[i] = yt[i] - f[k] * (ys[i] + lin);
            }
        }
    }

    /// All norm constituents over the whole grid.
    pub fn norms(&self, p: &RoughPath, op: &SpectralOperator) -> Result<ControlledNorms> {
        self.check_compatible(p, op)?;
        let gamma = p.gamma();
        let (a, a_shift) = (self.alpha, self.alpha + 2.0 * gamma);
        let wa = op.weights(a);
        let ws = op.weights(a_shift);
        let n = self.grid.len();
        let h = self.grid.step();
        let lags = LagFactors::new(op, &self.grid);
        let (block, dblock) = (self.modes * self.cols, self.modes * self.cols * self.dim);
        let pw = |e: f64| -> Vec<f64> { (0..n).map(|k| math::powf(k as f64 * h, e)).collect() };
        let (pg, p2g, pe) = (pw(gamma), pw(2.0 * gamma), pw(self.eta));

        let mut out = ControlledNorms {
            y0: weighted_norm(self.value(0), &ws, self.cols),
            yp0: weighted_norm(self.derivative(0), &wa, self.cols * self.dim),
            ..ControlledNorms::default()
        };
        for i in 0..n {
            out.sup_yp =
                out.sup_yp
                    .max(weighted_norm(self.derivative(i), &ws, self.cols * self.dim));
        }

        let mut hat = vec![0.0; block];
        let mut hat_d = vec![0.0; dblock];
        let mut rem = vec![0.0; block];
        let mut dw = vec![0.0; self.dim];
        let per_mode = self.cols * self.dim;
        for t in 1..n {
            for s in 0..t {
                let f = lags.lag(t - s);
                let (ys, yt) = (self.value(s), self.value(t));
                for k in 0..self.modes {
                    for c in 0..self.cols {
                        let i = k * self.cols + c;
                        hat[i] = yt[i] - f[k] * ys[i];
                    }
                }
                let (ds, dt) = (self.derivative(s), self.derivative(t));
                for k in 0..self.modes {
                    for j in k * per_mode..(k + 1) * per_mode {
                        hat_d[j] = dt[j] - f[k] * ds[j];
                    }
                }
                p.increment_into(s, t, &mut dw);
                self.remainder_into(s, t, f, &dw, &mut rem);
                let lag = t - s;
                out.holder_y_hat = out
                    .holder_y_hat
                    .max(weighted_norm(&hat, &wa, self.cols) / pg[lag]);
                out.eta_norm = out
                    .eta_norm
                    .max(weighted_norm(&hat, &ws, self.cols) / pe[lag]);
                out.holder_yp = out
                    .holder_yp
                    .max(weighted_norm(&hat_d, &wa, per_mode) / pg[lag]);
                out.remainder_2gamma = out
                    .remainder_2gamma
                    .max(weighted_norm(&rem, &wa, self.cols) / p2g[lag]);
            }
        }
        out.seminorm_w = out.holder_yp + out.remainder_2gamma;
        out.d_norm = out.y0 + out.yp0 + out.eta_norm + out.sup_yp + out.seminorm_w;
        Ok(out)
    }

    /// `‖y,y′‖_𝒟`.
    pub fn d_norm(&self, p: &RoughPath, op: &SpectralOperator) -> Result<f64> {
        Ok(self.norms(p, op)?.d_norm)
    }

    /// `(g(y), Dg(y) y′)`.
    ///
    /// The output keeps the base index and has time-regularity exponent zero.
    pub fn compose(&self, g: &Nonlinearity) -> Result<Self> {
        if self.cols != 1 {
            bail!(
                InvalidInput,
                "composition needs an H-valued path (one column), got {}",
                self.cols
            );
        }
        g.check_shape(self.modes, g.cols(), "composed field")?;
        let n = self.grid.len();
        let (m, gc, d) = (self.modes, g.cols(), self.dim);
        let mut y = vec![0.0; n * m * gc];
        let mut yp = vec![0.0; n * m * gc * d];
        for i in 0..n {
            g.eval_into(self.value(i), &mut y[i * m * gc..(i + 1) * m * gc]);
            g.jacobian_apply_into(
                self.value(i),
                self.derivative(i),
                d,
                &mut yp[i * m * gc * d..(i + 1) * m * gc * d],
            );
        }
        Ok(Self {
            grid: self.grid,
            modes: m,
            cols: gc,
            dim: d,
            y,
            yp,
            eta: 0.0,
            alpha: self.alpha,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::{CollocatedTerm, CosineBasis, ScalarMap};
    use alloc::sync::Arc;

    fn smooth_driver(n: usize, f: impl Fn(f64) -> f64) -> RoughPath {
        let grid = TimeGrid::new(0.0, 1.0, n).unwrap();
        let r = 8;
        let fine = TimeGrid::new(0.0, 1.0, (n - 1) * r + 1).unwrap();
        let samples: Vec<f64> = (0..fine.len()).map(|i| f(fine.time(i))).collect();
        RoughPath::build_smooth_lift(&samples, 1, grid, 0.5).unwrap()
    }

    #[test]
    fn orbit_has_zero_remainder_and_seminorm() {
        let op = SpectralOperator::preset_parabolic(1, 2.5, 3).unwrap();
        let p = smooth_driver(17, |t| (3.0 * t).sin());
        let xi = [0.5, -1.0, 0.25];
        let cp = ControlledPath::semigroup_orbit(&op, *p.grid(), &xi, 1, 0.5);
        let r = cp.remainder(&p, &op).unwrap();
        for t in 0..17 {
            for s in 0..=t {
                assert!(math::max_abs(r.at(s, t)) < 1e-15);
            }
        }
        let norms = cp.norms(&p, &op).unwrap();
        assert!(norms.seminorm_w < 1e-14);
        assert!((norms.y0 - math::norm2(&xi)).abs() < 1e-14);
    }

    #[test]
    fn identity_semigroup_controlled_decomposition() {
        let op = SpectralOperator::new(vec![0.0]).unwrap();
        let p = smooth_driver(33, |t| t * t - 0.3 * t);
        let n = 33;
        let y: Vec<f64> = (0..n).map(|i| p.value(i)[0]).collect();
        let cp = ControlledPath::new(*p.grid(), 1, 1, 1, y, vec![1.0; n], 0.25, -1.0).unwrap();
        let r = cp.remainder(&p, &op).unwrap();
        assert!((0..n).all(|t| (0..=t).all(|s| r.at(s, t)[0].abs() < 1e-15)));

        // y = w², y′ = 2w: R_{t,s} = (δw)², so |R|_{2γ} is the squared increment quotient
        let y: Vec<f64> = (0..n).map(|i| p.value(i)[0].powi(2)).collect();
        let yp: Vec<f64> = (0..n).map(|i| 2.0 * p.value(i)[0]).collect();
        let cp = ControlledPath::new(*p.grid(), 1, 1, 1, y, yp, 0.25, 0.0).unwrap();
        let norms = cp.norms(&p, &op).unwrap();
        let h = p.grid().step();
        let mut oracle = 0.0f64;
        for t in 0..n {
            for s in 0..t {
                let dw = p.value(t)[0] - p.value(s)[0];
                oracle = oracle.max(dw * dw / ((t - s) as f64 * h));
            }
        }
        assert!((norms.remainder_2gamma - oracle).abs() < 1e-12 * (1.0 + oracle));
    }

    #[test]
    fn compose_linear_and_zero() {
        let op = SpectralOperator::preset_parabolic(1, 1.0, 2).unwrap();
        let p = smooth_driver(9, |t| t.sin());
        let cp = ControlledPath::semigroup_orbit(&op, *p.grid(), &[1.0, 2.0], 1, 0.5);
        let mut cp = cp;
        cp.derivatives_mut()
            .iter_mut()
            .enumerate()
            .for_each(|(i, v)| *v = 0.1 * i as f64);
        let g = Nonlinearity::linear_diagonal(&[3.0, 3.0]);
        let z = cp.compose(&g).unwrap();
        for (a, b) in z.values().iter().zip(cp.values()) {
            assert_eq!(*a, 3.0 * b);
        }
        for (a, b) in z.derivatives().iter().zip(cp.derivatives()) {
            assert!((a - 3.0 * b).abs() < 1e-15);
        }
        let z = cp.compose(&Nonlinearity::zero(2, 1)).unwrap();
        assert!(z.values().iter().chain(z.derivatives()).all(|v| *v == 0.0));
    }

    #[test]
    fn compose_with_collocated_sine_keeps_remainder_bounded() {
        let op = SpectralOperator::new(vec![0.0]).unwrap();
        let basis = Arc::new(CosineBasis::new(1).unwrap());
        let g = Nonlinearity::collocated(
            basis,
            1,
            vec![CollocatedTerm {
                col: 0,
                coeff: 1.0,
                map: ScalarMap::Sin,
            }],
        )
        .unwrap();
        let mut constants = Vec::new();
        for n in [17, 33, 65] {
            let p = smooth_driver(n, |t| (2.0 * t).sin());
            let y: Vec<f64> = (0..n).map(|i| p.value(i)[0]).collect();
            let cp = ControlledPath::new(*p.grid(), 1, 1, 1, y, vec![1.0; n], 0.25, 0.0).unwrap();
            let z = cp.compose(&g).unwrap();
            let rz = z.norms(&p, &op).unwrap().remainder_2gamma;
            let w = p.holder_norms().w;
            constants.push(rz / (1.0 + w).powi(2));
        }
        let (lo, hi) = constants
            .iter()
            .fold((f64::MAX, 0.0f64), |(a, b), c| (a.min(*c), b.max(*c)));
        assert!(hi.is_finite() && hi <= 1.1 * lo, "{constants:?}");
    }
}
