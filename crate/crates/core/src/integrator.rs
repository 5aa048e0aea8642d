//! Semigroup-convolved rough integrals and the Duhamel drift integral.
//!
//! The rough integral `∫_s^t S_{t−u} Y_u dw_u` of an integrand `(Y, Y′)` with
//! `d` columns is the limit of compensated sums
//!
//! ```text
//! Σ_{[u,v] ∈ 𝒫} S_{t−u} (Y_u δw_{v,u} + Y′_u w²_{v,u})
//! ```
//!
//! with `(Y δw)_k = Σ_j Y_{k,j} δw^j` and `(Y′ w²)_k = Σ_{j,l} Y′_{k,j,l} w²[l][j]`.
//! Partitions are subsets of the driver grid; nothing is interpolated off-grid.

use alloc::vec;
use alloc::vec::Vec;

use crate::controlled::{weighted_norm, ControlledPath};
use crate::error::{bail, Error, Result};
use crate::math;
use crate::rough_driver::{RoughPath, TimeGrid};
use crate::spectral::{Coefficients, SpectralOperator};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_LEVEL: u32 = 14;

#[derive(Debug, Clone, PartialEq)]
pub struct IntegralResult {
    pub value: Coefficients,
    pub partition_level: u32,
    /// Distance between the last two refinement levels (zero if only one level exists).
    pub cauchy_residual: f64,
    pub residual_trace: Vec<f64>,
}

fn check_integrand(op: &SpectralOperator, y: &ControlledPath, p: &RoughPath) -> Result<()> {
    if !y.grid().matches(p.grid()) {
        bail!(GridMismatch, "integrand and driver live on different grids");
    }
    if y.cols() != p.dim() || y.dim() != p.dim() {
        bail!(
            GridMismatch,
            "integrand has {} columns and dimension {}, driver dimension is {}",
            y.cols(),
            y.dim(),
            p.dim()
        );
    }
    if y.modes() != op.n_modes() {
        bail!(
            GridMismatch,
            "integrand has {} modes, operator {}",
            y.modes(),
            op.n_modes()
        );
    }
    Ok(())
}

/// `Y_u δw_{v,u} (+ Y′_u w²_{v,u})` written into `out` (length `modes`).
#[inline]
fn local_term(
    y: &ControlledPath,
    p: &RoughPath,
    u: usize,
    v: usize,
    compensated: bool,
    dw: &mut [f64],
    out: &mut [f64],
) {
    let d = p.dim();
    p.increment_into(u, v, dw);
    let (yu, ypu) = (y.value(u), y.derivative(u));
    let area = p.area(u, v);
    for (k, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for j in 0..d {
            acc += yu[k * d + j] * dw[j];
        }
        if compensated {
            for j in 0..d {
                let row = &ypu[(k * d + j) * d..(k * d + j + 1) * d];
                for l in 0..d {
                    acc += row[l] * area[l * d + j];
                }
            }
        }
        *o = acc;
    }
}

/// Compensated (or first-level only) sum over the partition given by grid indices.
pub fn compensated_sum(
    op: &SpectralOperator,
    integrand: &ControlledPath,
    p: &RoughPath,
    points: &[usize],
    compensated: bool,
) -> Result<Coefficients> {
    check_integrand(op, integrand, p)?;
    let m = op.n_modes();
    let mut total = vec![0.0; m];
    if points.len() < 2 {
        return Ok(total.into());
    }
    let grid = p.grid();
    let t = *points.last().unwrap();
    let mut dw = vec![0.0; p.dim()];
    let mut a = vec![0.0; m];
    for win in points.windows(2) {
        let (u, v) = (win[0], win[1]);
        if v <= u {
            bail!(InvalidInput, "partition points must be strictly increasing");
        }
        local_term(integrand, p, u, v, compensated, &mut dw, &mut a);
        let f = op.factors(grid.time(t) - grid.time(u));
        for k in 0..m {
            total[k] += f[k] * a[k];
        }
    }
    Ok(total.into())
}

/// Level-`level` floor-dyadic partition of grid indices `[s, t]`.
pub fn dyadic_partition(s: usize, t: usize, level: u32) -> Vec<usize> {
    let m = t - s;
    let parts = 1usize << level;
    let mut pts: Vec<usize> = (0..=parts)
        .map(|i| s + ((i as u128 * m as u128) / parts as u128) as usize)
        .collect();
    pts.dedup();
    pts
}

/// Grid-point index of a time, with a descriptive error.
pub(crate) fn locate(grid: &TimeGrid, t: f64) -> Result<usize> {
    grid.index_of(t).ok_or_else(|| {
        Error::OutOfRange(alloc::format!(
            "time {t} is not a grid point of [{}, {}]",
            grid.t0(),
            grid.t1()
        ))
    })
}

/// `∫_s^t S_{t−u} Y_u dw_u` by nested dyadic refinement until successive levels
/// differ by at most `tol` in `H`.
pub fn rough_convolution(
    op: &SpectralOperator,
    integrand: &ControlledPath,
    p: &RoughPath,
    s: f64,
    t: f64,
    tol: f64,
    max_level: u32,
) -> Result<IntegralResult> {
    check_integrand(op, integrand, p)?;
    let (si, ti) = (locate(p.grid(), s)?, locate(p.grid(), t)?);
    if ti < si {
        bail!(InvalidInput, "integration bounds are reversed: [{s}, {t}]");
    }
    let m = ti - si;
    if m == 0 {
        return Ok(IntegralResult {
            value: Coefficients::zeros(op.n_modes()),
            partition_level: 0,
            cauchy_residual: 0.0,
            residual_trace: Vec::new(),
        });
    }
    let full_level = usize::BITS - (m - 1).leading_zeros();
    let top = full_level.min(max_level);
    let mut prev = compensated_sum(op, integrand, p, &dyadic_partition(si, ti, 0), true)?;
    if top == 0 {
        return Ok(IntegralResult {
            value: prev,
            partition_level: 0,
            cauchy_residual: 0.0,
            residual_trace: Vec::new(),
        });
    }
    let mut trace = Vec::new();
    for level in 1..=top {
        let cur = compensated_sum(op, integrand, p, &dyadic_partition(si, ti, level), true)?;
        let diff: Vec<f64> = cur.iter().zip(prev.iter()).map(|(a, b)| a - b).collect();
        let res = math::norm2(&diff);
        trace.push(res);
        if res <= tol {
            return Ok(IntegralResult {
                value: cur,
                partition_level: level,
                cauchy_residual: res,
                residual_trace: trace,
            });
        }
        prev = cur;
    }
    Err(Error::Convergence {
        reason: alloc::format!("compensated sums did not settle below {tol:e} by level {top}"),
        trace,
    })
}

/// Grid-level rough convolution `I_i = ∫_{t0}^{t_i} S_{t_i−u} Y_u dw_u` for every
/// grid point, `n × modes`.
pub fn convolution_path(
    op: &SpectralOperator,
    integrand: &ControlledPath,
    p: &RoughPath,
) -> Result<Vec<f64>> {
    check_integrand(op, integrand, p)?;
    let n = p.grid().len();
    let m = op.n_modes();
    let f = op.factors(p.grid().step());
    let mut out = vec![0.0; n * m];
    let mut dw = vec![0.0; p.dim()];
    let mut a = vec![0.0; m];
    for i in 0..n - 1 {
        local_term(integrand, p, i, i + 1, true, &mut dw, &mut a);
        for k in 0..m {
            out[(i + 1) * m + k] = f[k] * (out[i * m + k] + a[k]);
        }
    }
    Ok(out)
}

/// Exponential trapezoid values of `∫_{t0}^{t_i} S_{t_i−u} f_u du` at every grid
/// point; `f_values` is `n × modes`.
pub fn drift_path(op: &SpectralOperator, f_values: &[f64], grid: &TimeGrid) -> Result<Vec<f64>> {
    let n = grid.len();
    let m = op.n_modes();
    if f_values.len() != n * m {
        bail!(
            GridMismatch,
            "drift samples have {} entries, expected {}",
            f_values.len(),
            n * m
        );
    }
    let h = grid.step();
    let f = op.factors(h);
    let mut out = vec![0.0; n * m];
    for i in 0..n - 1 {
        for k in 0..m {
            out[(i + 1) * m + k] = f[k] * (out[i * m + k] + 0.5 * h * f_values[i * m + k])
                + 0.5 * h * f_values[(i + 1) * m + k];
        }
    }
    Ok(out)
}

/// `∫_s^t S_{t−u} f_u du` by the exponential trapezoid rule on the grid.
pub fn duhamel_drift(
    op: &SpectralOperator,
    f_values: &[f64],
    grid: &TimeGrid,
    s: f64,
    t: f64,
) -> Result<Coefficients> {
    let m = op.n_modes();
    if f_values.len() != grid.len() * m {
        bail!(
            GridMismatch,
            "drift samples have {} entries, expected {}",
            f_values.len(),
            grid.len() * m
        );
    }
    let (si, ti) = (locate(grid, s)?, locate(grid, t)?);
    if ti < si {
        bail!(InvalidInput, "integration bounds are reversed: [{s}, {t}]");
    }
    let sub = &f_values[si * m..(ti + 1) * m];
    if ti == si {
        return Ok(Coefficients::zeros(m));
    }
    let path = drift_path(op, sub, &grid.sub(si, ti)?)?;
    Ok(path[(ti - si) * m..].to_vec().into())
}

/// Outcome of a local-error order measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderProbe {
    /// Least-squares slope of `ln RMS residual` against `ln |t − s|`, or `+∞`
    /// when every residual vanishes.
    pub exponent: f64,
    pub exponent_stderr: f64,
    pub lengths: Vec<f64>,
    pub rms_residuals: Vec<f64>,
}

/// Measure the decay of `∫_s^t S_{t−u}Y dw − S_{t−s}(Y_s δw_{t,s} + Y′_s w²_{t,s})`
/// in `H_{α+β}` (`α` the integrand's base index) over a dyadic ladder of window
/// lengths, each resolved at grid level over disjoint windows.
pub fn local_error_probe(
    op: &SpectralOperator,
    integrand: &ControlledPath,
    p: &RoughPath,
    beta_target: f64,
) -> Result<OrderProbe> {
    check_integrand(op, integrand, p)?;
    let n_steps = p.grid().len() - 1;
    let h = p.grid().step();
    let m = op.n_modes();
    let weights = op.weights(integrand.alpha() + beta_target);
    let mut lengths = Vec::new();
    let mut rms = Vec::new();
    let mut dw = vec![0.0; p.dim()];
    let mut a = vec![0.0; m];
    let mut len = 2usize;
    while len * 8 <= n_steps {
        let windows = n_steps / len;
        let mut acc = 0.0;
        for w in 0..windows {
            let (s, t) = (w * len, (w + 1) * len);
            let mut exact = vec![0.0; m];
            for u in s..t {
                local_term(integrand, p, u, u + 1, true, &mut dw, &mut a);
                let f = op.factors((t - u) as f64 * h);
                for k in 0..m {
                    exact[k] += f[k] * a[k];
                }
            }
            local_term(integrand, p, s, t, true, &mut dw, &mut a);
            let f = op.factors((t - s) as f64 * h);
            for k in 0..m {
                exact[k] -= f[k] * a[k];
            }
            let r = weighted_norm(&exact, &weights, 1);
            acc += r * r;
        }
        lengths.push(len as f64 * h);
        rms.push(math::sqrt(acc / windows as f64));
        len *= 2;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = lengths
        .iter()
        .zip(&rms)
        .filter(|(_, r)| **r > 0.0)
        .map(|(l, r)| (math::ln(*l), math::ln(*r)))
        .unzip();
    let (exponent, exponent_stderr) = match math::linear_fit(&xs, &ys) {
        Some(fit) => (fit.slope, fit.slope_stderr),
        None => (f64::INFINITY, 0.0),
    };
    Ok(OrderProbe {
        exponent,
        exponent_stderr,
        lengths,
        rms_residuals: rms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lift(n: usize, r: usize, f: impl Fn(f64) -> f64) -> RoughPath {
        let grid = TimeGrid::new(0.0, 1.0, n).unwrap();
        let fine = TimeGrid::new(0.0, 1.0, (n - 1) * r + 1).unwrap();
        let samples: Vec<f64> = (0..fine.len()).map(|i| f(fine.time(i))).collect();
        RoughPath::build_smooth_lift(&samples, 1, grid, 0.5).unwrap()
    }

    /// `(Y, Y′) = (w, 1)` as an integrand.
    fn path_integrand(p: &RoughPath) -> ControlledPath {
        let n = p.grid().len();
        let y = (0..n).map(|i| p.value(i)[0]).collect();
        ControlledPath::new(*p.grid(), 1, 1, 1, y, vec![1.0; n], 0.0, 0.0).unwrap()
    }

    #[test]
    fn constant_integrand_is_exact_at_every_level() {
        let op = SpectralOperator::new(vec![0.0]).unwrap();
        let p = lift(65, 4, |t| (4.0 * t).sin());
        let n = 65;
        let y =
            ControlledPath::new(*p.grid(), 1, 1, 1, vec![0.7; n], vec![0.0; n], 0.0, 0.0).unwrap();
        let exact = 0.7 * (p.value(64)[0] - p.value(0)[0]);
        for level in 0..=6 {
            let s = compensated_sum(&op, &y, &p, &dyadic_partition(0, 64, level), true).unwrap();
            assert!((s[0] - exact).abs() < 1e-15);
        }
        let r = rough_convolution(&op, &y, &p, 0.0, 1.0, 1e-12, 14).unwrap();
        assert_eq!(r.partition_level, 1);
    }

    #[test]
    fn path_against_itself() {
        // ∫ w dw over w_t = t²: exact (w_1² − w_0²)/2 = 1/2
        let op = SpectralOperator::new(vec![0.0]).unwrap();
        let p = lift(257, 4, |t| t * t);
        let r = rough_convolution(&op, &path_integrand(&p), &p, 0.0, 1.0, 1e-9, 14).unwrap();
        assert!((r.value[0] - 0.5).abs() < 1e-12, "{}", r.value[0]);
    }

    #[test]
    fn pure_area_only_second_level_contributes() {
        let op = SpectralOperator::new(vec![0.0, 0.0]).unwrap();
        let grid = TimeGrid::dyadic(0.0, 1.0, 5).unwrap();
        let a = [0.0, 0.6, -0.6, 0.0];
        let p = RoughPath::pure_area_path(&a, 2, grid, 0.5).unwrap();
        let n = grid.len();
        // Y′[k][j][l] = c for k = 0, j = 1, l = 0
        let c = 1.3;
        let mut yp = vec![0.0; n * 2 * 2 * 2];
        for i in 0..n {
            yp[i * 8 + 2] = c;
        }
        let y = ControlledPath::new(grid, 2, 2, 2, vec![0.0; n * 4], yp, 0.0, 0.0).unwrap();
        let r = rough_convolution(&op, &y, &p, 0.25, 0.75, 1e-12, 14).unwrap();
        assert!((r.value[0] - 0.5 * c * a[1]).abs() < 1e-15);
        assert_eq!(r.value[1], 0.0);
    }

    #[test]
    fn grid_path_matches_refinement_limit_and_is_additive() {
        let op = SpectralOperator::new(vec![-1.0, 0.5]).unwrap();
        let p = lift(129, 4, |t| (3.0 * t).sin() + t);
        let n = 129;
        let mut y = vec![0.0; n * 2];
        let mut yp = vec![0.0; n * 2];
        for i in 0..n {
            let w = p.value(i)[0];
            y[2 * i] = w.sin();
            y[2 * i + 1] = 0.5 * w;
            yp[2 * i] = w.cos();
            yp[2 * i + 1] = 0.5;
        }
        let cp = ControlledPath::new(*p.grid(), 2, 1, 1, y, yp, 0.0, 0.0).unwrap();
        let path = convolution_path(&op, &cp, &p).unwrap();
        let full = compensated_sum(&op, &cp, &p, &(0..n).collect::<Vec<_>>(), true).unwrap();
        for k in 0..2 {
            assert!((path[(n - 1) * 2 + k] - full[k]).abs() < 1e-12);
        }
        // Chasles: I[0,1] = S_{1/2} I[0,½] + I[½,1]
        let a = compensated_sum(&op, &cp, &p, &(0..=64).collect::<Vec<_>>(), true).unwrap();
        let b = compensated_sum(&op, &cp, &p, &(64..n).collect::<Vec<_>>(), true).unwrap();
        let sa = op.semigroup_apply(0.5, &a).unwrap();
        for k in 0..2 {
            assert!((sa[k] + b[k] - full[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn drift_quadrature() {
        let grid = TimeGrid::new(0.0, 1.0, 257).unwrap();
        let op = SpectralOperator::new(vec![-1.0]).unwrap();
        let v = duhamel_drift(&op, &vec![1.0; 257], &grid, 0.0, 1.0).unwrap();
        assert!((v[0] - (1.0 - (-1.0f64).exp())).abs() < 1e-5);
        let op = SpectralOperator::new(vec![0.0]).unwrap();
        let v = duhamel_drift(&op, &vec![2.0; 257], &grid, 0.25, 1.0).unwrap();
        assert!((v[0] - 1.5).abs() < 1e-14);
        let v = duhamel_drift(&op, &vec![0.0; 257], &grid, 0.0, 1.0).unwrap();
        assert_eq!(v[0], 0.0);
    }

    #[test]
    fn zero_integrand_probe_is_sentinel() {
        let op = SpectralOperator::new(vec![0.0]).unwrap();
        let p = lift(257, 2, |t| t);
        let y = ControlledPath::new(*p.grid(), 1, 1, 1, vec![0.0; 257], vec![0.0; 257], 0.0, 0.0)
            .unwrap();
        assert_eq!(
            local_error_probe(&op, &y, &p, 0.0).unwrap().exponent,
            f64::INFINITY
        );
    }

    #[test]
    fn non_convergence_reports_trace() {
        let op = SpectralOperator::new(vec![0.0]).unwrap();
        let p = lift(17, 2, |t| (20.0 * t).sin());
        let n = 17;
        let y: Vec<f64> = (0..n).map(|i| p.value(i)[0].powi(3)).collect();
        let yp: Vec<f64> = (0..n).map(|i| 3.0 * p.value(i)[0].powi(2)).collect();
        let cubic = ControlledPath::new(*p.grid(), 1, 1, 1, y, yp, 0.0, 0.0).unwrap();
        match rough_convolution(&op, &cubic, &p, 0.0, 1.0, 1e-300, 14) {
            Err(Error::Convergence { trace, .. }) => assert_eq!(trace.len(), 4),
            other => panic!("expected a convergence error, got {other:?}"),
        }
    }
}
