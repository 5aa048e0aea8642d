//! Cut-off of controlled paths by their solution-space norm.
//!
//! `χ_R(y) = y · φ(‖y,y′‖_𝒟 / R)` with a bump `φ` that is 1 on `[0, ½]`, 0 on
//! `[1, ∞)` and the degree-7 smoothstep in between (C³ at both junctions).

use alloc::format;

use crate::controlled::ControlledPath;
use crate::error::{bail, Result};
use crate::nonlinearity::Nonlinearity;
use crate::rough_driver::{HolderNorms, RoughPath};
use crate::spectral::SpectralOperator;

/// `S(s) = 35s⁴ − 84s⁵ + 70s⁶ − 20s⁷` and its derivatives.
fn smoothstep(order: usize, s: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    match order {
        0 => s2 * s2 * (35.0 - 84.0 * s + 70.0 * s2 - 20.0 * s3),
        1 => 140.0 * s3 * (1.0 - s) * (1.0 - s) * (1.0 - s),
        2 => 420.0 * s2 * (1.0 - s) * (1.0 - s) * (1.0 - 2.0 * s),
        _ => 840.0 * s * (1.0 - s) * (1.0 - 5.0 * s + 5.0 * s2),
    }
}

/// `φ^{(order)}(r)` for `order ≤ 3`.
pub fn phi_derivative(order: usize, r: f64) -> f64 {
    if r <= 0.5 {
        return if order == 0 { 1.0 } else { 0.0 };
    }
    if r >= 1.0 {
        return 0.0;
    }
    let scale = [1.0, 2.0, 4.0, 8.0][order.min(3)];
    let v = -scale * smoothstep(order, 2.0 * r - 1.0);
    if order == 0 {
        1.0 + v
    } else {
        v
    }
}

pub fn phi(r: f64) -> f64 {
    phi_derivative(0, r)
}

/// `(sup|φ|, sup|φ′|, sup|φ″|, sup|φ‴|)`.
pub const PHI_DERIVATIVE_BOUNDS: [f64; 4] = [1.0, 4.375, 30.052_753_617_597_165, 420.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffConfig {
    pub k: f64,
    pub r: f64,
}

impl CutoffConfig {
    pub fn new(k: f64, r: f64) -> Result<Self> {
        if !(r > 0.0 && r <= 1.0) {
            bail!(InvalidConfig, "cut-off radius must lie in (0, 1], got {r}");
        }
        if !(k > 0.0 && k.is_finite()) {
            bail!(
                InvalidConfig,
                "contraction budget must be positive, got {k}"
            );
        }
        Ok(Self { k, r })
    }

    /// `φ(‖y,y′‖_𝒟 / R)`.
    pub fn factor(&self, d_norm: f64) -> f64 {
        phi(d_norm / self.r)
    }
}

/// `χ_R(y, y′)`.
pub fn cutoff_chi(
    cp: &ControlledPath,
    cfg: &CutoffConfig,
    p: &RoughPath,
    op: &SpectralOperator,
) -> Result<ControlledPath> {
    let c = cfg.factor(cp.d_norm(p, op)?);
    Ok(if c == 1.0 { cp.clone() } else { cp.scaled(c) })
}

/// Drift and diffusion evaluated along a cut-off path.
#[derive(Debug, Clone)]
pub struct TruncatedEvaluation {
    /// `χ` factor applied to the path.
    pub factor: f64,
    /// `f(χ_R(y)_t)` per grid point, `n × modes`.
    pub drift: alloc::vec::Vec<f64>,
    /// `(g(χ_R(y)), Dg(χ_R(y)) χ_R(y)′)`.
    pub integrand: ControlledPath,
}

/// `f_R = f ∘ χ_R`, `g_R = g ∘ χ_R`.
#[derive(Debug, Clone)]
pub struct TruncatedNonlinearity {
    pub f: Nonlinearity,
    pub g: Nonlinearity,
    pub cfg: CutoffConfig,
}

impl TruncatedNonlinearity {
    /// Requires `f(0) = Df(0) = 0` and `g(0) = Dg(0) = D²g(0) = 0` unless
    /// `check_assumptions` is off.
    pub fn new(
        f: Nonlinearity,
        g: Nonlinearity,
        cfg: CutoffConfig,
        check_assumptions: bool,
    ) -> Result<Self> {
        if check_assumptions {
            f.check_stationary(1, "drift")?;
            g.check_stationary(2, "diffusion")?;
        }
        if f.cols() != 1 {
            bail!(InvalidConfig, "drift must have a single column");
        }
        if f.modes() != g.modes() {
            bail!(
                InvalidConfig,
                "{}",
                format!("drift has {} modes, diffusion {}", f.modes(), g.modes())
            );
        }
        Ok(Self { f, g, cfg })
    }

    pub fn evaluate(
        &self,
        cp: &ControlledPath,
        p: &RoughPath,
        op: &SpectralOperator,
    ) -> Result<TruncatedEvaluation> {
        let factor = self.cfg.factor(cp.d_norm(p, op)?);
        let chi = cp.scaled(factor);
        let n = cp.grid().len();
        let m = cp.modes();
        let mut drift = alloc::vec![0.0; n * m];
        if factor != 0.0 {
            for i in 0..n {
                self.f
                    .eval_into(chi.value(i), &mut drift[i * m..(i + 1) * m]);
            }
        }
        let integrand = chi.compose(&self.g)?;
        Ok(TruncatedEvaluation {
            factor,
            drift,
            integrand,
        })
    }
}

/// Coefficient model `R ↦ C_g(R)` for the diffusion Lipschitz constant.
pub trait DiffusionConstant {
    fn at(&self, r: f64) -> f64;
}

impl<F: Fn(f64) -> f64> DiffusionConstant for F {
    fn at(&self, r: f64) -> f64 {
        self(r)
    }
}

/// `C_g(R) = c · R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearConstant(pub f64);

impl DiffusionConstant for LinearConstant {
    fn at(&self, r: f64) -> f64 {
        self.0 * r
    }
}

/// Solve `C_f R + C_g(R)(1+|w|_γ+|w²|_{2γ})(1+|w|_γ)² = K` by bisection and
/// return `R = min(R̃, 1)`.
pub fn solve_cutoff_radius<G: DiffusionConstant>(
    norms: HolderNorms,
    k: f64,
    c_f: f64,
    c_g: &G,
) -> Result<CutoffConfig> {
    if !(k > 0.0 && k.is_finite()) {
        bail!(
            InvalidConfig,
            "contraction budget must be positive, got {k}"
        );
    }
    if !(c_f >= 0.0 && c_f.is_finite()) {
        bail!(
            InvalidConfig,
            "drift constant must be nonnegative, got {c_f}"
        );
    }
    let amp = (1.0 + norms.w + norms.w2) * (1.0 + norms.w) * (1.0 + norms.w);
    let lhs = |r: f64| c_f * r + c_g.at(r) * amp;

    // monotonicity audit of the user model on a fixed ladder
    let mut prev = c_g.at(0.0);
    if !(prev >= 0.0) {
        bail!(InvalidConfig, "diffusion constant must be nonnegative");
    }
    for i in 1..=64 {
        let v = c_g.at(i as f64 / 64.0);
        if !(v >= prev) {
            bail!(
                InvalidConfig,
                "diffusion constant model is not nondecreasing near R = {}",
                i as f64 / 64.0
            );
        }
        prev = v;
    }
    if lhs(0.0) >= k {
        bail!(
            InvalidConfig,
            "contraction budget {k} is below the R → 0 limit {}",
            lhs(0.0)
        );
    }
    if lhs(1.0) <= k {
        return CutoffConfig::new(k, 1.0);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if lhs(mid) <= k {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let r = if lo > 0.0 { lo } else { hi };
    CutoffConfig::new(k, r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_profile() {
        assert_eq!(phi(0.0), 1.0);
        assert_eq!(phi(0.5), 1.0);
        assert_eq!(phi(1.0), 0.0);
        assert_eq!(phi(3.0), 0.0);
        assert!((phi(0.75) - 0.5).abs() < 1e-15);
        // C³ junctions
        for k in 1..=3 {
            assert!(phi_derivative(k, 0.5 + 1e-12).abs() < 1e-6);
            assert!(phi_derivative(k, 1.0 - 1e-12).abs() < 1e-6);
        }
        let mut prev = 1.0;
        for i in 0..=1000 {
            let r = 0.5 + i as f64 / 2000.0;
            assert!(phi(r) <= prev);
            prev = phi(r);
        }
    }

    #[test]
    fn bump_derivatives_and_bounds() {
        let h = 1e-6;
        for &r in &[0.55, 0.6, 0.7, 0.8, 0.93] {
            for k in 0..3 {
                let fd = (phi_derivative(k, r + h) - phi_derivative(k, r - h)) / (2.0 * h);
                assert!((fd - phi_derivative(k + 1, r)).abs() < 1e-4 * (1.0 + fd.abs()));
            }
        }
        let mut sup = [0.0f64; 4];
        for i in 0..=200_000 {
            let r = 0.5 + i as f64 / 400_000.0;
            for k in 0..4 {
                sup[k] = sup[k].max(phi_derivative(k, r).abs());
            }
        }
        for k in 0..4 {
            assert!(sup[k] <= PHI_DERIVATIVE_BOUNDS[k] + 1e-9);
            assert!(sup[k] >= PHI_DERIVATIVE_BOUNDS[k] * (1.0 - 1e-6));
        }
    }

    #[test]
    fn radius_closed_form() {
        let zero = HolderNorms { w: 0.0, w2: 0.0 };
        let cfg = solve_cutoff_radius(zero, 0.3, 2.0, &LinearConstant(4.0)).unwrap();
        assert!((cfg.r - 0.05).abs() < 1e-14);
        let cfg = solve_cutoff_radius(zero, 100.0, 2.0, &LinearConstant(4.0)).unwrap();
        assert_eq!(cfg.r, 1.0);
        assert!(solve_cutoff_radius(zero, 0.3, 2.0, &|r: f64| 1.0 - r).is_err());
        assert!(solve_cutoff_radius(zero, 0.3, 2.0, &|_r: f64| 1.0).is_err());
    }
}
