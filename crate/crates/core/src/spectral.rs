//! Diagonal generators `A` given by their spectrum.
//!
//! States are coefficient vectors in the eigenbasis. The semigroup acts mode-wise
//! by `e^{λ_k t}` and the interpolation norm of index `α` is
//! `(Σ_k (1+|λ_k|)^{2α} x_k²)^{1/2}`.

use alloc::vec::Vec;
use core::ops::{Deref, DerefMut};

use crate::error::{bail, Result};
use crate::math::{self, LinearFit};

/// Mode coefficients of a state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Coefficients(pub Vec<f64>);

impl Coefficients {
    pub fn zeros(n: usize) -> Self {
        Self(math::zeros(n))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Coefficients {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Coefficients {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for Coefficients {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Unstable,
    Stable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralOperator {
    eigenvalues: Vec<f64>,
    gap: Option<(f64, f64)>,
    n_unstable: usize,
}

impl SpectralOperator {
    /// Operator with the given eigenvalues (sorted nonincreasing on construction).
    pub fn new(mut eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            bail!(InvalidConfig, "operator needs at least one mode");
        }
        if !math::all_finite(&eigenvalues) {
            bail!(InvalidConfig, "eigenvalues must be finite");
        }
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        let n_unstable = eigenvalues.iter().filter(|l| **l > 0.0).count();
        Ok(Self {
            eigenvalues,
            gap: None,
            n_unstable,
        })
    }

    /// `λ_k = μ − k^{2m}`, `k = 1..=n_modes`: the cosine ladder of a `2m`-th
    /// order operator on an interval.
    pub fn preset_parabolic(m: u32, mu: f64, n_modes: usize) -> Result<Self> {
        if n_modes < 2 {
            bail!(
                InvalidConfig,
                "parabolic preset needs at least 2 modes, got {n_modes}"
            );
        }
        if m == 0 {
            bail!(InvalidConfig, "parabolic preset needs order m ≥ 1");
        }
        let eig = (1..=n_modes)
            .map(|k| mu - math::powf(k as f64, 2.0 * m as f64))
            .collect();
        Self::new(eig)
    }

    /// Attach the dichotomy rates `(α, β)`: every eigenvalue must satisfy
    /// `λ ≥ α` or `λ ≤ −β`.
    pub fn with_gap(mut self, alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0) {
            bail!(
                InvalidConfig,
                "gap rates must be positive, got α = {alpha}, β = {beta}"
            );
        }
        if let Some(l) = self.eigenvalues.iter().find(|l| **l < alpha && **l > -beta) {
            bail!(
                InvalidConfig,
                "eigenvalue {l} lies inside the gap (−{beta}, {alpha})"
            );
        }
        self.n_unstable = self.eigenvalues.iter().filter(|l| **l >= alpha).count();
        self.gap = Some((alpha, beta));
        Ok(self)
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Number of leading modes in the unstable block.
    pub fn n_unstable(&self) -> usize {
        self.n_unstable
    }

    pub fn gap(&self) -> Option<(f64, f64)> {
        self.gap
    }

    pub fn block_of(&self, k: usize) -> Block {
        if k < self.n_unstable {
            Block::Unstable
        } else {
            Block::Stable
        }
    }

    /// Mode-wise factors `e^{λ_k t}`.
    pub fn factors(&self, t: f64) -> Vec<f64> {
        self.eigenvalues.iter().map(|l| math::exp(l * t)).collect()
    }

    /// `S_t x` for `t ≥ 0`.
    pub fn semigroup_apply(&self, t: f64, x: &Coefficients) -> Result<Coefficients> {
        if !(t >= 0.0) {
            bail!(InvalidInput, "semigroup time must be nonnegative, got {t}");
        }
        self.check_len(x)?;
        Ok(self
            .eigenvalues
            .iter()
            .zip(x.iter())
            .map(|(l, v)| math::exp(l * t) * v)
            .collect::<Vec<_>>()
            .into())
    }

    /// `e^{t A_u} x` for `t ≤ 0` on the unstable block.
    pub fn group_apply_unstable(&self, t: f64, x: &Coefficients) -> Result<Coefficients> {
        if !(t <= 0.0) {
            bail!(
                InvalidInput,
                "backward group time must be nonpositive, got {t}"
            );
        }
        self.check_len(x)?;
        let leak = math::norm2(&x[self.n_unstable..]);
        if leak > 1e-14 {
            bail!(Projection, "input has stable-block mass {leak:e}");
        }
        let mut out = Coefficients::zeros(x.len());
        for k in 0..self.n_unstable {
            out[k] = math::exp(self.eigenvalues[k] * t) * x[k];
        }
        Ok(out)
    }

    /// Weights `(1+|λ_k|)^{α}` (the square roots of the norm weights).
    pub fn weights(&self, alpha: f64) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .map(|l| math::powf(1.0 + l.abs(), alpha))
            .collect()
    }

    /// `‖x‖_{H_α}`.
    pub fn interp_norm(&self, x: &[f64], alpha: f64) -> f64 {
        debug_assert_eq!(x.len(), self.n_modes());
        if alpha == 0.0 {
            return math::norm2(x);
        }
        let s: f64 = self
            .eigenvalues
            .iter()
            .zip(x)
            .map(|(l, v)| {
                let w = math::powf(1.0 + l.abs(), alpha) * v;
                w * w
            })
            .sum();
        math::sqrt(s)
    }

    pub fn project(&self, x: &Coefficients, which: Block) -> Coefficients {
        let mut out = x.clone();
        match which {
            Block::Unstable => out[self.n_unstable..].iter_mut().for_each(|v| *v = 0.0),
            Block::Stable => out[..self.n_unstable].iter_mut().for_each(|v| *v = 0.0),
        }
        out
    }

    /// `max_t ‖S_t x‖_α t^{α−β} / ‖x‖_β` over the sample times.
    pub fn smoothing_check(
        &self,
        t_samples: &[f64],
        alpha: f64,
        beta_space: f64,
        x: &Coefficients,
    ) -> f64 {
        let base = self.interp_norm(x, beta_space);
        if base == 0.0 {
            return 0.0;
        }
        t_samples
            .iter()
            .map(|&t| {
                let y: Vec<f64> = self
                    .factors(t)
                    .iter()
                    .zip(x.iter())
                    .map(|(f, v)| f * v)
                    .collect();
                self.interp_norm(&y, alpha) * math::powf(t, alpha - beta_space) / base
            })
            .fold(0.0, f64::max)
    }

    /// Operator form of [`Self::smoothing_check`]: the supremum over all inputs,
    /// `max_{t,k} e^{λ_k t} t^{α−β} (1+|λ_k|)^{α−β}`.
    pub fn smoothing_constant(&self, t_samples: &[f64], alpha: f64, beta_space: f64) -> f64 {
        let r = alpha - beta_space;
        let mut worst = 0.0f64;
        for &t in t_samples {
            let tp = math::powf(t, r);
            for l in &self.eigenvalues {
                worst = worst.max(math::exp(l * t) * tp * math::powf(1.0 + l.abs(), r));
            }
        }
        worst
    }

    /// `max_t ‖S_t x − x‖_{β−γ̃} / (t^{γ̃} ‖x‖_β)` over the sample times.
    pub fn difference_check(
        &self,
        t_samples: &[f64],
        beta_space: f64,
        gamma_tilde: f64,
        x: &Coefficients,
    ) -> f64 {
        let base = self.interp_norm(x, beta_space);
        if base == 0.0 {
            return 0.0;
        }
        t_samples
            .iter()
            .map(|&t| {
                let y: Vec<f64> = self
                    .factors(t)
                    .iter()
                    .zip(x.iter())
                    .map(|(f, v)| (f - 1.0) * v)
                    .collect();
                self.interp_norm(&y, beta_space - gamma_tilde) / (math::powf(t, gamma_tilde) * base)
            })
            .fold(0.0, f64::max)
    }

    /// `‖S_t − I‖_{H_β → H_{β−γ̃}} = max_k |e^{λ_k t} − 1| (1+|λ_k|)^{−γ̃}`.
    pub fn difference_norm(&self, t: f64, gamma_tilde: f64) -> f64 {
        self.eigenvalues
            .iter()
            .map(|l| (math::exp(l * t) - 1.0).abs() * math::powf(1.0 + l.abs(), -gamma_tilde))
            .fold(0.0, f64::max)
    }

    /// Log-log regression of [`Self::difference_norm`] against `t`; the slope
    /// estimates the Hölder exponent of `t ↦ S_t` into the shifted space.
    pub fn fit_difference_exponent(
        &self,
        t_samples: &[f64],
        gamma_tilde: f64,
    ) -> Option<LinearFit> {
        let x: Vec<f64> = t_samples.iter().map(|t| math::ln(*t)).collect();
        let y: Vec<f64> = t_samples
            .iter()
            .map(|t| math::ln(self.difference_norm(*t, gamma_tilde)))
            .collect();
        math::linear_fit(&x, &y)
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_modes() {
            bail!(
                InvalidInput,
                "coefficient vector has {} entries, operator has {} modes",
                x.len(),
                self.n_modes()
            );
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn parabolic_presets() {
        let op = SpectralOperator::preset_parabolic(1, 2.5, 4).unwrap();
        assert_eq!(op.eigenvalues(), &[1.5, -1.5, -6.5, -13.5]);
        let op = op.with_gap(1.5, 1.5).unwrap();
        assert_eq!(op.n_unstable(), 1);
        let op = SpectralOperator::preset_parabolic(2, 2.0, 3).unwrap();
        assert_eq!(&op.eigenvalues()[..2], &[1.0, -14.0]);
        let op = SpectralOperator::preset_parabolic(1, 0.0, 5).unwrap();
        assert!(op.eigenvalues().iter().all(|l| *l < 0.0));
        assert_eq!(op.n_unstable(), 0);
        assert!(SpectralOperator::preset_parabolic(1, 2.5, 1).is_err());
        assert!(SpectralOperator::preset_parabolic(1, 2.5, 4)
            .unwrap()
            .with_gap(2.0, 1.0)
            .is_err());
    }

    #[test]
    fn semigroup_and_group() {
        let op = SpectralOperator::new(vec![-1.0]).unwrap();
        let x = Coefficients(vec![1.0]);
        assert_eq!(op.semigroup_apply(0.0, &x).unwrap(), x);
        assert!((op.semigroup_apply(1.0, &x).unwrap()[0] - 0.36787944117144233).abs() < 1e-15);
        assert!(op.semigroup_apply(-0.1, &x).is_err());

        let op = SpectralOperator::new(vec![1.5, -2.0])
            .unwrap()
            .with_gap(1.5, 1.0)
            .unwrap();
        let x = Coefficients(vec![1.0, 0.0]);
        let y = op.group_apply_unstable(-1.0, &x).unwrap();
        assert!((y[0] - (-1.5f64).exp()).abs() < 1e-16);
        assert!(matches!(
            op.group_apply_unstable(-1.0, &Coefficients(vec![1.0, 1e-10])),
            Err(crate::Error::Projection(_))
        ));

        let op = SpectralOperator::new(vec![2.0, 1.5, -3.0])
            .unwrap()
            .with_gap(1.5, 1.0)
            .unwrap();
        let x = Coefficients(vec![0.3, -0.7, 0.0]);
        let y = op.group_apply_unstable(-2.0, &x).unwrap();
        assert!(math::norm2(&y) <= (-3.0f64).exp() * math::norm2(&x) + 1e-16);
    }

    #[test]
    fn interpolation_norm() {
        let op = SpectralOperator::new(vec![-3.0]).unwrap();
        assert!((op.interp_norm(&[1.0], 1.0) - 4.0).abs() < 1e-15);
        let op = SpectralOperator::preset_parabolic(1, 0.5, 6).unwrap();
        let x = [0.1, -0.2, 0.3, 0.0, 1.0, 2.0];
        assert_eq!(op.interp_norm(&x, 0.0), math::norm2(&x));
        assert!(op.interp_norm(&x, 0.5) >= op.interp_norm(&x, 0.25));
    }

    #[test]
    fn projections() {
        let op = SpectralOperator::preset_parabolic(1, 5.0, 5)
            .unwrap()
            .with_gap(1.0, 4.0)
            .unwrap();
        assert_eq!(op.n_unstable(), 2);
        let x = Coefficients(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let u = op.project(&x, Block::Unstable);
        let s = op.project(&x, Block::Stable);
        let sum: Vec<f64> = u.iter().zip(s.iter()).map(|(a, b)| a + b).collect();
        assert_eq!(sum, x.0);
        assert!(op.project(&u, Block::Stable).iter().all(|v| *v == 0.0));
        let a = op.project(&op.semigroup_apply(0.7, &x).unwrap(), Block::Unstable);
        let b = op.semigroup_apply(0.7, &u).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn smoothing_checks() {
        let op = SpectralOperator::preset_parabolic(1, 0.0, 16).unwrap();
        let ts: Vec<f64> = (1..=50).map(|i| i as f64 / 50.0).collect();
        let x = Coefficients((0..16).map(|k| 1.0 / (1.0 + k as f64)).collect());
        assert!(op.smoothing_check(&ts, 0.5, 0.5, &x) <= 1.0);
        assert_eq!(
            op.smoothing_check(&ts, 0.5, 0.0, &Coefficients::zeros(16)),
            0.0
        );
        assert!(
            op.smoothing_check(&ts, 0.5, 0.0, &x) <= op.smoothing_constant(&ts, 0.5, 0.0) + 1e-12
        );
        assert!(op.difference_check(&ts, 0.5, 0.25, &x) <= 2.0);
    }
}
