//! Nonlinear fields `f: H → H` and `g: H → H^d` in eigenbasis coordinates.
//!
//! Outputs are stored mode-major: entry `(k, c)` of a field with `cols` columns
//! lives at `k * cols + c`. A drift `f` has one column; a diffusion `g` has one
//! column per driver component.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{bail, Result};
use crate::math;

/// Pointwise scalar profile with derivatives up to order three.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarMap {
    Identity,
    Sin,
    Tanh,
    /// `u³ / (1 + u²)`
    SatCubic,
    /// `u² / (1 + u²)`
    SatSquare,
}

impl ScalarMap {
    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "identity" | "linear" => Self::Identity,
            "sin" => Self::Sin,
            "tanh" => Self::Tanh,
            "sat_cubic" => Self::SatCubic,
            "sat_square" => Self::SatSquare,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Sin => "sin",
            Self::Tanh => "tanh",
            Self::SatCubic => "sat_cubic",
            Self::SatSquare => "sat_square",
        }
    }

    /// `φ^{(order)}(u)` for `order ≤ 3`.
    pub fn derivative(&self, order: usize, u: f64) -> f64 {
        match (self, order) {
            (Self::Identity, 0) => u,
            (Self::Identity, 1) => 1.0,
            (Self::Identity, _) => 0.0,
            (Self::Sin, 0) => math::sin(u),
            (Self::Sin, 1) => math::cos(u),
            (Self::Sin, 2) => -math::sin(u),
            (Self::Sin, _) => -math::cos(u),
            (Self::Tanh, k) => {
                let t = math::tanh(u);
                let s = 1.0 - t * t;
                match k {
                    0 => t,
                    1 => s,
                    2 => -2.0 * t * s,
                    _ => s * (6.0 * t * t - 2.0),
                }
            }
            (Self::SatCubic, k) => {
                let q = 1.0 + u * u;
                match k {
                    0 => u * u * u / q,
                    1 => 1.0 - (1.0 - u * u) / (q * q),
                    2 => -2.0 * u * (u * u - 3.0) / (q * q * q),
                    _ => 6.0 * (u * u * u * u - 6.0 * u * u + 1.0) / (q * q * q * q),
                }
            }
            (Self::SatSquare, k) => {
                let q = 1.0 + u * u;
                match k {
                    0 => u * u / q,
                    1 => 2.0 * u / (q * q),
                    2 => (2.0 - 6.0 * u * u) / (q * q * q),
                    _ => 24.0 * u * (u * u - 1.0) / (q * q * q * q),
                }
            }
        }
    }

    #[inline]
    pub fn value(&self, u: f64) -> f64 {
        self.derivative(0, u)
    }

    /// `(sup|φ|, sup|φ′|, sup|φ″|, sup|φ‴|)` on the real line, by dense sampling
    /// of `[−40, 40]` (all profiles are monotone or decaying beyond it).
    /// Unbounded values are reported as infinity.
    pub fn bounds(&self) -> [f64; 4] {
        let mut b = [0.0f64; 4];
        for i in 0..=80_000 {
            let u = -40.0 + i as f64 * 1e-3;
            for (k, slot) in b.iter_mut().enumerate() {
                *slot = slot.max(self.derivative(k, u).abs());
            }
        }
        if matches!(self, Self::Identity | Self::SatCubic) {
            b[0] = f64::INFINITY;
        }
        b
    }
}

/// `√(2/π) cos(k x)`, `k = 1..=N`, on `[0, π]`, collocated at `3N` midpoints.
#[derive(Debug, Clone)]
pub struct CosineBasis {
    n_modes: usize,
    n_points: usize,
    /// `n_points × n_modes`, row-major.
    table: Vec<f64>,
}

impl CosineBasis {
    pub fn new(n_modes: usize) -> Result<Self> {
        if n_modes == 0 {
            bail!(InvalidConfig, "collocation basis needs at least one mode");
        }
        let n_points = 3 * n_modes;
        let norm = math::sqrt(2.0 / PI);
        let mut table = vec![0.0; n_points * n_modes];
        for p in 0..n_points {
            let x = (p as f64 + 0.5) * PI / n_points as f64;
            for k in 0..n_modes {
                table[p * n_modes + k] = norm * math::cos((k + 1) as f64 * x);
            }
        }
        let basis = Self {
            n_modes,
            n_points,
            table,
        };
        let err = basis.round_trip_error();
        if !(err <= 1e-12) {
            bail!(
                InvalidConfig,
                "collocation transform round-trip error {err:e}"
            );
        }
        Ok(basis)
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn to_physical(&self, coeffs: &[f64], out: &mut [f64]) {
        let n = self.n_modes;
        for (p, o) in out.iter_mut().enumerate() {
            *o = self.table[p * n..(p + 1) * n]
                .iter()
                .zip(coeffs)
                .map(|(a, b)| a * b)
                .sum();
        }
    }

    /// Midpoint-rule projection back onto the modes.
    pub fn to_modes(&self, values: &[f64], out: &mut [f64]) {
        let n = self.n_modes;
        let w = PI / self.n_points as f64;
        out.iter_mut().for_each(|v| *v = 0.0);
        for (p, v) in values.iter().enumerate() {
            let row = &self.table[p * n..(p + 1) * n];
            for k in 0..n {
                out[k] += w * v * row[k];
            }
        }
    }

    /// Worst round-trip error over the unit coefficient vectors.
    pub fn round_trip_error(&self) -> f64 {
        let n = self.n_modes;
        let mut phys = vec![0.0; self.n_points];
        let mut back = vec![0.0; n];
        let mut worst = 0.0f64;
        for k in 0..n {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            self.to_physical(&e, &mut phys);
            self.to_modes(&phys, &mut back);
            for (a, b) in back.iter().zip(&e) {
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }
}

/// `out[out_mode, out_col] += coeff · φ(y[in_mode])`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub out_mode: usize,
    pub out_col: usize,
    pub in_mode: usize,
    pub coeff: f64,
    pub map: ScalarMap,
}

/// Column `col` of the field is `P[coeff · φ(u(x))]` with `u = Σ y_k e_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollocatedTerm {
    pub col: usize,
    pub coeff: f64,
    pub map: ScalarMap,
}

#[derive(Debug, Clone)]
pub enum Nonlinearity {
    Zero {
        modes: usize,
        cols: usize,
    },
    Terms {
        modes: usize,
        cols: usize,
        terms: Vec<Term>,
    },
    Collocated {
        basis: Arc<CosineBasis>,
        cols: usize,
        terms: Vec<CollocatedTerm>,
    },
}

impl Nonlinearity {
    pub fn zero(modes: usize, cols: usize) -> Self {
        Self::Zero { modes, cols }
    }

    pub fn terms(modes: usize, cols: usize, terms: Vec<Term>) -> Result<Self> {
        for t in &terms {
            if t.out_mode >= modes || t.in_mode >= modes || t.out_col >= cols {
                bail!(
                    InvalidConfig,
                    "term {t:?} is out of range for {modes} modes × {cols} columns"
                );
            }
            if !t.coeff.is_finite() {
                bail!(InvalidConfig, "term coefficient must be finite");
            }
        }
        Ok(Self::Terms { modes, cols, terms })
    }

    /// Diagonal linear drift `y ↦ diag(c) y`.
    pub fn linear_diagonal(c: &[f64]) -> Self {
        let terms = c
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(k, v)| Term {
                out_mode: k,
                out_col: 0,
                in_mode: k,
                coeff: *v,
                map: ScalarMap::Identity,
            })
            .collect();
        Self::Terms {
            modes: c.len(),
            cols: 1,
            terms,
        }
    }

    pub fn collocated(
        basis: Arc<CosineBasis>,
        cols: usize,
        terms: Vec<CollocatedTerm>,
    ) -> Result<Self> {
        for t in &terms {
            if t.col >= cols || !t.coeff.is_finite() {
                bail!(
                    InvalidConfig,
                    "collocated term {t:?} is invalid for {cols} columns"
                );
            }
        }
        Ok(Self::Collocated { basis, cols, terms })
    }

    pub fn modes(&self) -> usize {
        match self {
            Self::Zero { modes, .. } | Self::Terms { modes, .. } => *modes,
            Self::Collocated { basis, .. } => basis.n_modes(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Self::Zero { cols, .. } | Self::Terms { cols, .. } | Self::Collocated { cols, .. } => {
                *cols
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Self::Zero { .. } => true,
            Self::Terms { terms, .. } => terms.iter().all(|t| t.coeff == 0.0),
            Self::Collocated { terms, .. } => terms.iter().all(|t| t.coeff == 0.0),
        }
    }

    /// `D^j F(y)[v, …, v]` (with `j = order`, `order = 0` the value) into `out`.
    pub fn directional_into(&self, order: usize, y: &[f64], v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        match self {
            Self::Zero { .. } => {}
            Self::Terms { cols, terms, .. } => {
                for t in terms {
                    let vin = if order == 0 {
                        1.0
                    } else {
                        math::powf(v[t.in_mode], order as f64)
                    };
                    out[t.out_mode * cols + t.out_col] +=
                        t.coeff * t.map.derivative(order, y[t.in_mode]) * vin;
                }
            }
            Self::Collocated { basis, cols, terms } => {
                let np = basis.n_points();
                let n = basis.n_modes();
                let mut u = vec![0.0; np];
                let mut bv = vec![0.0; np];
                basis.to_physical(y, &mut u);
                if order > 0 {
                    basis.to_physical(v, &mut bv);
                }
                let mut phys = vec![0.0; np];
                let mut modal = vec![0.0; n];
                for t in terms {
                    for p in 0..np {
                        let dir = if order == 0 {
                            1.0
                        } else {
                            math::powf(bv[p], order as f64)
                        };
                        phys[p] = t.coeff * t.map.derivative(order, u[p]) * dir;
                    }
                    basis.to_modes(&phys, &mut modal);
                    for k in 0..n {
                        out[k * cols + t.col] += modal[k];
                    }
                }
            }
        }
    }

    pub fn eval_into(&self, y: &[f64], out: &mut [f64]) {
        self.directional_into(0, y, y, out)
    }

    pub fn eval(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.modes() * self.cols()];
        self.eval_into(y, &mut out);
        out
    }

    /// `DF(y) v`.
    pub fn jvp(&self, y: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.modes() * self.cols()];
        self.directional_into(1, y, v, &mut out);
        out
    }

    /// `DF(y) y′` for `y′ ∈ H^d` stored `modes × d`; output `modes × cols × d`.
    pub fn jacobian_apply_into(&self, y: &[f64], yp: &[f64], d: usize, out: &mut [f64]) {
        let n = self.modes();
        let cols = self.cols();
        out.iter_mut().for_each(|o| *o = 0.0);
        match self {
            Self::Zero { .. } => {}
            Self::Terms { terms, .. } => {
                for t in terms {
                    let slope = t.coeff * t.map.derivative(1, y[t.in_mode]);
                    let base = (t.out_mode * cols + t.out_col) * d;
                    for l in 0..d {
                        out[base + l] += slope * yp[t.in_mode * d + l];
                    }
                }
            }
            Self::Collocated { .. } => {
                let mut dir = vec![0.0; n];
                let mut col = vec![0.0; n * cols];
                for l in 0..d {
                    for k in 0..n {
                        dir[k] = yp[k * d + l];
                    }
                    self.directional_into(1, y, &dir, &mut col);
                    for (idx, v) in col.iter().enumerate() {
                        out[idx * d + l] = *v;
                    }
                }
            }
        }
    }

    /// Crude global bounds on `(‖F‖, ‖DF‖, ‖D²F‖, ‖D³F‖)` from the profile bounds.
    pub fn derivative_bounds(&self) -> [f64; 4] {
        let mut out = [0.0f64; 4];
        let mut add = |coeff: f64, map: ScalarMap| {
            let b = map.bounds();
            for k in 0..4 {
                if coeff != 0.0 {
                    out[k] += coeff.abs() * b[k];
                }
            }
        };
        match self {
            Self::Zero { .. } => {}
            Self::Terms { terms, .. } => terms.iter().for_each(|t| add(t.coeff, t.map)),
            Self::Collocated { terms, .. } => terms.iter().for_each(|t| add(t.coeff, t.map)),
        }
        out
    }

    /// Global Lipschitz bound `sup ‖DF‖`.
    pub fn lipschitz_bound(&self) -> f64 {
        self.derivative_bounds()[1]
    }

    /// Check `F(0) = 0` and `D^jF(0) = 0` for `1 ≤ j ≤ order`, exactly.
    pub fn check_stationary(&self, order: usize, label: &str) -> Result<()> {
        let at_zero = |map: ScalarMap, j: usize| map.derivative(j, 0.0);
        let check = |coeff: f64, map: ScalarMap| -> Result<()> {
            if coeff == 0.0 {
                return Ok(());
            }
            for j in 0..=order {
                if at_zero(map, j) != 0.0 {
                    bail!(
                        Assumption,
                        "{label}: derivative of order {j} of the '{}' term does not vanish at 0",
                        map.name()
                    );
                }
            }
            Ok(())
        };
        match self {
            Self::Zero { .. } => Ok(()),
            Self::Terms { terms, .. } => terms.iter().try_for_each(|t| check(t.coeff, t.map)),
            Self::Collocated { terms, .. } => terms.iter().try_for_each(|t| check(t.coeff, t.map)),
        }
    }

    pub(crate) fn check_shape(&self, modes: usize, cols: usize, label: &str) -> Result<()> {
        if self.modes() != modes || self.cols() != cols {
            bail!(
                InvalidConfig,
                "{label} maps {} modes to {} columns, expected {modes} → {cols}",
                self.modes(),
                self.cols()
            );
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MAPS: [ScalarMap; 5] = [
        ScalarMap::Identity,
        ScalarMap::Sin,
        ScalarMap::Tanh,
        ScalarMap::SatCubic,
        ScalarMap::SatSquare,
    ];

    #[test]
    fn scalar_derivatives_match_finite_differences() {
        let h = 1e-5;
        for map in MAPS {
            for &u in &[-2.3, -0.4, 0.0, 0.7, 1.9] {
                for k in 0..3 {
                    let fd = (map.derivative(k, u + h) - map.derivative(k, u - h)) / (2.0 * h);
                    let exact = map.derivative(k + 1, u);
                    assert!(
                        (fd - exact).abs() < 1e-7 * (1.0 + exact.abs()),
                        "{map:?} order {k} at {u}"
                    );
                }
            }
        }
    }

    #[test]
    fn profile_bounds() {
        let b = ScalarMap::SatCubic.bounds();
        assert!((b[1] - 1.125).abs() < 1e-6);
        assert!((b[3] - 6.0).abs() < 1e-9);
        let b = ScalarMap::Tanh.bounds();
        assert!((b[2] - 4.0 / (3.0 * 3f64.sqrt())).abs() < 1e-6);
    }

    #[test]
    fn cosine_basis_round_trip() {
        for n in [1, 2, 7, 32] {
            assert!(CosineBasis::new(n).unwrap().round_trip_error() <= 1e-12);
        }
    }

    #[test]
    fn linear_field_is_exact() {
        let g = Nonlinearity::linear_diagonal(&[2.0, -0.5]);
        assert_eq!(g.eval(&[1.0, 4.0]), vec![2.0, -2.0]);
        let mut out = vec![0.0; 4];
        g.jacobian_apply_into(&[9.0, 9.0], &[1.0, 2.0, 3.0, 4.0], 2, &mut out);
        assert_eq!(out, vec![2.0, 4.0, -1.5, -2.0]);
    }

    #[test]
    fn collocated_jvp_matches_finite_difference() {
        let basis = Arc::new(CosineBasis::new(4).unwrap());
        let g = Nonlinearity::collocated(
            basis,
            2,
            vec![
                CollocatedTerm {
                    col: 0,
                    coeff: 0.8,
                    map: ScalarMap::Sin,
                },
                CollocatedTerm {
                    col: 1,
                    coeff: -0.3,
                    map: ScalarMap::SatCubic,
                },
            ],
        )
        .unwrap();
        let y = [0.3, -0.2, 0.5, 0.1];
        let v = [0.2, 0.4, -0.1, 0.3];
        let h = 1e-6;
        let yp: Vec<f64> = y.iter().zip(&v).map(|(a, b)| a + h * b).collect();
        let ym: Vec<f64> = y.iter().zip(&v).map(|(a, b)| a - h * b).collect();
        let (gp, gm) = (g.eval(&yp), g.eval(&ym));
        let jvp = g.jvp(&y, &v);
        for i in 0..8 {
            assert!(((gp[i] - gm[i]) / (2.0 * h) - jvp[i]).abs() < 1e-8);
        }
        // d = 1 column layout agrees with the plain directional derivative
        let mut out = vec![0.0; 8];
        g.jacobian_apply_into(&y, &v, 1, &mut out);
        assert_eq!(out, jvp);
    }

    #[test]
    fn stationarity() {
        let basis = Arc::new(CosineBasis::new(3).unwrap());
        let cubic = Nonlinearity::collocated(
            basis.clone(),
            1,
            vec![CollocatedTerm {
                col: 0,
                coeff: 1.0,
                map: ScalarMap::SatCubic,
            }],
        )
        .unwrap();
        assert!(cubic.check_stationary(2, "g").is_ok());
        let square = Nonlinearity::collocated(
            basis,
            1,
            vec![CollocatedTerm {
                col: 0,
                coeff: 1.0,
                map: ScalarMap::SatSquare,
            }],
        )
        .unwrap();
        assert!(square.check_stationary(1, "f").is_ok());
        assert!(matches!(
            square.check_stationary(2, "g"),
            Err(crate::Error::Assumption(_))
        ));
        assert!(Nonlinearity::linear_diagonal(&[1.0])
            .check_stationary(1, "f")
            .is_err());
        assert!(Nonlinearity::zero(3, 2).check_stationary(2, "g").is_ok());
    }
}
