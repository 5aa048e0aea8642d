//! Small numeric helpers shared across the crate.

use alloc::vec;
use alloc::vec::Vec;

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

pub fn norm2(x: &[f64]) -> f64 {
    sqrt(x.iter().map(|v| v * v).sum())
}

pub fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn all_finite(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// Operator (spectral) norm of a row-major `d × d` matrix.
///
/// Closed form for `d ≤ 2`, cyclic Jacobi on `AᵀA` otherwise.
pub fn matrix_norm(a: &[f64], d: usize) -> f64 {
    debug_assert_eq!(a.len(), d * d);
    match d {
        0 => 0.0,
        1 => a[0].abs(),
        2 => {
            let fro2 = a.iter().map(|v| v * v).sum::<f64>();
            let det = a[0] * a[3] - a[1] * a[2];
            let disc = (fro2 * fro2 - 4.0 * det * det).max(0.0);
            sqrt(0.5 * (fro2 + sqrt(disc)))
        }
        _ => {
            let mut ata = vec![0.0; d * d];
            for i in 0..d {
                for j in 0..d {
                    ata[i * d + j] = (0..d).map(|k| a[k * d + i] * a[k * d + j]).sum();
                }
            }
            sqrt(symmetric_max_eigenvalue(&mut ata, d).max(0.0))
        }
    }
}

/// Largest eigenvalue of a symmetric matrix (destroys the input).
fn symmetric_max_eigenvalue(m: &mut [f64], d: usize) -> f64 {
    for _sweep in 0..64 {
        let off: f64 = (0..d)
            .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * d + j] * m[i * d + j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = m[p * d + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q * d + q] - m[p * d + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..d {
                    let mkp = m[k * d + p];
                    let mkq = m[k * d + q];
                    m[k * d + p] = c * mkp - s * mkq;
                    m[k * d + q] = s * mkp + c * mkq;
                }
                for k in 0..d {
                    let mpk = m[p * d + k];
                    let mqk = m[q * d + k];
                    m[p * d + k] = c * mpk - s * mqk;
                    m[q * d + k] = s * mpk + c * mqk;
                }
            }
        }
    }
    (0..d)
        .map(|i| m[i * d + i])
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Ordinary least squares fit `y ≈ a + b x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    /// Standard error of the slope (zero for two points or an exact fit).
    pub slope_stderr: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_stderr = if n > 2 {
        let rss: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| {
                let r = b - intercept - slope * a;
                r * r
            })
            .sum();
        sqrt(rss / (nf - 2.0) / sxx)
    } else {
        0.0
    };
    Some(LinearFit {
        intercept,
        slope,
        slope_stderr,
    })
}

/// Deterministic generator for a named sub-stream of a seed.
pub fn rng_for(seed: u64, stream: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn zeros(n: usize) -> Vec<f64> {
    vec![0.0; n]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_norm_matches_known_cases() {
        // rotation generator: singular values (1, 1)
        assert!((matrix_norm(&[0.0, 1.0, -1.0, 0.0], 2) - 1.0).abs() < 1e-15);
        assert!((matrix_norm(&[3.0, 0.0, 0.0, -4.0], 2) - 4.0).abs() < 1e-15);
        // rank one u vᵀ has norm |u||v|
        let u = [1.0, 2.0, 2.0];
        let v = [0.0, 3.0, 4.0];
        let mut a = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                a[i * 3 + j] = u[i] * v[j];
            }
        }
        assert!((matrix_norm(&a, 3) - 15.0).abs() < 1e-12);
    }

    #[test]
    fn general_path_agrees_with_closed_form_in_2d() {
        let a = [0.3, -1.2, 2.5, 0.7];
        let mut padded = [0.0; 9];
        for i in 0..2 {
            for j in 0..2 {
                padded[i * 3 + j] = a[i * 2 + j];
            }
        }
        assert!((matrix_norm(&a, 2) - matrix_norm(&padded, 3)).abs() < 1e-12);
    }

    #[test]
    fn linear_fit_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let fit = linear_fit(&x, &y).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-14);
        assert!((fit.intercept - 2.0).abs() < 1e-14);
        assert!(fit.slope_stderr < 1e-12);
        assert!(linear_fit(&[1.0], &[1.0]).is_none());
    }
}
