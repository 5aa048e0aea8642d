use proptest::prelude::*;
use roughflow_core::controlled::ControlledPath;
use roughflow_core::cutoff::{cutoff_chi, solve_cutoff_radius, CutoffConfig, LinearConstant};
use roughflow_core::rough_driver::{HolderNorms, RoughPath, TimeGrid};
use roughflow_core::spectral::{Coefficients, SpectralOperator};

fn lift(coeffs: &[f64], dim: usize, n: usize) -> RoughPath {
    let grid = TimeGrid::new(0.0, 1.0, n).unwrap();
    let fine = TimeGrid::new(0.0, 1.0, (n - 1) * 4 + 1).unwrap();
    let samples: Vec<f64> = (0..fine.len())
        .flat_map(|i| {
            let t = fine.time(i);
            (0..dim).map(move |c| {
                coeffs[3 * c] * t + coeffs[3 * c + 1] * (3.0 * t).sin() + coeffs[3 * c + 2] * t * t
            })
        })
        .collect();
    RoughPath::build_smooth_lift(&samples, dim, grid, 0.45).unwrap()
}

fn coeffs(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, 3 * dim)
}

/// `(y, y′)` from smooth profiles, scaled to a prescribed size.
fn random_path(op: &SpectralOperator, p: &RoughPath, a: &[f64]) -> ControlledPath {
    let grid = *p.grid();
    let m = op.n_modes();
    let (n, d) = (grid.len(), p.dim());
    let mut y = vec![0.0; n * m];
    let mut yp = vec![0.0; n * m * d];
    for i in 0..n {
        let t = grid.time(i);
        for k in 0..m {
            y[i * m + k] = a[k] * (1.0 + t) + a[(k + 1) % a.len()] * (2.0 * t + k as f64).cos();
            for l in 0..d {
                yp[(i * m + k) * d + l] = a[(k + l + 2) % a.len()] * (1.0 - t * t);
            }
        }
    }
    ControlledPath::new(grid, m, 1, d, y, yp, 0.2, -0.9).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rough_metric_triangle(a in coeffs(2), b in coeffs(2), c in coeffs(2)) {
        let (pa, pb, pc) = (lift(&a, 2, 33), lift(&b, 2, 33), lift(&c, 2, 33));
        let ab = pa.rough_metric(&pb).unwrap().0;
        let bc = pb.rough_metric(&pc).unwrap().0;
        let ac = pa.rough_metric(&pc).unwrap().0;
        prop_assert!(ac <= ab + bc + 1e-12);
        prop_assert_eq!(pa.rough_metric(&pa).unwrap().0, 0.0);
    }

    #[test]
    fn holder_norms_are_homogeneous(a in coeffs(2), lambda in -3.0f64..3.0) {
        let p = lift(&a, 2, 33);
        let n = p.holder_norms();
        let s = p.scaled(lambda).holder_norms();
        prop_assert!((s.w - lambda.abs() * n.w).abs() <= 1e-12 * (1.0 + n.w));
        prop_assert!((s.w2 - lambda * lambda * n.w2).abs() <= 1e-12 * (1.0 + n.w2));
    }

    #[test]
    fn shifts_compose(a in coeffs(1), i in 0usize..16, j in 0usize..16) {
        let p = lift(&a, 1, 65);
        let h = p.grid().step();
        let (s, t) = (i as f64 * h, j as f64 * h);
        let twice = p.shift(s).unwrap().shift(t).unwrap();
        let once = p.shift(s + t).unwrap();
        prop_assert!((twice.grid().t0() - once.grid().t0()).abs() < 1e-12);
        for k in 0..p.grid().len() {
            prop_assert!((twice.value(k)[0] - once.value(k)[0]).abs() < 1e-12);
        }
        for (u, v) in [(0, 5), (3, 40), (10, 64)] {
            prop_assert_eq!(twice.area(u, v), once.area(u, v));
        }
    }

    #[test]
    fn semigroup_property(x in prop::collection::vec(-5.0f64..5.0, 4), s in 0.0f64..2.0, t in 0.0f64..2.0) {
        let op = SpectralOperator::preset_parabolic(1, 2.5, 4).unwrap();
        let x = Coefficients(x);
        let lhs = op.semigroup_apply(s + t, &x).unwrap();
        let rhs = op.semigroup_apply(t, &op.semigroup_apply(s, &x).unwrap()).unwrap();
        for (u, v) in lhs.iter().zip(rhs.iter()) {
            prop_assert!((u - v).abs() <= 1e-13 * (1.0 + u.abs()));
        }
    }

    #[test]
    fn remainder_is_linear(a in coeffs(1), u in prop::collection::vec(-1.0f64..1.0, 4), v in prop::collection::vec(-1.0f64..1.0, 4), ca in -2.0f64..2.0, cb in -2.0f64..2.0) {
        let op = SpectralOperator::preset_parabolic(1, 0.5, 3).unwrap();
        let p = lift(&a, 1, 17);
        let (y, z) = (random_path(&op, &p, &u), random_path(&op, &p, &v));
        let mix = y.combine(ca, &z, cb).unwrap();
        let (ry, rz, rm) = (y.remainder(&p, &op).unwrap(), z.remainder(&p, &op).unwrap(), mix.remainder(&p, &op).unwrap());
        for t in 0..17 {
            for s in 0..=t {
                for k in 0..3 {
                    let want = ca * ry.at(s, t)[k] + cb * rz.at(s, t)[k];
                    prop_assert!((rm.at(s, t)[k] - want).abs() <= 1e-12 * (1.0 + want.abs()));
                }
            }
        }
    }

    #[test]
    fn increment_bound_on_dissipative_spectra(a in coeffs(2), u in prop::collection::vec(-1.0f64..1.0, 5), mu in -3.0f64..0.0) {
        let op = SpectralOperator::preset_parabolic(1, mu, 3).unwrap();
        let p = lift(&a, 2, 33);
        let y = random_path(&op, &p, &u);
        let n = y.norms(&p, &op).unwrap();
        let bound = n.increment_bound(p.holder_norms().w, p.grid().duration(), p.gamma());
        prop_assert!(n.holder_y_hat <= bound * (1.0 + 1e-12) + 1e-14, "{} > {}", n.holder_y_hat, bound);
    }

    #[test]
    fn cutoff_identity_and_zero_regions(a in coeffs(1), u in prop::collection::vec(-1.0f64..1.0, 4), r in 0.05f64..1.0, frac in 0.0f64..0.5, big in 1.0f64..5.0) {
        let op = SpectralOperator::preset_parabolic(1, 0.5, 2).unwrap();
        let p = lift(&a, 1, 17);
        let y = random_path(&op, &p, &u);
        let norm = y.d_norm(&p, &op).unwrap();
        prop_assume!(norm > 0.0);
        let cfg = CutoffConfig::new(0.1, r).unwrap();
        let inside = y.scaled(frac * r / norm);
        let chi = cutoff_chi(&inside, &cfg, &p, &op).unwrap();
        prop_assert_eq!(chi.values(), inside.values());
        prop_assert_eq!(chi.derivatives(), inside.derivatives());
        let outside = y.scaled(big * r / norm * (1.0 + 1e-9));
        let chi = cutoff_chi(&outside, &cfg, &p, &op).unwrap();
        prop_assert!(chi.values().iter().chain(chi.derivatives()).all(|v| *v == 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn cutoff_radius_is_monotone(w in 0.0f64..3.0, w2 in 0.0f64..3.0, dw in 0.0f64..1.0, k in 0.01f64..2.0, dk in 0.0f64..1.0, cf in 0.0f64..2.0, cg in 0.01f64..2.0) {
        let norms = HolderNorms { w, w2 };
        let base = solve_cutoff_radius(norms, k, cf, &LinearConstant(cg)).unwrap().r;
        let more_k = solve_cutoff_radius(norms, k + dk, cf, &LinearConstant(cg)).unwrap().r;
        let rougher = solve_cutoff_radius(HolderNorms { w: w + dw, w2 }, k, cf, &LinearConstant(cg)).unwrap().r;
        prop_assert!(more_k >= base * (1.0 - 1e-12));
        prop_assert!(rougher <= base * (1.0 + 1e-12));
        prop_assert!(base > 0.0 && base <= 1.0);
    }

    #[test]
    fn brownian_lift_satisfies_chen(seed in any::<u64>()) {
        let grid = TimeGrid::new(0.0, 1.0, 65).unwrap();
        let p = RoughPath::build_bm_lift(seed, grid, 2, 16, 0.45).unwrap();
        prop_assert!(p.chen_defect() <= 1e-10);
    }
}

#[test]
fn brownian_levy_area_has_zero_mean() {
    let grid = TimeGrid::new(0.0, 1.0, 9).unwrap();
    let n = 2000;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for seed in 0..n {
        let p = RoughPath::build_bm_lift(seed, grid, 2, 16, 0.45).unwrap();
        let a = p.area(0, 8);
        let levy = 0.5 * (a[1] - a[2]);
        sum += levy;
        sum_sq += levy * levy;
        // symmetric part is ½ δw ⊗ δw for a geometric lift
        let dw = p.increment(0, 8);
        assert!((0.5 * (a[1] + a[2]) - 0.5 * dw[0] * dw[1]).abs() < 1e-12);
    }
    let mean = sum / n as f64;
    let sd = (sum_sq / n as f64 - mean * mean).sqrt();
    assert!(
        mean.abs() < 4.0 * sd / (n as f64).sqrt(),
        "mean {mean}, sd {sd}"
    );
    // E[A²] = t²/4 for the Lévy area of a 2D Brownian motion on [0, 1]; the
    // piecewise-linear lift at 128 sub-steps underestimates it slightly
    assert!((sd * sd - 0.25).abs() < 0.05, "{}", sd * sd);
}
