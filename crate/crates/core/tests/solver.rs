use roughflow_core::nonlinearity::{Nonlinearity, ScalarMap, Term};
use roughflow_core::rough_driver::{RoughPath, TimeGrid};
use roughflow_core::solver::{
    cocycle_eval, solve_global, solve_local, temperedness_probe, Equation, SolveConfig,
};
use roughflow_core::spectral::SpectralOperator;

fn smooth_driver(t1: f64, n: usize, w: impl Fn(f64) -> f64) -> RoughPath {
    let grid = TimeGrid::new(0.0, t1, n).unwrap();
    let fine = TimeGrid::new(0.0, t1, (n - 1) * 8 + 1).unwrap();
    let samples: Vec<f64> = (0..fine.len()).map(|i| w(fine.time(i))).collect();
    RoughPath::build_smooth_lift(&samples, 1, grid, 0.5).unwrap()
}

fn scalar(modes: usize, coeff: f64, map: ScalarMap) -> Nonlinearity {
    let terms = (0..modes)
        .map(|k| Term {
            out_mode: k,
            out_col: 0,
            in_mode: k,
            coeff,
            map,
        })
        .collect();
    Nonlinearity::terms(modes, 1, terms).unwrap()
}

fn rk4(
    lambda: f64,
    a: f64,
    c: f64,
    w_dot: impl Fn(f64) -> f64,
    y0: f64,
    t1: f64,
    steps: usize,
) -> f64 {
    let rhs = |t: f64, y: f64| lambda * y + a * y * y / (1.0 + y * y) + c * y * w_dot(t);
    let h = t1 / steps as f64;
    let mut y = y0;
    for i in 0..steps {
        let t = i as f64 * h;
        let k1 = rhs(t, y);
        let k2 = rhs(t + h / 2.0, y + h / 2.0 * k1);
        let k3 = rhs(t + h / 2.0, y + h / 2.0 * k2);
        let k4 = rhs(t + h, y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    y
}

fn driver_w(t: f64) -> f64 {
    0.5 * (3.0 * t).sin() + 0.3 * t
}

fn driver_w_dot(t: f64) -> f64 {
    1.5 * (3.0 * t).cos() + 0.3
}

fn scalar_equation(lambda: f64, a: f64, c: f64) -> Equation {
    Equation::new(
        SpectralOperator::new(vec![lambda]).unwrap(),
        scalar(1, a, ScalarMap::SatSquare),
        scalar(1, c, ScalarMap::Identity),
    )
    .unwrap()
}

#[test]
fn linear_noise_matches_rk4() {
    let (lambda, c) = (-0.5, 0.8);
    let p = smooth_driver(1.0, 1025, driver_w);
    let traj = solve_global(
        &scalar_equation(lambda, 0.0, c),
        &[0.7],
        &p,
        1.0,
        &SolveConfig::for_gamma(0.5),
    )
    .unwrap();
    for (t, y) in traj.samples().iter().step_by(128) {
        let oracle = rk4(lambda, 0.0, c, driver_w_dot, 0.7, *t, 20_000);
        assert!(
            (y[0] - oracle).abs() < 1e-5,
            "t = {t}: {} vs {oracle}",
            y[0]
        );
    }
}

#[test]
fn drift_noise_coupling_converges_at_first_order() {
    // the level-2 expansion omits the dt·dw cross term, which is O(h²) per step on smooth drivers
    let (lambda, a, c) = (-0.5, 0.3, 0.8);
    let oracle = rk4(lambda, a, c, driver_w_dot, 0.7, 0.25, 20_000);
    let errs: Vec<f64> = [257, 513, 1025]
        .iter()
        .map(|&n| {
            let p = smooth_driver(0.25, n, driver_w);
            let traj = solve_global(
                &scalar_equation(lambda, a, c),
                &[0.7],
                &p,
                0.25,
                &SolveConfig::for_gamma(0.5),
            )
            .unwrap();
            (traj.endpoint()[0] - oracle).abs()
        })
        .collect();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!(ratio > 1.8 && ratio < 2.2, "{errs:?}");
    }
    assert!(errs[2] < 1e-5);
}

#[test]
fn free_equation_is_exact_orbit() {
    let op = SpectralOperator::preset_parabolic(1, 2.5, 4).unwrap();
    let eq = Equation::new(
        op.clone(),
        Nonlinearity::zero(4, 1),
        Nonlinearity::zero(4, 2),
    )
    .unwrap();
    let grid = TimeGrid::new(0.0, 2.0, 257).unwrap();
    let p = RoughPath::build_bm_lift(1, grid, 2, 16, 0.45).unwrap();
    let xi = [0.3, -1.0, 0.5, 2.0];
    let traj = solve_global(&eq, &xi, &p, 2.0, &SolveConfig::for_gamma(0.45)).unwrap();
    for (t, y) in traj.samples() {
        let f = op.factors(t);
        for k in 0..4 {
            assert_eq!(y[k], f[k] * xi[k]);
        }
    }
}

#[test]
fn chasles_resolve_and_mild_residual() {
    let op = SpectralOperator::preset_parabolic(1, 2.5, 3).unwrap();
    let eq = Equation::new(
        op,
        scalar(3, 0.4, ScalarMap::Tanh),
        scalar(3, 0.6, ScalarMap::Sin),
    )
    .unwrap();
    let grid = TimeGrid::new(0.0, 1.0, 257).unwrap();
    let p = RoughPath::build_bm_lift(9, grid, 1, 16, 0.45).unwrap();
    let cfg = SolveConfig::for_gamma(0.45);
    let xi = [0.4, -0.2, 0.1];
    let whole = solve_global(&eq, &xi, &p, 1.0, &cfg).unwrap();
    assert!(whole.max_residual() <= 2.0 * cfg.picard_tol);
    let first = solve_local(&eq, &xi, &p.restrict(0.0, 0.5).unwrap(), &cfg).unwrap();
    let mid = first.path.value(first.path.grid().len() - 1).to_vec();
    let second = solve_local(&eq, &mid, &p.restrict(0.5, 1.0).unwrap(), &cfg).unwrap();
    assert_eq!(first.horizon, 0.5);
    assert_eq!(second.horizon, 0.5);
    let end = second.path.value(second.path.grid().len() - 1);
    let gap: f64 = whole
        .endpoint()
        .iter()
        .zip(end)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(gap <= 5.0 * cfg.picard_tol, "{gap}");
    assert!(first.residual <= 2.0 * cfg.picard_tol && second.residual <= 2.0 * cfg.picard_tol);
}

#[test]
fn cocycle_sweep() {
    let op = SpectralOperator::preset_parabolic(1, 2.5, 2).unwrap();
    let eq = Equation::new(
        op,
        scalar(2, 0.3, ScalarMap::Tanh),
        scalar(2, 0.5, ScalarMap::Sin),
    )
    .unwrap();
    let cfg = SolveConfig::for_gamma(0.45);
    let grid = TimeGrid::new(0.0, 2.0, 257).unwrap();
    let drivers = [
        RoughPath::build_bm_lift(21, grid, 1, 16, 0.45).unwrap(),
        smooth_driver(2.0, 257, |t| (4.0 * t).sin()),
    ];
    for p in &drivers {
        for t in [0.25, 0.5, 1.0] {
            for s in [0.25, 0.5, 1.0] {
                let c = cocycle_eval(&eq, &[0.5, -0.3], p, t, s, &cfg).unwrap();
                assert!(
                    c.defect <= 10.0 * cfg.picard_tol,
                    "t = {t}, s = {s}: {}",
                    c.defect
                );
            }
        }
    }
}

#[test]
fn shrinking_horizon_contracts_better() {
    let op = SpectralOperator::preset_parabolic(1, 2.5, 2).unwrap();
    let eq = Equation::new(
        op,
        scalar(2, 0.5, ScalarMap::Tanh),
        scalar(2, 1.2, ScalarMap::Sin),
    )
    .unwrap();
    let cfg = SolveConfig::for_gamma(0.5);
    for seed in 0..6u32 {
        let (a, b) = (1.0 + seed as f64, 0.3 * seed as f64);
        let p = smooth_driver(1.0, 257, |t| (a * t + b).sin() + 0.5 * t * t);
        let mut prev = f64::INFINITY;
        for end in [1.0, 0.5, 0.25, 0.125] {
            let sol = solve_local(&eq, &[1.0, -0.5], &p.restrict(0.0, end).unwrap(), &cfg).unwrap();
            // the largest ratio of successive differences is only approximately monotone
            assert!(
                sol.contraction <= 1.05 * prev,
                "seed {seed}, T₀ = {end}: {} > {prev}",
                sol.contraction
            );
            prev = sol.contraction;
        }
    }
}

#[test]
fn large_initial_value_shrinks_instead_of_diverging() {
    let op = SpectralOperator::new(vec![-1.0]).unwrap();
    let eq = Equation::new(
        op,
        scalar(1, 5.0, ScalarMap::Tanh),
        scalar(1, 3.0, ScalarMap::Sin),
    )
    .unwrap();
    let grid = TimeGrid::new(0.0, 1.0, 257).unwrap();
    let p = RoughPath::build_bm_lift(8, grid, 1, 16, 0.45).unwrap();
    let cfg = SolveConfig::for_gamma(0.45);
    let sol = solve_local(&eq, &[1e3], &p, &cfg).unwrap();
    assert!(sol.path.values().iter().all(|v| v.is_finite()));
    assert!(sol.residual <= 2.0 * cfg.picard_tol * sol.path.sup_norm());
    let traj = solve_global(&eq, &[1e3], &p, 1.0, &cfg).unwrap();
    assert!(traj.endpoint()[0].is_finite());
}

#[test]
fn brownian_driver_is_tempered() {
    let grid = TimeGrid::new(0.0, 33.0, 33 * 32 + 1).unwrap();
    let p = RoughPath::build_bm_lift(2, grid, 1, 8, 0.4).unwrap();
    let rep = temperedness_probe(&p, 1.0, 32.0, 1.0).unwrap();
    assert!(rep.slope.abs() < 0.05, "{}", rep.slope);
    assert!(rep.growth.last().unwrap() < &0.2);
}
