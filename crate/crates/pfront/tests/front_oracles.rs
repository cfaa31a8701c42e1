//! Front solver checked against independent closed forms and simulations.

use std::f64::consts::SQRT_2;

use pfront::cauchy::{BoxGrid, CauchyState, Stepper};
use pfront::cylinder::{logistic, CylinderGrid, ProfileField};
use pfront::front::{
    fit_decay, gradient_energy, normalization_shift, solve_front, speed_identity_residual, SolverOptions,
};
use pfront::medium::{make_cubic_medium, Mode, ReactionModel};

fn grid1(l: f64, n: usize) -> CylinderGrid {
    CylinderGrid::new(l, n, 1, 1).unwrap()
}

/// `∫_τ^∞ (1 + e^{s/√2})^{-2} ds` by composite Simpson on `[τ, 80]`.
fn logistic_tail_mass(tau: f64) -> f64 {
    let (a, b) = (tau, 80.0);
    let n = 200_000;
    let h = (b - a) / n as f64;
    let g = |s: f64| (1.0 + (s / SQRT_2).exp()).powi(-2);
    let mut acc = g(a) + g(b);
    for i in 1..n {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * g(a + i as f64 * h);
    }
    acc * h / 3.0
}

#[test]
fn logistic_normalization_matches_quadrature_oracle() {
    let (mut lo, mut hi) = (-20.0, 20.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        // tail mass decreases in τ
        if logistic_tail_mass(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau_star = 0.5 * (lo + hi);
    let grid = grid1(40.0, 2049);
    let tau = normalization_shift(&ProfileField::logistic(&grid)).unwrap();
    assert!((tau - tau_star).abs() <= 1e-6, "tau {tau} vs oracle {tau_star}");
}

#[test]
fn homogeneous_identity_sides_equal_one_thirtieth() {
    let model = make_cubic_medium(1, 0.3, vec![]).unwrap();
    let front = solve_front(&model, &[1.0], &grid1(40.0, 2048), None, &SolverOptions::default()).unwrap();
    let lhs = front.c * gradient_energy(&front.profile);
    assert!((lhs - 1.0 / 30.0).abs() <= 1e-5, "c∫|U'|² = {lhs}");
    assert!((model.mass_integral() - 1.0 / 30.0).abs() <= 1e-12);
    // exact profile: c = 0.4/√2 and ∫|U'|² = √2/12
    let exact = 0.4 / SQRT_2 * SQRT_2 / 12.0;
    assert!((exact - 1.0 / 30.0).abs() <= 1e-15);
}

#[test]
fn decay_rate_is_independent_of_theta() {
    for theta in [0.25, 0.3, 0.35] {
        let model = make_cubic_medium(1, theta, vec![]).unwrap();
        let front = solve_front(&model, &[1.0], &grid1(40.0, 2048), None, &SolverOptions::default()).unwrap();
        let c_exact = (1.0 - 2.0 * theta) / SQRT_2;
        let mu_exact = 0.5 * (c_exact + (c_exact * c_exact + 4.0 * theta).sqrt());
        assert!((mu_exact - 1.0 / SQRT_2).abs() <= 1e-12);
        let fit = fit_decay(&front, &model).unwrap();
        assert!((fit.mu_plus - mu_exact).abs() <= 0.02 * mu_exact, "theta {theta}: mu {}", fit.mu_plus);
        assert!(fit.mu_plus >= model.gamma.sqrt() - 0.02);
        assert!(model.gamma.sqrt() < mu_exact);
    }
}

#[test]
fn fronts_are_monotone_with_speed_sign_of_mass() {
    let media: Vec<ReactionModel> = [
        (0.2, 0.05),
        (0.25, 0.1),
        (0.3, 0.1),
        (0.35, 0.0),
        (0.4, 0.08),
        (0.45, 0.05),
        (0.55, 0.05),
        (0.6, 0.08),
        (0.65, 0.0),
        (0.7, 0.1),
        (0.75, 0.1),
        (0.8, 0.05),
    ]
    .iter()
    .map(|&(t, a)| make_cubic_medium(1, t, vec![Mode { k: vec![1], amp: a, phase: 0.4 }]).unwrap())
    .collect();
    let grid = CylinderGrid::new(30.0, 1024, 16, 1).unwrap();
    let (mut pos, mut neg) = (0, 0);
    for model in &media {
        let front = solve_front(model, &[1.0], &grid, None, &SolverOptions::default()).unwrap();
        let mass = model.mass_integral();
        assert_eq!(front.c > 0.0, mass > 0.0, "theta0 {}", model.theta.theta0);
        if mass > 0.0 {
            pos += 1
        } else {
            neg += 1
        }
        let m = grid.m();
        for i in 0..grid.n_xi - 1 {
            for j in 0..m {
                assert!(front.profile.values[(i + 1) * m + j] < front.profile.values[i * m + j]);
            }
        }
        assert!(speed_identity_residual(&front, model) <= 1e-4);
    }
    assert!(pos >= 3 && neg >= 3);
}

/// Speed of a planar front along `x₂` in stripes `θ(x₁)`, from the mass growth
/// of a direct simulation.
fn simulated_stripe_speed(model: &ReactionModel, n: usize, dt: f64) -> f64 {
    // front starts well clear of both walls so the state behind it is 1
    let half = 12.0;
    let grid = BoxGrid::new(half, n, 2).unwrap();
    let stepper = Stepper::new(&grid, model, dt).unwrap();
    let mut s = CauchyState::from_fn(&grid, |x| logistic(x[1] + 5.0));
    let area = grid.h() * grid.h() / (2.0 * half);
    let mass = |s: &CauchyState| s.u.iter().sum::<f64>() * area;
    let per_unit = (1.0 / dt).round() as usize;
    stepper.advance(&mut s, 8 * per_unit).unwrap();
    let m0 = mass(&s);
    stepper.advance(&mut s, 12 * per_unit).unwrap();
    (mass(&s) - m0) / 12.0
}

#[test]
fn transverse_stripes_reduce_to_simulated_speed() {
    let model = make_cubic_medium(2, 0.3, vec![Mode { k: vec![1, 0], amp: 0.1, phase: 0.0 }]).unwrap();
    let grid = CylinderGrid::new(25.0, 801, 16, 2).unwrap();
    let front = solve_front(&model, &[0.0, 1.0], &grid, None, &SolverOptions::default()).unwrap();
    // profile is constant along the stripes
    let n = grid.n_y;
    for i in 0..grid.n_xi {
        for j1 in 0..n {
            let row = &front.profile.values[i * n * n + j1 * n..i * n * n + (j1 + 1) * n];
            assert!(row.iter().all(|v| (v - row[0]).abs() <= 1e-8));
        }
    }
    // first-order splitting: extrapolate two time steps
    let coarse = simulated_stripe_speed(&model, 384, 0.01);
    let fine = simulated_stripe_speed(&model, 384, 0.005);
    let oracle = 2.0 * fine - coarse;
    assert!((front.c - oracle).abs() <= 1e-3 * oracle, "cylinder {} vs simulation {oracle} ({coarse}, {fine})", front.c);
}
