//! Sub/supersolution certificates on a homogeneous 32-direction sweep.

use std::sync::OnceLock;

use pfront::barrier::{
    calibrate_tolerance, check_parabolic_inequality, derive_constants, BarrierError, BarrierField, BarrierKind,
    BarrierSpec, ExpTail, Region,
};
use pfront::cauchy::{init_vr, BoxGrid, CauchyState, Stepper};
use pfront::cylinder::CylinderGrid;
use pfront::front::SolverOptions;
use pfront::medium::{make_cubic_medium, ReactionModel};
use pfront::sweep::{sweep_directions, SpeedSweep};

const EPS: f64 = 0.1;
const DX: f64 = 0.05;

fn model() -> &'static ReactionModel {
    static M: OnceLock<ReactionModel> = OnceLock::new();
    M.get_or_init(|| make_cubic_medium(2, 0.3, vec![]).unwrap())
}

fn sweep() -> &'static SpeedSweep {
    static S: OnceLock<SpeedSweep> = OnceLock::new();
    S.get_or_init(|| {
        let grid = CylinderGrid::new(25.0, 801, 1, 2).unwrap();
        sweep_directions(model(), &grid, 32, &SolverOptions::default()).unwrap()
    })
}

fn tol_disc() -> f64 {
    let c = sweep().entries[0].c;
    calibrate_tolerance(&ExpTail::new(model(), c, [1.0, 0.0], 0.0), DX).tol_disc
}

fn sub_spec() -> BarrierSpec {
    derive_constants(sweep(), model(), EPS, BarrierKind::Subsolution, 0.8).unwrap()
}

fn super_spec() -> BarrierSpec {
    derive_constants(sweep(), model(), EPS, BarrierKind::Supersolution, 0.1).unwrap()
}

/// Front and glue windows over two time units.
fn windows(field: &BarrierField) -> Region {
    field.standard_region(2.0, 3, 120, 60, 8).unwrap()
}

#[test]
fn derived_constants_follow_their_formulas() {
    let s = sub_spec();
    assert_eq!(s.delta, model().sigma / 2.0);
    let expected = s.delta.min(EPS * s.k / (8.0 * model().lipschitz_l));
    assert_eq!(s.delta_eps, expected);
    assert!(s.c_eps >= 4.0 / EPS, "C_eps {}", s.c_eps);
    assert!(s.xi_eps >= 2.0);
    assert!(s.c_prime >= s.c);
    let sp = super_spec();
    assert!(sp.t_end > sp.t_start);
    assert!((sp.t_end - sp.radius / (sp.c_high + EPS)).abs() <= 1e-9 * sp.t_end);
}

#[test]
fn subsolution_plateau_and_clamp() {
    let field = BarrierField::subsolution(sweep(), &sub_spec()).unwrap();
    let s = field.spec.clone();
    let t = s.t_start;
    // ζ = -ξ_ε - C - 1 and ζ = C' + 1 along a ray
    for phi in [0.0f64, 1.1, 2.9] {
        let r_plateau = -s.xi_eps - s.c - 1.0 + s.xi_eps + s.c + s.c_eps;
        let x = [r_plateau * phi.cos(), r_plateau * phi.sin()];
        assert_eq!(field.value(t, x).unwrap(), 1.0 - s.delta - s.delta_eps);
        let r_clamp = s.c_prime + 1.0 + s.xi_eps + s.c + s.c_eps;
        let x = [r_clamp * phi.cos(), r_clamp * phi.sin()];
        assert_eq!(field.value(t, x).unwrap(), 0.0);
    }
}

#[test]
fn supersolution_is_clamped_inside_at_start() {
    let field = BarrierField::supersolution(sweep(), &super_spec()).unwrap();
    let s = field.spec.clone();
    let t = s.t_start;
    // ζ̄ = -C' - 1
    let r = s.c_prime + 1.0 + s.radius - s.b - s.c_prime;
    for phi in [0.3f64, 2.0, 4.4] {
        assert_eq!(field.value(t, [r * phi.cos(), r * phi.sin()]).unwrap(), 1.0);
    }
}

#[test]
fn supersolution_rejects_times_outside_its_strip() {
    let field = BarrierField::supersolution(sweep(), &super_spec()).unwrap();
    let s = field.spec.clone();
    assert!(field.value(s.t_start, [1.0, 0.0]).is_ok());
    assert!(field.value(s.t_end, [1.0, 0.0]).is_ok());
    assert!(matches!(field.value(s.t_start - 1e-9, [1.0, 0.0]), Err(BarrierError::OutsideDomain { .. })));
    assert!(matches!(field.value(s.t_end + 1e-6, [1.0, 0.0]), Err(BarrierError::OutsideDomain { .. })));
}

#[test]
fn subsolution_frame_moves_at_reduced_speed() {
    let field = BarrierField::subsolution(sweep(), &sub_spec()).unwrap();
    let s = field.spec.clone();
    let speed = s.c_low - EPS / 2.0;
    for (t, r) in [(s.t_start, 100.0), (s.t_start + 7.5, 3.0e5)] {
        let z0 = field.zeta(t, r);
        let z1 = field.zeta(t + 2.0, r + 2.0 * speed);
        assert!((z1 - z0).abs() <= 1e-9 * r.max(1.0), "drift {}", z1 - z0);
    }
}

#[test]
fn subsolution_certificate_passes_and_control_fails() {
    let tol = tol_disc();
    let field = BarrierField::subsolution(sweep(), &sub_spec()).unwrap();
    let region = windows(&field);
    let cert = check_parabolic_inequality(&field, model(), &region, DX, tol).unwrap();
    assert!(cert.pass, "{}", cert.report(&region));
    let flipped = BarrierField::subsolution(sweep(), &sub_spec()).unwrap().sign_flipped();
    let control = check_parabolic_inequality(&flipped, model(), &windows(&flipped), DX, tol).unwrap();
    assert!(!control.pass);
    assert!(control.max_violation >= 10.0 * tol, "{}", control.max_violation);
}

#[test]
fn supersolution_certificate_passes_and_control_fails() {
    let tol = tol_disc();
    let field = BarrierField::supersolution(sweep(), &super_spec()).unwrap();
    let region = windows(&field);
    let cert = check_parabolic_inequality(&field, model(), &region, DX, tol).unwrap();
    assert!(cert.pass, "{}", cert.report(&region));
    let flipped = BarrierField::supersolution(sweep(), &super_spec()).unwrap().sign_flipped();
    let control = check_parabolic_inequality(&flipped, model(), &windows(&flipped), DX, tol).unwrap();
    assert!(!control.pass);
    assert!(control.max_violation >= 10.0 * tol, "{}", control.max_violation);
}

#[test]
fn region_touching_the_clamp_is_rejected() {
    let field = BarrierField::subsolution(sweep(), &sub_spec()).unwrap();
    let s = field.spec.clone();
    let region = Region::in_zeta(&field, s.t_start, s.t_start + 1.0, 2, -s.c, s.c_prime + 3.0, 200, 4);
    let out = check_parabolic_inequality(&field, model(), &region, DX, tol_disc());
    assert!(matches!(out, Err(BarrierError::RegionTouchesClamp { .. })));
}

#[test]
fn evolved_subsolution_stays_below_evolved_bubble() {
    // narrow glue and collar so the whole construction fits an 80-wide box
    let mut spec = sub_spec();
    spec.xi_eps = 4.0;
    spec.c_eps = 6.0;
    spec.t_start = 0.0;
    let field = BarrierField::subsolution(sweep(), &spec).unwrap();
    let grid = BoxGrid::new(40.0, 640, 2).unwrap();
    let stepper = Stepper::new(&grid, model(), 0.05).unwrap();
    let mut upper = init_vr(&grid, model(), 20.0, 0.8).unwrap();
    stepper.advance(&mut upper, 200).unwrap();
    let mut lower = CauchyState::from_fn(&grid, |x| field.value(0.0, x).unwrap());
    for i in 0..grid.len() {
        assert!(lower.u[i] <= upper.u[i] + 1e-12, "initial ordering violated at {:?}: {} > {}", grid.point(i), lower.u[i], upper.u[i]);
    }
    for _ in 0..200 {
        stepper.step(&mut lower).unwrap();
        stepper.step(&mut upper).unwrap();
        let worst = lower.u.iter().zip(&upper.u).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
        assert!(worst <= 1e-6, "ordering broken by {worst}");
    }
}
