use std::f64::consts::PI;

use proptest::prelude::*;
use sundman::fields::{integrate_flow, reparametrize, time_map, IntegratorOptions};
use sundman::kepler::{
    analytic_ellipse, detect_period, fixed_energy_residual, linearization_check, linearized_field,
    radial_energy_drift, radial_field, sundman_radial_field, KeplerParams,
};
use sundman::{Error, ScalarField};

fn ellipse_params() -> KeplerParams {
    KeplerParams::new(1.0, 1.0, -0.125).unwrap()
}

fn perihelion() -> f64 {
    4.0 - 2.0 * 3f64.sqrt()
}

#[test]
fn field_examples() {
    let p = KeplerParams::new(1.0, 1.0, -0.5).unwrap();
    assert_eq!(radial_field(&p).accel(&[1.0], &[0.0]).unwrap(), vec![0.0]);
    assert_eq!(radial_field(&p).accel(&[2.0], &[0.0]).unwrap(), vec![-0.125]);
    let free_fall = KeplerParams::new(1.0, 0.0, -1.0).unwrap();
    assert_eq!(radial_field(&free_fall).accel(&[1.0], &[0.0]).unwrap(), vec![-1.0]);
    assert!(radial_field(&p).accel(&[0.0], &[0.0]).is_err());
    assert_eq!(linearized_field(&p).accel(&[1.0], &[0.3]).unwrap(), vec![0.0]);
    let q = ellipse_params();
    assert_eq!(linearized_field(&q).accel(&[4.0], &[0.0]).unwrap(), vec![0.0]);
    assert_eq!(linearized_field(&q).accel(&[1.0], &[0.0]).unwrap(), vec![0.75]);
}

#[test]
fn sundman_field_is_the_tau_equation() {
    let p = ellipse_params();
    let f = sundman_radial_field(&p);
    for (r, dr) in [(1.0, 0.2), (3.0, -0.7), (0.6, 0.0)] {
        let a = f.accel(&[r], &[dr]).unwrap()[0];
        assert!((a - (dr * dr / r + 1.0 / r - 1.0)).abs() < 1e-14);
        // On the energy shell r'²/r + ℓ²/r − k reduces to 2Er + k.
        let on_shell = (2.0 * r * r * p.energy() - 1.0 + 2.0 * r).sqrt();
        let b = f.accel(&[r], &[on_shell]).unwrap()[0];
        if on_shell.is_finite() {
            assert!((b - (2.0 * p.energy() * r + 1.0)).abs() < 1e-12);
        }
    }
}

#[test]
fn ellipse_examples() {
    let c = analytic_ellipse(&KeplerParams::new(1.0, 1.0, -0.5).unwrap()).unwrap();
    assert!((c.semi_major_axis() - 1.0).abs() < 1e-15);
    assert!(c.eccentricity() < 1e-7 && (c.omega() - 1.0).abs() < 1e-15);
    for tau in [0.0, 0.7, 3.0] {
        assert!((c.r(tau) - 1.0).abs() < 1e-7 && (c.t(tau) - tau).abs() < 1e-7);
    }
    let e = analytic_ellipse(&ellipse_params()).unwrap();
    assert_eq!(e.semi_major_axis(), 4.0);
    assert!((e.eccentricity() - 0.866025).abs() < 1e-6);
    assert_eq!(e.omega(), 0.5);
    assert!((e.r_min() - perihelion()).abs() < 1e-14);
    assert!((e.r_max() - (4.0 + 2.0 * 3f64.sqrt())).abs() < 1e-14);
    assert!(analytic_ellipse(&KeplerParams::new(1.0, 1.0, 0.0).unwrap()).is_err());
    assert!(analytic_ellipse(&KeplerParams::new(1.0, 1.0, 0.5).unwrap()).is_err());
}

#[test]
fn ellipse_matches_integrated_radial_motion() {
    let p = ellipse_params();
    let e = analytic_ellipse(&p).unwrap();
    let opts = IntegratorOptions::default().with_max_step(0.05);
    let tr = integrate_flow(&radial_field(&p).as_vector_field(), &[perihelion(), 0.0], e.t_period(), &opts).unwrap();
    let half = tr.state_at(0.5 * e.t_period()).unwrap();
    assert!((half[0] - e.r_max()).abs() < 1e-7 && half[1].abs() < 1e-7, "{half:?}");
    let end = tr.last_state();
    assert!((end[0] - e.r_min()).abs() < 1e-7 && end[1].abs() < 1e-6, "{end:?}");
    for (t, s) in tr.params().iter().zip(tr.states()) {
        assert!(s[0] >= e.r_min() - 1e-9 && s[0] <= e.r_max() + 1e-9, "{t}");
    }
    let l2 = p.k() * e.semi_major_axis() * (1.0 - e.eccentricity().powi(2));
    assert!((l2 - 1.0).abs() < 1e-14);
}

#[test]
fn eccentricity_zero_limit() {
    for a in [1.0f64, 2.5, 7.0] {
        // A circular orbit of radius a has ℓ² = k a and E = −k/(2a).
        let p = KeplerParams::new(1.0, a.sqrt(), -0.5 / a).unwrap();
        let e = analytic_ellipse(&p).unwrap();
        assert!(e.eccentricity() < 1e-6);
        for tau in [0.0, 1.0, 10.0] {
            assert!((e.t(tau) - a * tau).abs() <= 1e-6 * (1.0 + a * tau));
        }
    }
}

#[test]
fn energy_conserved_over_five_periods() {
    let p = ellipse_params();
    let t = 5.0 * analytic_ellipse(&p).unwrap().t_period();
    let opts = IntegratorOptions::default().with_tolerances(1e-12, 1e-14);
    let tr = integrate_flow(&radial_field(&p).as_vector_field(), &[perihelion(), 0.0], t, &opts).unwrap();
    assert!(radial_energy_drift(&p, &tr) <= 1e-9, "{}", radial_energy_drift(&p, &tr));
}

#[test]
fn fixed_energy_identity_and_periods() {
    let p = ellipse_params();
    let e = analytic_ellipse(&p).unwrap();
    let opts = IntegratorOptions::default();
    let tr = integrate_flow(&radial_field(&p).as_vector_field(), &[perihelion(), 0.0], 2.0 * e.t_period(), &opts).unwrap();
    let r = ScalarField::new(2, |s| s[0]).with_gradient(|_| vec![1.0, 0.0]);
    let sund = reparametrize(&tr, &r).unwrap();
    assert!(fixed_energy_residual(&p, &sund) <= 1e-6);
    let tp = detect_period(&sund, 1).unwrap().unwrap();
    assert!((tp - 4.0 * PI).abs() <= 1e-6 * 4.0 * PI, "{tp}");
    let tm = time_map(&tr, &r).unwrap();
    let one = 4.0 * PI;
    let mut worst = 0.0f64;
    for (t, tau) in tm.source().iter().zip(tm.target()) {
        if tau <= one {
            worst = worst.max((t - e.t(tau)).abs());
        }
    }
    assert!(worst <= 1e-6, "{worst}");
}

#[test]
fn linearization_examples() {
    let opts = IntegratorOptions::default();
    let c = linearization_check(&KeplerParams::new(1.0, 1.0, -0.5).unwrap(), 1.0, 0.0, 1.0, &opts).unwrap();
    assert!(c.sundman_linear_deviation <= 1e-8 && c.analytic_deviation <= 1e-8);
    let c = linearization_check(&ellipse_params(), perihelion(), 0.0, 1.0, &opts).unwrap();
    assert!(c.sundman_linear_deviation <= 1e-6, "{}", c.sundman_linear_deviation);
    assert!(c.analytic_deviation <= 1e-6, "{}", c.analytic_deviation);
    assert!(c.time_map_deviation <= 1e-6, "{}", c.time_map_deviation);
    let tp = c.tau_period.unwrap();
    assert!((tp - 4.0 * PI).abs() <= 1e-6 * 4.0 * PI);
    let bad = linearization_check(&ellipse_params(), 1.0, 0.3, 1.0, &opts);
    assert!(matches!(bad, Err(Error::Precondition(_))));
}

#[test]
fn radial_collision_is_reported() {
    let p = KeplerParams::new(1.0, 0.0, -1.0).unwrap();
    let r = linearization_check(&p, 1.0, 0.0, 5.0, &IntegratorOptions::default());
    assert!(matches!(r, Err(Error::Truncated { .. })), "{r:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn linearization_holds_across_eccentricities(ecc in 0.05f64..0.9, a in 1.0f64..5.0, phase in 0.0f64..1.0) {
        let p = KeplerParams::new(1.0, (a * (1.0 - ecc * ecc)).sqrt(), -0.5 / a).unwrap();
        let e = analytic_ellipse(&p).unwrap();
        prop_assert!((e.eccentricity() - ecc).abs() < 1e-10 && (e.semi_major_axis() - a).abs() < 1e-12);
        let tau0 = phase * e.tau_period();
        let r0 = e.r(tau0);
        let rdot0 = e.dr(tau0) / r0;
        let opts = IntegratorOptions::default().with_tolerances(1e-12, 1e-14);
        let c = linearization_check(&p, r0, rdot0, 1.0, &opts).unwrap();
        prop_assert!(c.sundman_linear_deviation <= 1e-6, "{}", c.sundman_linear_deviation);
        prop_assert!(c.analytic_deviation <= 1e-6, "{}", c.analytic_deviation);
        prop_assert!(c.time_map_deviation <= 1e-6 * e.t_period(), "{}", c.time_map_deviation);
        prop_assert!(c.fixed_energy_residual <= 1e-6);
        prop_assert!(c.energy_drift <= 1e-9);
        let tp = c.tau_period.unwrap();
        prop_assert!((tp - e.tau_period()).abs() <= 1e-6 * e.tau_period(), "{} vs {}", tp, e.tau_period());
    }
}
