use std::f64::consts::PI;

use nalgebra::DMatrix;
use proptest::prelude::*;
use sundman::fields::{integrate_flow, reparametrize, IntegratorOptions, Trajectory};
use sundman::kepler::{radial_field, KeplerParams};
use sundman::mechanics::{
    conformal_mechanical_residual, energy, energy_constancy_residual, energy_drift,
    jacobi_equivalence, jacobi_gradient_identity_residual, jacobi_metric, mechanical_sode,
    nabla_force_residual, newtonian_sode, reparametrized_mechanical_residual,
    sundman_newton_residual, ForceField, MechanicalSystem,
};
use sundman::numerics::sampling::{annulus, in_box};
use sundman::riemann::{
    conformal_rescale, geodesic_field, pregeodesic_factor, ConformalFactor, MetricField,
    SecondOrderField,
};
use sundman::{Error, ScalarField, VectorField};

fn oscillator() -> MechanicalSystem {
    let v = ScalarField::new(2, |q| 0.5 * (q[0] * q[0] + q[1] * q[1])).with_gradient(|q| q.to_vec());
    MechanicalSystem::new(MetricField::euclidean(2), v).unwrap()
}

fn planar_kepler() -> MechanicalSystem {
    let v = ScalarField::new(2, |q| -1.0 / q[0].hypot(q[1])).with_gradient(|q| {
        let r3 = q[0].hypot(q[1]).powi(3);
        vec![q[0] / r3, q[1] / r3]
    });
    MechanicalSystem::new(MetricField::euclidean(2), v).unwrap()
}

fn polar() -> MetricField {
    MetricField::diagonal(2, |q| vec![1.0, q[0] * q[0]]).with_partials(|q| {
        vec![
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 2.0 * q[0]]),
            DMatrix::zeros(2, 2),
        ]
    })
}

fn rotation() -> VectorField {
    VectorField::new(2, |q| vec![-q[1], q[0]])
        .with_jacobian(|_| DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]))
}

fn sphere() -> MetricField {
    MetricField::diagonal(2, |q| vec![1.0, q[0].sin().powi(2)])
}

fn accel_diff(a: &SecondOrderField, b: &SecondOrderField, q: &[f64], v: &[f64]) -> f64 {
    let (x, y) = (a.accel(q, v).unwrap(), b.accel(q, v).unwrap());
    x.iter().zip(&y).fold(0.0, |m, (p, r)| m.max((p - r).abs()))
}

fn run(field: &SecondOrderField, q0: &[f64], v0: &[f64], t: f64, opts: &IntegratorOptions) -> Trajectory {
    let s: Vec<f64> = q0.iter().chain(v0).copied().collect();
    integrate_flow(&field.as_vector_field(), &s, t, opts).unwrap()
}

#[test]
fn mechanical_sode_examples() {
    let free = MechanicalSystem::new(sphere(), ScalarField::constant(2, 0.0)).unwrap();
    let (q, v) = ([0.8, 0.3], [0.2, -0.5]);
    assert!(accel_diff(&mechanical_sode(&free), &geodesic_field(&sphere()), &q, &v) < 1e-12);
    let a = mechanical_sode(&oscillator()).accel(&[0.3, -0.7], &[1.0, 2.0]).unwrap();
    assert!((a[0] + 0.3).abs() < 1e-14 && (a[1] - 0.7).abs() < 1e-14);
}

#[test]
fn polar_kepler_reduces_to_radial_equation() {
    let v = ScalarField::new(2, |q| -1.0 / q[0]).with_gradient(|q| vec![1.0 / (q[0] * q[0]), 0.0]);
    let sys = MechanicalSystem::new(polar(), v).unwrap();
    let f = mechanical_sode(&sys);
    for (r, rdot, thetadot) in [(1.0, 0.0, 1.0), (2.0, 0.3, 0.2), (0.7, -0.5, 1.8)] {
        let a = f.accel(&[r, 0.4], &[rdot, thetadot]).unwrap();
        let l = r * r * thetadot;
        let p = KeplerParams::from_state(1.0, l, r, rdot).unwrap();
        let radial = radial_field(&p).accel(&[r], &[rdot]).unwrap();
        assert!((a[0] - radial[0]).abs() < 1e-12);
        assert!((a[0] - (l * l / r.powi(3) - 1.0 / (r * r))).abs() < 1e-12);
        // Angular momentum r²θ̇ is conserved: d/dt(r²θ̇) = r(2ṙθ̇ + rθ̈) = 0.
        assert!((2.0 * rdot * thetadot + r * a[1]).abs() < 1e-12);
    }
}

#[test]
fn newtonian_sode_examples() {
    let g = sphere();
    let (q, v) = ([0.8, 0.3], [0.2, -0.5]);
    assert!(accel_diff(&newtonian_sode(&g, &ForceField::zero(2)).unwrap(), &geodesic_field(&g), &q, &v) < 1e-12);
    let sys = oscillator();
    let z = ForceField::potential(sys.metric(), sys.potential()).unwrap();
    assert!(z.is_basic());
    assert!(accel_diff(&newtonian_sode(sys.metric(), &z).unwrap(), &mechanical_sode(&sys), &q, &v) < 1e-12);

    let drag = ForceField::velocity_dependent(2, |_, v| vec![-v[0], -v[1]]);
    assert!(!drag.is_basic());
    let f = newtonian_sode(&MetricField::euclidean(2), &drag).unwrap();
    let tr = run(&f, &[1.0, 2.0], &[0.5, -1.0], 5.0, &IntegratorOptions::default());
    for (t, s) in tr.params().iter().zip(tr.states()) {
        let d = 1.0 - (-t).exp();
        assert!((s[0] - (1.0 + 0.5 * d)).abs() < 1e-9);
        assert!((s[1] - (2.0 - d)).abs() < 1e-9);
        assert!((s[2] - 0.5 * (-t).exp()).abs() < 1e-9);
    }
    assert!(matches!(nabla_force_residual(&MetricField::euclidean(2), &rotation(), &drag, &[vec![1.0, 0.0]]), Err(Error::Precondition(_))));
}

#[test]
fn energy_examples() {
    let free = MechanicalSystem::new(MetricField::euclidean(2), ScalarField::constant(2, 0.0)).unwrap();
    assert_eq!(energy(&free, &[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
    assert!((energy(&oscillator(), &[1.0, 0.0], &[0.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
    let v = ScalarField::new(2, |q| -1.0 / q[0]);
    let kepler = MechanicalSystem::new(polar(), v).unwrap();
    assert!((energy(&kepler, &[1.0, 0.0], &[0.0, 1.0]).unwrap() + 0.5).abs() < 1e-15);
}

#[test]
fn nabla_force_examples() {
    let e = MetricField::euclidean(2);
    let pts = annulus(2, 50, 0.5, 2.0, 0);
    assert!(nabla_force_residual(&e, &VectorField::constant(vec![1.0, 2.0]), &ForceField::zero(2), &pts).unwrap() < 1e-12);
    let spring = ForceField::basic(2, |q| vec![-q[0], -q[1]]);
    assert!(nabla_force_residual(&e, &rotation(), &spring, &pts).unwrap() < 1e-12);
    let circle = annulus(2, 20, 1.0, 1.0, 1);
    let r = nabla_force_residual(&e, &rotation(), &ForceField::zero(2), &circle).unwrap();
    assert!((r - 1.0).abs() < 1e-12);
}

#[test]
fn sundman_newton_catalogue() {
    let e = MetricField::euclidean(2);
    let pts = annulus(2, 60, 0.5, 2.0, 2);
    let spring = ForceField::basic(2, |q| vec![-q[0], -q[1]]);
    let factors: Vec<ScalarField> = vec![
        ScalarField::constant(2, 1.0),
        ScalarField::constant(2, 3.0),
        ScalarField::new(2, |q| 1.0 + 0.3 * q[0] * q[0]),
        ScalarField::new(2, |q| 2.0 + (q[0] * q[1]).sin()),
        ScalarField::new(2, |q| (0.2 * q[0] - 0.1 * q[1]).exp()),
    ];
    let x = rotation();
    for h in &factors {
        let (hx, xx) = (h.clone(), x.clone());
        let y = VectorField::try_new(2, move |q| {
            let s = hx.eval(q)?;
            Ok(xx.eval(q)?.into_iter().map(|c| s * c).collect())
        });
        let r = sundman_newton_residual(&e, &y, &spring, h, &pts).unwrap();
        assert!(r <= 1e-5, "{r}");
    }
    let one = ScalarField::constant(2, 1.0);
    let a = sundman_newton_residual(&e, &x, &spring, &one, &pts).unwrap();
    assert_eq!(a, nabla_force_residual(&e, &x, &spring, &pts).unwrap());
    let h = ScalarField::new(2, |q| 1.0 + 0.5 * q[0] * q[0]);
    let r = sundman_newton_residual(&e, &x, &ForceField::zero(2), &h, &pts).unwrap();
    assert!(r > 0.1, "{r}");
}

#[test]
fn jacobi_metric_examples() {
    let free = MechanicalSystem::new(sphere(), ScalarField::constant(2, 0.0)).unwrap();
    let j = jacobi_metric(&free, 2.5).unwrap();
    let q = [0.9, 0.1];
    assert!((j.metric().eval(&q).unwrap() - sphere().eval(&q).unwrap() * 2.5).abs().max() < 1e-14);
    let j = jacobi_metric(&oscillator(), 1.0).unwrap();
    assert_eq!(j.metric().eval(&[0.0, 0.0]).unwrap(), DMatrix::identity(2, 2));
    let m = j.metric().eval(&[0.6, 0.8]).unwrap();
    assert!((m - DMatrix::identity(2, 2) * 0.5).abs().max() < 1e-15);
    assert!(matches!(j.check_region(&[vec![0.0, 0.0], vec![1.0, 1.0]]), Err(Error::OutsideDomain { .. })));
    assert!(j.metric().eval(&[2.0, 0.0]).is_err());
    let phi = j.conformal_factor().phi();
    assert!((phi.eval(&[0.6, 0.8]).unwrap() - 0.5 * 0.5f64.ln()).abs() < 1e-15);
}

#[test]
fn energy_constancy_examples() {
    let free = MechanicalSystem::new(MetricField::euclidean(2), ScalarField::constant(2, 0.0)).unwrap();
    let pts = annulus(2, 50, 0.5, 2.0, 3);
    assert!(energy_constancy_residual(&free, &VectorField::constant(vec![1.0, -2.0]), &pts).unwrap() < 1e-12);
    assert!(energy_constancy_residual(&oscillator(), &rotation(), &pts).unwrap() < 1e-8);
    let tilt = MechanicalSystem::new(MetricField::euclidean(2), ScalarField::coordinate(2, 0)).unwrap();
    let r = energy_constancy_residual(&tilt, &VectorField::constant(vec![1.0, 0.0]), &pts).unwrap();
    assert!((r - 1.0).abs() < 1e-8);
}

#[test]
fn jacobi_equivalence_free_motion() {
    let free = MechanicalSystem::new(MetricField::euclidean(2), ScalarField::constant(2, 0.0)).unwrap();
    let e0 = 0.7;
    let s = (2.0 * e0 / 2.0f64).sqrt();
    let r = jacobi_equivalence(&free, e0, &[0.1, 0.2], &[s, s], 3.0, &IntegratorOptions::default()).unwrap();
    assert!(r.orbit_distance <= 1e-9);
    assert!(r.arc_length_residual <= 1e-9);
    assert!(!r.truncated);
}

#[test]
fn jacobi_equivalence_harmonic() {
    let sys = oscillator();
    let (q0, dir) = ([0.5, 0.0], [0.3, 1.0]);
    let s = (2.0 * (1.0 - 0.125) / (0.09 + 1.0f64)).sqrt();
    let v0 = [dir[0] * s, dir[1] * s];
    let e0 = 1.0;
    let r = jacobi_equivalence(&sys, e0, &q0, &v0, 2.0 * PI, &IntegratorOptions::default()).unwrap();
    assert!(r.orbit_distance <= 1e-5, "{}", r.orbit_distance);
    assert!(r.energy_drift <= 1e-7);
    assert!(r.arc_length_residual <= 1e-6, "{}", r.arc_length_residual);
    assert!(!r.truncated);
    let pts = in_box(&[(-0.9, 0.9), (-0.9, 0.9)], 100, 0)
        .into_iter()
        .filter(|q| q[0] * q[0] + q[1] * q[1] < 1.5)
        .collect::<Vec<_>>();
    assert!(jacobi_gradient_identity_residual(&sys, e0, &pts).unwrap() <= 1e-6);
}

#[test]
fn jacobi_equivalence_kepler() {
    let sys = planar_kepler();
    let rp = 4.0 - 2.0 * 3f64.sqrt();
    let (q0, v0) = ([rp, 0.0], [0.0, 1.0 / rp]);
    let e0 = -0.125;
    assert!((energy(&sys, &q0, &v0).unwrap() - e0).abs() < 1e-12);
    let r = jacobi_equivalence(&sys, e0, &q0, &v0, 16.0 * PI, &IntegratorOptions::default()).unwrap();
    assert!(r.orbit_distance <= 1e-5, "{}", r.orbit_distance);
    assert!(r.energy_drift <= 1e-7, "{}", r.energy_drift);
    assert!(!r.truncated);
    let pts = annulus(2, 100, 1.0, 7.0, 1);
    assert!(jacobi_gradient_identity_residual(&sys, e0, &pts).unwrap() <= 1e-6);
}

#[test]
fn jacobi_equivalence_rejects_bad_input() {
    let sys = oscillator();
    let opts = IntegratorOptions::default();
    assert!(jacobi_equivalence(&sys, 1.0, &[0.5, 0.0], &[1.0, 1.0], 1.0, &opts).is_err());
    assert!(matches!(jacobi_equivalence(&sys, 0.5, &[1.0, 0.0], &[0.0, 0.0], 1.0, &opts), Err(Error::OutsideDomain { .. })));
}

#[test]
fn energy_is_conserved() {
    let opts = IntegratorOptions::default();
    let tr = run(&mechanical_sode(&oscillator()), &[1.0, 0.3], &[-0.2, 0.7], 10.0, &opts);
    assert!(energy_drift(&oscillator(), &tr).unwrap() <= 1e-7);
    let k = planar_kepler();
    let rp = 4.0 - 2.0 * 3f64.sqrt();
    let tr = run(&mechanical_sode(&k), &[rp, 0.0], &[0.0, 1.0 / rp], 10.0, &opts);
    assert!(energy_drift(&k, &tr).unwrap() <= 1e-7);
}

#[test]
fn general_reparametrization_residual() {
    let sys = oscillator();
    let opts = IntegratorOptions::default().with_max_step(0.02);
    let tr = run(&mechanical_sode(&sys), &[1.0, 0.3], &[-0.2, 0.7], 6.0, &opts);
    let xis = [
        ScalarField::new(2, |q| 1.0 + 0.4 * q[0] * q[0]),
        ScalarField::new(2, |q| (0.3 * q[1]).exp()),
        ScalarField::constant(2, 0.5),
    ];
    for xi in &xis {
        let re = reparametrize(&tr, &xi.extend_to(4)).unwrap();
        let vals: Vec<f64> = re.states().iter().map(|s| xi.eval(&s[..2]).unwrap()).collect();
        let r = reparametrized_mechanical_residual(&sys, &re, &vals).unwrap();
        assert!(r <= 1e-5, "{r}");
    }
}

#[test]
fn conformal_mechanical_consistency() {
    let g = sphere();
    let phi = ConformalFactor::new(ScalarField::new(2, |q| 0.2 * q[0].cos() + 0.1 * q[1].sin()));
    let v = ScalarField::new(2, |q| 0.5 * (q[0] - 1.2).powi(2));
    let gbar = conformal_rescale(&g, &phi).unwrap();
    let sys = MechanicalSystem::new(gbar, v.clone()).unwrap();
    let opts = IntegratorOptions::default().with_max_step(0.02);
    let tr = run(&mechanical_sode(&sys), &[1.0, 0.0], &[0.1, 0.6], 6.0, &opts);
    let r = conformal_mechanical_residual(&g, &phi, &v, &tr).unwrap();
    assert!(r <= 1e-5, "{r}");
}

#[test]
fn jacobi_pregeodesic_certification() {
    // X = ∇W with W = cθ + w(r), w'(r) = √(2E₀ − r² − c²/r²), so ½|X|² + V = E₀.
    let (e0, c) = (1.0, 0.5);
    let x = VectorField::new(2, move |q| {
        let r2 = q[0] * q[0] + q[1] * q[1];
        let r = r2.sqrt();
        let w = (2.0 * e0 - r2 - c * c / r2).sqrt();
        vec![w * q[0] / r - c * q[1] / r2, w * q[1] / r + c * q[0] / r2]
    });
    let sys = oscillator();
    let pts = annulus(2, 200, 0.5, 1.2, 4);
    let z = ForceField::potential(sys.metric(), sys.potential()).unwrap();
    assert!(nabla_force_residual(sys.metric(), &x, &z, &pts).unwrap() <= 1e-5);
    assert!(energy_constancy_residual(&sys, &x, &pts).unwrap() <= 1e-6);
    let j = jacobi_metric(&sys, e0).unwrap();
    let fit = pregeodesic_factor(j.metric(), &x, &pts).unwrap();
    assert!(fit.residual <= 1e-4, "{}", fit.residual);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn basic_forces_ignore_velocity(x in -2.0f64..2.0, y in -2.0f64..2.0, u in -5.0f64..5.0, w in -5.0f64..5.0) {
        let z = ForceField::basic(2, |q| vec![q[0].sin() * q[1], q[0] - q[1] * q[1]]);
        let a = z.eval(&[x, y], &[0.0, 0.0]).unwrap();
        let b = z.eval(&[x, y], &[u, w]).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn gradient_identity_holds(x in -0.9f64..0.9, y in -0.9f64..0.9, e0 in 1.0f64..3.0) {
        let sys = oscillator();
        prop_assert!(jacobi_gradient_identity_residual(&sys, e0, &[vec![x, y]]).unwrap() <= 1e-6);
        let s = MechanicalSystem::new(sphere(), ScalarField::new(2, |q| q[0].cos() + 0.3 * q[1].sin())).unwrap();
        prop_assert!(jacobi_gradient_identity_residual(&s, e0 + 1.5, &[vec![1.2 + 0.5 * x, y]]).unwrap() <= 1e-6);
    }

    #[test]
    fn reparametrized_newtonian_fields(a in 0.0f64..1.0, b in -1.0f64..1.0, x in -1.5f64..1.5, y in 0.5f64..1.5) {
        let e = MetricField::euclidean(2);
        let h = ScalarField::new(2, move |q| 1.0 + a * q[0] * q[0] + 0.5 * (b * q[1]).sin().powi(2));
        let hx = h.clone();
        let yf = VectorField::try_new(2, move |q| {
            let s = hx.eval(q)?;
            Ok(vec![-s * q[1], s * q[0]])
        });
        let spring = ForceField::basic(2, |q| vec![-q[0], -q[1]]);
        prop_assert!(sundman_newton_residual(&e, &yf, &spring, &h, &[vec![x, y]]).unwrap() <= 1e-5);
    }
}
