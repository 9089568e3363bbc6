//! Mechanical systems `L = T_g − V` and Newtonian force fields on a Riemannian chart,
//! their behaviour under time reparametrization, and the Jacobi metric.

mod jacobi;

use std::fmt;
use std::sync::Arc;

use crate::error::{check_dim, check_finite, Error, Result};
use crate::fields::{ScalarField, Trajectory, VectorField};
use crate::numerics::{dot, norm};
use crate::riemann::{
    christoffel, covariant_derivative, gradient, kinetic_energy, ConformalFactor, MetricField,
    SecondOrderField,
};

pub use jacobi::{
    jacobi_equivalence, jacobi_gradient_identity_residual, jacobi_metric, JacobiMetric,
    JacobiReport,
};

/// A metric `g` with a potential `V`; energy `E(q, v) = ½ g(v, v) + V(q)`.
#[derive(Debug, Clone)]
pub struct MechanicalSystem {
    g: MetricField,
    v: ScalarField,
}

impl MechanicalSystem {
    pub fn new(g: MetricField, v: ScalarField) -> Result<Self> {
        check_dim(g.dim(), v.dim())?;
        Ok(Self { g, v })
    }

    pub fn metric(&self) -> &MetricField {
        &self.g
    }

    pub fn potential(&self) -> &ScalarField {
        &self.v
    }

    pub fn dim(&self) -> usize {
        self.g.dim()
    }
}

/// `E(q, v) = T_g(v) + V(q)`.
pub fn energy(sys: &MechanicalSystem, q: &[f64], v: &[f64]) -> Result<f64> {
    Ok(kinetic_energy(&sys.g, q, v)? + sys.v.eval(q)?)
}

/// Relative energy drift `max |E − E₀| / |E₀|` along a `(q, v)` trajectory
/// (absolute when `E₀ = 0`).
pub fn energy_drift(sys: &MechanicalSystem, traj: &Trajectory) -> Result<f64> {
    let n = sys.dim();
    check_dim(2 * n, traj.dim())?;
    let e = |s: &[f64]| energy(sys, &s[..n], &s[n..]);
    let e0 = e(&traj.states()[0])?;
    let scale = if e0 == 0.0 { 1.0 } else { e0.abs() };
    traj.states()
        .iter()
        .try_fold(0.0f64, |m, s| Ok(m.max((e(s)? - e0).abs() / scale)))
}

/// `q̈ = −Γ(q̇, q̇) − grad_g V`.
pub fn mechanical_sode(sys: &MechanicalSystem) -> SecondOrderField {
    let s = sys.clone();
    let field = SecondOrderField::try_new(sys.dim(), move |q, v| {
        let c = christoffel(&s.g, q)?.contract(v, v);
        let gv = gradient(&s.g, &s.v, q)?;
        Ok(c.iter().zip(&gv).map(|(a, b)| -a - b).collect())
    });
    with_metric_domain(field, &sys.g)
}

fn with_metric_domain(field: SecondOrderField, g: &MetricField) -> SecondOrderField {
    let metric = g.clone();
    field.with_domain(move |q| metric.admits(q))
}

type ForceFn = Arc<dyn Fn(&[f64], &[f64]) -> Result<Vec<f64>> + Send + Sync>;

/// A force `Z(q, v)`; basic forces depend on position only.
#[derive(Clone)]
pub struct ForceField {
    dim: usize,
    eval: ForceFn,
    basic: bool,
}

impl fmt::Debug for ForceField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ForceField")
            .field("dim", &self.dim)
            .field("basic", &self.basic)
            .finish()
    }
}

impl ForceField {
    /// A position-only force `Z(q)`.
    pub fn basic<F>(dim: usize, z: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self::try_basic(dim, move |q| Ok(z(q)))
    }

    pub fn try_basic<F>(dim: usize, z: F) -> Self
    where
        F: Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
    {
        Self {
            dim,
            eval: Arc::new(move |q, _| z(q)),
            basic: true,
        }
    }

    /// A force that may depend on velocity, such as drag.
    pub fn velocity_dependent<F>(dim: usize, z: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self {
            dim,
            eval: Arc::new(move |q, v| Ok(z(q, v))),
            basic: false,
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self::basic(dim, move |_| vec![0.0; dim])
    }

    /// `Z = −grad_g V`.
    pub fn potential(g: &MetricField, v: &ScalarField) -> Result<Self> {
        check_dim(g.dim(), v.dim())?;
        let (g, v) = (g.clone(), v.clone());
        Ok(Self::try_basic(g.dim(), move |q| {
            Ok(gradient(&g, &v, q)?.into_iter().map(|x| -x).collect())
        }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_basic(&self) -> bool {
        self.basic
    }

    pub fn eval(&self, q: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, q.len())?;
        check_dim(self.dim, v.len())?;
        let z = (self.eval)(q, v)?;
        check_dim(self.dim, z.len())?;
        check_finite(&z, "force", q)?;
        Ok(z)
    }

    fn require_basic(&self) -> Result<()> {
        if self.basic {
            Ok(())
        } else {
            Err(Error::Precondition(
                "velocity-dependent forces are not supported by this check".into(),
            ))
        }
    }
}

/// `q̈ = −Γ(q̇, q̇) + Z(q, q̇)`.
pub fn newtonian_sode(g: &MetricField, z: &ForceField) -> Result<SecondOrderField> {
    check_dim(g.dim(), z.dim())?;
    let (metric, force) = (g.clone(), z.clone());
    let field = SecondOrderField::try_new(g.dim(), move |q, v| {
        let c = christoffel(&metric, q)?.contract(v, v);
        let f = force.eval(q, v)?;
        Ok(c.iter().zip(&f).map(|(a, b)| b - a).collect())
    });
    Ok(with_metric_domain(field, g))
}

/// `max ‖∇_X X − Z‖` over the samples; zero when the integral curves of `X` solve
/// `q̈ + Γ(q̇, q̇) = Z`.
pub fn nabla_force_residual(
    g: &MetricField,
    x: &VectorField,
    z: &ForceField,
    samples: &[Vec<f64>],
) -> Result<f64> {
    z.require_basic()?;
    check_dim(g.dim(), x.dim())?;
    check_dim(g.dim(), z.dim())?;
    samples.iter().try_fold(0.0f64, |m, q| {
        let nabla = covariant_derivative(g, x, x, q)?;
        let zv = z.eval(q, &x.eval(q)?)?;
        Ok(m.max(norm(&crate::numerics::sub(&nabla, &zv))))
    })
}

/// `max ‖∇_Y Y − (L_Y log h) Y − h² Z‖` over the samples.
pub fn sundman_newton_residual(
    g: &MetricField,
    y: &VectorField,
    z: &ForceField,
    h: &ScalarField,
    samples: &[Vec<f64>],
) -> Result<f64> {
    z.require_basic()?;
    check_dim(g.dim(), y.dim())?;
    check_dim(g.dim(), z.dim())?;
    check_dim(g.dim(), h.dim())?;
    samples.iter().try_fold(0.0f64, |m, q| {
        let hv = h.eval_positive(q)?;
        let yv = y.eval(q)?;
        let lam = dot(&h.gradient(q)?, &yv) / hv;
        let nabla = covariant_derivative(g, y, y, q)?;
        let zv = z.eval(q, &yv)?;
        let r: Vec<f64> = (0..yv.len())
            .map(|i| nabla[i] - lam * yv[i] - hv * hv * zv[i])
            .collect();
        Ok(m.max(norm(&r)))
    })
}

/// `max |∇(E∘X) · X|` over the samples, with `(E∘X)(q) = E(q, X(q))`.
pub fn energy_constancy_residual(
    sys: &MechanicalSystem,
    x: &VectorField,
    samples: &[Vec<f64>],
) -> Result<f64> {
    check_dim(sys.dim(), x.dim())?;
    let (s, xe) = (sys.clone(), x.clone());
    let ex = ScalarField::try_new(sys.dim(), move |q| energy(&s, q, &xe.eval(q)?));
    crate::fields::first_integral_residual(&ex, x, samples)
}

/// Residual of `q″ + Γ(q′, q′) − λ q′ = −ξ² grad_g V` along a mechanical trajectory
/// reparametrized by `dt/dτ = ξ`, with `λ = ξ′/ξ` differentiated from the node
/// values `xi` (one per node of `traj`).
pub fn reparametrized_mechanical_residual(
    sys: &MechanicalSystem,
    traj: &Trajectory,
    xi: &[f64],
) -> Result<f64> {
    if xi.len() != traj.len() {
        return Err(Error::InvalidTrajectory(format!(
            "{} factor values for {} nodes",
            xi.len(),
            traj.len()
        )));
    }
    if let Some(bad) = xi.iter().find(|x| !(**x > 0.0)) {
        return Err(Error::NonPositiveFactor {
            value: *bad,
            point: traj.states()[0].clone(),
        });
    }
    let jets = traj.jets(sys.dim())?;
    jets.iter().enumerate().try_fold(0.0f64, |m, (k, j)| {
        let i = k + 1;
        let dxi = slope(traj.params(), xi, i);
        let lam = dxi / xi[i];
        let c = christoffel(&sys.g, &j.q)?.contract(&j.dq, &j.dq);
        let gv = gradient(&sys.g, &sys.v, &j.q)?;
        let r: Vec<f64> = (0..j.q.len())
            .map(|a| j.ddq[a] + c[a] - lam * j.dq[a] + xi[i] * xi[i] * gv[a])
            .collect();
        Ok(m.max(norm(&r)))
    })
}

fn slope(p: &[f64], values: &[f64], i: usize) -> f64 {
    let lo = i.saturating_sub(2).min(p.len() - 5);
    let w = crate::numerics::diff::fornberg_weights(p[i], &p[lo..lo + 5], 1);
    (0..5).map(|j| w[1][j] * values[lo + j]).sum()
}

/// Residual of the mechanical equation of `(e^{2φ} g, V)` written with the
/// quantities of `g`:
/// `q̈ + Γ(q̇, q̇) + 2 (∇φ · q̇) q̇ − g(q̇, q̇) grad_g φ = −e^{−2φ} grad_g V`.
pub fn conformal_mechanical_residual(
    g: &MetricField,
    phi: &ConformalFactor,
    v: &ScalarField,
    traj: &Trajectory,
) -> Result<f64> {
    check_dim(g.dim(), phi.dim())?;
    check_dim(g.dim(), v.dim())?;
    let jets = traj.jets(g.dim())?;
    jets.iter().try_fold(0.0f64, |m, j| {
        let pt = g.at(&j.q)?;
        let c = pt.christoffel().contract(&j.dq, &j.dq);
        let dphi = phi.phi().gradient(&j.q)?;
        let grad_phi = pt.raise(&dphi);
        let grad_v = pt.raise(&v.gradient(&j.q)?);
        let w = (-2.0 * phi.phi().eval(&j.q)?).exp();
        let (a, gg) = (dot(&dphi, &j.dq), pt.inner(&j.dq, &j.dq));
        let r: Vec<f64> = (0..j.q.len())
            .map(|i| j.ddq[i] + c[i] + 2.0 * a * j.dq[i] - gg * grad_phi[i] + w * grad_v[i])
            .collect();
        Ok(m.max(norm(&r)))
    })
}
