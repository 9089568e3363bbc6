use crate::error::{check_dim, Error, Result};
use crate::fields::{integrate_flow, orbit_distance, time_map_with, IntegratorOptions, ScalarField, TimeMap, Trajectory};
use crate::numerics::norm;
use crate::riemann::{
    arc_length, arc_length_profile, conformal_rescale, geodesic_field, gradient, ConformalFactor,
    MetricField, VelocitySource,
};

use super::{energy, energy_drift, mechanical_sode, MechanicalSystem};

/// The Jacobi metric `(E₀ − V) g` of a mechanical system at energy `E₀`, defined on
/// `{V < E₀}`.
#[derive(Debug, Clone)]
pub struct JacobiMetric {
    base: MetricField,
    potential: ScalarField,
    e0: f64,
    metric: MetricField,
    phi: ConformalFactor,
}

impl JacobiMetric {
    pub fn base(&self) -> &MetricField {
        &self.base
    }

    pub fn potential(&self) -> &ScalarField {
        &self.potential
    }

    pub fn energy(&self) -> f64 {
        self.e0
    }

    pub fn metric(&self) -> &MetricField {
        &self.metric
    }

    /// `φ = ½ log(E₀ − V)`, so that the metric is `e^{2φ} g`.
    pub fn conformal_factor(&self) -> &ConformalFactor {
        &self.phi
    }

    /// Fails unless `V < E₀` at every sample.
    pub fn check_region(&self, samples: &[Vec<f64>]) -> Result<()> {
        for q in samples {
            check_dim(self.base.dim(), q.len())?;
            if !(self.potential.eval(q)? < self.e0) {
                return Err(Error::OutsideDomain { point: q.clone() });
            }
        }
        Ok(())
    }
}

pub fn jacobi_metric(sys: &MechanicalSystem, e0: f64) -> Result<JacobiMetric> {
    if !e0.is_finite() {
        return Err(Error::Precondition(format!("energy level {e0} is not finite")));
    }
    let (v, vg) = (sys.v.clone(), sys.v.clone());
    let phi = ScalarField::try_new(sys.dim(), move |q| {
        let w = e0 - v.eval(q)?;
        if w > 0.0 {
            Ok(0.5 * w.ln())
        } else {
            Err(Error::OutsideDomain { point: q.to_vec() })
        }
    })
    .try_with_gradient(move |q| {
        let w = e0 - vg.eval(q)?;
        if !(w > 0.0) {
            return Err(Error::OutsideDomain { point: q.to_vec() });
        }
        Ok(vg.gradient(q)?.into_iter().map(|d| -d / (2.0 * w)).collect())
    });
    let phi = ConformalFactor::new(phi);
    let v = sys.v.clone();
    let metric = conformal_rescale(&sys.g, &phi)?
        .with_domain(move |q| v.eval(q).map(|x| x < e0).unwrap_or(false));
    Ok(JacobiMetric {
        base: sys.g.clone(),
        potential: sys.v.clone(),
        e0,
        metric,
        phi,
    })
}

/// `max ‖grad_g(½ log(E₀ − V)) + grad_g V / (2(E₀ − V))‖` over the samples, with the
/// left-hand gradient taken by finite differences of `½ log(E₀ − V)`.
pub fn jacobi_gradient_identity_residual(
    sys: &MechanicalSystem,
    e0: f64,
    samples: &[Vec<f64>],
) -> Result<f64> {
    let v = sys.v.clone();
    let phi = ScalarField::try_new(sys.dim(), move |q| {
        let w = e0 - v.eval(q)?;
        if w > 0.0 {
            Ok(0.5 * w.ln())
        } else {
            Err(Error::OutsideDomain { point: q.to_vec() })
        }
    });
    samples.iter().try_fold(0.0f64, |m, q| {
        let lhs = gradient(&sys.g, &phi, q)?;
        let gv = gradient(&sys.g, &sys.v, q)?;
        let w = e0 - sys.v.eval(q)?;
        let r: Vec<f64> = lhs.iter().zip(&gv).map(|(a, b)| a + b / (2.0 * w)).collect();
        Ok(m.max(norm(&r)))
    })
}

/// Comparison of a fixed-energy mechanical trajectory with the Jacobi geodesic
/// through the same initial point and direction.
#[derive(Debug, Clone)]
pub struct JacobiReport {
    /// `(q, v)` states of the mechanical flow over `[0, T]`.
    pub mechanical: Trajectory,
    /// `(q, w)` states of the Jacobi geodesic, with `w(0) = v₀`.
    pub geodesic: Trajectory,
    /// Geodesic parameter `σ(t) = ∫ (E₀ − V)/(E₀ − V(q₀)) dt` along the mechanical nodes.
    pub time_map: TimeMap,
    /// Hausdorff distance between the two position curves.
    pub orbit_distance: f64,
    /// `s_E(t) = ∫ √ḡ(q̇, q̇) dt` at the mechanical nodes.
    pub arc_length: Vec<f64>,
    /// `max |s_E(t) − √2 (E₀ − V(q₀)) σ(t)|`.
    pub arc_length_residual: f64,
    /// Jacobi length of the geodesic over its whole span.
    pub geodesic_arc_length: f64,
    /// Relative energy drift of the mechanical trajectory.
    pub energy_drift: f64,
    /// Either curve was cut short by the Jacobi margin.
    pub truncated: bool,
}

/// Integrates the mechanical flow from `(q₀, v₀)` at energy `E₀` over `[0, T]` and the
/// Jacobi geodesic from `(q₀, v₀)` over the matching geodesic parameter span.
///
/// Both flows are confined to `E₀ − V ≥ 10⁻⁶ |E₀|`; approaching that margin
/// truncates the run and sets [`JacobiReport::truncated`].
pub fn jacobi_equivalence(
    sys: &MechanicalSystem,
    e0: f64,
    q0: &[f64],
    v0: &[f64],
    t_end: f64,
    opts: &IntegratorOptions,
) -> Result<JacobiReport> {
    let n = sys.dim();
    check_dim(n, q0.len())?;
    check_dim(n, v0.len())?;
    let e = energy(sys, q0, v0)?;
    if !((e - e0).abs() <= 1e-10 * e0.abs().max(1.0)) {
        return Err(Error::Precondition(format!(
            "initial energy {e} differs from the level {e0}"
        )));
    }
    if !(t_end > 0.0) {
        return Err(Error::Precondition(format!("horizon {t_end} must be positive")));
    }
    let margin = 1e-6 * e0.abs();
    let w0 = e0 - sys.v.eval(q0)?;
    if !(w0 > margin) {
        return Err(Error::OutsideDomain { point: q0.to_vec() });
    }
    if norm(v0) == 0.0 {
        return Err(Error::Precondition("zero initial velocity".into()));
    }
    let jac = jacobi_metric(sys, e0)?;
    let inside = {
        let v = sys.v.clone();
        move |q: &[f64]| v.eval(q).map(|x| e0 - x >= margin).unwrap_or(false)
    };
    let mech_field = mechanical_sode(sys).with_domain(inside.clone()).as_vector_field();
    let start: Vec<f64> = q0.iter().chain(v0).copied().collect();
    let mechanical = integrate_flow(&mech_field, &start, t_end, opts)?;

    let v = sys.v.clone();
    let time_map = time_map_with(&mechanical, move |_, s| Ok(w0 / (e0 - v.eval(&s[..n])?)))?;
    let sigma = time_map.target();
    let sigma_end = *sigma.last().expect("time map is non-empty");

    let geo_field = geodesic_field(jac.metric()).with_domain(inside).as_vector_field();
    let geodesic = integrate_flow(&geo_field, &start, sigma_end, opts)?;

    let distance = orbit_distance(&mechanical.project(n), &geodesic.project(n))?;
    let profile = arc_length_profile(jac.metric(), &mechanical, VelocitySource::State)?;
    let scale = std::f64::consts::SQRT_2 * w0;
    let arc_length_residual = profile
        .iter()
        .zip(&sigma)
        .fold(0.0f64, |m, (s, sg)| m.max((s - scale * sg).abs()));
    let geodesic_arc_length = arc_length(jac.metric(), &geodesic, VelocitySource::State)?;
    let drift = energy_drift(sys, &mechanical)?;
    let truncated = mechanical.is_truncated() || geodesic.is_truncated();
    Ok(JacobiReport {
        mechanical,
        geodesic,
        time_map,
        orbit_distance: distance,
        arc_length: profile,
        arc_length_residual,
        geodesic_arc_length,
        energy_drift: drift,
        truncated,
    })
}
