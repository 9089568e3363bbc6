use std::fmt;
use std::sync::Arc;

use crate::error::{check_dim, check_finite, Error, Result};
use crate::fields::{Guard, Jet, ScalarField, Trajectory, VectorField};
use crate::numerics::diff::fornberg_weights;
use crate::numerics::norm;
use crate::numerics::quad::adaptive_simpson;

use super::{bilinear, christoffel, MetricField};

type AccelFn = Arc<dyn Fn(&[f64], &[f64]) -> Result<Vec<f64>> + Send + Sync>;

/// A second-order equation `q̈ = F(q, q̇)`, i.e. the field `(q, v) -> (v, F(q, v))`.
#[derive(Clone)]
pub struct SecondOrderField {
    dim: usize,
    accel: AccelFn,
    guard: Option<Guard>,
}

impl fmt::Debug for SecondOrderField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SecondOrderField")
            .field("dim", &self.dim)
            .field("guarded", &self.guard.is_some())
            .finish()
    }
}

impl SecondOrderField {
    pub fn new<F>(dim: usize, f: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self::try_new(dim, move |q, v| Ok(f(q, v)))
    }

    pub fn try_new<F>(dim: usize, f: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
    {
        assert!(dim > 0, "configuration dimension must be positive");
        Self {
            dim,
            accel: Arc::new(f),
            guard: None,
        }
    }

    /// Restricts positions `q` to where `guard` holds.
    pub fn with_domain<G>(mut self, guard: G) -> Self
    where
        G: Fn(&[f64]) -> bool + Send + Sync + 'static,
    {
        self.guard = crate::fields::join_guards(&self.guard, &Some(Arc::new(guard)));
        self
    }

    pub(crate) fn with_guard(mut self, guard: Option<Guard>) -> Self {
        self.guard = crate::fields::join_guards(&self.guard, &guard);
        self
    }

    /// Configuration dimension `n`; states have `2n` components.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn admits(&self, q: &[f64]) -> bool {
        self.guard.as_ref().is_none_or(|g| g(q))
    }

    /// `F(q, v)`.
    pub fn accel(&self, q: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, q.len())?;
        check_dim(self.dim, v.len())?;
        if !self.admits(q) {
            return Err(Error::OutsideDomain { point: q.to_vec() });
        }
        let a = (self.accel)(q, v)?;
        check_dim(self.dim, a.len())?;
        check_finite(&a, "acceleration", q)?;
        Ok(a)
    }

    /// The first-order field on states `(q, v)`; its position block is literally `v`.
    pub fn as_vector_field(&self) -> VectorField {
        let n = self.dim;
        let me = self.clone();
        let guard = self.guard.clone();
        let field = VectorField::try_new(2 * n, move |s| {
            let (q, v) = s.split_at(n);
            let mut out = v.to_vec();
            out.extend(me.accel(q, v)?);
            Ok(out)
        });
        match guard {
            Some(g) => field.with_domain(move |s| g(&s[..n])),
            None => field,
        }
    }
}

/// `F(q, v) = −Γ(v, v)`.
pub fn geodesic_field(g: &MetricField) -> SecondOrderField {
    let metric = g.clone();
    SecondOrderField::try_new(g.dim(), move |q, v| {
        Ok(christoffel(&metric, q)?
            .contract(v, v)
            .into_iter()
            .map(|c| -c)
            .collect())
    })
    .with_guard(g.guard().clone())
}

/// Where velocities for arc length come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VelocitySource {
    /// States are `(q, v)`; `v` is read from the second half.
    State,
    /// Velocities are the dense-output derivative of the first `n` components.
    Derivative,
}

fn position_velocity(
    traj: &Trajectory,
    n: usize,
    source: VelocitySource,
    p: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let s = traj.state_at(p)?;
    match source {
        VelocitySource::State => Ok((s[..n].to_vec(), s[n..2 * n].to_vec())),
        VelocitySource::Derivative => Ok((s[..n].to_vec(), traj.derivative_at(p)?[..n].to_vec())),
    }
}

/// Cumulative `s = ∫ √g(γ̇, γ̇)` at every node of `traj`, starting from 0.
pub fn arc_length_profile(
    g: &MetricField,
    traj: &Trajectory,
    source: VelocitySource,
) -> Result<Vec<f64>> {
    let n = g.dim();
    let needed = match source {
        VelocitySource::State => 2 * n,
        VelocitySource::Derivative => n,
    };
    if traj.dim() < needed {
        return Err(Error::DimensionMismatch {
            expected: needed,
            found: traj.dim(),
        });
    }
    if traj.len() < 2 {
        return Err(Error::DegenerateSampling(
            "arc length needs at least two nodes".into(),
        ));
    }
    let speed = |p: f64| -> Result<f64> {
        let (q, v) = position_velocity(traj, n, source, p)?;
        let m = g.eval(&q)?;
        Ok(bilinear(&m, &v, &v).max(0.0).sqrt())
    };
    let span = traj.end() - traj.start();
    let mut out = vec![0.0];
    let mut acc = 0.0;
    for w in traj.params().windows(2) {
        acc += adaptive_simpson(speed, w[0], w[1], traj.tolerance() * (w[1] - w[0]) / span)?;
        out.push(acc);
    }
    Ok(out)
}

/// `∫ √g(γ̇, γ̇)` over the parameter span of `traj`.
pub fn arc_length(g: &MetricField, traj: &Trajectory, source: VelocitySource) -> Result<f64> {
    Ok(*arc_length_profile(g, traj, source)?
        .last()
        .expect("profile is non-empty"))
}

/// Relative drift `max |g(v,v) − g(v₀,v₀)| / g(v₀,v₀)` along a `(q, v)` trajectory.
pub fn speed_drift(g: &MetricField, traj: &Trajectory) -> Result<f64> {
    let n = g.dim();
    check_dim(2 * n, traj.dim())?;
    let sq = |s: &[f64]| -> Result<f64> { g.inner(&s[..n], &s[n..], &s[n..]) };
    let s0 = sq(&traj.states()[0])?;
    if s0 <= 0.0 {
        return Err(Error::Precondition("zero initial speed".into()));
    }
    traj.states()
        .iter()
        .try_fold(0.0f64, |m, s| Ok(m.max((sq(s)? - s0).abs() / s0)))
}

fn defect<L>(g: &MetricField, traj: &Trajectory, lambda: L) -> Result<f64>
where
    L: Fn(usize, &Jet) -> Result<f64>,
{
    let jets = traj.jets(g.dim())?;
    jets.iter().enumerate().try_fold(0.0f64, |m, (i, j)| {
        let c = christoffel(g, &j.q)?.contract(&j.dq, &j.dq);
        let l = lambda(i, j)?;
        let r: Vec<f64> = (0..j.q.len())
            .map(|k| j.ddq[k] + c[k] - l * j.dq[k])
            .collect();
        Ok(m.max(norm(&r)))
    })
}

/// `max ‖q̈ + Γ(q̇, q̇)‖` over interior nodes, acceleration from the dense output.
pub fn geodesic_residual(g: &MetricField, traj: &Trajectory) -> Result<f64> {
    defect(g, traj, |_, _| Ok(0.0))
}

/// `λ = (d²s/dτ²)(ds/dτ)⁻¹` at interior nodes, with `ds/dτ = √g(q′, q′)`.
pub fn parametrization_lambda(g: &MetricField, traj: &Trajectory) -> Result<Vec<(f64, f64)>> {
    let n = g.dim();
    if traj.len() < 5 {
        return Err(Error::DegenerateSampling(format!(
            "need at least 5 nodes, have {}",
            traj.len()
        )));
    }
    let speeds: Vec<f64> = traj
        .states()
        .iter()
        .zip(traj.derivatives())
        .map(|(s, d)| Ok(g.inner(&s[..n], &d[..n], &d[..n])?.sqrt()))
        .collect::<Result<_>>()?;
    if let Some(i) = speeds.iter().position(|s| *s == 0.0) {
        return Err(Error::Precondition(format!(
            "vanishing velocity at node {i}"
        )));
    }
    let p = traj.params();
    let len = p.len();
    Ok((1..len - 1)
        .map(|i| {
            let lo = i.saturating_sub(2).min(len - 5);
            let w = fornberg_weights(p[i], &p[lo..lo + 5], 1);
            let ds2: f64 = (0..5).map(|j| w[1][j] * speeds[lo + j]).sum();
            (p[i], ds2 / speeds[i])
        })
        .collect())
}

/// Residual of `q″ + Γ(q′, q′) = λ q′` with `λ` from [`parametrization_lambda`].
pub fn lambda_geodesic_residual(g: &MetricField, traj: &Trajectory) -> Result<f64> {
    let lambda = parametrization_lambda(g, traj)?;
    defect(g, traj, |i, _| Ok(lambda[i].1))
}

/// Residual of `q″ + Γ(q′, q′) = (d/dτ log f) q′` for a geodesic reparametrized by
/// the Sundman factor `ds/dτ = f(q)`.
pub fn sundman_geodesic_residual(
    g: &MetricField,
    traj: &Trajectory,
    f: &ScalarField,
) -> Result<f64> {
    check_dim(g.dim(), f.dim())?;
    defect(g, traj, |_, j| {
        let fv = f.eval_positive(&j.q)?;
        let grad = f.gradient(&j.q)?;
        Ok(crate::numerics::dot(&grad, &j.dq) / fv)
    })
}
