use crate::error::{check_dim, Error, Result};
use crate::numerics::quad::{adaptive_simpson, golden_min};
use crate::numerics::{dot, norm, sub};

use super::trajectory::{ParamLabel, Trajectory};
use super::{ScalarField, VectorField, VolumeForm};

/// The Sundman-rescaled field `q -> f(q) X(q)`.
///
/// Non-positive values of `f` are reported when encountered during evaluation.
pub fn scale_field(x: &VectorField, f: &ScalarField) -> Result<VectorField> {
    check_dim(x.dim(), f.dim())?;
    let (xe, fe) = (x.clone(), f.clone());
    let mut out = VectorField::try_new(x.dim(), move |q| {
        let s = fe.eval_positive(q)?;
        Ok(xe.eval(q)?.into_iter().map(|v| s * v).collect())
    });
    if x.has_analytic_jacobian() && f.has_analytic_gradient() {
        let (xj, fj) = (x.clone(), f.clone());
        out = out.try_with_jacobian(move |q| {
            let s = fj.eval_positive(q)?;
            let g = fj.gradient(q)?;
            let v = xj.eval(q)?;
            let mut jac = xj.jacobian(q)? * s;
            for i in 0..v.len() {
                for j in 0..g.len() {
                    jac[(i, j)] += v[i] * g[j];
                }
            }
            Ok(jac)
        });
    }
    out.guard = x.guard().clone();
    Ok(out)
}

/// A monotone correspondence between two parameters of the same curve.
#[derive(Debug, Clone)]
pub struct TimeMap {
    pub(super) forward: Trajectory,
    backward: Trajectory,
}

impl TimeMap {
    fn from_nodes(source: Vec<f64>, target: Vec<f64>, rate: Vec<f64>) -> Result<Self> {
        let inv: Vec<Vec<f64>> = rate.iter().map(|r| vec![1.0 / r]).collect();
        let forward = Trajectory::new(
            ParamLabel::T,
            source.clone(),
            target.iter().map(|v| vec![*v]).collect(),
            rate.iter().map(|r| vec![*r]).collect(),
        )?;
        let backward = Trajectory::new(
            ParamLabel::Tau,
            target,
            source.into_iter().map(|v| vec![v]).collect(),
            inv,
        )?;
        Ok(Self { forward, backward })
    }

    /// Source parameter values (the nodes of the original curve).
    pub fn source(&self) -> &[f64] {
        self.forward.params()
    }

    /// Target parameter values at the source nodes.
    pub fn target(&self) -> Vec<f64> {
        self.forward.states().iter().map(|s| s[0]).collect()
    }

    /// Target parameter at source parameter `p`.
    pub fn eval(&self, p: f64) -> Result<f64> {
        Ok(self.forward.state_at(p)?[0])
    }

    /// Source parameter at target parameter `p`.
    pub fn inverse(&self, p: f64) -> Result<f64> {
        Ok(self.backward.state_at(p)?[0])
    }
}

/// `τ(t) = ∫ dt / f(γ(t))` sampled at the nodes of `traj`, with `τ = 0` at its start.
///
/// Quadrature runs on the dense output with a tolerance tied to the curve's
/// integration tolerance.
pub fn time_map(traj: &Trajectory, f: &ScalarField) -> Result<TimeMap> {
    check_dim(traj.dim(), f.dim())?;
    if let Some(c) = f.constant_value() {
        if c <= 0.0 {
            return Err(Error::NonPositiveFactor {
                value: c,
                point: traj.states()[0].clone(),
            });
        }
        let params = traj.params();
        let target = params.iter().map(|p| (p - params[0]) / c).collect();
        return TimeMap::from_nodes(params.to_vec(), target, vec![1.0 / c; params.len()]);
    }
    time_map_with(traj, |_, q| f.eval_positive(q))
}

/// [`time_map`] for a factor given as a function of the curve parameter and state,
/// e.g. `ξ(t)` known only along the curve.
pub fn time_map_with<F>(traj: &Trajectory, factor: F) -> Result<TimeMap>
where
    F: Fn(f64, &[f64]) -> Result<f64>,
{
    let positive = |p: f64, q: &[f64]| -> Result<f64> {
        let v = factor(p, q)?;
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonPositiveFactor {
                value: v,
                point: q.to_vec(),
            })
        }
    };
    let params = traj.params();
    let rate: Vec<f64> = params
        .iter()
        .zip(traj.states())
        .map(|(p, q)| positive(*p, q).map(|v| 1.0 / v))
        .collect::<Result<_>>()?;
    let mut target = Vec::with_capacity(params.len());
    target.push(0.0);
    let span = (traj.end() - traj.start()).max(f64::MIN_POSITIVE);
    let mut acc = 0.0;
    for w in params.windows(2) {
        let tol = traj.tolerance() * (w[1] - w[0]) / span;
        acc += adaptive_simpson(
            |t| {
                let q = traj.state_at(t)?;
                Ok(1.0 / positive(t, &q)?)
            },
            w[0],
            w[1],
            tol,
        )?;
        target.push(acc);
    }
    TimeMap::from_nodes(params.to_vec(), target, rate)
}

/// The same point set as `traj`, parametrized by `τ` with `dγ/dτ = f · dγ/dt`.
pub fn reparametrize(traj: &Trajectory, f: &ScalarField) -> Result<Trajectory> {
    reparametrize_as(traj, f, ParamLabel::Tau)
}

/// [`reparametrize`] with an explicit label for the new parameter.
pub fn reparametrize_as(traj: &Trajectory, f: &ScalarField, label: ParamLabel) -> Result<Trajectory> {
    check_dim(traj.dim(), f.dim())?;
    let map = time_map(traj, f)?;
    finish_reparametrization(traj, &map, label)
}

/// Reparametrization by a factor given along the curve, as in [`time_map_with`].
pub fn reparametrize_with<F>(traj: &Trajectory, label: ParamLabel, factor: F) -> Result<Trajectory>
where
    F: Fn(f64, &[f64]) -> Result<f64>,
{
    let map = time_map_with(traj, factor)?;
    finish_reparametrization(traj, &map, label)
}

fn finish_reparametrization(traj: &Trajectory, map: &TimeMap, label: ParamLabel) -> Result<Trajectory> {
    let rate = map.forward.derivatives();
    let derivs = traj
        .derivatives()
        .iter()
        .zip(rate)
        .map(|(d, r)| d.iter().map(|v| v / r[0]).collect())
        .collect();
    traj.relabel(label, map.target(), derivs)
}

fn distance_to_curve(x: &[f64], curve: &Trajectory) -> Result<f64> {
    let dists: Vec<f64> = curve.states().iter().map(|s| norm(&sub(s, x))).collect();
    let best = dists.iter().copied().fold(f64::INFINITY, f64::min);
    let params = curve.params();
    let states = curve.states();
    // A point of span i lies within about half the chord of one of its end nodes, so
    // only spans whose lower bound does not exceed the best node can hold the foot.
    let spans: Vec<(f64, f64)> = (0..params.len().saturating_sub(1))
        .filter(|&i| {
            let chord = norm(&sub(&states[i + 1], &states[i]));
            dists[i].min(dists[i + 1]) - 0.55 * chord <= best
        })
        .map(|i| (params[i], params[i + 1]))
        .collect();
    let mut out = best;
    for (a, b) in spans {
        let mut failure = None;
        let (_, d2) = golden_min(
            |p| match curve.state_at(p) {
                Ok(s) => {
                    let r = sub(&s, x);
                    dot(&r, &r)
                }
                Err(e) => {
                    failure = Some(e);
                    f64::INFINITY
                }
            },
            a,
            b,
            60,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        out = out.min(d2.sqrt());
    }
    Ok(out)
}

/// Symmetric Hausdorff distance between the point sets of two curves, with each
/// node projected onto the dense output of the other curve.
pub fn orbit_distance(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    check_dim(a.dim(), b.dim())?;
    let mut d = 0.0f64;
    for (from, to) in [(a, b), (b, a)] {
        for x in from.states() {
            d = d.max(distance_to_curve(x, to)?);
        }
    }
    Ok(d)
}

/// `[X, Y](q) = (DY) X − (DX) Y`.
pub fn lie_bracket(x: &VectorField, y: &VectorField, q: &[f64]) -> Result<Vec<f64>> {
    check_dim(x.dim(), y.dim())?;
    let xv = nalgebra::DVector::from_vec(x.eval(q)?);
    let yv = nalgebra::DVector::from_vec(y.eval(q)?);
    let out = y.jacobian(q)? * &xv - x.jacobian(q)? * &yv;
    Ok(out.iter().copied().collect())
}

/// `div_Ω X = Σ ∂X^i/∂x^i + ρ⁻¹ Σ X^i ∂ρ/∂x^i`, so that `L_X Ω = (div_Ω X) Ω`.
pub fn divergence(x: &VectorField, omega: &VolumeForm, q: &[f64]) -> Result<f64> {
    check_dim(x.dim(), omega.dim())?;
    let rho = omega.density().eval(q)?;
    if rho <= 0.0 {
        return Err(Error::NonPositiveDensity {
            value: rho,
            point: q.to_vec(),
        });
    }
    let trace = x.jacobian(q)?.trace();
    if omega.density().constant_value().is_some() {
        return Ok(trace);
    }
    let grad = omega.density().gradient(q)?;
    Ok(trace + dot(&x.eval(q)?, &grad) / rho)
}

/// `max |∇F · X|` over the samples; zero when `F` is a first integral of `X`.
pub fn first_integral_residual(
    f: &ScalarField,
    x: &VectorField,
    samples: &[Vec<f64>],
) -> Result<f64> {
    check_dim(x.dim(), f.dim())?;
    samples.iter().try_fold(0.0f64, |m, q| {
        Ok(m.max(dot(&f.gradient(q)?, &x.eval(q)?).abs()))
    })
}

/// `max |F(γ_i) − F(γ_0)|` over the nodes of a curve.
pub fn first_integral_drift(f: &ScalarField, traj: &Trajectory) -> Result<f64> {
    check_dim(traj.dim(), f.dim())?;
    let f0 = f.eval(&traj.states()[0])?;
    traj.states()
        .iter()
        .try_fold(0.0f64, |m, q| Ok(m.max((f.eval(q)? - f0).abs())))
}
