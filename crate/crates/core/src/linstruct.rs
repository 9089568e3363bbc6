//! The Liouville field `Δ = x^i ∂/∂x^i` and residual criteria for a field to be
//! linear, affine, or linearizable by a Sundman factor.
//!
//! Brackets follow `[X, Y] = (DY)X − (DX)Y` throughout, so `[Δ, X] = (DX)q − X`.
//! Derivatives along the dilation flow `s -> e^s q` are written `ΔX`, `Δ²X`, so that
//! `[Δ, X] = ΔX − X` and `[Δ, [Δ, X]] + [Δ, X] = Δ²X − ΔX`.

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};
use crate::fields::{lie_bracket, scale_field, ProportionalFit, ScalarField, VectorField};
use crate::numerics::quad::adaptive_simpson;
use crate::numerics::norm;

const RAY_STEP: f64 = 2e-3;

/// `Δ` on ℝⁿ, with its identity Jacobian.
pub fn liouville_field(n: usize) -> VectorField {
    VectorField::new(n, |q| q.to_vec()).with_jacobian(move |_| DMatrix::identity(n, n))
}

fn dilate(q: &[f64], s: f64) -> Vec<f64> {
    let k = s.exp();
    q.iter().map(|x| k * x).collect()
}

/// `ΔX(q) = (DX)(q) q`.
fn ray_derivative(x: &VectorField, q: &[f64]) -> Result<Vec<f64>> {
    let j = x.jacobian(q)?;
    let v = j * nalgebra::DVector::from_column_slice(q);
    Ok(v.iter().copied().collect())
}

/// `Δ²X(q)` from a five-point stencil along the dilation ray. With an analytic
/// Jacobian the stencil differentiates `ΔX` once; otherwise it differentiates `X` twice.
fn second_ray_derivative(x: &VectorField, q: &[f64]) -> Result<Vec<f64>> {
    let h = RAY_STEP;
    let n = q.len();
    let mut out = vec![0.0; n];
    if x.has_analytic_jacobian() {
        for (w, s) in [(1.0, -2.0), (-8.0, -1.0), (8.0, 1.0), (-1.0, 2.0)] {
            let d = ray_derivative(x, &dilate(q, s * h))?;
            for i in 0..n {
                out[i] += w * d[i] / (12.0 * h);
            }
        }
    } else {
        for (w, s) in [(-1.0, -2.0), (16.0, -1.0), (-30.0, 0.0), (16.0, 1.0), (-1.0, 2.0)] {
            let v = x.eval(&dilate(q, s * h))?;
            for i in 0..n {
                out[i] += w * v[i] / (12.0 * h * h);
            }
        }
    }
    Ok(out)
}

/// `max ‖[Δ, X](q)‖` over the samples; vanishes exactly for linear fields.
pub fn linearity_residual(x: &VectorField, samples: &[Vec<f64>]) -> Result<f64> {
    let delta = liouville_field(x.dim());
    samples.iter().try_fold(0.0f64, |m, q| {
        check_dim(x.dim(), q.len())?;
        Ok(m.max(norm(&lie_bracket(&delta, x, q)?)))
    })
}

/// `max ‖[Δ, [Δ, X]](q) + [Δ, X](q)‖` over the samples; vanishes for affine fields.
pub fn affinity_residual(x: &VectorField, samples: &[Vec<f64>]) -> Result<f64> {
    samples.iter().try_fold(0.0f64, |m, q| {
        check_dim(x.dim(), q.len())?;
        let d1 = ray_derivative(x, q)?;
        let d2 = second_ray_derivative(x, q)?;
        let r: Vec<f64> = d2.iter().zip(&d1).map(|(a, b)| a - b).collect();
        Ok(m.max(norm(&r)))
    })
}

/// Estimates `h` with `[Δ, X] = h X`. Samples where `X` vanishes are skipped and listed.
pub fn conformal_eigen_factor(x: &VectorField, samples: &[Vec<f64>]) -> Result<ProportionalFit> {
    let delta = liouville_field(x.dim());
    let xe = x.clone();
    ProportionalFit::compute(x.dim(), samples, move |q| {
        Ok((lie_bracket(&delta, &xe, q)?, xe.eval(q)?))
    })
}

/// Positive `f` with `Δ(log f) = h`, normalized to 1 on the unit sphere.
///
/// Here `h` is taken in the convention `[X, Δ] = h X`, the negative of the
/// estimate from [`conformal_eigen_factor`]; with it `[fX, Δ] = 0`. A constant `h`
/// gives `f = |q|^h` exactly; otherwise `log f` is integrated along the dilation ray
/// through `q`, to 1e-14 when `X` has an analytic Jacobian and 1e-10 otherwise (the
/// estimate of `h` then carries finite-difference noise). Points whose ray leaves the
/// domain of `X` are reported as outside it.
pub fn linearizing_factor(x: &VectorField, h: &ScalarField) -> Result<ScalarField> {
    check_dim(x.dim(), h.dim())?;
    let n = x.dim();
    if let Some(c) = h.constant_value() {
        let xg = x.clone();
        return Ok(ScalarField::try_new(n, move |q| {
            let r = norm(q);
            if r == 0.0 || !xg.admits(q) {
                return Err(Error::OutsideDomain { point: q.to_vec() });
            }
            Ok(r.powf(c))
        })
        .try_with_gradient(move |q| {
            let r = norm(q);
            let k = c * r.powf(c - 2.0);
            Ok(q.iter().map(|v| k * v).collect())
        }));
    }
    let tol = if x.has_analytic_jacobian() { 1e-14 } else { 1e-10 };
    let (xg, he) = (x.clone(), h.clone());
    Ok(ScalarField::try_new(n, move |q| {
        let r = norm(q);
        if r == 0.0 {
            return Err(Error::OutsideDomain { point: q.to_vec() });
        }
        let unit: Vec<f64> = q.iter().map(|v| v / r).collect();
        let end = r.ln();
        let log_f = adaptive_simpson(
            |s| {
                let p = dilate(&unit, s);
                if !xg.admits(&p) {
                    return Err(Error::OutsideDomain { point: p });
                }
                he.eval(&p)
            },
            0.0,
            end,
            tol * end.abs().max(1.0),
        )?;
        Ok(log_f.exp())
    }))
}

/// `max ‖[fX, Δ](q)‖` over the samples; zero when `fX` is linear.
pub fn linearization_residual(
    x: &VectorField,
    f: &ScalarField,
    samples: &[Vec<f64>],
) -> Result<f64> {
    let fx = scale_field(x, f)?;
    let delta = liouville_field(x.dim());
    samples.iter().try_fold(0.0f64, |m, q| {
        Ok(m.max(norm(&lie_bracket(&fx, &delta, q)?)))
    })
}

/// Result of [`linearize`].
#[derive(Debug, Clone)]
pub struct Linearization {
    pub eigen: ProportionalFit,
    /// `h` in the `[X, Δ] = h X` convention handed to [`linearizing_factor`].
    pub h: ScalarField,
    pub factor: ScalarField,
    /// `max ‖[fX, Δ]‖` over the samples.
    pub residual: f64,
}

/// Certifies `[Δ, X] = h X` on the samples (residual at most `tol`) and builds the
/// linearizing factor. An `h` that is constant over the samples within `tol` is used
/// as an exact constant.
pub fn linearize(x: &VectorField, samples: &[Vec<f64>], tol: f64) -> Result<Linearization> {
    let eigen = conformal_eigen_factor(x, samples)?;
    if eigen.residual > tol {
        return Err(Error::Precondition(format!(
            "[Δ, X] is not proportional to X (residual {:e})",
            eigen.residual
        )));
    }
    let h = match eigen.constant(tol) {
        Some(c) => ScalarField::constant(x.dim(), -c),
        None => {
            let e = eigen.estimate.clone();
            ScalarField::try_new(x.dim(), move |q| Ok(-e.eval(q)?))
        }
    };
    let factor = linearizing_factor(x, &h)?;
    let retained: Vec<Vec<f64>> = eigen.retained(samples).into_iter().cloned().collect();
    let residual = linearization_residual(x, &factor, &retained)?;
    Ok(Linearization {
        eigen,
        h,
        factor,
        residual,
    })
}
