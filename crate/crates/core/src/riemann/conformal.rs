use nalgebra::DMatrix;

use crate::error::{check_dim, Result};
use crate::fields::{ScalarField, VectorField};
use crate::numerics::{dot, norm};

use super::{covariant_derivative, MetricField};

/// The exponent `φ` of a conformal rescaling `ḡ = e^{2φ} g`.
#[derive(Debug, Clone)]
pub struct ConformalFactor {
    phi: ScalarField,
}

impl ConformalFactor {
    pub fn new(phi: ScalarField) -> Self {
        Self { phi }
    }

    pub fn phi(&self) -> &ScalarField {
        &self.phi
    }

    pub fn dim(&self) -> usize {
        self.phi.dim()
    }
}

/// `ḡ = e^{2φ} g`, with `∂ḡ = e^{2φ}(2 ∂φ g + ∂g)` built from the partials of `g`
/// and the gradient of `φ`.
pub fn conformal_rescale(g: &MetricField, phi: &ConformalFactor) -> Result<MetricField> {
    check_dim(g.dim(), phi.dim())?;
    let (ge, pe) = (g.clone(), phi.phi.clone());
    let (gp, pp) = (g.clone(), phi.phi.clone());
    let mut out = MetricField::try_new(g.dim(), move |q| {
        let s = (2.0 * pe.eval(q)?).exp();
        Ok(ge.eval(q)? * s)
    })
    .try_with_partials(move |q| {
        let s = (2.0 * pp.eval(q)?).exp();
        let dphi = pp.gradient(q)?;
        let m = gp.eval(q)?;
        Ok(gp
            .partials(q)?
            .into_iter()
            .zip(dphi)
            .map(|(dg, dp)| (&m * (2.0 * dp) + dg) * s)
            .collect::<Vec<DMatrix<f64>>>())
    });
    out.guard = g.guard().clone();
    Ok(out)
}

/// `Γ̄^i_jk = Γ^i_jk + δ^i_j ∂_kφ + δ^i_k ∂_jφ − g_jk g^il ∂_lφ`.
pub fn conformal_christoffel(
    g: &MetricField,
    phi: &ConformalFactor,
    q: &[f64],
) -> Result<super::Christoffel> {
    check_dim(g.dim(), phi.dim())?;
    let n = g.dim();
    let pt = g.at(q)?;
    let mut gamma = pt.christoffel();
    let dphi = phi.phi.gradient(q)?;
    let grad = pt.raise(&dphi);
    for i in 0..n {
        for j in 0..n {
            for k in j..n {
                let mut v = gamma.get(i, j, k) - pt.g[(j, k)] * grad[i];
                if i == j {
                    v += dphi[k];
                }
                if i == k {
                    v += dphi[j];
                }
                gamma.set(i, j, k, v);
            }
        }
    }
    Ok(gamma)
}

/// `max ‖∇̄_X Y − (∇_X Y + (Xφ)Y + (Yφ)X − g(X, Y) grad_g φ)‖` over the samples.
pub fn conformal_nabla_residual(
    g: &MetricField,
    phi: &ConformalFactor,
    x: &VectorField,
    y: &VectorField,
    samples: &[Vec<f64>],
) -> Result<f64> {
    let gbar = conformal_rescale(g, phi)?;
    samples.iter().try_fold(0.0f64, |m, q| {
        let lhs = covariant_derivative(&gbar, x, y, q)?;
        let base = covariant_derivative(g, x, y, q)?;
        let pt = g.at(q)?;
        let (xv, yv) = (x.eval(q)?, y.eval(q)?);
        let dphi = phi.phi.gradient(q)?;
        let grad = pt.raise(&dphi);
        let (xphi, yphi, gxy) = (dot(&xv, &dphi), dot(&yv, &dphi), pt.inner(&xv, &yv));
        let r: Vec<f64> = (0..g.dim())
            .map(|i| lhs[i] - (base[i] + xphi * yv[i] + yphi * xv[i] - gxy * grad[i]))
            .collect();
        Ok(m.max(norm(&r)))
    })
}
