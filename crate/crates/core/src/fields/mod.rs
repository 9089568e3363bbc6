//! Vector and scalar fields on a single coordinate chart, their flows, and the
//! Sundman rescaling `X -> fX` together with the time maps it induces.

mod fit;
mod integrate;
mod ops;
mod trajectory;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{check_dim, check_finite, Error, Result};
use crate::numerics::diff;

pub use fit::ProportionalFit;
pub use integrate::{integrate_flow, integrate_span, IntegratorOptions, IntegratorStats, Method};
pub use ops::{
    divergence, first_integral_drift, first_integral_residual, lie_bracket, orbit_distance,
    reparametrize, reparametrize_as, reparametrize_with, scale_field, time_map, time_map_with,
    TimeMap,
};
pub use trajectory::{Jet, ParamLabel, Termination, Trajectory};

pub(crate) type VecFn = Arc<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync>;
pub(crate) type MatFn = Arc<dyn Fn(&[f64]) -> Result<DMatrix<f64>> + Send + Sync>;
pub(crate) type ScalarFn = Arc<dyn Fn(&[f64]) -> Result<f64> + Send + Sync>;
pub(crate) type Guard = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

pub(crate) fn join_guards(a: &Option<Guard>, b: &Option<Guard>) -> Option<Guard> {
    match (a.clone(), b.clone()) {
        (None, None) => None,
        (Some(g), None) | (None, Some(g)) => Some(g),
        (Some(g), Some(h)) => Some(Arc::new(move |q: &[f64]| g(q) && h(q))),
    }
}

/// A first-order field `q -> X(q)` on an open subset of ℝⁿ.
///
/// Jacobians default to central differences unless an analytic one is attached.
#[derive(Clone)]
pub struct VectorField {
    dim: usize,
    eval: VecFn,
    jacobian: Option<MatFn>,
    guard: Option<Guard>,
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorField")
            .field("dim", &self.dim)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .field("guarded", &self.guard.is_some())
            .finish()
    }
}

impl VectorField {
    pub fn new<F>(dim: usize, f: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self::try_new(dim, move |q| Ok(f(q)))
    }

    pub fn try_new<F>(dim: usize, f: F) -> Self
    where
        F: Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
    {
        assert!(dim > 0, "vector field dimension must be positive");
        Self {
            dim,
            eval: Arc::new(f),
            jacobian: None,
            guard: None,
        }
    }

    /// The affine field `q -> A q + b`, with its exact Jacobian.
    pub fn affine(a: DMatrix<f64>, b: Vec<f64>) -> Self {
        assert!(a.is_square() && a.nrows() == b.len());
        let n = b.len();
        let mat = a.clone();
        Self::new(n, move |q| {
            let mut out = b.clone();
            for i in 0..n {
                for j in 0..n {
                    out[i] += mat[(i, j)] * q[j];
                }
            }
            out
        })
        .with_jacobian(move |_| a.clone())
    }

    pub fn constant(components: Vec<f64>) -> Self {
        let n = components.len();
        Self::affine(DMatrix::zeros(n, n), components)
    }

    pub fn with_jacobian<J>(self, j: J) -> Self
    where
        J: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.try_with_jacobian(move |q| Ok(j(q)))
    }

    pub fn try_with_jacobian<J>(mut self, j: J) -> Self
    where
        J: Fn(&[f64]) -> Result<DMatrix<f64>> + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(j));
        self
    }

    /// Restrict the field to the points where `guard` holds.
    pub fn with_domain<G>(mut self, guard: G) -> Self
    where
        G: Fn(&[f64]) -> bool + Send + Sync + 'static,
    {
        self.guard = join_guards(&self.guard, &Some(Arc::new(guard)));
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    pub fn admits(&self, q: &[f64]) -> bool {
        self.guard.as_ref().is_none_or(|g| g(q))
    }

    pub(crate) fn guard(&self) -> &Option<Guard> {
        &self.guard
    }

    pub fn eval(&self, q: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, q.len())?;
        if !self.admits(q) {
            return Err(Error::OutsideDomain { point: q.to_vec() });
        }
        let v = (self.eval)(q)?;
        check_dim(self.dim, v.len())?;
        check_finite(&v, "vector field value", q)?;
        Ok(v)
    }

    /// `J[(i, j)] = ∂X^i/∂x^j` at `q`.
    pub fn jacobian(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        check_dim(self.dim, q.len())?;
        match &self.jacobian {
            Some(j) => {
                let m = j(q)?;
                if m.nrows() != self.dim || m.ncols() != self.dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim,
                        found: m.nrows().max(m.ncols()),
                    });
                }
                check_finite(m.as_slice(), "analytic Jacobian", q)?;
                Ok(m)
            }
            None => diff::jacobian(|x| (self.eval)(x), q, self.dim),
        }
    }
}

/// A scalar function on a chart, optionally with an analytic gradient.
#[derive(Clone)]
pub struct ScalarField {
    dim: usize,
    eval: ScalarFn,
    gradient: Option<VecFn>,
    constant: Option<f64>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("dim", &self.dim)
            .field("analytic_gradient", &self.gradient.is_some())
            .field("constant", &self.constant)
            .finish()
    }
}

impl ScalarField {
    pub fn new<F>(dim: usize, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::try_new(dim, move |q| Ok(f(q)))
    }

    pub fn try_new<F>(dim: usize, f: F) -> Self
    where
        F: Fn(&[f64]) -> Result<f64> + Send + Sync + 'static,
    {
        assert!(dim > 0, "scalar field dimension must be positive");
        Self {
            dim,
            eval: Arc::new(f),
            gradient: None,
            constant: None,
        }
    }

    pub fn constant(dim: usize, value: f64) -> Self {
        let mut s = Self::new(dim, move |_| value).with_gradient(move |_| vec![0.0; dim]);
        s.constant = Some(value);
        s
    }

    /// The coordinate function `q -> q[index]`.
    pub fn coordinate(dim: usize, index: usize) -> Self {
        assert!(index < dim);
        Self::new(dim, move |q| q[index]).with_gradient(move |_| {
            let mut g = vec![0.0; dim];
            g[index] = 1.0;
            g
        })
    }

    pub fn with_gradient<G>(self, g: G) -> Self
    where
        G: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        self.try_with_gradient(move |q| Ok(g(q)))
    }

    pub fn try_with_gradient<G>(mut self, g: G) -> Self
    where
        G: Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
    {
        self.gradient = Some(Arc::new(g));
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn constant_value(&self) -> Option<f64> {
        self.constant
    }

    pub fn has_analytic_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    pub fn eval(&self, q: &[f64]) -> Result<f64> {
        check_dim(self.dim, q.len())?;
        let v = (self.eval)(q)?;
        check_finite(&[v], "scalar field value", q)?;
        Ok(v)
    }

    pub fn gradient(&self, q: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, q.len())?;
        match &self.gradient {
            Some(g) => {
                let v = g(q)?;
                check_dim(self.dim, v.len())?;
                check_finite(&v, "analytic gradient", q)?;
                Ok(v)
            }
            None => diff::gradient(|x| (self.eval)(x), q),
        }
    }

    /// Evaluates and rejects non-positive values, as required of Sundman factors.
    pub fn eval_positive(&self, q: &[f64]) -> Result<f64> {
        let v = self.eval(q)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(Error::NonPositiveFactor {
                value: v,
                point: q.to_vec(),
            })
        }
    }

    /// The same function on `ℝ^total`, reading only the first `dim` coordinates
    /// (for instance a position-only factor on `(q, v)` states).
    pub fn extend_to(&self, total: usize) -> ScalarField {
        assert!(total >= self.dim);
        let n = self.dim;
        let (base, inner) = (self.clone(), self.clone());
        let mut out = ScalarField::try_new(total, move |s| base.eval(&s[..n]))
            .try_with_gradient(move |s| {
                let mut g = inner.gradient(&s[..n])?;
                g.resize(total, 0.0);
                Ok(g)
            });
        out.constant = self.constant;
        out
    }

    /// `1/f`, positive wherever `f` is.
    pub fn recip(&self) -> ScalarField {
        let base = self.clone();
        let inner = self.clone();
        let mut out = ScalarField::try_new(self.dim, move |q| Ok(1.0 / base.eval_positive(q)?));
        if self.gradient.is_some() {
            out = out.try_with_gradient(move |q| {
                let v = inner.eval_positive(q)?;
                let g = inner.gradient(q)?;
                Ok(g.into_iter().map(|d| -d / (v * v)).collect())
            });
        }
        out.constant = self.constant.map(|c| 1.0 / c);
        out
    }
}

/// A volume form `Ω = ρ dx¹ ∧ … ∧ dxⁿ` with positive density.
#[derive(Debug, Clone)]
pub struct VolumeForm {
    density: ScalarField,
}

impl VolumeForm {
    pub fn new(density: ScalarField) -> Self {
        Self { density }
    }

    /// The coordinate volume `ρ ≡ 1`.
    pub fn standard(dim: usize) -> Self {
        Self::new(ScalarField::constant(dim, 1.0))
    }

    pub fn dim(&self) -> usize {
        self.density.dim()
    }

    pub fn density(&self) -> &ScalarField {
        &self.density
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn guard_rejects_points_outside_domain() {
        let x = VectorField::new(1, |q| vec![1.0 / q[0]]).with_domain(|q| q[0] > 0.0);
        assert!(x.eval(&[2.0]).is_ok());
        assert!(matches!(x.eval(&[-1.0]), Err(Error::OutsideDomain { .. })));
    }

    #[test]
    fn eval_checks_dimension() {
        let x = VectorField::new(2, |q| vec![q[0], q[1]]);
        assert_eq!(
            x.eval(&[1.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                found: 1
            })
        );
        let bad = VectorField::new(2, |_| vec![0.0]);
        assert!(bad.eval(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn recip_gradient_matches_quotient_rule() {
        let f = ScalarField::new(1, |q| 1.0 + q[0] * q[0]).with_gradient(|q| vec![2.0 * q[0]]);
        let g = f.recip().gradient(&[1.0]).unwrap();
        assert!((g[0] + 0.5).abs() < 1e-15);
    }
}
