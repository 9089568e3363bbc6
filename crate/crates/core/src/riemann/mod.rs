//! Riemannian metrics on a chart, their Levi-Civita connection, geodesic flows,
//! conformal rescalings, and diagnostics for geodesic, Killing and pregeodesic fields.

mod conformal;
mod diagnostics;
mod geodesic;

use std::fmt;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::fields::{join_guards, Guard, ScalarField, VectorField};
use crate::numerics::diff::fd_step;

pub use conformal::{conformal_christoffel, conformal_nabla_residual, conformal_rescale, ConformalFactor};
pub use diagnostics::{
    autoparallel_residual, geodesic_rescaling, killing_residual, pregeodesic_factor,
    GeodesicRescaling,
};
pub use geodesic::{
    arc_length, arc_length_profile, geodesic_field, geodesic_residual, lambda_geodesic_residual,
    parametrization_lambda, speed_drift, sundman_geodesic_residual, SecondOrderField,
    VelocitySource,
};

type MetricFn = Arc<dyn Fn(&[f64]) -> Result<DMatrix<f64>> + Send + Sync>;
type PartialsFn = Arc<dyn Fn(&[f64]) -> Result<Vec<DMatrix<f64>>> + Send + Sync>;

/// A field of symmetric positive-definite matrices `g_ij(q)`.
///
/// Partial derivatives `∂g/∂q^k` fall back to central differences when no analytic
/// form is attached.
#[derive(Clone)]
pub struct MetricField {
    dim: usize,
    eval: MetricFn,
    partials: Option<PartialsFn>,
    guard: Option<Guard>,
}

impl fmt::Debug for MetricField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MetricField")
            .field("dim", &self.dim)
            .field("analytic_partials", &self.partials.is_some())
            .field("guarded", &self.guard.is_some())
            .finish()
    }
}

impl MetricField {
    pub fn new<F>(dim: usize, f: F) -> Self
    where
        F: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self::try_new(dim, move |q| Ok(f(q)))
    }

    pub fn try_new<F>(dim: usize, f: F) -> Self
    where
        F: Fn(&[f64]) -> Result<DMatrix<f64>> + Send + Sync + 'static,
    {
        assert!(dim > 0, "metric dimension must be positive");
        Self {
            dim,
            eval: Arc::new(f),
            partials: None,
            guard: None,
        }
    }

    /// `δ_ij` on ℝⁿ.
    pub fn euclidean(n: usize) -> Self {
        Self::new(n, move |_| DMatrix::identity(n, n))
            .with_partials(move |_| vec![DMatrix::zeros(n, n); n])
    }

    /// A diagonal metric `diag(d(q))`.
    pub fn diagonal<F>(dim: usize, d: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self::new(dim, move |q| DMatrix::from_diagonal(&DVector::from_vec(d(q))))
    }

    /// Attaches `∂g/∂q^k` for `k = 0..dim`.
    pub fn with_partials<P>(self, p: P) -> Self
    where
        P: Fn(&[f64]) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
    {
        self.try_with_partials(move |q| Ok(p(q)))
    }

    pub fn try_with_partials<P>(mut self, p: P) -> Self
    where
        P: Fn(&[f64]) -> Result<Vec<DMatrix<f64>>> + Send + Sync + 'static,
    {
        self.partials = Some(Arc::new(p));
        self
    }

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

    pub fn has_analytic_partials(&self) -> bool {
        self.partials.is_some()
    }

    pub fn admits(&self, q: &[f64]) -> bool {
        self.guard.as_ref().is_none_or(|g| g(q))
    }

    pub(crate) fn guard(&self) -> &Option<Guard> {
        &self.guard
    }

    fn raw(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        let m = (self.eval)(q)?;
        if m.nrows() != self.dim || m.ncols() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: m.nrows().max(m.ncols()),
            });
        }
        check_finite(m.as_slice(), "metric value", q)?;
        Ok(m)
    }

    /// `g(q)`, checked for exact symmetry.
    pub fn eval(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        check_dim(self.dim, q.len())?;
        if !self.admits(q) {
            return Err(Error::OutsideDomain { point: q.to_vec() });
        }
        let m = self.raw(q)?;
        for i in 0..self.dim {
            for j in 0..i {
                if m[(i, j)] != m[(j, i)] {
                    return Err(Error::NotSymmetric {
                        point: q.to_vec(),
                        row: i,
                        col: j,
                    });
                }
            }
        }
        Ok(m)
    }

    /// `[∂g/∂q^0, …, ∂g/∂q^{n-1}]` at `q`.
    pub fn partials(&self, q: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        check_dim(self.dim, q.len())?;
        match &self.partials {
            Some(p) => {
                let d = p(q)?;
                check_dim(self.dim, d.len())?;
                for m in &d {
                    if m.nrows() != self.dim || m.ncols() != self.dim {
                        return Err(Error::DimensionMismatch {
                            expected: self.dim,
                            found: m.nrows().max(m.ncols()),
                        });
                    }
                    check_finite(m.as_slice(), "analytic metric partials", q)?;
                }
                Ok(d)
            }
            None => {
                let mut x = q.to_vec();
                (0..self.dim)
                    .map(|k| {
                        let h = fd_step(q[k]);
                        x[k] = q[k] + h;
                        let hp = x[k] - q[k];
                        let gp = self.raw(&x)?;
                        x[k] = q[k] - h;
                        let hm = q[k] - x[k];
                        let gm = self.raw(&x)?;
                        x[k] = q[k];
                        let d = (gp - gm) / (hp + hm);
                        check_finite(d.as_slice(), "finite-difference metric partials", q)?;
                        Ok(d)
                    })
                    .collect()
            }
        }
    }

    fn factor(&self, q: &[f64], g: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
        Cholesky::new(g.clone()).ok_or_else(|| Error::NotPositiveDefinite { point: q.to_vec() })
    }

    /// `g(q)` together with its inverse and partials, validated once.
    pub fn at(&self, q: &[f64]) -> Result<MetricPoint> {
        let g = self.eval(q)?;
        let chol = self.factor(q, &g)?;
        let ginv = chol.inverse();
        let dg = self.partials(q)?;
        Ok(MetricPoint { g, ginv, dg })
    }

    /// `g(u, v)` at `q`.
    pub fn inner(&self, q: &[f64], u: &[f64], v: &[f64]) -> Result<f64> {
        check_dim(self.dim, u.len())?;
        check_dim(self.dim, v.len())?;
        let g = self.eval(q)?;
        Ok(bilinear(&g, u, v))
    }

    /// Solves `g(q) x = w`.
    pub fn raise(&self, q: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, w.len())?;
        let g = self.eval(q)?;
        let chol = self.factor(q, &g)?;
        Ok(chol.solve(&DVector::from_column_slice(w)).iter().copied().collect())
    }
}

pub(crate) fn bilinear(g: &DMatrix<f64>, u: &[f64], v: &[f64]) -> f64 {
    let n = u.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += g[(i, j)] * u[i] * v[j];
        }
    }
    s
}

pub(crate) fn mat_vec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum())
        .collect()
}

/// Metric data at one point: `g`, `g⁻¹` and `∂g/∂q^k`.
#[derive(Debug, Clone)]
pub struct MetricPoint {
    pub g: DMatrix<f64>,
    pub ginv: DMatrix<f64>,
    pub dg: Vec<DMatrix<f64>>,
}

impl MetricPoint {
    pub fn christoffel(&self) -> Christoffel {
        let n = self.g.nrows();
        let mut out = Christoffel::zeros(n);
        for i in 0..n {
            for j in 0..n {
                for k in j..n {
                    let mut s = 0.0;
                    for l in 0..n {
                        s += self.ginv[(i, l)]
                            * (self.dg[k][(l, j)] + self.dg[j][(l, k)] - self.dg[l][(j, k)]);
                    }
                    out.set(i, j, k, 0.5 * s);
                }
            }
        }
        out
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        bilinear(&self.g, u, v)
    }

    pub fn raise(&self, w: &[f64]) -> Vec<f64> {
        mat_vec(&self.ginv, w)
    }
}

/// Christoffel symbols `Γ^i_jk`, stored once per unordered pair `(j, k)` so that
/// `Γ^i_jk = Γ^i_kj` holds bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct Christoffel {
    n: usize,
    data: Vec<f64>,
}

impl Christoffel {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n * (n + 1) / 2],
        }
    }

    fn slot(&self, i: usize, j: usize, k: usize) -> usize {
        let (a, b) = if j <= k { (j, k) } else { (k, j) };
        let pair = a * self.n - a * (a + 1) / 2 + b;
        i * self.n * (self.n + 1) / 2 + pair
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.slot(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let s = self.slot(i, j, k);
        self.data[s] = v;
    }

    /// `Γ(u, v)^i = Σ Γ^i_jk u^j v^k`.
    pub fn contract(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|i| {
                let mut s = 0.0;
                for j in 0..n {
                    for k in 0..n {
                        s += self.get(i, j, k) * u[j] * v[k];
                    }
                }
                s
            })
            .collect()
    }

    /// Largest componentwise difference to another symbol array.
    pub fn max_abs_diff(&self, other: &Christoffel) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Levi-Civita symbols of `g` at `q`.
pub fn christoffel(g: &MetricField, q: &[f64]) -> Result<Christoffel> {
    Ok(g.at(q)?.christoffel())
}

/// `∇_X Y = (DY)X + Γ(X, Y)` at `q`.
pub fn covariant_derivative(
    g: &MetricField,
    x: &VectorField,
    y: &VectorField,
    q: &[f64],
) -> Result<Vec<f64>> {
    check_dim(g.dim(), x.dim())?;
    check_dim(g.dim(), y.dim())?;
    let gamma = christoffel(g, q)?;
    let xv = x.eval(q)?;
    let yv = y.eval(q)?;
    let dy = mat_vec(&y.jacobian(q)?, &xv);
    let c = gamma.contract(&xv, &yv);
    Ok(dy.iter().zip(&c).map(|(a, b)| a + b).collect())
}

/// `grad_g V = g⁻¹ ∇V`.
pub fn gradient(g: &MetricField, v: &ScalarField, q: &[f64]) -> Result<Vec<f64>> {
    check_dim(g.dim(), v.dim())?;
    g.raise(q, &v.gradient(q)?)
}

/// `T_g(v) = ½ g_ij(q) v^i v^j`.
pub fn kinetic_energy(g: &MetricField, q: &[f64], v: &[f64]) -> Result<f64> {
    Ok(0.5 * g.inner(q, v, v)?)
}
