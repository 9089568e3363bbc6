use crate::error::{check_dim, Error, Result};
use crate::fields::{
    integrate_flow, reparametrize_with, IntegratorOptions, ParamLabel,
    ProportionalFit, ScalarField, Trajectory, VectorField,
};
use crate::numerics::quad::{adaptive_simpson, golden_min};
use crate::numerics::{norm, sub};

use super::geodesic::geodesic_residual;
use super::{covariant_derivative, MetricField};

/// Frobenius norm of `(L_X g)_ij = X^k ∂_k g_ij + g_kj ∂_i X^k + g_ik ∂_j X^k` at `q`.
pub fn killing_residual(g: &MetricField, x: &VectorField, q: &[f64]) -> Result<f64> {
    check_dim(g.dim(), x.dim())?;
    let n = g.dim();
    let m = g.eval(q)?;
    let dg = g.partials(q)?;
    let xv = x.eval(q)?;
    let dx = x.jacobian(q)?;
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            let mut l = 0.0;
            for k in 0..n {
                l += xv[k] * dg[k][(i, j)] + m[(k, j)] * dx[(k, i)] + m[(i, k)] * dx[(k, j)];
            }
            s += l * l;
        }
    }
    Ok(s.sqrt())
}

/// `‖∇_X X‖` at `q`.
pub fn autoparallel_residual(g: &MetricField, x: &VectorField, q: &[f64]) -> Result<f64> {
    Ok(norm(&covariant_derivative(g, x, x, q)?))
}

/// Least-squares `f` with `∇_X X = f X` at each sample; a small residual certifies
/// that `X` is pregeodesic.
pub fn pregeodesic_factor(
    g: &MetricField,
    x: &VectorField,
    samples: &[Vec<f64>],
) -> Result<ProportionalFit> {
    check_dim(g.dim(), x.dim())?;
    let (ge, xe) = (g.clone(), x.clone());
    ProportionalFit::compute(x.dim(), samples, move |q| {
        Ok((covariant_derivative(&ge, &xe, &xe, q)?, xe.eval(q)?))
    })
}

/// `λ` along one integral curve of a pregeodesic field, with `L_X log λ = −f`.
#[derive(Debug, Clone)]
pub struct GeodesicRescaling {
    /// The integral curve of `X` in its own time `t`.
    pub flow: Trajectory,
    /// `log λ` at the nodes of `flow`; 0 at the start.
    pub log_lambda: Vec<f64>,
    slopes: Vec<f64>,
    /// The same curve as an integral curve of `λX`.
    pub geodesic: Trajectory,
    /// `max λ² ‖∇_X X − f X‖` along the curve, i.e. `‖∇_{λX}(λX)‖`.
    pub autoparallel_residual: f64,
    /// Geodesic residual of [`Self::geodesic`] from its dense output.
    pub geodesic_residual: f64,
}

impl GeodesicRescaling {
    /// `λ` at parameter `t` of the flow.
    pub fn lambda_at(&self, t: f64) -> Result<f64> {
        Ok(self.log_lambda_curve()?.state_at(t)?[0].exp())
    }

    /// `λ` at the nodes of the flow.
    pub fn lambda(&self) -> Vec<f64> {
        self.log_lambda.iter().map(|l| l.exp()).collect()
    }

    fn log_lambda_curve(&self) -> Result<Trajectory> {
        Trajectory::new(
            ParamLabel::T,
            self.flow.params().to_vec(),
            self.log_lambda.iter().map(|v| vec![*v]).collect(),
            self.slopes.iter().map(|v| vec![*v]).collect(),
        )
    }
}

const CLOSURE_TOL: f64 = 1e-6;

/// Parameter values (after the curve has left `q0`) where it returns to `q0`.
fn returns_to_start(flow: &Trajectory, q0: &[f64]) -> Vec<f64> {
    let scale = norm(q0).max(1.0);
    let d: Vec<f64> = flow.states().iter().map(|s| norm(&sub(s, q0))).collect();
    let p = flow.params();
    let mut departed = false;
    let mut out = Vec::new();
    for i in 1..d.len() {
        if d[i] > 1e-3 * scale {
            departed = true;
        }
        if !departed || i + 1 >= d.len() || !(d[i] <= d[i - 1] && d[i] <= d[i + 1]) {
            if departed && i + 1 == d.len() && d[i] < CLOSURE_TOL * scale {
                out.push(p[i]);
            }
            continue;
        }
        let (t, dist2) = golden_min(
            |t| {
                flow.state_at(t)
                    .map(|s| {
                        let r = sub(&s, q0);
                        r.iter().map(|x| x * x).sum()
                    })
                    .unwrap_or(f64::INFINITY)
            },
            p[i - 1],
            p[i + 1],
            80,
        );
        if dist2.sqrt() < CLOSURE_TOL * scale {
            out.push(t);
        }
    }
    out
}

/// Integrates `X` from `q0` over `[0, T]` and solves `d/dt log λ = −f` along it,
/// with `λ(q0) = 1`. Closed orbits on which `∮ f dt ≠ 0` are rejected because `λ`
/// would not be single-valued.
pub fn geodesic_rescaling(
    g: &MetricField,
    x: &VectorField,
    f: &ScalarField,
    q0: &[f64],
    t_end: f64,
    opts: &IntegratorOptions,
) -> Result<GeodesicRescaling> {
    check_dim(g.dim(), x.dim())?;
    check_dim(g.dim(), f.dim())?;
    let flow = integrate_flow(x, q0, t_end, opts)?;
    let p = flow.params();
    let span = flow.end() - flow.start();
    let mut log_lambda = vec![0.0];
    let mut acc = 0.0;
    for w in p.windows(2) {
        acc -= adaptive_simpson(
            |t| f.eval(&flow.state_at(t)?),
            w[0],
            w[1],
            flow.tolerance() * (w[1] - w[0]) / span,
        )?;
        log_lambda.push(acc);
    }
    let slopes: Vec<f64> = flow
        .states()
        .iter()
        .map(|s| f.eval(s).map(|v| -v))
        .collect::<Result<_>>()?;
    let mut out = GeodesicRescaling {
        flow: flow.clone(),
        log_lambda,
        slopes,
        geodesic: flow.clone(),
        autoparallel_residual: 0.0,
        geodesic_residual: 0.0,
    };
    let curve = out.log_lambda_curve()?;
    for t in returns_to_start(&flow, q0) {
        let mismatch = curve.state_at(t)?[0];
        if mismatch.abs() > 1e-8 {
            return Err(Error::NonSingleValued { mismatch });
        }
    }
    for (s, l) in flow.states().iter().zip(&out.log_lambda) {
        let nabla = covariant_derivative(g, x, x, s)?;
        let xv = x.eval(s)?;
        let fv = f.eval(s)?;
        let r: Vec<f64> = nabla.iter().zip(&xv).map(|(a, b)| a - fv * b).collect();
        out.autoparallel_residual = out.autoparallel_residual.max((2.0 * l).exp() * norm(&r));
    }
    out.geodesic = reparametrize_with(&flow, ParamLabel::S, |t, _| Ok(curve.state_at(t)?[0].exp()))?;
    if out.geodesic.len() >= 5 {
        out.geodesic_residual = geodesic_residual(g, &out.geodesic)?;
    }
    Ok(out)
}
