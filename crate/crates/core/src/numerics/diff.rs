//! Central finite differences and nonuniform stencil weights.

use nalgebra::DMatrix;

use crate::error::{check_finite, Result};

/// Per-coordinate central-difference step: `max(1e-6, 1e-6 * |x|)`.
pub fn fd_step(x: f64) -> f64 {
    (1e-6 * x.abs()).max(1e-6)
}

/// Jacobian `J[(i, j)] = ∂f^i/∂x^j` by central differences.
pub fn jacobian<F>(f: F, q: &[f64], rows: usize) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let n = q.len();
    let mut jac = DMatrix::zeros(rows, n);
    let mut x = q.to_vec();
    for j in 0..n {
        let h = fd_step(q[j]);
        x[j] = q[j] + h;
        let hp = x[j] - q[j];
        let fp = f(&x)?;
        x[j] = q[j] - h;
        let hm = q[j] - x[j];
        let fm = f(&x)?;
        x[j] = q[j];
        for i in 0..rows {
            jac[(i, j)] = (fp[i] - fm[i]) / (hp + hm);
        }
    }
    check_finite(jac.as_slice(), "finite-difference Jacobian", q)?;
    Ok(jac)
}

/// Gradient of a scalar function by central differences.
pub fn gradient<F>(f: F, q: &[f64]) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut x = q.to_vec();
    let mut grad = Vec::with_capacity(q.len());
    for j in 0..q.len() {
        let h = fd_step(q[j]);
        x[j] = q[j] + h;
        let hp = x[j] - q[j];
        let fp = f(&x)?;
        x[j] = q[j] - h;
        let hm = q[j] - x[j];
        let fm = f(&x)?;
        x[j] = q[j];
        grad.push((fp - fm) / (hp + hm));
    }
    check_finite(&grad, "finite-difference gradient", q)?;
    Ok(grad)
}

/// Derivative of `f` at `q` along `dir`, i.e. `d/dε f(q + ε dir)` at ε = 0.
pub fn directional<F>(f: F, q: &[f64], dir: &[f64]) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let scale = q.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Ok(0.0);
    }
    let eps = fd_step(scale) / norm;
    let plus: Vec<f64> = q.iter().zip(dir).map(|(x, d)| x + eps * d).collect();
    let minus: Vec<f64> = q.iter().zip(dir).map(|(x, d)| x - eps * d).collect();
    Ok((f(&plus)? - f(&minus)?) / (2.0 * eps))
}

/// Fornberg weights for derivatives of order `0..=order` at `z` from samples at `xs`.
///
/// `weights[m][j]` multiplies the sample at `xs[j]` in the order-`m` derivative.
pub fn fornberg_weights(z: f64, xs: &[f64], order: usize) -> Vec<Vec<f64>> {
    let n = xs.len();
    let mut c = vec![vec![0.0; n]; order + 1];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - z;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}
