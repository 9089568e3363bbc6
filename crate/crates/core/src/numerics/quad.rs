//! Adaptive Simpson quadrature and bracketed 1-D minimization.

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 48;
const MAX_EVALUATIONS: usize = 200_000;

/// Integrates `f` over `[a, b]` to absolute tolerance `tol` by adaptive Simpson.
///
/// Fails with [`Error::Quadrature`] when the recursion depth or the evaluation
/// budget (200 000 calls) is exhausted, as happens for noisy integrands.
pub fn adaptive_simpson<F>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if a == b {
        return Ok(0.0);
    }
    let mut calls = 0usize;
    let mut g = |x: f64| {
        calls += 1;
        if calls > MAX_EVALUATIONS {
            return Err(Error::Quadrature { a, b });
        }
        f(x)
    };
    let fa = g(a)?;
    let fb = g(b)?;
    let m = 0.5 * (a + b);
    let fm = g(m)?;
    let whole = simpson(a, b, fa, fm, fb);
    recurse(&mut g, a, b, fa, fm, fb, whole, tol.max(f64::EPSILON), MAX_DEPTH)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F>(
    f: &mut F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm)?;
    let frm = f(rm)?;
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if !delta.is_finite() {
        return Err(Error::Quadrature { a, b });
    }
    if delta.abs() <= 15.0 * tol || (m - a).abs() <= f64::EPSILON * m.abs().max(1.0) {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::Quadrature { a, b });
    }
    let l = recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let r = recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Ok(l + r)
}

/// Golden-section search for a minimizer of `f` on `[a, b]`; returns `(x, f(x))`.
pub fn golden_min<F>(mut f: F, mut a: f64, mut b: f64, iterations: usize) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iterations {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let fa = f(a);
    let fb = f(b);
    [(a, fa), (b, fb), (c, fc), (d, fd)]
        .into_iter()
        .fold((c, fc), |best, cand| if cand.1 < best.1 { cand } else { best })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_integrates_exponential() {
        let v = adaptive_simpson(|x: f64| Ok(x.exp()), 0.0, 1.0, 1e-13).unwrap();
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn simpson_handles_reversed_interval() {
        let v = adaptive_simpson(|x: f64| Ok(x * x), 1.0, 0.0, 1e-12).unwrap();
        assert!((v + 1.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn golden_finds_parabola_vertex() {
        let (x, fx) = golden_min(|x| (x - 0.3).powi(2) + 1.0, -1.0, 2.0, 80);
        assert!((x - 0.3).abs() < 1e-7);
        assert!((fx - 1.0).abs() < 1e-14);
    }
}
