//! Embedded Dormand–Prince 5(4) integration with a fixed-step RK4 fallback.

use crate::error::{check_dim, Error, Result};

use super::trajectory::{ParamLabel, Termination, Trajectory};
use super::VectorField;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Adaptive Dormand–Prince 5(4) pair.
    DormandPrince45,
    /// Classical fourth-order Runge–Kutta with a fixed step (last step clipped).
    Rk4 { step: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub max_step: Option<f64>,
    pub initial_step: Option<f64>,
    pub method: Method,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            max_steps: 1_000_000,
            max_step: None,
            initial_step: None,
            method: Method::DormandPrince45,
        }
    }
}

impl IntegratorOptions {
    pub fn with_tolerances(mut self, rtol: f64, atol: f64) -> Self {
        self.rtol = rtol;
        self.atol = atol;
        self
    }

    pub fn with_max_step(mut self, h: f64) -> Self {
        self.max_step = Some(h);
        self
    }

    pub fn with_max_steps(mut self, n: usize) -> Self {
        self.max_steps = n;
        self
    }

    pub fn fixed_rk4(mut self, step: f64) -> Self {
        self.method = Method::Rk4 { step };
        self
    }

    fn validate(&self) -> Result<()> {
        let ok = self.rtol >= 0.0
            && self.atol >= 0.0
            && self.rtol + self.atol > 0.0
            && self.max_steps > 0
            && self.max_step.is_none_or(|h| h > 0.0)
            && self.initial_step.is_none_or(|h| h > 0.0)
            && match self.method {
                Method::Rk4 { step } => step > 0.0,
                Method::DormandPrince45 => true,
            };
        if ok {
            Ok(())
        } else {
            Err(Error::Precondition(format!("invalid integrator options {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IntegratorStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Integrates `X` from `q0` over `[0, t_end]`.
pub fn integrate_flow(
    field: &VectorField,
    q0: &[f64],
    t_end: f64,
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    integrate_span(field, q0, 0.0, t_end, opts)
}

/// Integrates `X` from `q0` over `[t0, t1]`, `t1 > t0`.
///
/// Leaving the field's domain truncates the curve and marks it
/// [`Termination::DomainExit`] instead of failing.
pub fn integrate_span(
    field: &VectorField,
    q0: &[f64],
    t0: f64,
    t1: f64,
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    check_dim(field.dim(), q0.len())?;
    opts.validate()?;
    if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(Error::Precondition(format!("empty integration span [{t0}, {t1}]")));
    }
    if !field.admits(q0) {
        return Err(Error::OutsideDomain { point: q0.to_vec() });
    }
    let mut run = Run {
        field,
        stats: IntegratorStats::default(),
        params: vec![t0],
        states: vec![q0.to_vec()],
        derivs: Vec::new(),
    };
    let k1 = run.eval(q0)?;
    run.derivs.push(k1);
    let termination = match opts.method {
        Method::DormandPrince45 => run.dopri(t1, opts)?,
        Method::Rk4 { step } => run.rk4(t1, step, opts)?,
    };
    let Run {
        stats,
        params,
        states,
        derivs,
        ..
    } = run;
    let traj = Trajectory::new(ParamLabel::T, params, states, derivs)?;
    Ok(traj.with_run_info(termination, stats, opts.atol.max(1e-15)))
}

struct Run<'a> {
    field: &'a VectorField,
    stats: IntegratorStats,
    params: Vec<f64>,
    states: Vec<Vec<f64>>,
    derivs: Vec<Vec<f64>>,
}

enum Stage {
    Value(Vec<f64>),
    Outside,
}

const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [&[f64]; 6] = [
    &[1.0 / 5.0],
    &[3.0 / 40.0, 9.0 / 40.0],
    &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
    &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
    &[9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
    &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

impl Run<'_> {
    fn eval(&mut self, q: &[f64]) -> Result<Vec<f64>> {
        self.stats.evaluations += 1;
        self.field.eval(q)
    }

    fn try_eval(&mut self, q: &[f64]) -> Result<Stage> {
        if !self.field.admits(q) {
            return Ok(Stage::Outside);
        }
        match self.eval(q) {
            Ok(v) => Ok(Stage::Value(v)),
            Err(Error::OutsideDomain { .. }) => Ok(Stage::Outside),
            // A blow-up inside a step is handled like a boundary: the step shrinks
            // until the run stops just short of the singular parameter.
            Err(Error::NonFinite { .. }) => Ok(Stage::Outside),
            Err(e) => Err(e),
        }
    }

    fn push(&mut self, t: f64, y: Vec<f64>, d: Vec<f64>) {
        self.params.push(t);
        self.states.push(y);
        self.derivs.push(d);
    }

    fn initial_step(&mut self, t0: f64, t1: f64, opts: &IntegratorOptions) -> Result<f64> {
        if let Some(h) = opts.initial_step {
            return Ok(h);
        }
        let y = self.states[0].clone();
        let f0 = self.derivs[0].clone();
        let sc: Vec<f64> = y.iter().map(|v| opts.atol + opts.rtol * v.abs()).collect();
        let rms = |v: &[f64]| {
            (v.iter().zip(&sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
        };
        let d0 = rms(&y);
        let d1 = rms(&f0);
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0 = h0.min(t1 - t0);
        let y1: Vec<f64> = y.iter().zip(&f0).map(|(a, b)| a + h0 * b).collect();
        let f1 = match self.try_eval(&y1)? {
            Stage::Value(v) => v,
            Stage::Outside => return Ok(h0),
        };
        let diff: Vec<f64> = f1.iter().zip(&f0).map(|(a, b)| a - b).collect();
        let d2 = rms(&diff) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        Ok((100.0 * h0).min(h1))
    }

    fn dopri(&mut self, t1: f64, opts: &IntegratorOptions) -> Result<Termination> {
        let n = self.field.dim();
        let mut t = self.params[0];
        let mut y = self.states[0].clone();
        let mut k = vec![self.derivs[0].clone()];
        let mut h = self.initial_step(t, t1, opts)?;
        let mut steps = 0usize;
        let mut last_rejected = false;
        let hmax = opts.max_step.unwrap_or(f64::INFINITY);
        while t < t1 {
            if steps >= opts.max_steps {
                return Err(Error::StepLimit {
                    max_steps: opts.max_steps,
                    param: t,
                });
            }
            steps += 1;
            let hmin = 1e-13 * t.abs().max(1.0);
            h = h.min(hmax);
            if h < hmin {
                return Err(Error::StepUnderflow { param: t });
            }
            let finishing = t + h >= t1 - hmin;
            if finishing {
                h = t1 - t;
            }
            k.truncate(1);
            let mut outside = false;
            let mut y_new = Vec::new();
            for (s, row) in A.iter().enumerate() {
                let yi: Vec<f64> = (0..n)
                    .map(|c| y[c] + h * row.iter().zip(&k).map(|(a, kk)| a * kk[c]).sum::<f64>())
                    .collect();
                match self.try_eval(&yi)? {
                    Stage::Value(v) => k.push(v),
                    Stage::Outside => {
                        outside = true;
                        break;
                    }
                }
                if s == 5 {
                    y_new = yi;
                }
                let _ = C[s];
            }
            if outside {
                self.stats.rejected += 1;
                h *= 0.5;
                last_rejected = true;
                if h < hmin {
                    return Ok(Termination::DomainExit { param: t });
                }
                continue;
            }
            let err = (0..n)
                .map(|c| {
                    let e: f64 = h * E.iter().zip(&k).map(|(e, kk)| e * kk[c]).sum::<f64>();
                    let sc = opts.atol + opts.rtol * y[c].abs().max(y_new[c].abs());
                    (e / sc).powi(2)
                })
                .sum::<f64>()
                / n as f64;
            let err = err.sqrt();
            if !err.is_finite() {
                return Err(Error::NonFinite {
                    context: "integrator error estimate",
                    point: y.clone(),
                });
            }
            if err <= 1.0 {
                self.stats.accepted += 1;
                t = if finishing { t1 } else { t + h };
                y = y_new;
                let k7 = k[6].clone();
                self.push(t, y.clone(), k7.clone());
                k = vec![k7];
                let mut fac = if err == 0.0 { 5.0 } else { 0.9 * err.powf(-0.2) };
                fac = fac.clamp(0.2, 5.0);
                if last_rejected {
                    fac = fac.min(1.0);
                }
                h *= fac;
                last_rejected = false;
            } else {
                self.stats.rejected += 1;
                h *= (0.9 * err.powf(-0.2)).max(0.2);
                last_rejected = true;
                if h < hmin {
                    return Err(Error::StepUnderflow { param: t });
                }
            }
        }
        Ok(Termination::Completed)
    }

    fn rk4(&mut self, t1: f64, step: f64, opts: &IntegratorOptions) -> Result<Termination> {
        let n = self.field.dim();
        let mut t = self.params[0];
        let mut y = self.states[0].clone();
        let mut k1 = self.derivs[0].clone();
        let mut steps = 0usize;
        while t < t1 {
            if steps >= opts.max_steps {
                return Err(Error::StepLimit {
                    max_steps: opts.max_steps,
                    param: t,
                });
            }
            steps += 1;
            let finishing = t + step >= t1 - 1e-13 * t.abs().max(1.0);
            let h = if finishing { t1 - t } else { step };
            let axpy = |a: f64, k: &[f64]| -> Vec<f64> { (0..n).map(|c| y[c] + a * k[c]).collect() };
            let mut ks = vec![k1.clone()];
            for (a, _) in [(0.5, 0), (0.5, 1), (1.0, 2)] {
                let yi = axpy(a * h, ks.last().expect("stage"));
                match self.try_eval(&yi)? {
                    Stage::Value(v) => ks.push(v),
                    Stage::Outside => return Ok(Termination::DomainExit { param: t }),
                }
            }
            let y_new: Vec<f64> = (0..n)
                .map(|c| y[c] + h / 6.0 * (ks[0][c] + 2.0 * ks[1][c] + 2.0 * ks[2][c] + ks[3][c]))
                .collect();
            let d = match self.try_eval(&y_new)? {
                Stage::Value(v) => v,
                Stage::Outside => return Ok(Termination::DomainExit { param: t }),
            };
            self.stats.accepted += 1;
            t = if finishing { t1 } else { t + h };
            y = y_new;
            k1 = d.clone();
            self.push(t, y.clone(), d);
        }
        Ok(Termination::Completed)
    }
}
