//! Executes a scenario: builds the fields, runs the integrations and evaluates the
//! requested residual checks.

use std::collections::BTreeMap;

use sundman::fields::{
    first_integral_drift, first_integral_residual, integrate_flow, orbit_distance, reparametrize,
    scale_field, time_map, IntegratorOptions, IntegratorStats,
};
use sundman::kepler::{analytic_ellipse, linearization_check, KeplerParams};
use sundman::linstruct::{affinity_residual, linearity_residual, linearization_residual, linearize};
use sundman::mechanics::{
    conformal_mechanical_residual, energy_constancy_residual, energy_drift, jacobi_equivalence,
    jacobi_gradient_identity_residual, jacobi_metric, mechanical_sode, nabla_force_residual,
    newtonian_sode, reparametrized_mechanical_residual, sundman_newton_residual, MechanicalSystem,
};
use sundman::numerics::sampling::{annulus, in_box};
use sundman::riemann::{
    autoparallel_residual, christoffel, conformal_christoffel, conformal_nabla_residual,
    conformal_rescale, geodesic_field, geodesic_rescaling, killing_residual, kinetic_energy,
    parametrization_lambda, pregeodesic_factor, speed_drift, sundman_geodesic_residual,
    ConformalFactor, MetricField,
};
use sundman::{Error, ScalarField, Trajectory, VectorField};

use crate::scenario::{Bound, Kind, Samples, Scenario};

/// One evaluated check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub value: Option<f64>,
    pub bound: Bound,
    pub pass: bool,
    pub error: Option<String>,
}

/// Everything a run produces before anything is written to disk.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub scenario: String,
    pub kind: Kind,
    /// Configuration dimension of the emitted trajectories.
    pub dim: usize,
    pub seed: u64,
    pub checks: Vec<CheckOutcome>,
    pub trajectories: Vec<(String, Trajectory)>,
    pub stats: IntegratorStats,
    pub notes: Vec<String>,
}

impl Outcome {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// The scenario cannot be run as written (exit status 2).
#[derive(Debug, Clone, PartialEq)]
pub struct InvalidInput(pub String);

impl std::fmt::Display for InvalidInput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InvalidInput {}

/// Numerical failures become failing checks; everything else is bad input.
fn is_numerical(e: &Error) -> bool {
    matches!(
        e,
        Error::StepLimit { .. }
            | Error::StepUnderflow { .. }
            | Error::Quadrature { .. }
            | Error::Truncated { .. }
            | Error::NonFinite { .. }
            | Error::EmptyTrajectory
            | Error::NonSingleValued { .. }
    )
}

struct Run<'a> {
    s: &'a Scenario,
    seed: u64,
    results: BTreeMap<String, Result<f64, String>>,
    trajectories: Vec<(String, Trajectory)>,
    stats: IntegratorStats,
    notes: Vec<String>,
}

type Step<T> = Result<T, InvalidInput>;

impl<'a> Run<'a> {
    fn wants(&self, name: &str) -> bool {
        self.s.checks.iter().any(|c| c.name == name)
    }

    fn wants_any(&self, names: &[&str]) -> bool {
        names.iter().any(|n| self.wants(n))
    }

    fn record(&mut self, name: &str, f: impl FnOnce() -> sundman::Result<f64>) -> Step<()> {
        if !self.wants(name) {
            return Ok(());
        }
        let r = f();
        self.store(name, r)
    }

    fn store(&mut self, name: &str, r: sundman::Result<f64>) -> Step<()> {
        match r {
            Ok(v) => {
                self.results.insert(name.to_string(), Ok(v));
                Ok(())
            }
            Err(e) => self.fail(&[name], e),
        }
    }

    /// Marks every wanted check in `names` as failed by a numerical error, or
    /// aborts the run if the error reflects bad input.
    fn fail(&mut self, names: &[&str], e: Error) -> Step<()> {
        if !is_numerical(&e) {
            return Err(InvalidInput(e.to_string()));
        }
        for n in names {
            if self.wants(n) {
                self.results.insert(n.to_string(), Err(e.to_string()));
            }
        }
        Ok(())
    }

    /// Unwraps a shared intermediate; on a numerical error the dependent checks fail.
    fn shared<T>(&mut self, names: &[&str], r: sundman::Result<T>) -> Step<Option<T>> {
        match r {
            Ok(v) => Ok(Some(v)),
            Err(e) => self.fail(names, e).map(|_| None),
        }
    }

    fn keep(&mut self, label: &str, traj: &Trajectory) {
        let st = traj.stats();
        self.stats.accepted += st.accepted;
        self.stats.rejected += st.rejected;
        self.stats.evaluations += st.evaluations;
        if traj.is_truncated() {
            self.notes.push(format!(
                "trajectory `{label}` stopped at the domain boundary at parameter {}",
                traj.end()
            ));
        }
        self.trajectories.push((label.to_string(), traj.clone()));
    }

    fn samples(&self) -> Vec<Vec<f64>> {
        let dim = self.s.dim();
        match self.s.samples.as_ref().expect("validated") {
            Samples::Annulus { count, r_min, r_max, seed_offset } => {
                annulus(dim, *count, *r_min, *r_max, self.seed.wrapping_add(*seed_offset))
            }
            Samples::Box { count, bounds, seed_offset } => {
                in_box(bounds, *count, self.seed.wrapping_add(*seed_offset))
            }
            Samples::Points(p) => p.clone(),
        }
    }

    fn opts(&self) -> &IntegratorOptions {
        &self.s.integrator
    }

    fn q0(&self) -> &[f64] {
        self.s.q0.as_deref().expect("validated")
    }

    fn phase0(&self) -> Vec<f64> {
        let mut x = self.q0().to_vec();
        x.extend_from_slice(self.s.v0.as_deref().expect("validated"));
        x
    }

    fn horizon(&self) -> f64 {
        self.s.horizon.expect("validated")
    }

    fn field(&self) -> &'a VectorField {
        self.s.field.as_ref().expect("validated")
    }

    fn metric(&self) -> &'a MetricField {
        self.s.metric.as_ref().expect("validated")
    }
}

fn max_over<F>(samples: &[Vec<f64>], f: F) -> sundman::Result<f64>
where
    F: Fn(&[f64]) -> sundman::Result<f64>,
{
    samples.iter().try_fold(0.0f64, |m, q| Ok(m.max(f(q)?)))
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Runs a scenario with the given sampling seed.
pub fn run(s: &Scenario, seed: u64) -> Result<Outcome, InvalidInput> {
    let mut r = Run {
        s,
        seed,
        results: BTreeMap::new(),
        trajectories: Vec::new(),
        stats: IntegratorStats::default(),
        notes: Vec::new(),
    };
    match s.kind {
        Kind::Flow => flow(&mut r)?,
        Kind::Sundman => sundman_kind(&mut r)?,
        Kind::Geodesic => geodesic(&mut r)?,
        Kind::Conformal => conformal(&mut r)?,
        Kind::Mechanical => mechanical(&mut r)?,
        Kind::Newtonian => newtonian(&mut r)?,
        Kind::Jacobi => jacobi(&mut r)?,
        Kind::Kepler => kepler(&mut r)?,
        Kind::Linstruct => linstruct(&mut r)?,
    }
    let checks = s
        .checks
        .iter()
        .map(|c| {
            let (value, error) = match r.results.get(&c.name) {
                Some(Ok(v)) => (Some(*v), None),
                Some(Err(e)) => (None, Some(e.clone())),
                None => (None, Some("check was not evaluated".to_string())),
            };
            CheckOutcome {
                name: c.name.clone(),
                value,
                bound: c.bound,
                pass: value.is_some_and(|v| c.bound.admits(v)),
                error,
            }
        })
        .collect();
    Ok(Outcome {
        scenario: s.name.clone(),
        kind: s.kind,
        dim: if s.kind == Kind::Kepler { 1 } else { s.dim() },
        seed,
        checks,
        trajectories: r.trajectories,
        stats: r.stats,
        notes: r.notes,
    })
}

fn flow(r: &mut Run) -> Step<()> {
    let s = r.s;
    let x = r.field();
    if r.wants("first_integral_drift") {
        let tr = integrate_flow(x, r.q0(), r.horizon(), r.opts());
        if let Some(tr) = r.shared(&["first_integral_drift"], tr)? {
            r.keep("flow", &tr);
            let f = s.first_integral.as_ref().expect("validated");
            r.store("first_integral_drift", first_integral_drift(f, &tr))?;
        }
    }
    if r.wants("first_integral_residual") {
        let pts = r.samples();
        let f = s.first_integral.as_ref().expect("validated");
        r.store("first_integral_residual", first_integral_residual(f, x, &pts))?;
    }
    Ok(())
}

fn sundman_kind(r: &mut Run) -> Step<()> {
    let s = r.s;
    const ALL: [&str; 3] = ["orbit_distance", "first_integral_drift", "reparametrization_deviation"];
    let x = r.field();
    let f = s.factor.as_ref().expect("validated");
    let Some(base) = r.shared(&ALL, integrate_flow(x, r.q0(), r.horizon(), r.opts()))? else {
        return Ok(());
    };
    r.keep("base", &base);
    let fmax = base
        .states()
        .iter()
        .map(|q| f.eval_positive(q))
        .try_fold(0.0f64, |m, v| v.map(|v| m.max(v)));
    let fmax = match fmax {
        Ok(v) => v,
        Err(e) => return r.fail(&ALL, e),
    };
    let Some(tm) = r.shared(&ALL, time_map(&base, f))? else {
        return Ok(());
    };
    let tau_end = *tm.target().last().expect("non-empty trajectory");
    let y = match scale_field(x, f) {
        Ok(y) => y,
        Err(e) => return r.fail(&ALL, e),
    };
    let mut opts = r.opts().clone();
    if let Some(h) = opts.max_step {
        opts.max_step = Some(h / fmax);
    }
    let Some(scaled) = r.shared(&ALL, integrate_flow(&y, r.q0(), tau_end, &opts))? else {
        return Ok(());
    };
    r.keep("scaled", &scaled);
    r.record("orbit_distance", || orbit_distance(&base, &scaled))?;
    r.record("first_integral_drift", || {
        first_integral_drift(s.first_integral.as_ref().expect("validated"), &scaled)
    })?;
    r.record("reparametrization_deviation", || {
        let re = reparametrize(&base, f)?;
        let mut worst = 0.0f64;
        for (tau, q) in re.params().iter().zip(re.states()) {
            let p = scaled.state_at(tau.min(scaled.end()))?;
            worst = worst.max(sup_diff(&p, q));
        }
        Ok(worst)
    })
}

fn geodesic(r: &mut Run) -> Step<()> {
    let s = r.s;
    let g = r.metric();
    let n = s.dim();
    const TRAJ: [&str; 3] = ["speed_drift", "affine_lambda", "sundman_geodesic_residual"];
    if r.wants_any(&TRAJ) {
        let field = geodesic_field(g).as_vector_field();
        if let Some(tr) = r.shared(&TRAJ, integrate_flow(&field, &r.phase0(), r.horizon(), r.opts()))? {
            r.keep("geodesic", &tr);
            r.record("speed_drift", || speed_drift(g, &tr))?;
            let c = s.affine_scale;
            r.record("affine_lambda", || {
                let re = reparametrize(&tr, &ScalarField::constant(2 * n, c))?;
                Ok(parametrization_lambda(g, &re)?
                    .into_iter()
                    .fold(0.0, |m, (_, l)| m.max(l.abs())))
            })?;
            r.record("sundman_geodesic_residual", || {
                let f = s.factor.as_ref().expect("validated");
                let re = reparametrize(&tr, &f.extend_to(2 * n))?;
                sundman_geodesic_residual(g, &re, f)
            })?;
        }
    }
    r.record("christoffel_error", || {
        let mut worst = 0.0f64;
        for c in &s.christoffel {
            let gam = christoffel(g, &c.point)?;
            for &(i, j, k, v) in &c.entries {
                worst = worst.max((gam.get(i, j, k) - v).abs());
            }
        }
        Ok(worst)
    })?;
    let field_checks = [
        "killing_residual",
        "autoparallel_residual",
        "pregeodesic_residual",
        "pregeodesic_factor_error",
    ];
    let pts = if r.wants_any(&field_checks) || (r.wants("rescaled_autoparallel") && s.pregeodesic_factor.is_none()) {
        r.samples()
    } else {
        Vec::new()
    };
    let x = s.field.as_ref();
    r.record("killing_residual", || max_over(&pts, |q| killing_residual(g, x.expect("validated"), q)))?;
    r.record("autoparallel_residual", || {
        max_over(&pts, |q| autoparallel_residual(g, x.expect("validated"), q))
    })?;
    let fit = if r.wants_any(&["pregeodesic_residual", "pregeodesic_factor_error"])
        || (r.wants("rescaled_autoparallel") && s.pregeodesic_factor.is_none())
    {
        let names = ["pregeodesic_residual", "pregeodesic_factor_error", "rescaled_autoparallel"];
        r.shared(&names, pregeodesic_factor(g, x.expect("validated"), &pts))?
    } else {
        None
    };
    if let Some(fit) = &fit {
        if !fit.skipped.is_empty() {
            r.notes.push(format!(
                "{} sample points skipped where the field vanishes",
                fit.skipped.len()
            ));
        }
        r.record("pregeodesic_residual", || Ok(fit.residual))?;
        r.record("pregeodesic_factor_error", || {
            let f = s.pregeodesic_factor.as_ref().expect("validated");
            let mut worst = 0.0f64;
            for (q, v) in pts.iter().zip(&fit.values) {
                if let Some(v) = v {
                    worst = worst.max((v - f.eval(q)?).abs());
                }
            }
            Ok(worst)
        })?;
    }
    if r.wants("rescaled_autoparallel") {
        let f = match (&s.pregeodesic_factor, &fit) {
            (Some(f), _) => f.clone(),
            (None, Some(fit)) => fit.estimate.clone(),
            (None, None) => return Ok(()),
        };
        let res = geodesic_rescaling(g, x.expect("validated"), &f, r.q0(), r.horizon(), r.opts());
        if let Some(res) = r.shared(&["rescaled_autoparallel"], res)? {
            r.keep("flow", &res.flow);
            r.keep("rescaled", &res.geodesic);
            r.store("rescaled_autoparallel", Ok(res.autoparallel_residual))?;
        }
    }
    Ok(())
}

fn conformal(r: &mut Run) -> Step<()> {
    let s = r.s;
    let g = r.metric();
    let phi = ConformalFactor::new(s.conformal.clone().expect("validated"));
    let pts = r.samples();
    r.record("christoffel_consistency", || {
        let gbar = conformal_rescale(g, &phi)?;
        max_over(&pts, |q| {
            Ok(conformal_christoffel(g, &phi, q)?.max_abs_diff(&christoffel(&gbar, q)?))
        })
    })?;
    r.record("nabla_residual", || {
        conformal_nabla_residual(
            g,
            &phi,
            s.field.as_ref().expect("validated"),
            s.field2.as_ref().expect("validated"),
            &pts,
        )
    })
}

fn mech_system(r: &Run) -> Step<MechanicalSystem> {
    let s = r.s;
    let g = r.metric().clone();
    let g = match &s.conformal {
        Some(phi) => conformal_rescale(&g, &ConformalFactor::new(phi.clone())).map_err(|e| InvalidInput(e.to_string()))?,
        None => g,
    };
    MechanicalSystem::new(g, s.potential.clone().expect("validated")).map_err(|e| InvalidInput(e.to_string()))
}

fn mechanical(r: &mut Run) -> Step<()> {
    let s = r.s;
    let sys = mech_system(r)?;
    let n = s.dim();
    const TRAJ: [&str; 3] = ["energy_drift", "reparametrized_residual", "conformal_residual"];
    if r.wants_any(&TRAJ) {
        let field = mechanical_sode(&sys).as_vector_field();
        if let Some(tr) = r.shared(&TRAJ, integrate_flow(&field, &r.phase0(), r.horizon(), r.opts()))? {
            r.keep("mechanical", &tr);
            r.record("energy_drift", || energy_drift(&sys, &tr))?;
            r.record("reparametrized_residual", || {
                let xi = s.factor.as_ref().expect("validated");
                let re = reparametrize(&tr, &xi.extend_to(2 * n))?;
                let vals = re
                    .states()
                    .iter()
                    .map(|s| xi.eval(&s[..n]))
                    .collect::<sundman::Result<Vec<_>>>()?;
                reparametrized_mechanical_residual(&sys, &re, &vals)
            })?;
            r.record("conformal_residual", || {
                let phi = ConformalFactor::new(s.conformal.clone().expect("validated"));
                conformal_mechanical_residual(s.metric.as_ref().expect("validated"), &phi, sys.potential(), &tr)
            })?;
        }
    }
    if r.wants("energy_constancy") {
        let pts = r.samples();
        r.store("energy_constancy", energy_constancy_residual(&sys, r.field(), &pts))?;
    }
    Ok(())
}

fn newtonian(r: &mut Run) -> Step<()> {
    let s = r.s;
    let g = r.metric();
    let z = s.force.as_ref().expect("validated");
    let x = r.field();
    let pts = r.samples();
    r.record("nabla_force_residual", || nabla_force_residual(g, x, z, &pts))?;
    r.record("sundman_newton_residual", || {
        let mut worst = 0.0f64;
        for h in &s.factors {
            let y = scale_field(x, h)?;
            worst = worst.max(sundman_newton_residual(g, &y, z, h, &pts)?);
        }
        Ok(worst)
    })?;
    if let (Some(_), Some(_), Some(t)) = (&s.q0, &s.v0, s.horizon) {
        let field = newtonian_sode(g, z).map_err(|e| InvalidInput(e.to_string()))?;
        match integrate_flow(&field.as_vector_field(), &r.phase0(), t, r.opts()) {
            Ok(tr) => r.keep("trajectory", &tr),
            Err(e) if is_numerical(&e) => r.notes.push(format!("trajectory not produced: {e}")),
            Err(e) => return Err(InvalidInput(e.to_string())),
        }
    }
    Ok(())
}

fn jacobi(r: &mut Run) -> Step<()> {
    let s = r.s;
    let sys = mech_system(r)?;
    let e0 = s.energy.expect("validated");
    let jm = jacobi_metric(&sys, e0).map_err(|e| InvalidInput(e.to_string()))?;
    let invalid = |e: Error| InvalidInput(e.to_string());
    const TRAJ: [&str; 3] = ["orbit_distance", "energy_drift", "arc_length_residual"];
    if r.wants_any(&TRAJ) {
        let q0 = r.q0().to_vec();
        let v0 = s.v0.clone().expect("validated");
        let w = e0 - sys.potential().eval(&q0).map_err(invalid)?;
        if !(w > 0.0) {
            return Err(InvalidInput(format!(
                "energy level {e0} is not above the potential {} at the initial point",
                e0 - w
            )));
        }
        let v0 = if s.rescale_velocity {
            let k = kinetic_energy(sys.metric(), &q0, &v0).map_err(invalid)?;
            if !(k > 0.0) {
                return Err(InvalidInput("initial velocity is zero".into()));
            }
            let s = (w / k).sqrt();
            v0.iter().map(|c| s * c).collect()
        } else {
            v0
        };
        let rep = jacobi_equivalence(&sys, e0, &q0, &v0, r.horizon(), r.opts());
        if let Some(rep) = r.shared(&TRAJ, rep)? {
            r.keep("mechanical", &rep.mechanical);
            r.keep("geodesic", &rep.geodesic);
            if rep.truncated {
                r.notes.push("a run was cut short near the boundary E0 = V".into());
            }
            r.store("orbit_distance", Ok(rep.orbit_distance))?;
            r.store("energy_drift", Ok(rep.energy_drift))?;
            r.store("arc_length_residual", Ok(rep.arc_length_residual))?;
        }
    }
    if r.wants_any(&["gradient_identity", "pregeodesic_residual"]) {
        let pts = r.samples();
        jm.check_region(&pts).map_err(|e| {
            InvalidInput(format!("the requested sample region leaves the region V < E0: {e}"))
        })?;
        r.record("gradient_identity", || jacobi_gradient_identity_residual(&sys, e0, &pts))?;
        r.record("pregeodesic_residual", || {
            Ok(pregeodesic_factor(jm.metric(), s.field.as_ref().expect("validated"), &pts)?.residual)
        })?;
    }
    Ok(())
}

fn kepler(r: &mut Run) -> Step<()> {
    let s = r.s;
    const ALL: [&str; 7] = [
        "sundman_linear_deviation",
        "analytic_deviation",
        "time_map_deviation",
        "tau_period_error",
        "t_period_error",
        "fixed_energy_residual",
        "energy_drift",
    ];
    let k = s.kepler.clone().expect("validated");
    let invalid = |e: Error| InvalidInput(e.to_string());
    let p = KeplerParams::new(k.k, k.l, k.energy).map_err(invalid)?;
    let r0 = match k.r0 {
        Some(v) => v,
        None => analytic_ellipse(&p).map_err(invalid)?.r_min(),
    };
    let Some(c) = r.shared(&ALL, linearization_check(&p, r0, k.rdot0, k.periods, r.opts()))? else {
        return Ok(());
    };
    r.keep("radial", &c.radial);
    r.keep("sundman", &c.sundman);
    r.keep("linear", &c.linear);
    r.store("sundman_linear_deviation", Ok(c.sundman_linear_deviation))?;
    r.store("analytic_deviation", Ok(c.analytic_deviation))?;
    r.store("time_map_deviation", Ok(c.time_map_deviation))?;
    r.store("fixed_energy_residual", Ok(c.fixed_energy_residual))?;
    r.store("energy_drift", Ok(c.energy_drift))?;
    for (name, found, exact) in [
        ("tau_period_error", c.tau_period, c.ellipse.tau_period()),
        ("t_period_error", c.t_period, c.ellipse.t_period()),
    ] {
        if r.wants(name) {
            let v = match found {
                Some(v) => Ok((v - exact).abs() / exact),
                None => Err("no period detected within the integrated span".to_string()),
            };
            r.results.insert(name.to_string(), v);
        }
    }
    Ok(())
}

fn linstruct(r: &mut Run) -> Step<()> {
    let s = r.s;
    let x = r.field();
    let pts = r.samples();
    r.record("linearity_residual", || linearity_residual(x, &pts))?;
    r.record("affinity_residual", || affinity_residual(x, &pts))?;
    if r.wants_any(&["eigen_residual", "linearization_residual"]) {
        let names = ["eigen_residual", "linearization_residual"];
        if let Some(lin) = r.shared(&names, linearize(x, &pts, s.eigen_tolerance))? {
            r.store("eigen_residual", Ok(lin.eigen.residual))?;
            r.store("linearization_residual", Ok(lin.residual))?;
        }
    }
    r.record("factor_residual", || {
        linearization_residual(x, s.factor.as_ref().expect("validated"), &pts)
    })
}
