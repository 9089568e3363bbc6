//! Running built-in suites and rendering results; shared by the binary and tests.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::builtins::{Builtin, BUILTINS};
use crate::runner::{run, Outcome};
use crate::scenario::{parse_scenario, Bound, Scenario};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "SUNDMAN_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "sundman-out";

/// `--out`, then the environment, then the scenario's `output.dir`, then the default.
pub fn output_dir(flag: Option<&Path>, scenario: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os(OUT_DIR_ENV).filter(|p| !p.is_empty()) {
        return PathBuf::from(p);
    }
    scenario.map_or_else(|| PathBuf::from(DEFAULT_OUT_DIR), Path::to_path_buf)
}

#[derive(Debug, Clone)]
pub struct CaseResult {
    pub file: &'static str,
    pub source: &'static str,
    pub scenario: Scenario,
    pub outcome: Outcome,
    pub runtime: Option<Duration>,
}

/// Runs a scenario, timing it when asked.
pub fn timed_run(s: &Scenario, seed: u64, timings: bool) -> Result<(Outcome, Option<Duration>), String> {
    let start = Instant::now();
    let o = run(s, seed).map_err(|e| format!("{}: {e}", s.name))?;
    Ok((o, timings.then(|| start.elapsed())))
}

/// Runs every case of a built-in; an invalid case aborts the suite.
pub fn run_builtin(b: &Builtin, seed: u64, timings: bool) -> Result<Vec<CaseResult>, String> {
    b.cases
        .iter()
        .map(|(file, source)| {
            let scenario = parse_scenario(source).map_err(|e| format!("{file}: {e}"))?;
            let (outcome, runtime) = timed_run(&scenario, seed, timings)?;
            Ok(CaseResult {
                file,
                source,
                scenario,
                outcome,
                runtime,
            })
        })
        .collect()
}

pub type SuiteResult = (&'static Builtin, Result<Vec<CaseResult>, String>);

/// Runs all built-ins on `jobs` worker threads; results keep the catalogue order.
pub fn run_all(seed: u64, jobs: usize, timings: bool) -> Result<Vec<SuiteResult>, String> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| e.to_string())?;
    Ok(pool.install(|| {
        BUILTINS
            .par_iter()
            .map(|b| (b, run_builtin(b, seed, timings)))
            .collect()
    }))
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Human-readable check table for one outcome.
pub fn render_outcome(o: &Outcome, indent: &str) -> String {
    let mut out = String::new();
    writeln!(out, "{indent}{} {} ({})", verdict(o.pass()), o.scenario, o.kind.name()).unwrap();
    for c in &o.checks {
        let (op, tol) = match c.bound {
            Bound::Max(t) => ("<=", t),
            Bound::Min(t) => (">=", t),
        };
        let value = match (c.value, &c.error) {
            (Some(v), _) => format!("{v:.3e}"),
            (None, Some(e)) => format!("error: {e}"),
            (None, None) => "missing".to_string(),
        };
        writeln!(out, "{indent}  {} {} = {value} (required {op} {tol:e})", verdict(c.pass), c.name).unwrap();
    }
    for n in &o.notes {
        writeln!(out, "{indent}  note: {n}").unwrap();
    }
    out
}
