//! Trajectory CSV files and the JSON run report.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;
use sha2::{Digest, Sha256};
use sundman::Trajectory;

use crate::runner::Outcome;
use crate::scenario::Bound;

#[derive(Debug, Clone, Serialize)]
pub struct CheckEntry {
    pub name: String,
    pub value: Option<f64>,
    pub bound: &'static str,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IntegratorEntry {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub scenario: String,
    pub kind: &'static str,
    pub seed: u64,
    pub pass: bool,
    pub checks: Vec<CheckEntry>,
    pub integrator: IntegratorEntry,
    pub files: Vec<FileEntry>,
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runtime_seconds: Option<f64>,
}

/// CSV text for a trajectory. `n` is the configuration dimension: states of length
/// `2n` are written as `q1..qn,v1..vn`, anything else as `q1..qm`.
pub fn trajectory_csv(traj: &Trajectory, n: usize) -> String {
    let m = traj.dim();
    let mut out = String::from("param");
    if n > 0 && m == 2 * n {
        for i in 1..=n {
            write!(out, ",q{i}").unwrap();
        }
        for i in 1..=n {
            write!(out, ",v{i}").unwrap();
        }
    } else {
        for i in 1..=m {
            write!(out, ",q{i}").unwrap();
        }
    }
    out.push('\n');
    for (p, s) in traj.params().iter().zip(traj.states()) {
        write!(out, "{p}").unwrap();
        for x in s {
            write!(out, ",{x}").unwrap();
        }
        out.push('\n');
    }
    out
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// File name for a trajectory: `<name>.csv` when it is the only one, otherwise
/// `<name>-<label>.csv`.
pub fn csv_name(scenario: &str, label: &str, count: usize) -> String {
    if count == 1 {
        format!("{scenario}.csv")
    } else {
        format!("{scenario}-{label}.csv")
    }
}

pub fn report_name(scenario: &str) -> String {
    format!("{scenario}.report.json")
}

/// Builds the report for an outcome without touching the file system.
pub fn build_report(o: &Outcome, runtime: Option<Duration>) -> (Report, Vec<(String, String)>) {
    let count = o.trajectories.len();
    let files: Vec<(String, String)> = o
        .trajectories
        .iter()
        .map(|(label, t)| (csv_name(&o.scenario, label, count), trajectory_csv(t, o.dim)))
        .collect();
    let report = Report {
        scenario: o.scenario.clone(),
        kind: o.kind.name(),
        seed: o.seed,
        pass: o.pass(),
        checks: o
            .checks
            .iter()
            .map(|c| CheckEntry {
                name: c.name.clone(),
                value: c.value,
                bound: match c.bound {
                    Bound::Max(_) => "max",
                    Bound::Min(_) => "min",
                },
                tolerance: c.bound.tolerance(),
                pass: c.pass,
                error: c.error.clone(),
            })
            .collect(),
        integrator: IntegratorEntry {
            accepted_steps: o.stats.accepted,
            rejected_steps: o.stats.rejected,
            evaluations: o.stats.evaluations,
        },
        files: files
            .iter()
            .map(|(path, text)| FileEntry {
                path: path.clone(),
                sha256: sha256_hex(text.as_bytes()),
            })
            .collect(),
        notes: o.notes.clone(),
        runtime_seconds: runtime.map(|d| d.as_secs_f64()),
    };
    (report, files)
}

/// Writes the trajectory CSVs and the report into `dir`, returning the report and
/// the paths written.
pub fn write_outputs(
    o: &Outcome,
    dir: &Path,
    runtime: Option<Duration>,
) -> io::Result<(Report, Vec<PathBuf>)> {
    let (report, files) = build_report(o, runtime);
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (name, text) in &files {
        let p = dir.join(name);
        fs::write(&p, text)?;
        written.push(p);
    }
    let p = dir.join(report_name(&o.scenario));
    let mut json = serde_json::to_string_pretty(&report).map_err(io::Error::other)?;
    json.push('\n');
    fs::write(&p, json)?;
    written.push(p);
    Ok((report, written))
}

#[cfg(test)]
mod tests {
    use super::*;
    use sundman::fields::{integrate_flow, IntegratorOptions};
    use sundman::VectorField;

    #[test]
    fn csv_layout_and_round_trip() {
        let x = VectorField::new(2, |q| vec![q[1], -q[0]]);
        let t = integrate_flow(&x, &[1.0, 0.0], 1.0, &IntegratorOptions::default()).unwrap();
        let csv = trajectory_csv(&t, 1);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("param,q1,v1"));
        for (line, (p, s)) in lines.zip(t.params().iter().zip(t.states())) {
            let vals: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
            assert_eq!(vals[0].to_bits(), p.to_bits());
            assert_eq!(vals[1].to_bits(), s[0].to_bits());
            assert_eq!(vals[2].to_bits(), s[1].to_bits());
        }
        assert!(trajectory_csv(&t, 2).starts_with("param,q1,q2\n"));
    }

    #[test]
    fn file_names() {
        assert_eq!(csv_name("a", "flow", 1), "a.csv");
        assert_eq!(csv_name("a", "flow", 2), "a-flow.csv");
        assert_eq!(report_name("a"), "a.report.json");
    }
}
