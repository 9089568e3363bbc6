use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sundman_cli::builtins::{self, BUILTINS};
use sundman_cli::report::write_outputs;
use sundman_cli::scenario::parse_scenario;
use sundman_cli::suite::{output_dir, render_outcome, run_all, run_builtin, timed_run, CaseResult};

const PASS: u8 = 0;
const FAIL: u8 = 1;
const INVALID: u8 = 2;

#[derive(Parser)]
#[command(name = "sundman", version, about = "Run Sundman-reparametrization scenarios and write residual reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file.
    Run {
        file: PathBuf,
        /// Output directory (overrides SUNDMAN_OUT_DIR and the scenario's output.dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed for the quasi-random sample points.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Record wall-clock runtime in the report.
        #[arg(long)]
        timings: bool,
    },
    /// List the built-in scenario suites.
    ListBuiltins,
    /// Run every built-in suite, writing into <out>/<suite>/.
    VerifyAll {
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        timings: bool,
    },
    /// Write a built-in suite's scenario files and run outputs into DIR.
    Emit {
        name: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        timings: bool,
    },
}

fn invalid(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(INVALID)
}

fn io_failure(path: &Path, e: std::io::Error) -> ExitCode {
    eprintln!("error: writing {}: {e}", path.display());
    ExitCode::from(FAIL)
}

fn write_cases(cases: &[CaseResult], dir: &Path, with_sources: bool) -> std::io::Result<()> {
    for c in cases {
        if with_sources {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(c.file), c.source)?;
        }
        write_outputs(&c.outcome, dir, c.runtime)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { file, out, seed, timings } => {
            let text = match fs::read_to_string(&file) {
                Ok(t) => t,
                Err(e) => return invalid(format!("{}: {e}", file.display())),
            };
            let scenario = match parse_scenario(&text) {
                Ok(s) => s,
                Err(e) => return invalid(format!("{}: {e}", file.display())),
            };
            let (outcome, runtime) = match timed_run(&scenario, seed, timings) {
                Ok(r) => r,
                Err(e) => return invalid(e),
            };
            let dir = output_dir(out.as_deref(), scenario.output_dir.as_deref());
            if let Err(e) = write_outputs(&outcome, &dir, runtime) {
                return io_failure(&dir, e);
            }
            print!("{}", render_outcome(&outcome, ""));
            ExitCode::from(if outcome.pass() { PASS } else { FAIL })
        }
        Command::ListBuiltins => {
            for b in BUILTINS {
                let n = b.cases.len();
                println!("{:<26} {n} case{}  {}", b.name, if n == 1 { "" } else { "s" }, b.summary);
            }
            ExitCode::from(PASS)
        }
        Command::VerifyAll { jobs, seed, out, timings } => {
            let results = match run_all(seed, jobs, timings) {
                Ok(r) => r,
                Err(e) => return invalid(e),
            };
            let mut suites = Vec::new();
            for (b, r) in &results {
                match r {
                    Ok(cases) => suites.push((b, cases)),
                    Err(e) => return invalid(format!("built-in {}: {e}", b.name)),
                }
            }
            let base = output_dir(out.as_deref(), None);
            let mut passed = 0;
            for (b, cases) in &suites {
                let dir = base.join(b.name);
                if let Err(e) = write_cases(cases, &dir, false) {
                    return io_failure(&dir, e);
                }
                let ok = cases.iter().all(|c| c.outcome.pass());
                passed += usize::from(ok);
                println!("{} {}", if ok { "PASS" } else { "FAIL" }, b.name);
                for c in cases.iter() {
                    print!("{}", render_outcome(&c.outcome, "  "));
                }
            }
            println!("{passed}/{} built-in suites passed", suites.len());
            ExitCode::from(if passed == suites.len() { PASS } else { FAIL })
        }
        Command::Emit { name, out, seed, timings } => {
            let Some(b) = builtins::find(&name) else {
                let names: Vec<_> = BUILTINS.iter().map(|b| b.name).collect();
                return invalid(format!("unknown built-in `{name}` (available: {})", names.join(", ")));
            };
            let cases = match run_builtin(b, seed, timings) {
                Ok(c) => c,
                Err(e) => return invalid(e),
            };
            if let Err(e) = write_cases(&cases, &out, true) {
                return io_failure(&out, e);
            }
            let ok = cases.iter().all(|c| c.outcome.pass());
            for c in &cases {
                print!("{}", render_outcome(&c.outcome, ""));
            }
            ExitCode::from(if ok { PASS } else { FAIL })
        }
    }
}
