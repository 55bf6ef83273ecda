//! `twistflow`: runs flow scenarios, the property suite, soliton solves and
//! entropy evaluations. Exit codes: 0 success, 1 failed invariant or
//! numerical failure, 2 configuration error.

mod config;
mod output;
mod scenario;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use twistflow::einstein::tke_reference;
use twistflow::entropy::{constant_test_value, lambda_impl, minimize_w};
use twistflow::geometry::scalar_curvature;

use config::{ConfigError, Scenario};
use scenario::{print_summary, run_scenario, Failure};

#[derive(Parser)]
#[command(name = "twistflow", version, about = "Twisted Kähler-Ricci flow on invariant metrics of the two-sphere")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    SignFlip,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file (or a bundled scenario by name) and write its artifacts.
    Run { config: String },
    /// Run the property suite and print a table of margins.
    Verify {
        /// A subset that finishes in well under a minute.
        #[arg(long)]
        quick: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Add a deliberately broken fixture; the suite must then fail.
        #[arg(long, value_enum)]
        inject_fault: Option<FaultArg>,
    },
    /// Solve for the twisted Kähler-Einstein metric of a scenario's twist.
    KeSolve { config: String },
    /// Evaluate μ(g, τ) at a snapshot file.
    Entropy {
        snapshot: PathBuf,
        #[arg(long)]
        tau: f64,
    },
    /// Run every scenario matching a glob pattern, in parallel.
    Sweep { pattern: String },
}

#[derive(Serialize)]
struct KeSolveSummary {
    scenario: String,
    volume: f64,
    twist_mass: f64,
    lambda_impl: f64,
    /// Relative sup distance to `(1 - ε) sech² x`, for the `sech2` twist.
    #[serde(skip_serializing_if = "Option::is_none")]
    closed_form_error: Option<f64>,
}

fn ke_solve(spec: &str) -> Result<(), Failure> {
    let s = Scenario::load(spec)?;
    let grid = s.grid()?;
    let t = s.twist(grid)?;
    let m = tke_reference(&t)?;
    let closed_form_error = (s.config.twist.kind == config::TwistKind::Sech2).then(|| {
        let eps = s.config.twist.epsilon;
        let exact = twistflow::numerics::Field::from_fn(grid, |x| (1.0 - eps) / (x.cosh() * x.cosh()));
        m.h().sup_distance(&exact) / exact.max()
    });
    let summary = KeSolveSummary {
        scenario: s.config.name.clone(),
        volume: m.volume(),
        twist_mass: t.mass(),
        lambda_impl: lambda_impl(&m, &t),
        closed_form_error,
    };
    let dir = output::ensure_dir(&s.output_dir())?;
    let r = scalar_curvature(&m);
    let mut w = csv::Writer::from_path(dir.join("tke.csv")).map_err(|e| Failure::Runtime(e.to_string()))?;
    let io = |e: csv::Error| Failure::Runtime(e.to_string());
    w.write_record(["x", "h", "R_c", "a"]).map_err(io)?;
    for i in 0..grid.n_nodes() {
        w.write_record([grid.x(i), m.h()[i], r[i], t.a()[i]].map(|v| v.to_string())).map_err(io)?;
    }
    w.flush()?;
    output::write_json(&dir.join("ke_solve.json"), &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary).expect("plain data"));
    Ok(())
}

#[derive(Serialize)]
struct EntropySummary {
    tau: f64,
    mu: f64,
    constant_test_value: f64,
    euler_lagrange_residual: f64,
    constraint_residual: f64,
}

fn entropy(path: &PathBuf, tau: f64) -> Result<(), Failure> {
    if !(tau > 0.0) {
        return Err(Failure::Config(ConfigError(format!("tau must be positive, got {tau}"))));
    }
    let snap = output::read_snapshot(path)?;
    let r = minimize_w(&snap.metric, &snap.twist, tau, 2e-10)?;
    let summary = EntropySummary {
        tau,
        mu: r.mu,
        constant_test_value: constant_test_value(&snap.metric, &snap.twist),
        euler_lagrange_residual: r.euler_lagrange_residual,
        constraint_residual: r.constraint_residual,
    };
    println!("{}", serde_json::to_string_pretty(&summary).expect("plain data"));
    Ok(())
}

fn sweep(pattern: &str) -> i32 {
    let paths: Vec<PathBuf> = match glob::glob(pattern) {
        Ok(paths) => paths.filter_map(|p| p.ok()).collect(),
        Err(e) => {
            eprintln!("bad pattern {pattern}: {e}");
            return 2;
        }
    };
    if paths.is_empty() {
        eprintln!("no scenario matches {pattern}");
        return 2;
    }
    let mut code = 0;
    let mut scenarios = Vec::new();
    for p in &paths {
        match Scenario::load(&p.to_string_lossy()) {
            Ok(s) => scenarios.push(s),
            Err(e) => {
                eprintln!("{}: configuration error: {e}", p.display());
                code = 2;
            }
        }
    }
    let mut dirs: Vec<PathBuf> = scenarios.iter().map(Scenario::output_dir).collect();
    dirs.sort();
    if let Some(d) = dirs.windows(2).find(|w| w[0] == w[1]) {
        eprintln!("two scenarios write to {}", d[0].display());
        return 2;
    }
    let results: Vec<_> = scenarios.par_iter().map(|s| (s.config.name.clone(), run_scenario(s))).collect();
    for (name, r) in results {
        match r {
            Ok(outcome) => {
                print_summary(&outcome);
                code = code.max(outcome.report.exit_code);
            }
            Err(e) => {
                eprintln!("{name}: {e}");
                code = code.max(e.exit_code());
            }
        }
    }
    code
}

fn report(r: Result<(), Failure>) -> i32 {
    match r {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config } => scenario::run_command(&config),
        Command::Verify { quick, seed, inject_fault } => {
            verify::verify_command(quick, seed, inject_fault.map(|FaultArg::SignFlip| verify::Fault::SignFlip))
        }
        Command::KeSolve { config } => report(ke_solve(&config)),
        Command::Entropy { snapshot, tau } => report(entropy(&snapshot, tau)),
        Command::Sweep { pattern } => sweep(&pattern),
    };
    ExitCode::from(code as u8)
}
