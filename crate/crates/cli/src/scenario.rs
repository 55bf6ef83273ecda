//! Runs one scenario end to end and writes its artifacts.

use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;

use serde::Serialize;
use twistflow::einstein::{convergence_report, stability_experiment, tke_reference, ConvergenceReport, StabilityReport};
use twistflow::entropy::{check_non_collapsing, entropy_infimum, kappa, lambda_impl, minimize_w};
use twistflow::flow::{run, FlowMode, FlowState, RunOptions, Trajectory};
use twistflow::geometry::{core_sup_abs, scalar_curvature, trace_twist, Normalization, TwistProfile};
use twistflow::mabuchi::{mabuchi_energy_path, PotentialPath};
use twistflow::monitors::{emit_report, monitor_report, Check, MonitorOptions, Verdict, VerdictStatus};
use twistflow::potential::gradient_energy;

use crate::config::{ConfigError, Format, Scenario, ScenarioConfig};
use crate::output::{self, ensure_dir};

/// Exit status of a subcommand: 0 success, 1 failed invariant or numerical
/// failure, 2 configuration error.
#[derive(Debug)]
pub enum Failure {
    Config(ConfigError),
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "configuration error: {e}"),
            Failure::Runtime(e) => write!(f, "run failed: {e}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<twistflow::Error> for Failure {
    fn from(e: twistflow::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(format!("i/o: {e}"))
    }
}

/// Tolerance of the unnormalized volume law `Vol(t) = Vol(0) + t(2∫α - 8π)`.
pub const VOLUME_LAW_TOLERANCE: f64 = 1e-8;
/// Tolerance of both Mabuchi agreement checks.
pub const MABUCHI_TOLERANCE: f64 = 1e-5;
/// Below this the initial Ricci potential counts as already converged.
pub const STATIONARY_OSC: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct EntropyEntry {
    pub tau: f64,
    pub mu: f64,
    pub euler_lagrange_residual: f64,
    pub constraint_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MabuchiSummary {
    pub along_flow: f64,
    pub sampled_flow_path: f64,
    pub linear_path: f64,
    pub terminal_dissipation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NonCollapsingSummary {
    /// Run bound on `|R - Tr β|` in the Riemannian normalization.
    pub k: f64,
    pub entropy_infimum: f64,
    pub kappa: f64,
    pub applicable: usize,
    pub min_ratio_margin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub scenario: String,
    pub status: VerdictStatus,
    pub exit_code: i32,
    pub mode: FlowMode,
    pub t_end: f64,
    pub samples: usize,
    pub class_drift: f64,
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceReport>,
    /// `W(g_tKE, const, ½)`, the limit of `μ(g(t), ½)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_impl: Option<f64>,
    /// `log(Vol/2π)`, the constant in the stated entropy limit.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_volume_over_2pi: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub entropy: Vec<EntropyEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mabuchi: Option<MabuchiSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub non_collapsing: Option<NonCollapsingSummary>,
}

#[derive(Debug)]
pub struct Outcome {
    pub report: Report,
    pub directory: PathBuf,
}

/// Run bound `K ≥ sup |R_R - Tr β|` over the recorded states.
fn curvature_bound(traj: &Trajectory, t: &TwistProfile) -> f64 {
    traj.states
        .iter()
        .map(|s| {
            let r = scalar_curvature(&s.metric);
            let tr = trace_twist(&s.metric, t, Normalization::Complex);
            2.0 * core_sup_abs(&s.metric, &r.zip_map(&tr, |a, b| a - b))
        })
        .fold(0.0, f64::max)
}

pub fn run_scenario(scenario: &Scenario) -> Result<Outcome, Failure> {
    let cfg = &scenario.config;
    let grid = scenario.grid()?;
    let twist = scenario.twist(grid)?;
    let initial = scenario.initial_metric(&twist)?;
    let mode: FlowMode = cfg.flow.mode.into();

    let state = FlowState::new(initial, twist.clone(), mode)?;
    let opts = RunOptions { sample_stride: cfg.flow.sample_stride, ..RunOptions::default() };
    let traj = run(state, cfg.flow.t_end, cfg.flow.dt, &opts)?;

    let (rows, report) = match mode {
        FlowMode::Normalized => analyse_normalized(cfg, &traj, &twist)?,
        FlowMode::Unnormalized => analyse_unnormalized(cfg, &traj, &twist),
    };
    let directory = write_artifacts(scenario, &traj, &rows, &report)?;
    Ok(Outcome { report, directory })
}

fn analyse_normalized(cfg: &ScenarioConfig, traj: &Trajectory, twist: &TwistProfile) -> Result<(Vec<Vec<f64>>, Report), Failure> {
    let a = &cfg.analyses;
    let reference = if a.gauge_reference || a.mu { Some(tke_reference(twist)?) } else { None };
    let mopts = MonitorOptions {
        with_mu: a.mu,
        with_diameter: a.diameter_bound,
        reference: if a.gauge_reference { reference.clone() } else { None },
    };
    let (series, verdict) = monitor_report(traj, twist, &mopts)?;
    let mut checks = verdict.checks;

    let osc: Vec<f64> = series.column(|s| s.osc_u);
    if osc[0] < STATIONARY_OSC {
        let worst = osc.iter().copied().fold(0.0, f64::max);
        checks.push(Check::at_most("stationary_osc_u", worst, STATIONARY_OSC));
    }

    let mut convergence = None;
    if let (true, Some(r)) = (a.gauge_reference, &reference) {
        match convergence_report(traj, r) {
            Ok(c) => {
                if !c.already_converged {
                    let (rate, r2) = c.osc_u.as_ref().map_or((f64::NAN, f64::NAN), |f| (f.rate, f.r_squared));
                    checks.push(Check::new(
                        "osc_u_decay_rate",
                        rate > 0.0 && r2 > 0.99,
                        rate,
                        format!("rate {rate:.4}, R^2 {r2:.6}"),
                    ));
                }
                convergence = Some(c);
            }
            Err(e) => checks.push(Check::new("osc_u_decay_rate", false, f64::NAN, e.to_string())),
        }
    }

    let last = traj.last();
    let mut entropy = Vec::new();
    for &tau in &a.entropy_taus {
        let r = minimize_w(&last.metric, twist, tau, 2e-10)?;
        entropy.push(EntropyEntry {
            tau,
            mu: r.mu,
            euler_lagrange_residual: r.euler_lagrange_residual,
            constraint_residual: r.constraint_residual,
        });
    }

    let mabuchi = if a.mabuchi_paths {
        let sampled = mabuchi_energy_path(&PotentialPath::from_trajectory(traj)?)?;
        let first = traj.first();
        let linear = mabuchi_energy_path(&PotentialPath::linear_to(first.metric.clone(), twist.clone(), &last.metric, &last.phi, 65)?)?;
        let along = last.mabuchi;
        checks.push(Check::at_most("mabuchi_flow_vs_path", (along - sampled).abs(), MABUCHI_TOLERANCE));
        checks.push(Check::at_most("mabuchi_path_independence", (linear - sampled).abs(), MABUCHI_TOLERANCE));
        let dissipation = gradient_energy(&last.metric, last.potential.as_ref().expect("normalized"));
        Some(MabuchiSummary { along_flow: along, sampled_flow_path: sampled, linear_path: linear, terminal_dissipation: dissipation })
    } else {
        None
    };

    let stability = if a.stability_amplitudes.is_empty() {
        None
    } else {
        let rep = stability_experiment(twist, &a.stability_amplitudes, cfg.flow.t_end, cfg.flow.dt)?;
        for c in &rep.cases {
            let name = format!("stability_amplitude_{}", c.amplitude);
            checks.push(Check::new(&name, c.converged, -c.final_distance, format!("final gauge distance {:.3e}", c.final_distance)));
        }
        Some(rep)
    };

    let non_collapsing = if a.non_collapsing_radii.is_empty() {
        None
    } else {
        let k = curvature_bound(traj, twist);
        let a_one = entropy_infimum(&traj.first().metric, twist, 1.0)?.value;
        let mut applicable = 0;
        let mut margin = f64::INFINITY;
        let mut pass = true;
        for s in &traj.states {
            let rep = check_non_collapsing(&s.metric, twist, &a.non_collapsing_radii, k, a_one)?;
            pass &= rep.all_pass();
            for e in rep.entries.iter().filter(|e| e.applicable) {
                applicable += 1;
                margin = margin.min(e.volume / e.bound - 1.0);
            }
        }
        checks.push(Check::new("non_collapsing", pass, margin, format!("{applicable} applicable balls, K = {k:.4}")));
        Some(NonCollapsingSummary { k, entropy_infimum: a_one, kappa: kappa(k, 1.0, a_one), applicable, min_ratio_margin: margin })
    };

    let verdict = emit_report(checks);
    let report = Report {
        scenario: cfg.name.clone(),
        status: verdict.status,
        exit_code: verdict.exit_code(),
        mode: FlowMode::Normalized,
        t_end: last.time,
        samples: traj.states.len(),
        class_drift: last.class_drift,
        checks: verdict.checks,
        convergence,
        lambda_impl: reference.as_ref().map(|r| lambda_impl(r, twist)),
        log_volume_over_2pi: reference.as_ref().map(|r| (r.volume() / (2.0 * PI)).ln()),
        entropy,
        mabuchi,
        stability,
        non_collapsing,
    };
    Ok((output::monitor_rows(&series), report))
}

fn analyse_unnormalized(cfg: &ScenarioConfig, traj: &Trajectory, twist: &TwistProfile) -> (Vec<Vec<f64>>, Report) {
    let rows = output::geometry_rows(&traj.states);
    let v0 = traj.first().metric.volume();
    let slope = 4.0 * PI * twist.mass() - 8.0 * PI;
    let dev = traj.states.iter().map(|s| (s.metric.volume() - v0 - s.time * slope).abs()).fold(0.0, f64::max);
    let finite = rows.iter().all(|r| [r[0], r[1], r[2], r[10]].iter().all(|v| v.is_finite()));
    let verdict: Verdict = emit_report(vec![
        Check::new("series_finite", finite, 0.0, "all monitored quantities finite"),
        Check::at_most("volume_law", dev, VOLUME_LAW_TOLERANCE),
    ]);
    let report = Report {
        scenario: cfg.name.clone(),
        status: verdict.status,
        exit_code: verdict.exit_code(),
        mode: FlowMode::Unnormalized,
        t_end: traj.last().time,
        samples: traj.states.len(),
        class_drift: traj.last().class_drift,
        checks: verdict.checks,
        convergence: None,
        lambda_impl: None,
        log_volume_over_2pi: None,
        entropy: Vec::new(),
        mabuchi: None,
        stability: None,
        non_collapsing: None,
    };
    (rows, report)
}

fn write_artifacts(scenario: &Scenario, traj: &Trajectory, rows: &[Vec<f64>], report: &Report) -> Result<PathBuf, Failure> {
    let cfg = &scenario.config;
    let dir = ensure_dir(&scenario.output_dir())?;
    if cfg.output.formats.contains(&Format::Csv) {
        output::write_trajectory(&dir.join("trajectory.csv"), rows)?;
        let snaps = ensure_dir(&dir.join("snapshots"))?;
        let n = traj.states.len();
        for (k, s) in traj.states.iter().enumerate() {
            if k % cfg.output.snapshot_stride == 0 || k + 1 == n {
                output::write_snapshot(&snaps.join(output::snapshot_name(s.time)), s)?;
            }
        }
    }
    if cfg.output.formats.contains(&Format::Json) {
        output::write_json(&dir.join("report.json"), report)?;
    }
    output::write_json(&dir.join("config_echo.json"), cfg)?;
    Ok(dir)
}

pub fn print_summary(outcome: &Outcome) {
    let r = &outcome.report;
    for c in &r.checks {
        println!("  {} {:<32} margin {:>11.3e}  {}", if c.pass { "ok  " } else { "FAIL" }, c.name, c.margin, c.detail);
    }
    println!("{}: {:?} after t = {} ({} samples) -> {}", r.scenario, r.status, r.t_end, r.samples, outcome.directory.display());
}

/// Runs a scenario named by path or bundled name, printing its checks.
pub fn run_command(spec: &str) -> i32 {
    match Scenario::load(spec).map_err(Failure::from).and_then(|s| run_scenario(&s)) {
        Ok(outcome) => {
            print_summary(&outcome);
            outcome.report.exit_code
        }
        Err(e) => {
            eprintln!("{spec}: {e}");
            e.exit_code()
        }
    }
}
