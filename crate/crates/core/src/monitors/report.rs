use serde::{Deserialize, Serialize};

use super::{monitor_series, perelman_bounds_check, MonitorSeries};
use crate::entropy::{check_diameter_bound, constant_test_value, entropy_infimum};
use crate::error::Result;
use crate::flow::Trajectory;
use crate::geometry::{
    core_sup_abs, laplacian, scalar_curvature, trace_twist, MetricProfile, Normalization, TwistProfile,
    CLASS_TOLERANCE,
};

/// Tolerated decrease of `μ(·, ½)` between samples.
pub const MU_MONOTONE_TOLERANCE: f64 = 1e-7;
/// Tolerated defect of `Δu = 1 + Tr α - R` on the core.
pub const TRACE_TOLERANCE: f64 = 1e-5;
/// Tolerated relative volume drift of the normalized flow.
pub const VOLUME_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    /// Signed distance to the threshold; negative when violated.
    pub margin: f64,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, pass: bool, margin: f64, detail: impl Into<String>) -> Self {
        Self { name: name.to_string(), pass, margin, detail: detail.into() }
    }

    /// Passes when `value ≤ limit`.
    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self::new(name, value <= limit, limit - value, format!("{value:.3e} <= {limit:.1e}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictStatus {
    Passed,
    Failed,
    /// Nothing was checked.
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub status: VerdictStatus,
    pub checks: Vec<Check>,
}

impl Verdict {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn exit_code(&self) -> i32 {
        match self.status {
            VerdictStatus::Failed => 1,
            VerdictStatus::Passed | VerdictStatus::Empty => 0,
        }
    }

    pub fn merge(mut self, other: Verdict) -> Verdict {
        self.checks.extend(other.checks);
        emit_report(self.checks)
    }
}

pub fn emit_report(checks: Vec<Check>) -> Verdict {
    let status = if checks.is_empty() {
        VerdictStatus::Empty
    } else if checks.iter().all(|c| c.pass) {
        VerdictStatus::Passed
    } else {
        VerdictStatus::Failed
    };
    Verdict { status, checks }
}

#[derive(Debug, Clone, Default)]
pub struct MonitorOptions {
    /// Solve for `μ(·, ½)` at every sample.
    pub with_mu: bool,
    /// Evaluate the entropy infimum and the diameter bound.
    pub with_diameter: bool,
    /// Reference for the gauge distance column.
    pub reference: Option<MetricProfile>,
}

/// Checks a normalized trajectory against the twist it is declared to
/// solve. Normally `declared` is the trajectory's own twist; a different one
/// (such as a sign-flipped fixture) makes the class and trace checks fail.
pub fn monitor_report(
    traj: &Trajectory,
    declared: &TwistProfile,
    opts: &MonitorOptions,
) -> Result<(MonitorSeries, Verdict)> {
    if traj.states.is_empty() {
        return Ok((MonitorSeries::default(), emit_report(Vec::new())));
    }
    let series = monitor_series(traj, opts.with_mu, opts.reference.as_ref())?;
    let mut checks = Vec::new();
    checks.push(Check::new("series_finite", series.all_finite(), 0.0, "all monitored quantities finite"));

    let mut class = 0.0f64;
    let mut trace = 0.0f64;
    for s in &traj.states {
        let m = &s.metric;
        class = class.max((m.class_size() + declared.mass() - 2.0).abs());
        if let Some(p) = &s.potential {
            let lap = laplacian(m, &p.u, Normalization::Complex);
            let rhs = trace_twist(m, declared, Normalization::Complex).zip_map(&scalar_curvature(m), |t, r| 1.0 + t - r);
            trace = trace.max(core_sup_abs(m, &lap.zip_map(&rhs, |a, b| a - b)));
        }
    }
    checks.push(Check::at_most("class", class, CLASS_TOLERANCE));
    checks.push(Check::at_most("ricci_potential_trace", trace, TRACE_TOLERANCE));

    let v0 = series.samples[0].volume;
    let vol = series.samples.iter().map(|s| (s.volume / v0 - 1.0).abs()).fold(0.0, f64::max);
    checks.push(Check::at_most("volume_preserved", vol, VOLUME_TOLERANCE));

    let bounds = perelman_bounds_check(traj)?;
    for b in &bounds.checks {
        checks.push(Check::new(&b.name, b.pass, b.margin, format!("B = {:.6}", bounds.b)));
    }

    if opts.with_mu {
        let mus: Vec<f64> = series.samples.iter().filter_map(|s| s.mu).collect();
        let decrease = mus.windows(2).map(|p| p[0] - p[1]).fold(0.0, f64::max);
        checks.push(Check::at_most("mu_nondecreasing", decrease, MU_MONOTONE_TOLERANCE));
        let excess = traj
            .states
            .iter()
            .zip(&mus)
            .map(|(s, mu)| mu - constant_test_value(&s.metric, declared))
            .fold(f64::NEG_INFINITY, f64::max);
        checks.push(Check::at_most("mu_below_constant_test_value", excess, 1e-9));
    }

    if opts.with_diameter {
        let first = &traj.first().metric;
        let a_half = entropy_infimum(first, declared, 0.5)?.value;
        // K bounds |R - Tr β| (Riemannian) along the run
        let k = traj
            .states
            .iter()
            .map(|s| {
                let r = scalar_curvature(&s.metric);
                let tr = trace_twist(&s.metric, declared, Normalization::Complex);
                2.0 * core_sup_abs(&s.metric, &r.zip_map(&tr, |a, b| a - b))
            })
            .fold(0.0, f64::max);
        let worst = traj
            .states
            .iter()
            .map(|s| check_diameter_bound(&s.metric, k, a_half))
            .fold(f64::INFINITY, |m, c| m.min(c.bound - c.diameter));
        checks.push(Check::new("diameter_bound", worst >= 0.0, worst, format!("K = {k:.4}, A(1/2) = {a_half:.6}")));
    }
    Ok((series, emit_report(checks)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{run, FlowMode, FlowState, RunOptions};
    use crate::numerics::{Field, Grid};

    #[test]
    fn clean_kahler_einstein_run_passes() {
        let g = Grid::standard();
        let t = TwistProfile::sech2(g, 0.25).unwrap();
        let m = MetricProfile::scaled_fubini_study(g, 0.75);
        let traj = run(FlowState::new(m, t.clone(), FlowMode::Normalized).unwrap(), 0.5, 0.05, &RunOptions::default())
            .unwrap();
        let (_, v) = monitor_report(&traj, &t, &MonitorOptions { with_mu: true, ..Default::default() }).unwrap();
        assert_eq!(v.status, VerdictStatus::Passed, "{v:?}");
    }

    #[test]
    fn sign_flipped_twist_fails_loudly() {
        let g = Grid::standard();
        let t = TwistProfile::sech2(g, 0.25).unwrap();
        let flipped = TwistProfile::new_unchecked(t.a().map(|a| -a));
        // a metric in the class of the flipped twist, so the run itself is valid
        let m = MetricProfile::scaled_fubini_study(g, 1.25).with_potential(&Field::from_fn(g, |x| 0.05 * (-x * x).exp())).unwrap();
        let traj = run(FlowState::new(m, flipped, FlowMode::Normalized).unwrap(), 0.2, 0.05, &RunOptions::default()).unwrap();
        let (_, v) = monitor_report(&traj, &t, &MonitorOptions::default()).unwrap();
        assert_eq!(v.status, VerdictStatus::Failed);
        let failed: Vec<&str> = v.failures().map(|c| c.name.as_str()).collect();
        assert!(failed.contains(&"class") && failed.contains(&"ricci_potential_trace"), "{failed:?}");
        assert_eq!(v.exit_code(), 1);
    }

    #[test]
    fn empty_verdict_is_not_a_failure() {
        let v = emit_report(Vec::new());
        assert_eq!(v.status, VerdictStatus::Empty);
        assert_eq!(v.exit_code(), 0);
    }
}
