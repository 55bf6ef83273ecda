//! Implicit time stepping of the normalized flow `ḣ = h + a + ½(log h)_xx`
//! and the unnormalized flow `ḣ = (log h)_xx + 2a`.
//!
//! The unknown of each implicit stage is `v = log h`, so positivity of `h`
//! is built in. Only the normalized flow carries a potential: `φ̇ = u`
//! with the normalized Ricci potential.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{integrate_with_tails, reference_log_density, validate_class, MetricProfile, TwistProfile};
use crate::numerics::{newton_solve, BandMatrix, DiffOrder, Field, NewtonOptions, StencilRow};
use crate::potential::{gradient_energy, solve_ricci_potential, RicciPotential};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowMode {
    Normalized,
    Unnormalized,
}

/// Fraction of the initial minimum of `h` below which the unnormalized flow
/// is considered extinct.
pub const EXTINCTION_FRACTION: f64 = 1e-6;

/// Stage fraction of the trapezoidal substep in TR-BDF2.
const TR_BDF2_GAMMA: f64 = 2.0 - std::f64::consts::SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeScheme {
    /// Implicit trapezoidal rule. Its amplification tends to `-1` on the
    /// stiff polar modes (diffusivity `~1/h`), so errors there never decay.
    CrankNicolson,
    /// A trapezoidal substep to `t + γ dt` followed by BDF2: second order
    /// and L-stable, which damps the polar modes.
    #[default]
    TrBdf2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions {
    pub newton: NewtonOptions,
    pub scheme: TimeScheme,
    /// Rescale `h` after each normalized step so that `L + A = 2` holds to
    /// roundoff. The class direction is linearly unstable (`L̇ = L + A - 2`),
    /// so without this the discretization error grows like `e^t`.
    pub project_class: bool,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self { newton: NewtonOptions { tol: 1e-11, max_iter: 30, min_damping: 1e-4 }, scheme: TimeScheme::TrBdf2, project_class: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub time: f64,
    pub mode: FlowMode,
    pub metric: MetricProfile,
    pub twist: Arc<TwistProfile>,
    /// Accumulated potential, `φ(0) = 0`; stays zero for the unnormalized flow.
    pub phi: Field,
    /// Normalized Ricci potential; `None` along the unnormalized flow.
    pub potential: Option<RicciPotential>,
    /// `-∫₀ᵗ ∫ |∇u|² dm ds` by the trapezoid rule in time.
    pub mabuchi: f64,
    /// Largest class defect `|L + A - 2|` removed by projection so far.
    pub class_drift: f64,
    initial_min_h: f64,
}

impl FlowState {
    pub fn new(metric: MetricProfile, twist: TwistProfile, mode: FlowMode) -> Result<Self> {
        validate_class(&metric, &twist)?;
        let potential = match mode {
            FlowMode::Normalized => Some(solve_ricci_potential(&metric, &twist)?),
            FlowMode::Unnormalized => None,
        };
        Ok(Self {
            time: 0.0,
            mode,
            phi: Field::zeros(*metric.grid()),
            initial_min_h: metric.h().min(),
            metric,
            twist: Arc::new(twist),
            potential,
            mabuchi: 0.0,
            class_drift: 0.0,
        })
    }

    pub fn u(&self) -> Option<&Field> {
        self.potential.as_ref().map(|p| &p.u)
    }
}

/// Second-derivative rows of `v` relative to the round reference, as in
/// [`crate::geometry::log_derivatives`].
pub(crate) struct Operator {
    pub(crate) rows: Vec<StencilRow>,
    ref_values: Vec<f64>,
    ref_d2: Vec<f64>,
    pub(crate) inv_dx2: f64,
    pub(crate) dx: f64,
}

impl Operator {
    pub(crate) fn new(m: &MetricProfile) -> Self {
        let g = m.grid();
        let n = g.n_nodes();
        Self {
            rows: (0..n).map(|i| StencilRow::second_derivative(i, n, DiffOrder::Sixth)).collect(),
            ref_values: g.nodes().iter().map(|&x| reference_log_density(x)).collect(),
            ref_d2: g.nodes().iter().map(|&x| -2.0 / (x.cosh() * x.cosh())).collect(),
            inv_dx2: 1.0 / (g.spacing() * g.spacing()),
            dx: g.spacing(),
        }
    }

    pub(crate) fn d2(&self, v: &[f64], i: usize) -> f64 {
        let row = &self.rows[i];
        let mut s = 0.0;
        for (k, c) in row.coeffs.iter().enumerate() {
            let j = row.start + k;
            s += c * (v[j] - self.ref_values[j]);
        }
        s * self.inv_dx2 + self.ref_d2[i]
    }
}

/// Right-hand side `ḣ` at one node.
fn rate(mode: FlowMode, h: f64, a: f64, d2v: f64) -> f64 {
    match mode {
        FlowMode::Normalized => h + a + 0.5 * d2v,
        FlowMode::Unnormalized => d2v + 2.0 * a,
    }
}

/// `ḣ` of the current state, with the same discretization as the stepper.
pub fn time_derivative(state: &FlowState) -> Field {
    let op = Operator::new(&state.metric);
    let v = state.metric.log_h().values();
    let a = state.twist.a().values();
    let h = state.metric.h().values();
    Field::new(*state.metric.grid(), (0..v.len()).map(|i| rate(state.mode, h[i], a[i], op.d2(v, i))).collect())
        .expect("finite rate")
}

/// Solves `e^v - c·rate(v) = b` on the interior with the pole rows.
fn implicit_stage(state: &FlowState, op: &Operator, b: &[f64], c: f64, init: Vec<f64>, opts: &StepOptions) -> Result<Vec<f64>> {
    let mode = state.mode;
    let a = state.twist.a().values();
    let n = b.len();
    let coupling = match mode {
        FlowMode::Normalized => 0.5,
        FlowMode::Unnormalized => 1.0,
    };
    let eval = |v: &[f64]| -> Result<(Vec<f64>, BandMatrix)> {
        if let Some(i) = v.iter().position(|x| !x.is_finite() || *x < -700.0) {
            return Err(Error::PositivityLoss { node: i });
        }
        let mut r = vec![0.0; n];
        let mut jac = BandMatrix::zeros(n, 3, 3);
        pole_rows(v, op.dx, &mut r, &mut jac);
        for i in 1..n - 1 {
            let e = v[i].exp();
            r[i] = e - b[i] - c * rate(mode, e, a[i], op.d2(v, i));
            let de = match mode {
                FlowMode::Normalized => e * (1.0 - c),
                FlowMode::Unnormalized => e,
            };
            let row = &op.rows[i];
            for (k, w) in row.coeffs.iter().enumerate() {
                jac.add(i, row.start + k, -c * coupling * w * op.inv_dx2);
            }
            jac.add(i, i, de);
        }
        Ok((r, jac))
    };
    Ok(newton_solve(eval, init, &opts.newton)?.solution)
}

fn implicit_solve(state: &FlowState, dt: f64, opts: &StepOptions) -> Result<Vec<f64>> {
    let op = Operator::new(&state.metric);
    let v0 = state.metric.log_h().values();
    let h0 = state.metric.h().values();
    let a = state.twist.a().values();
    let f0: Vec<f64> = (0..v0.len()).map(|i| rate(state.mode, h0[i], a[i], op.d2(v0, i))).collect();
    let trapezoid = |frac: f64| -> Result<Vec<f64>> {
        let c = 0.5 * frac * dt;
        let b: Vec<f64> = h0.iter().zip(&f0).map(|(h, f)| h + c * f).collect();
        implicit_stage(state, &op, &b, c, v0.to_vec(), opts)
    };
    match opts.scheme {
        TimeScheme::CrankNicolson => trapezoid(1.0),
        TimeScheme::TrBdf2 => {
            let g = TR_BDF2_GAMMA;
            let mid = trapezoid(g)?;
            let norm = g * (2.0 - g);
            let b: Vec<f64> =
                mid.iter().zip(h0).map(|(v, h)| (v.exp() - (1.0 - g) * (1.0 - g) * h) / norm).collect();
            implicit_stage(state, &op, &b, (1.0 - g) / (2.0 - g) * dt, mid, opts)
        }
    }
}

/// Pole conditions `v_x = ±(2 - h - a)` at the two ends, written as
/// one-sided differences. The `O(h)` term is the curvature correction of the
/// pole asymptotics `(log h)_x = 2 - R h + …`, exact for the twisted
/// Kähler-Einstein profiles where `R h = h + a`.
pub(crate) fn robin_rows(v: &[f64], a: &[f64], dx: f64, r: &mut [f64], jac: &mut BandMatrix) {
    let n = v.len();
    let (e0, e1) = (v[0].exp(), v[n - 1].exp());
    r[0] = (v[1] - v[0]) / dx - (2.0 - e0 - a[0]);
    jac.set(0, 0, -1.0 / dx + e0);
    jac.set(0, 1, 1.0 / dx);
    r[n - 1] = (v[n - 1] - v[n - 2]) / dx + (2.0 - e1 - a[n - 1]);
    jac.set(n - 1, n - 1, 1.0 / dx - e1);
    jac.set(n - 1, n - 2, -1.0 / dx);
}

/// Pole conditions for the flow: `v_x ∓ ½ v_xx = ±2` at the two ends. A
/// smooth invariant metric has `v = ±2x + c + d e^{±2x} + …` near a pole, and
/// the condition holds for every such expansion, whatever the pole curvature.
/// One-sided four-point stencils keep the rows inside the band; rows are
/// scaled by `dx²` so their roundoff matches the interior rows.
pub(crate) fn pole_rows(v: &[f64], dx: f64, r: &mut [f64], jac: &mut BandMatrix) {
    const D1: [f64; 4] = [-11.0 / 6.0, 3.0, -1.5, 1.0 / 3.0];
    const D2: [f64; 4] = [2.0, -5.0, 4.0, -1.0];
    let n = v.len();
    let left: Vec<f64> = (0..4).map(|k| D1[k] * dx - 0.5 * D2[k]).collect();
    let right: Vec<f64> = (0..4).map(|k| -D1[k] * dx + 0.5 * D2[k]).collect();
    r[0] = (0..4).map(|k| left[k] * v[k]).sum::<f64>() - 2.0 * dx * dx;
    r[n - 1] = (0..4).map(|k| right[k] * v[n - 1 - k]).sum::<f64>() + 2.0 * dx * dx;
    for k in 0..4 {
        jac.set(0, k, left[k]);
        jac.set(n - 1, n - 1 - k, right[k]);
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt <= 0.5 {
        Ok(())
    } else {
        Err(Error::InvalidTimeStep(dt))
    }
}

pub fn step_normalized(s: &FlowState, dt: f64) -> Result<FlowState> {
    step_with(s, dt, &StepOptions::default())
}

pub fn step_unnormalized(s: &FlowState, dt: f64) -> Result<FlowState> {
    step_with(s, dt, &StepOptions::default())
}

/// One implicit step in the state's own mode.
pub fn step_with(s: &FlowState, dt: f64, opts: &StepOptions) -> Result<FlowState> {
    check_dt(dt)?;
    if s.mode == FlowMode::Unnormalized && s.time + dt >= 0.5 {
        return Err(Error::ExtinctionApproached { time: s.time + dt });
    }
    let mut v = implicit_solve(s, dt, opts)?;
    let grid = *s.metric.grid();
    let mut class_drift = s.class_drift;
    if s.mode == FlowMode::Normalized && opts.project_class {
        let h: Vec<f64> = v.iter().map(|x| x.exp()).collect();
        let l = integrate_with_tails(&h, grid.spacing());
        let target = 2.0 - s.twist.mass();
        class_drift = class_drift.max((l - target).abs());
        let shift = (target / l).ln();
        v.iter_mut().for_each(|x| *x += shift);
    }
    let metric = MetricProfile::from_log(Field::new(grid, v)?)?;
    if s.mode == FlowMode::Unnormalized && metric.h().min() < EXTINCTION_FRACTION * s.initial_min_h {
        return Err(Error::ExtinctionApproached { time: s.time + dt });
    }
    let (potential, phi, mabuchi) = match (&s.potential, s.mode) {
        (Some(old), FlowMode::Normalized) => {
            let new = solve_ricci_potential(&metric, &s.twist)?;
            let phi = s.phi.zip_map(&old.u.zip_map(&new.u, |a, b| a + b), |p, w| p + 0.5 * dt * w);
            let dissipation = gradient_energy(&s.metric, old) + gradient_energy(&metric, &new);
            (Some(new), phi, s.mabuchi - 0.5 * dt * dissipation)
        }
        _ => (None, s.phi.clone(), s.mabuchi),
    };
    Ok(FlowState {
        time: s.time + dt,
        mode: s.mode,
        metric,
        twist: Arc::clone(&s.twist),
        phi,
        potential,
        mabuchi,
        class_drift,
        initial_min_h: s.initial_min_h,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    /// Record every `sample_stride`-th step (the final state is always kept).
    pub sample_stride: usize,
    /// Successive halvings of a failing step before giving up.
    pub max_halvings: u32,
    pub step: StepOptions,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { sample_stride: 10, max_halvings: 10, step: StepOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub mode: FlowMode,
    pub dt: f64,
    pub states: Vec<FlowState>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.time).collect()
    }

    pub fn first(&self) -> &FlowState {
        &self.states[0]
    }

    pub fn last(&self) -> &FlowState {
        self.states.last().expect("trajectories are never empty")
    }

    pub fn twist(&self) -> &TwistProfile {
        &self.states[0].twist
    }

    /// Profile at time `t` by cubic Lagrange interpolation in time.
    pub fn interpolate_h(&self, t: f64) -> Field {
        let times = self.times();
        let n = times.len();
        if n == 1 {
            return self.states[0].metric.h().clone();
        }
        let k = times.partition_point(|&s| s <= t).clamp(1, n - 1);
        let points = 4.min(n);
        let start = (k as isize - points as isize / 2).clamp(0, (n - points) as isize) as usize;
        let idx: Vec<usize> = (start..start + points).collect();
        let grid = *self.states[0].metric.grid();
        let mut out = vec![0.0; grid.n_nodes()];
        for &j in &idx {
            let mut w = 1.0;
            for &l in &idx {
                if l != j {
                    w *= (t - times[l]) / (times[j] - times[l]);
                }
            }
            for (o, h) in out.iter_mut().zip(self.states[j].metric.h().values()) {
                *o += w * h;
            }
        }
        Field::new(grid, out).expect("finite interpolant")
    }
}

fn recoverable(e: &Error) -> bool {
    matches!(
        e,
        Error::PositivityLoss { .. }
            | Error::NoConvergence { .. }
            | Error::StepCollapse { .. }
            | Error::InvalidTimeStep(_)
            | Error::InvalidMetric(_)
            | Error::SingularSystem { .. }
            | Error::SolvabilityDefect { .. }
            | Error::NonFinite(_)
    )
}

fn advance(s: &FlowState, dt: f64, depth: u32, opts: &RunOptions) -> Result<FlowState> {
    match step_with(s, dt, &opts.step) {
        Ok(next) => Ok(next),
        Err(e) if recoverable(&e) => {
            if depth >= opts.max_halvings {
                let residual = match e {
                    Error::StepCollapse { residual, .. } | Error::NoConvergence { residual, .. } => residual,
                    _ => f64::NAN,
                };
                return Err(Error::StepCollapse { iteration: depth as usize, residual });
            }
            let mid = advance(s, 0.5 * dt, depth + 1, opts)?;
            advance(&mid, 0.5 * dt, depth + 1, opts)
        }
        Err(e) => Err(e),
    }
}

/// Fixed-step integration to `t_end`, halving a failing step up to
/// `max_halvings` times.
pub fn run(initial: FlowState, t_end: f64, dt: f64, opts: &RunOptions) -> Result<Trajectory> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidTimeStep(dt));
    }
    if !(t_end >= initial.time) {
        return Err(Error::InvalidArgument(format!("t_end {t_end} precedes the initial time")));
    }
    let stride = opts.sample_stride.max(1);
    let span = t_end - initial.time;
    let steps = (span / dt - 1e-9).ceil().max(0.0) as usize;
    let mode = initial.mode;
    let mut states = vec![initial];
    let mut current = states[0].clone();
    for k in 0..steps {
        let target = states[0].time + span * (k + 1) as f64 / steps as f64;
        current = advance(&current, target - current.time, 0, opts)?;
        current.time = target;
        if (k + 1) % stride == 0 || k + 1 == steps {
            states.push(current.clone());
        }
    }
    Ok(Trajectory { mode, dt, states })
}

/// `sup_t ‖h̃(t) - (1-2t) h(-log(1-2t))‖∞ / max h̃(t)` over the samples of
/// the unnormalized trajectory.
pub fn rescaling_correspondence_check(normalized: &Trajectory, unnormalized: &Trajectory) -> f64 {
    unnormalized
        .states
        .iter()
        .map(|s| {
            let t = s.time;
            let scaled = normalized.interpolate_h(-(1.0 - 2.0 * t).ln()).map(|h| (1.0 - 2.0 * t) * h);
            s.metric.h().sup_distance(&scaled) / s.metric.h().max()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Grid;

    fn perturbed(g: Grid, amplitude: f64) -> MetricProfile {
        MetricProfile::fubini_study(g).with_potential(&Field::from_fn(g, |x| amplitude * (-x * x).exp())).unwrap()
    }

    #[test]
    fn round_metric_is_stationary() {
        let g = Grid::standard();
        let s = FlowState::new(MetricProfile::fubini_study(g), TwistProfile::zero(g), FlowMode::Normalized).unwrap();
        let next = step_normalized(&s, 0.01).unwrap();
        assert!(next.metric.h().sup_distance(s.metric.h()) < 1e-8);
        let m = MetricProfile::scaled_fubini_study(g, 0.75);
        let s = FlowState::new(m, TwistProfile::sech2(g, 0.25).unwrap(), FlowMode::Normalized).unwrap();
        let next = step_normalized(&s, 0.01).unwrap();
        assert!(next.metric.h().sup_distance(s.metric.h()) < 1e-8);
    }

    #[test]
    fn perturbed_step_keeps_volume() {
        let g = Grid::standard();
        let s = FlowState::new(perturbed(g, 0.05), TwistProfile::zero(g), FlowMode::Normalized).unwrap();
        let opts = StepOptions { project_class: false, ..StepOptions::default() };
        let next = step_with(&s, 0.05, &opts).unwrap();
        assert!((next.metric.volume() / s.metric.volume() - 1.0).abs() < 1e-8);
        assert!(next.metric.h().sup_distance(s.metric.h()) > 1e-4);
    }

    #[test]
    fn unnormalized_round_shrinks_linearly() {
        let g = Grid::standard();
        let mut s = FlowState::new(MetricProfile::fubini_study(g), TwistProfile::zero(g), FlowMode::Unnormalized).unwrap();
        for _ in 0..10 {
            s = step_unnormalized(&s, 0.01).unwrap();
        }
        let exact = MetricProfile::scaled_fubini_study(g, 0.8);
        assert!(s.metric.h().sup_distance(exact.h()) < 1e-6);
        let v = s.metric.volume() - 2.0 * std::f64::consts::PI * 2.0;
        assert!((v - 0.1 * (-8.0 * std::f64::consts::PI)).abs() < 1e-8);
        let late = FlowState { time: 0.495, ..s };
        assert!(matches!(step_unnormalized(&late, 0.01), Err(Error::ExtinctionApproached { .. })));
    }

    #[test]
    fn bad_time_steps() {
        let g = Grid::standard();
        let s = FlowState::new(MetricProfile::fubini_study(g), TwistProfile::zero(g), FlowMode::Normalized).unwrap();
        assert!(matches!(step_normalized(&s, 0.0), Err(Error::InvalidTimeStep(_))));
        assert!(matches!(step_normalized(&s, 0.7), Err(Error::InvalidTimeStep(_))));
    }

    #[test]
    fn hostile_data_collapses() {
        let g = Grid::new(10.0, 401).unwrap();
        let m = MetricProfile::fubini_study(g).with_potential(&Field::from_fn(g, |x| 0.9 * (-40.0 * x * x).exp() / 40.0)).unwrap();
        let s = FlowState::new(m, TwistProfile::zero(g), FlowMode::Normalized).unwrap();
        let opts = RunOptions {
            max_halvings: 2,
            step: StepOptions { newton: NewtonOptions { tol: 1e-11, max_iter: 1, min_damping: 0.5 }, ..StepOptions::default() },
            ..RunOptions::default()
        };
        assert!(matches!(run(s, 20.0, 10.0, &opts), Err(Error::StepCollapse { .. })));
    }

    #[test]
    fn zero_horizon_correspondence() {
        let g = Grid::standard();
        let m = perturbed(g, 0.05);
        let n = run(FlowState::new(m.clone(), TwistProfile::zero(g), FlowMode::Normalized).unwrap(), 0.0, 0.01, &RunOptions::default()).unwrap();
        let u = run(FlowState::new(m, TwistProfile::zero(g), FlowMode::Unnormalized).unwrap(), 0.0, 0.01, &RunOptions::default()).unwrap();
        assert_eq!(rescaling_correspondence_check(&n, &u), 0.0);
    }
}
