//! Running estimates along normalized trajectories, sublevel diagnostics and
//! the aggregated pass/fail verdict.

mod identities;
mod report;

pub use identities::{
    identity_residuals, identity_residuals_on, semidiscrete_identity_residuals, IdentityResiduals, BULK_FRACTION,
};
pub use report::{emit_report, monitor_report, Check, MonitorOptions, Verdict, VerdictStatus};

use serde::{Deserialize, Serialize};

use crate::einstein::gauge_distance;
use crate::entropy::{minimize_w, w_functional};
use crate::error::{Error, Result};
use crate::flow::{FlowMode, Trajectory};
use crate::geometry::{
    core_range, core_sup_abs, diameter, grad_sq, laplacian, scalar_curvature, MetricProfile,
    Normalization, TwistProfile,
};
use crate::numerics::Field;
use crate::potential::c_constant;

const C: Normalization = Normalization::Complex;

/// Relative slack of every pointwise inequality.
pub const BOUND_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorSample {
    pub t: f64,
    pub volume: f64,
    pub min_h: f64,
    pub sup_u: f64,
    pub osc_u: f64,
    /// `sup |∇u|` in the complex normalization.
    pub sup_grad_u: f64,
    pub sup_lap_u: f64,
    pub c: f64,
    pub mu: Option<f64>,
    /// `W(g, u + const, ½)` with the constant fixed by the constraint; equals
    /// `μ` once the minimizer is `u` up to a constant.
    pub w_proxy: f64,
    pub mabuchi: f64,
    pub diameter: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub d_gauge: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MonitorSeries {
    pub samples: Vec<MonitorSample>,
}

impl MonitorSeries {
    pub fn column(&self, f: impl Fn(&MonitorSample) -> f64) -> Vec<f64> {
        self.samples.iter().map(f).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.samples.iter().all(|s| {
            [s.t, s.volume, s.min_h, s.sup_u, s.osc_u, s.sup_grad_u, s.sup_lap_u, s.c, s.w_proxy, s.mabuchi, s.diameter]
                .iter()
                .chain(s.mu.iter())
                .chain(s.d_gauge.iter())
                .all(|v| v.is_finite())
        })
    }
}

/// Normalizes `f = u + k` so that `(4πτ)⁻¹ ∫ e^{-f} dm = 1` at `τ = ½`.
fn proxy_function(m: &MetricProfile, u: &Field) -> Field {
    let e: Vec<f64> = u.values().iter().map(|v| (-v).exp()).collect();
    let k = (m.integrate_dm(&e) / (2.0 * std::f64::consts::PI)).ln();
    u.map(|v| v + k)
}

/// Samples every recorded state; `μ` is computed only when `with_mu`, and
/// the gauge distance only when a reference is given.
pub fn monitor_series(traj: &Trajectory, with_mu: bool, reference: Option<&MetricProfile>) -> Result<MonitorSeries> {
    if traj.mode != FlowMode::Normalized {
        return Err(Error::InvalidArgument("monitors need a normalized trajectory".into()));
    }
    let twist = traj.twist();
    let mut samples = Vec::with_capacity(traj.states.len());
    for s in &traj.states {
        let m = &s.metric;
        let p = s.potential.as_ref().expect("normalized states carry a potential");
        let u = &p.u;
        let (r_min, r_max) = core_range(m, &scalar_curvature(m));
        let mu = if with_mu { Some(minimize_w(m, twist, 0.5, 1e-10)?.mu) } else { None };
        let d_gauge = match reference {
            Some(r) => Some(gauge_distance(m, r, twist)?.d),
            None => None,
        };
        samples.push(MonitorSample {
            t: s.time,
            volume: m.volume(),
            min_h: m.h().min(),
            sup_u: u.sup_abs(),
            osc_u: u.osc(),
            sup_grad_u: core_sup_abs(m, &grad_sq(m, u, C)).sqrt(),
            sup_lap_u: core_sup_abs(m, &laplacian(m, u, C)),
            c: c_constant(m, p),
            mu,
            w_proxy: w_functional(m, twist, &proxy_function(m, u), 0.5),
            mabuchi: s.mabuchi,
            diameter: diameter(m),
            r_min,
            r_max,
            d_gauge,
        });
    }
    Ok(MonitorSeries { samples })
}

/// `max (R - Tr α)⁻` over the core, complex normalization.
pub fn negative_part_max(m: &MetricProfile, t: &TwistProfile) -> f64 {
    let r = scalar_curvature(m);
    let core = m.core_mask();
    (0..r.len()).filter(|&i| core[i]).map(|i| (t.a()[i] / m.h()[i] - r[i]).max(0.0)).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    /// Smallest `rhs - lhs` over all samples and core nodes.
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    /// `B = n - c(0) + max(R - Tr α)⁻(0)`.
    pub b: f64,
    pub checks: Vec<BoundCheck>,
    /// Run-level bounds on `sup|u|`, `sup|∇u|` and `sup|Δu|`.
    pub sup_u: f64,
    pub sup_grad_u: f64,
    pub sup_lap_u: f64,
}

impl BoundsReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

struct Tracker {
    name: &'static str,
    margin: f64,
    pass: bool,
}

impl Tracker {
    fn new(name: &'static str) -> Self {
        Self { name, margin: f64::INFINITY, pass: true }
    }

    fn record(&mut self, lhs: f64, rhs: f64) {
        let margin = rhs - lhs;
        self.margin = self.margin.min(margin);
        if margin < -BOUND_SLACK * rhs.abs().max(lhs.abs()).max(1.0) {
            self.pass = false;
        }
    }

    fn finish(self) -> BoundCheck {
        let margin = if self.margin.is_finite() { self.margin } else { 0.0 };
        BoundCheck { name: self.name.to_string(), margin, pass: self.pass }
    }
}

/// Checks the pointwise running estimates on every core node of every
/// sample of a normalized trajectory.
pub fn perelman_bounds_check(traj: &Trajectory) -> Result<BoundsReport> {
    if traj.mode != FlowMode::Normalized {
        return Err(Error::InvalidArgument("bounds need a normalized trajectory".into()));
    }
    let twist = traj.twist();
    let first = traj.first();
    let p0 = first.potential.as_ref().expect("normalized");
    let neg0 = negative_part_max(&first.metric, twist);
    let c0 = c_constant(&first.metric, p0);
    let b = 1.0 - c0 + neg0;
    let k = 400.0 * b;

    let mut u_lower = Tracker::new("u_lower_bound");
    let mut lap_upper = Tracker::new("laplacian_upper_bound");
    let mut grad_200b = Tracker::new("gradient_200b");
    let mut lap_200b = Tracker::new("laplacian_200b");
    let mut st1 = Tracker::new("large_u_region");
    let mut curv = Tracker::new("curvature_lower_bound");
    let mut c_sign = Tracker::new("c_nonpositive");
    let mut c_mono = Tracker::new("c_nondecreasing");
    let (mut sup_u, mut sup_g, mut sup_l) = (0.0f64, 0.0f64, 0.0f64);
    let mut prev_c = f64::NEG_INFINITY;

    for s in &traj.states {
        let m = &s.metric;
        let p = s.potential.as_ref().expect("normalized");
        let u = &p.u;
        let g = grad_sq(m, u, C);
        let l = laplacian(m, u, C);
        let r = scalar_curvature(m);
        let core = m.core_mask();
        for i in (0..u.len()).filter(|&i| core[i]) {
            let w = 200.0 * b * (u[i] + 200.0 * b);
            u_lower.record(-u[i], b);
            lap_upper.record(l[i], 1.0 + neg0);
            grad_200b.record(g[i], w);
            lap_200b.record(l[i].abs(), w);
            if u[i] > k {
                st1.record(g[i].max(l[i].abs()), k * u[i]);
            }
            curv.record(-(r[i] - twist.a()[i] / m.h()[i]), neg0);
            sup_u = sup_u.max(u[i].abs());
            sup_g = sup_g.max(g[i].sqrt());
            sup_l = sup_l.max(l[i].abs());
        }
        let c = c_constant(m, p);
        c_sign.record(c, 0.0);
        c_mono.record(prev_c, c);
        prev_c = c;
    }
    let checks = [u_lower, lap_upper, grad_200b, lap_200b, st1, curv, c_sign, c_mono].into_iter().map(Tracker::finish).collect();
    Ok(BoundsReport { b, checks, sup_u, sup_grad_u: sup_g, sup_lap_u: sup_l })
}

/// `2π ∫_{a < u < b} h dx`, resolving the crossings inside each cell by
/// linear interpolation of `u`.
pub fn sublevel_volume(m: &MetricProfile, u: &Field, a: f64, b: f64) -> Result<f64> {
    if !(a < b) {
        return Err(Error::InvalidArgument(format!("empty interval ({a}, {b})")));
    }
    let g = m.grid();
    let dx = g.spacing();
    let h = m.h().values();
    let inside = |v: f64| v > a && v < b;
    let n = u.len();
    let mut total = 0.0;
    for i in 0..n - 1 {
        let (u0, u1) = (u[i], u[i + 1]);
        // fraction of the cell with a < u < b under linear interpolation
        let frac = if (u1 - u0).abs() < 1e-300 {
            if inside(u0) { 1.0 } else { 0.0 }
        } else {
            let s_a = (a - u0) / (u1 - u0);
            let s_b = (b - u0) / (u1 - u0);
            let (lo, hi) = if s_a < s_b { (s_a, s_b) } else { (s_b, s_a) };
            (hi.min(1.0) - lo.max(0.0)).max(0.0)
        };
        total += frac * 0.5 * (h[i] + h[i + 1]) * dx;
    }
    if inside(u[0]) {
        total += 0.5 * h[0];
    }
    if inside(u[n - 1]) {
        total += 0.5 * h[n - 1];
    }
    Ok(2.0 * std::f64::consts::PI * total)
}
