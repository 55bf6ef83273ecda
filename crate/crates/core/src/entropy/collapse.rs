//! Consequences of the entropy bound: non-collapsing, the diameter bound
//! and the restricted log-Sobolev inequality.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{curvature_density, minimize_w};
use crate::error::Result;
use crate::geometry::{diameter, integrate_with_tails, pole_ball_volume, MetricProfile, TwistProfile};
use crate::numerics::{diff1_with, DiffOrder, Field};

/// Safety margin subtracted from the sampled minimum of `μ`.
pub const INFIMUM_MARGIN: f64 = 0.01;

/// `κ(K, ρ) = exp(A(ρ) + 2n + n log 4π - 3^{2n+2} - K)` with `n = 1`.
pub fn kappa(k: f64, _rho: f64, a_rho: f64) -> f64 {
    (a_rho + 2.0 + (4.0 * PI).ln() - 81.0 - k).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyInfimum {
    pub rho: f64,
    pub taus: Vec<f64>,
    pub mus: Vec<f64>,
    pub value: f64,
}

/// `inf μ(g, τ)` over `τ ∈ (0, ½ + ρ²]`, sampled at 8 log-spaced values
/// from 0.05 together with the small-`τ` limit `μ → 0`.
pub fn entropy_infimum(m: &MetricProfile, t: &TwistProfile, rho: f64) -> Result<EntropyInfimum> {
    let (lo, hi) = (0.05f64, 0.5 + rho * rho);
    let taus: Vec<f64> = (0..8).map(|k| lo * (hi / lo).powf(k as f64 / 7.0)).collect();
    let mut mus = Vec::with_capacity(taus.len());
    for &tau in &taus {
        mus.push(minimize_w(m, t, tau, 1e-9)?.mu);
    }
    let value = mus.iter().fold(0.0f64, |a, &b| a.min(b)) - INFIMUM_MARGIN;
    Ok(EntropyInfimum { rho, taus, mus, value })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonCollapsingEntry {
    pub radius: f64,
    pub north: bool,
    pub volume: f64,
    pub bound: f64,
    /// Whether `r² sup|R - Tr β| ≤ K` so the estimate applies.
    pub applicable: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonCollapsingReport {
    pub kappa: f64,
    pub entries: Vec<NonCollapsingEntry>,
}

impl NonCollapsingReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }
}

fn mirrored(m: &MetricProfile) -> Result<MetricProfile> {
    let mut h = m.h().values().to_vec();
    h.reverse();
    MetricProfile::new(Field::new(*m.grid(), h)?)
}

/// Checks `Vol B(p, r) ≥ κ r²` for balls about both poles.
pub fn check_non_collapsing(
    m: &MetricProfile,
    t: &TwistProfile,
    radii: &[f64],
    k: f64,
    a_rho: f64,
) -> Result<NonCollapsingReport> {
    let kap = kappa(k, 0.0, a_rho);
    let q = curvature_density(m, t);
    let core = m.core_mask();
    let sup = (0..q.len()).filter(|&i| core[i]).map(|i| (q[i] / m.h()[i]).abs()).fold(0.0, f64::max);
    let south = mirrored(m)?;
    let mut entries = Vec::new();
    for &r in radii {
        for (north, metric) in [(true, m), (false, &south)] {
            let volume = pole_ball_volume(metric, r)?;
            let bound = kap * r * r;
            let applicable = r * r * sup <= k;
            entries.push(NonCollapsingEntry { radius: r, north, volume, bound, applicable, pass: !applicable || volume >= bound });
        }
    }
    Ok(NonCollapsingReport { kappa: kap, entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiameterCheck {
    pub diameter: f64,
    pub bound: f64,
    pub pass: bool,
}

/// `diam ≤ 2^{2n} Vol / κ(K, ½)`.
pub fn check_diameter_bound(m: &MetricProfile, k: f64, a_half: f64) -> DiameterCheck {
    let d = diameter(m);
    let bound = 4.0 * m.volume() / kappa(k, 0.5, a_half);
    DiameterCheck { diameter: d, bound, pass: d <= bound }
}

/// `∫|∇v|² dm` and `∫ v² dm` in the complex normalization.
fn dirichlet_and_mass(m: &MetricProfile, v: &Field) -> (f64, f64) {
    let dx = m.grid().spacing();
    let vx = diff1_with(v, DiffOrder::Sixth);
    let grad: Vec<f64> = vx.values().iter().map(|d| d * d).collect();
    (PI * integrate_with_tails(&grad, dx), m.integrate_dm(&v.values().iter().map(|x| x * x).collect::<Vec<_>>()))
}

fn sobolev_trials(m: &MetricProfile) -> Vec<Field> {
    let g = *m.grid();
    let mut out = vec![Field::constant(g, 1.0)];
    for c in [-3.0, -1.5, 0.0, 1.5, 3.0] {
        for w in [0.3, 0.7, 1.5] {
            out.push(Field::from_fn(g, move |x| (-(x - c) * (x - c) / (w * w)).exp()));
        }
    }
    for s in [0.5, 1.0, 2.0] {
        out.push(Field::from_fn(g, move |x| 1.0 + (s * x).tanh()));
    }
    out
}

/// Lower bound for the Sobolev constant `C_S` in
/// `‖v‖²_{L⁴} ≤ C_S ∫(|∇v|² + v²) dm`, taken as the largest ratio over a
/// fixed family of trial functions.
pub fn sobolev_constant_estimate(m: &MetricProfile) -> f64 {
    sobolev_trials(m)
        .iter()
        .map(|v| {
            let (grad, mass) = dirichlet_and_mass(m, v);
            let l4 = m.integrate_dm(&v.values().iter().map(|x| x.powi(4)).collect::<Vec<_>>()).sqrt();
            l4 / (grad + mass)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogSobolevViolation {
    pub trial: usize,
    pub epsilon: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogSobolevReport {
    pub c1: f64,
    pub sobolev_constant: f64,
    pub checked: usize,
    pub min_margin: f64,
    pub violations: Vec<LogSobolevViolation>,
}

/// `C₁ = C(n) + 4n log C_S + 4 Vol^{-n} / C_S² + max(R - Tr α)⁻` at the
/// initial metric. `c_n` is not determined by the estimate and is an input.
pub fn log_sobolev_c1(m0: &MetricProfile, t: &TwistProfile, c_s: f64, c_n: f64) -> f64 {
    let q = curvature_density(m0, t);
    let neg = q
        .iter()
        .zip(m0.h().values())
        .zip(&m0.core_mask())
        .filter(|(_, c)| **c)
        .map(|((q, h), _)| (-0.5 * q / h).max(0.0))
        .fold(0.0, f64::max);
    c_n + 4.0 * c_s.ln() + 4.0 / (m0.volume() * c_s * c_s) + neg
}

/// One-sided check of
/// `∫v² log v² ≤ ε²∫(|∇v|² + ¼(R - Tr α)v²) - 2 log ε + C₁` for trials
/// normalized in `L²(dm)`; all quantities in the complex normalization.
pub fn check_restricted_log_sobolev(
    m: &MetricProfile,
    t: &TwistProfile,
    trials: &[Field],
    epsilons: &[f64],
    c1: f64,
    sobolev_constant: f64,
) -> LogSobolevReport {
    let dx = m.grid().spacing();
    let q = curvature_density(m, t);
    let mut violations = Vec::new();
    let mut min_margin = f64::INFINITY;
    let mut checked = 0;
    for (k, raw) in trials.iter().enumerate() {
        let (_, mass) = dirichlet_and_mass(m, raw);
        let v = raw.map(|x| x / mass.sqrt());
        let (grad, _) = dirichlet_and_mass(m, &v);
        let ent: Vec<f64> = v.values().iter().map(|x| if *x == 0.0 { 0.0 } else { x * x * (x * x).ln() }).collect();
        let lhs = m.integrate_dm(&ent);
        // (R - Tr α) dm = π q dx
        let pot: Vec<f64> = q.iter().zip(v.values()).map(|(q, x)| q * x * x).collect();
        let potential = PI * integrate_with_tails(&pot, dx);
        for &eps in epsilons {
            let rhs = eps * eps * (grad + 0.25 * potential) - 2.0 * eps.ln() + c1;
            let margin = rhs - lhs;
            min_margin = min_margin.min(margin);
            checked += 1;
            if margin < 0.0 {
                violations.push(LogSobolevViolation { trial: k, epsilon: eps, margin });
            }
        }
    }
    LogSobolevReport { c1, sobolev_constant, checked, min_margin, violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Grid;

    #[test]
    fn kappa_arithmetic() {
        let k = kappa(3.0, 1.0, -5.0);
        assert!((k.ln() - (-87.0 + (4.0 * PI).ln())).abs() < 1e-12);
        assert!((k / (4.0 * PI * (-87.0f64).exp()) - 1.0).abs() < 1e-12, "{k:e}");
    }

    #[test]
    fn fubini_study_balls_and_diameter() {
        let g = Grid::standard();
        let m = MetricProfile::fubini_study(g);
        let t = TwistProfile::zero(g);
        let rep = check_non_collapsing(&m, &t, &[0.05, 0.1, 0.5], 3.0, -5.0).unwrap();
        assert!(rep.all_pass());
        let e = rep.entries.iter().find(|e| e.radius == 0.1).unwrap();
        assert!((e.volume / (PI * 0.01) - 1.0).abs() < 0.01);
        let d = check_diameter_bound(&m, 3.0, -5.0);
        assert!(d.pass && (d.diameter - PI).abs() < 1e-3);
    }

    #[test]
    fn constant_trial_has_negative_entropy() {
        let g = Grid::standard();
        let m = MetricProfile::fubini_study(g);
        let t = TwistProfile::zero(g);
        let cs = sobolev_constant_estimate(&m);
        assert!(cs > 0.0 && cs.is_finite());
        let c1 = log_sobolev_c1(&m, &t, cs, 0.0);
        let rep = check_restricted_log_sobolev(&m, &t, &[Field::constant(g, 1.0)], &[0.1, 0.5, 1.0, 2.0], c1, cs);
        assert!(rep.violations.is_empty(), "{rep:?}");
        let lhs = -(m.volume()).ln();
        assert!(lhs < 0.0);
    }
}
