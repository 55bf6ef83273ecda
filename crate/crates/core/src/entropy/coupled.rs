//! The unnormalized flow coupled to the backwards conjugate heat equation.
//!
//! With `∂_t g = -2(Ric - β)` and `τ = τ₀ - t`, the density
//! `ρ = (4πτ)⁻¹ e^{-f}` solves `∂_t(ρ h) = -ρ_xx`, which is forward
//! parabolic in reversed time and conserves `∫ ρ dm`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{minimize_w, w_functional};
use crate::error::{Error, Result};
use crate::flow::{run, FlowMode, FlowState, RunOptions, Trajectory};
use crate::geometry::{hessian_frames, integrate_with_tails, scalar_curvature, MetricProfile, TwistProfile};
use crate::numerics::{diff1_with, BandMatrix, DiffOrder, Field, LinearSystem, StencilRow};

const MASS_TOLERANCE: f64 = 1e-5;

/// `2π ∫ ρ h dx`.
fn conjugate_mass(m: &MetricProfile, y: &[f64]) -> f64 {
    let p: Vec<f64> = y.iter().zip(m.h().values()).map(|(y, h)| y * h).collect();
    2.0 * PI * integrate_with_tails(&p, m.grid().spacing())
}

/// Solves `h y - c y_xx = b` with Neumann rows at both ends.
fn implicit_conjugate(h: &[f64], c: f64, b: &[f64], inv2: f64) -> Result<Vec<f64>> {
    let n = h.len();
    let mut a = BandMatrix::zeros(n, 3, 3);
    let mut rhs = vec![0.0; n];
    for i in 1..n - 1 {
        let row = StencilRow::second_derivative(i, n, DiffOrder::Sixth);
        for (k, w) in row.coeffs.iter().enumerate() {
            a.add(i, row.start + k, -c * w * inv2);
        }
        a.add(i, i, h[i]);
        rhs[i] = b[i];
    }
    for i in [0, n - 1] {
        let row = StencilRow::first_derivative(i, n, DiffOrder::Second);
        for (k, w) in row.coeffs.iter().enumerate() {
            a.add(i, row.start + k, *w);
        }
    }
    let out = a.solve(&rhs)?;
    if out.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::NegativeDensity);
    }
    Ok(out)
}

/// One TR-BDF2 step of the conjugate equation from the later snapshot to
/// the earlier one; the metric at the substep is interpolated linearly.
pub fn backwards_f_step(earlier: &MetricProfile, later: &MetricProfile, y_later: &Field, dt: f64) -> Result<Field> {
    const GAMMA: f64 = 2.0 - std::f64::consts::SQRT_2;
    let g = *earlier.grid();
    let n = g.n_nodes();
    let inv2 = 1.0 / (g.spacing() * g.spacing());
    let y = y_later.values();
    let (h0, h1) = (earlier.h().values(), later.h().values());
    let half = 0.5 * GAMMA * dt;
    let b: Vec<f64> = (0..n)
        .map(|i| {
            let d2 = if i == 0 || i == n - 1 {
                0.0
            } else {
                StencilRow::second_derivative(i, n, DiffOrder::Sixth).apply(y) * inv2
            };
            h1[i] * y[i] + half * d2
        })
        .collect();
    let h_mid: Vec<f64> = h0.iter().zip(h1).map(|(a, b)| b + GAMMA * (a - b)).collect();
    let y_mid = implicit_conjugate(&h_mid, half, &b, inv2)?;
    let norm = GAMMA * (2.0 - GAMMA);
    let b: Vec<f64> = (0..n)
        .map(|i| (h_mid[i] * y_mid[i] - (1.0 - GAMMA) * (1.0 - GAMMA) * h1[i] * y[i]) / norm)
        .collect();
    Field::new(g, implicit_conjugate(h0, (1.0 - GAMMA) / (2.0 - GAMMA) * dt, &b, inv2)?)
}

/// `2τ ∫ (|Ric + ∇∇f - β - g/2τ|² + β(∇f, ∇f)) ρ dm` in the Riemannian
/// normalization.
pub fn dw_dt_formula(m: &MetricProfile, t: &TwistProfile, f: &Field, tau: f64) -> f64 {
    let r = scalar_curvature(m);
    let hess = hessian_frames(m, f);
    let fx = diff1_with(f, DiffOrder::Sixth);
    let h = m.h().values();
    let a = t.a().values();
    let g: Vec<f64> = (0..h.len())
        .map(|i| {
            let base = r[i] - a[i] / h[i] - 0.5 / tau;
            let (t11, t22) = (base + hess.h11[i], base + hess.h22[i]);
            let rho = (-f[i]).exp() / (4.0 * PI * tau);
            (t11 * t11 + t22 * t22 + a[i] * fx[i] * fx[i] / (h[i] * h[i])) * rho * h[i]
        })
        .collect();
    2.0 * tau * 2.0 * PI * integrate_with_tails(&g, m.grid().spacing())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoupledWRun {
    pub tau0: f64,
    pub times: Vec<f64>,
    pub w: Vec<f64>,
    /// Centered difference quotients of `w` at the interior samples.
    pub fd_derivative: Vec<f64>,
    /// The integral formula at the same interior samples.
    pub formula: Vec<f64>,
    pub max_mass_drift: f64,
    #[serde(skip)]
    pub f: Vec<Field>,
}

impl CoupledWRun {
    /// Largest decrease of `W` between consecutive samples (0 if monotone).
    pub fn max_decrease(&self) -> f64 {
        self.w.windows(2).map(|p| p[0] - p[1]).fold(0.0, f64::max)
    }

    pub fn oscillation(&self) -> f64 {
        let (lo, hi) = self.w.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        hi - lo
    }

    /// Largest `|fd - formula| / |formula|` over interior samples with
    /// `t ≥ t_from`. Rough initial data create a short parabolic layer in
    /// which a centered quotient is not yet resolved, hence the cutoff.
    pub fn derivative_error(&self, t_from: f64) -> f64 {
        let scale = self.formula.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        self.fd_derivative
            .iter()
            .zip(&self.formula)
            .zip(&self.times[1..])
            .filter(|(_, t)| **t >= t_from)
            .map(|((a, b), _)| (a - b).abs() / b.abs().max(1e-12 * scale).max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }
}

/// Runs the unnormalized flow from `initial` to `horizon`, takes the `W`
/// minimizer at the final time as final data and integrates `f` back.
pub fn coupled_w_run(
    initial: &MetricProfile,
    twist: &TwistProfile,
    tau0: f64,
    horizon: f64,
    dt: f64,
) -> Result<CoupledWRun> {
    if !(horizon < tau0) {
        return Err(Error::InvalidArgument(format!("horizon {horizon} must stay below tau0 {tau0}")));
    }
    let state = FlowState::new(initial.clone(), twist.clone(), FlowMode::Unnormalized)?;
    let opts = RunOptions { sample_stride: 1, ..RunOptions::default() };
    let traj = run(state, horizon, dt, &opts)?;
    coupled_from_trajectory(&traj, tau0)
}

pub fn coupled_from_trajectory(traj: &Trajectory, tau0: f64) -> Result<CoupledWRun> {
    let twist = traj.twist();
    let times = traj.times();
    let k = times.len();
    let last = traj.last();
    let tau_end = tau0 - last.time;
    let fin = minimize_w(&last.metric, twist, tau_end, 1e-10)?;
    let y_end = fin.minimizer().map(|f| (-f).exp() / (4.0 * PI * tau_end));
    let mass0 = conjugate_mass(&last.metric, y_end.values());
    let mut ys = vec![y_end];
    let mut drift = 0.0f64;
    for j in (0..k - 1).rev() {
        let dt = times[j + 1] - times[j];
        let y = backwards_f_step(&traj.states[j].metric, &traj.states[j + 1].metric, ys.last().unwrap(), dt)?;
        drift = drift.max((conjugate_mass(&traj.states[j].metric, y.values()) - mass0).abs());
        ys.push(y);
    }
    ys.reverse();
    if drift > MASS_TOLERANCE {
        return Err(Error::MassDrift { drift });
    }
    let f: Vec<Field> = ys
        .iter()
        .zip(&times)
        .map(|(y, t)| y.map(|v| -(4.0 * PI * (tau0 - t) * v).ln()))
        .collect();
    let w: Vec<f64> = (0..k).map(|j| w_functional(&traj.states[j].metric, twist, &f[j], tau0 - times[j])).collect();
    let mut fd = Vec::new();
    let mut formula = Vec::new();
    for j in 1..k.saturating_sub(1) {
        fd.push((w[j + 1] - w[j - 1]) / (times[j + 1] - times[j - 1]));
        formula.push(dw_dt_formula(&traj.states[j].metric, twist, &f[j], tau0 - times[j]));
    }
    Ok(CoupledWRun { tau0, times, w, fd_derivative: fd, formula, max_mass_drift: drift, f })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Grid;

    #[test]
    fn shrinking_soliton_keeps_w_constant() {
        let g = Grid::standard();
        let m = MetricProfile::scaled_fubini_study(g, 0.75);
        let t = TwistProfile::sech2(g, 0.25).unwrap();
        let r = coupled_w_run(&m, &t, 0.5, 0.2, 0.01).unwrap();
        assert!(r.oscillation() < 1e-6, "{}", r.oscillation());
        assert!(r.formula.iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn perturbed_w_increases_and_matches_formula() {
        let g = Grid::standard();
        let m = MetricProfile::fubini_study(g).with_potential(&Field::from_fn(g, |x| 0.05 * (-x * x).exp())).unwrap();
        let t = TwistProfile::zero(g);
        let coarse = coupled_w_run(&m, &t, 0.5, 0.2, 0.02).unwrap();
        let fine = coupled_w_run(&m, &t, 0.5, 0.2, 0.01).unwrap();
        assert!(fine.max_decrease() <= 1e-8);
        let (ec, ef) = (coarse.derivative_error(0.05), fine.derivative_error(0.05));
        assert!(ef < 0.02 && ef < ec, "{ec} {ef}");
    }

    #[test]
    fn conjugate_step_conserves_mass() {
        let g = Grid::standard();
        let m0 = MetricProfile::fubini_study(g);
        let m1 = m0.with_potential(&Field::from_fn(g, |x| 0.05 * (-x * x).exp())).unwrap();
        let y1 = Field::from_fn(g, |x| 1.0 + 0.3 * (-x * x).exp());
        let y1 = y1.map(|v| v / conjugate_mass(&m1, y1.values()));
        let y0 = backwards_f_step(&m0, &m1, &y1, 0.01).unwrap();
        assert!((conjugate_mass(&m0, y0.values()) - 1.0).abs() < 1e-6);
    }
}
