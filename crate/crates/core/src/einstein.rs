//! Twisted Kähler-Einstein metrics `Ric(ω) = ω + α`, the gauge distance to
//! them, and convergence experiments for the normalized flow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{robin_rows, run, FlowMode, FlowState, Operator, RunOptions, Trajectory};
use crate::geometry::{translate, validate_class, MetricProfile, TwistProfile};
use crate::numerics::{cumulative_integrate, newton_solve, BandMatrix, Field, LinearSystem, NewtonOptions};

/// Band Jacobian whose solutions are stripped of a known near-kernel
/// direction. Without a twist the Liouville problem is translation
/// invariant up to `O(e^{-2X})` and the translation mode would otherwise
/// absorb amplified roundoff.
struct Deflated {
    jac: BandMatrix,
    kernel: Option<Vec<f64>>,
}

impl LinearSystem for Deflated {
    fn dim(&self) -> usize {
        self.jac.dim()
    }

    fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let mut x = self.jac.solve(rhs)?;
        if let Some(k) = &self.kernel {
            let kk: f64 = k.iter().map(|v| v * v).sum();
            let xk: f64 = x.iter().zip(k).map(|(a, b)| a * b).sum();
            x.iter_mut().zip(k).for_each(|(a, b)| *a -= xk / kk * b);
        }
        Ok(x)
    }
}

/// Solves `v_xx + 2eᵛ + 2a = 0` for `v = log h` with the pole conditions
/// of the flow, starting from `guess`.
pub fn solve_tke(t: &TwistProfile, guess: &MetricProfile) -> Result<MetricProfile> {
    solve_tke_with(t, guess, &NewtonOptions { tol: 1e-10, max_iter: 60, min_damping: 1e-6 })
}

pub fn solve_tke_with(t: &TwistProfile, guess: &MetricProfile, opts: &NewtonOptions) -> Result<MetricProfile> {
    if t.a().grid() != guess.grid() {
        return Err(Error::GridMismatch);
    }
    let op = Operator::new(guess);
    let a = t.a().values();
    let n = a.len();
    let translation_free = t.is_zero();
    let eval = |v: &[f64]| -> Result<(Vec<f64>, Deflated)> {
        if let Some(i) = v.iter().position(|x| !x.is_finite() || *x > 50.0 || *x < -700.0) {
            return Err(Error::PositivityLoss { node: i });
        }
        let mut r = vec![0.0; n];
        let mut jac = BandMatrix::zeros(n, 3, 3);
        robin_rows(v, a, op.dx, &mut r, &mut jac);
        for i in 1..n - 1 {
            let e = v[i].exp();
            r[i] = op.d2(v, i) + 2.0 * e + 2.0 * a[i];
            let row = &op.rows[i];
            for (k, c) in row.coeffs.iter().enumerate() {
                jac.add(i, row.start + k, c * op.inv_dx2);
            }
            jac.add(i, i, 2.0 * e);
        }
        let kernel = translation_free.then(|| {
            (0..n).map(|i| if i == 0 || i == n - 1 { 0.0 } else { (v[i + 1] - v[i - 1]) * 0.5 / op.dx }).collect()
        });
        Ok((r, Deflated { jac, kernel }))
    };
    let out = newton_solve(eval, guess.log_h().values().to_vec(), opts)?;
    let m = MetricProfile::from_log(Field::new(*guess.grid(), out.solution)?)?;
    validate_class(&m, t)?;
    Ok(m)
}

/// The twisted Kähler-Einstein metric for `t`, solved from the scaled round
/// metric in the right class.
pub fn tke_reference(t: &TwistProfile) -> Result<MetricProfile> {
    let guess = MetricProfile::scaled_fubini_study(*t.a().grid(), 1.0 - 0.5 * t.mass());
    solve_tke(t, &guess)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaugeDistanceResult {
    /// `osc φ` at the optimal gauge.
    pub d: f64,
    /// Optimal translation; zero when translations are not searched.
    pub shift: f64,
    /// `(c, osc φ)` samples of the coarse scan.
    pub curve: Vec<(f64, f64)>,
}

/// Potential `φ` of `g` relative to `reference` (`½φ_xx = g - ref`), zero
/// slope at the south pole.
pub fn relative_potential(g: &MetricProfile, reference: &MetricProfile) -> Result<Field> {
    if g.grid() != reference.grid() {
        return Err(Error::GridMismatch);
    }
    let dx = g.grid().spacing();
    let diff: Vec<f64> = g.h().values().iter().zip(reference.h().values()).map(|(a, b)| 2.0 * (a - b)).collect();
    let cum = cumulative_integrate(&diff, dx);
    let tail = 0.5 * diff[0];
    let slope: Vec<f64> = cum.iter().map(|c| c + tail).collect();
    let n = slope.len();
    let end = slope[n - 1] + 0.5 * diff[n - 1];
    if end.abs() > crate::potential::SOLVABILITY_TOLERANCE {
        return Err(Error::SolvabilityDefect { defect: end });
    }
    Field::new(*g.grid(), cumulative_integrate(&slope, dx))
}

fn osc_at(g: &MetricProfile, reference: &MetricProfile, c: f64) -> Result<f64> {
    let moved = if c == 0.0 { g.clone() } else { translate(g, c) };
    Ok(relative_potential(&moved, reference)?.osc())
}

pub const SHIFT_RANGE: f64 = 2.0;

/// `d(g) = inf osc φ` over the invariant gauge: rotations (trivial on
/// profiles) and, when the twist vanishes, translations `x ↦ x + c`,
/// `|c| ≤ 2`.
pub fn gauge_distance(g: &MetricProfile, reference: &MetricProfile, t: &TwistProfile) -> Result<GaugeDistanceResult> {
    let base = osc_at(g, reference, 0.0)?;
    if !t.is_zero() {
        return Ok(GaugeDistanceResult { d: base, shift: 0.0, curve: vec![(0.0, base)] });
    }
    let samples = 41;
    let mut curve = Vec::with_capacity(samples);
    for k in 0..samples {
        let c = -SHIFT_RANGE + 2.0 * SHIFT_RANGE * k as f64 / (samples - 1) as f64;
        curve.push((c, osc_at(g, reference, c)?));
    }
    let best = curve.iter().enumerate().min_by(|a, b| a.1 .1.total_cmp(&b.1 .1)).map(|(i, _)| i).unwrap();
    let step = 2.0 * SHIFT_RANGE / (samples - 1) as f64;
    let center = curve[best].0;
    let (mut lo, mut hi) = ((center - step).max(-SHIFT_RANGE), (center + step).min(SHIFT_RANGE));
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = osc_at(g, reference, x1)?;
    let mut f2 = osc_at(g, reference, x2)?;
    while hi - lo > 1e-10 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = osc_at(g, reference, x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = osc_at(g, reference, x2)?;
        }
    }
    let c = 0.5 * (lo + hi);
    let mut d = osc_at(g, reference, c)?;
    let mut shift = c;
    for &(cc, v) in curve.iter().chain([(0.0, base)].iter()) {
        if v < d {
            d = v;
            shift = cc;
        }
    }
    Ok(GaugeDistanceResult { d, shift, curve })
}

/// Samples below this level, or below 100 times the terminal plateau of the
/// series, are treated as converged to roundoff and left out of rate fits.
pub const FIT_NOISE_FLOOR: f64 = 1e-8;

/// A last sample above this is still decaying, not a roundoff plateau.
const PLATEAU_CEILING: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub rate: f64,
    pub r_squared: f64,
    pub samples: usize,
}

/// Least-squares fit of `log y = b - λ t`.
pub fn fit_exponential_rate(times: &[f64], values: &[f64]) -> Option<RateFit> {
    let last = values.last().copied().unwrap_or(0.0).abs();
    let plateau = if last < PLATEAU_CEILING { last } else { 0.0 };
    let floor = FIT_NOISE_FLOOR.max(100.0 * plateau);
    let pts: Vec<(f64, f64)> =
        times.iter().zip(values).filter(|(_, v)| **v > floor).map(|(t, v)| (*t, v.ln())).collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sty: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sty / stt;
    let r_squared = if syy > 0.0 { sty * sty / (stt * syy) } else { 1.0 };
    Some(RateFit { rate: -slope, r_squared, samples: pts.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub already_converged: bool,
    pub osc_u: Option<RateFit>,
    pub gauge: Option<RateFit>,
    /// `sup |h(t_end) - h_ref|` after the optimal gauge shift.
    pub terminal_distance: f64,
    pub terminal_gauge_distance: f64,
}

/// Fits exponential rates of `osc u` and `d(g(t))` on `[t_end/4, t_end]`.
pub fn convergence_report(traj: &Trajectory, reference: &MetricProfile) -> Result<ConvergenceReport> {
    if traj.mode != FlowMode::Normalized {
        return Err(Error::InvalidArgument("convergence is measured along the normalized flow".into()));
    }
    let twist = traj.twist();
    let last = traj.last();
    let terminal = gauge_distance(&last.metric, reference, twist)?;
    let aligned = if terminal.shift == 0.0 { last.metric.clone() } else { translate(&last.metric, terminal.shift) };
    let terminal_distance = aligned.h().sup_distance(reference.h());
    let osc0 = traj.first().u().map(Field::osc).unwrap_or(0.0);
    if osc0 < 1e-8 {
        return Ok(ConvergenceReport {
            already_converged: true,
            osc_u: None,
            gauge: None,
            terminal_distance,
            terminal_gauge_distance: terminal.d,
        });
    }
    let t_end = last.time;
    let times = traj.times();
    let osc: Vec<f64> = traj.states.iter().map(|s| s.u().map(Field::osc).unwrap_or(0.0)).collect();
    let dist = traj
        .states
        .iter()
        .map(|s| gauge_distance(&s.metric, reference, twist).map(|r| r.d))
        .collect::<Result<Vec<f64>>>()?;
    // tail window [t_end/4, t_end]; a fast decay that reaches roundoff
    // before the window opens is fitted on the whole recorded series
    let start = times.partition_point(|&t| t < 0.25 * t_end);
    let fit = |y: &[f64]| fit_exponential_rate(&times[start..], &y[start..]).or_else(|| fit_exponential_rate(&times[1..], &y[1..]));
    let osc_u = fit(&osc);
    let gauge = fit(&dist);
    for fit in [&osc_u, &gauge].into_iter().flatten() {
        if fit.r_squared < 0.9 {
            return Err(Error::WindowTooNoisy { r_squared: fit.r_squared });
        }
    }
    Ok(ConvergenceReport { already_converged: false, osc_u, gauge, terminal_distance, terminal_gauge_distance: terminal.d })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityCase {
    pub amplitude: f64,
    /// The perturbed initial metric was not admissible.
    pub flagged: bool,
    pub max_distance: f64,
    pub final_distance: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub cases: Vec<StabilityCase>,
    /// Largest tested amplitude such that it and every smaller one converged.
    pub largest_stable_amplitude: Option<f64>,
}

/// Flows `tKE + ½(A e^{-x²})_xx` for each amplitude and checks that the gauge
/// distance stays below 1 and decays.
pub fn stability_experiment(t: &TwistProfile, amplitudes: &[f64], t_end: f64, dt: f64) -> Result<StabilityReport> {
    let reference = tke_reference(t)?;
    let grid = *reference.grid();
    let mut cases = Vec::new();
    for &amplitude in amplitudes {
        let bump = Field::from_fn(grid, |x| amplitude * (-x * x).exp());
        let initial = reference.with_potential(&bump).and_then(|m| FlowState::new(m, t.clone(), FlowMode::Normalized));
        let Ok(initial) = initial else {
            cases.push(StabilityCase { amplitude, flagged: true, max_distance: f64::NAN, final_distance: f64::NAN, converged: false });
            continue;
        };
        let traj = match run(initial, t_end, dt, &RunOptions { sample_stride: 50, ..RunOptions::default() }) {
            Ok(traj) => traj,
            Err(_) => {
                cases.push(StabilityCase { amplitude, flagged: true, max_distance: f64::NAN, final_distance: f64::NAN, converged: false });
                continue;
            }
        };
        let dists = traj
            .states
            .iter()
            .map(|s| gauge_distance(&s.metric, &reference, t).map(|r| r.d))
            .collect::<Result<Vec<f64>>>()?;
        let max_distance = dists.iter().copied().fold(0.0, f64::max);
        let final_distance = *dists.last().unwrap();
        let converged = max_distance < 1.0 && final_distance <= 1e-6_f64.max(1e-3 * dists[0]);
        cases.push(StabilityCase { amplitude, flagged: false, max_distance, final_distance, converged });
    }
    let mut sorted: Vec<&StabilityCase> = cases.iter().collect();
    sorted.sort_by(|a, b| a.amplitude.total_cmp(&b.amplitude));
    let largest_stable_amplitude = sorted.iter().take_while(|c| c.converged).last().map(|c| c.amplitude);
    Ok(StabilityReport { cases, largest_stable_amplitude })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Grid;

    #[test]
    fn recovers_round_metric() {
        let g = Grid::standard();
        let fs = MetricProfile::fubini_study(g);
        let m = solve_tke(&TwistProfile::zero(g), &fs).unwrap();
        assert!(m.h().sup_distance(fs.h()) < 1e-10);
    }

    #[test]
    fn recovers_twisted_family_from_perturbed_guess() {
        let g = Grid::standard();
        let t = TwistProfile::sech2(g, 0.25).unwrap();
        let exact = MetricProfile::scaled_fubini_study(g, 0.75);
        let guess = MetricProfile::new(exact.h().zip_map(&Field::from_fn(g, |x| 1.0 + 0.1 * (-x * x).exp()), |a, b| a * b)).unwrap();
        let m = solve_tke(&t, &guess).unwrap();
        let rel = m.h().sup_distance(exact.h()) / exact.h().max();
        assert!(rel < 1e-8, "{rel}");
    }

    #[test]
    fn gauge_distance_examples() {
        let g = Grid::standard();
        let fs = MetricProfile::fubini_study(g);
        let zero = TwistProfile::zero(g);
        assert!(gauge_distance(&fs, &fs, &zero).unwrap().d < 1e-12);
        let moved = translate(&fs, 0.3);
        let r = gauge_distance(&moved, &fs, &zero).unwrap();
        assert!(r.d < 1e-6 && (r.shift + 0.3).abs() < 1e-3, "{r:?}");
        let t = TwistProfile::sech2(g, 0.25).unwrap();
        let tke = MetricProfile::scaled_fubini_study(g, 0.75);
        let bumped = tke.with_potential(&Field::from_fn(g, |x| 0.05 * (-x * x).exp())).unwrap();
        let d = gauge_distance(&bumped, &tke, &t).unwrap().d;
        assert!(d > 0.0 && d <= 0.12, "{d}");
    }

    #[test]
    fn class_defect_in_gauge_potential() {
        let g = Grid::standard();
        let fs = MetricProfile::fubini_study(g);
        let small = MetricProfile::scaled_fubini_study(g, 0.75);
        assert!(matches!(relative_potential(&small, &fs), Err(Error::SolvabilityDefect { .. })));
    }

    #[test]
    fn rate_fit_on_exact_exponential() {
        let t: Vec<f64> = (0..20).map(|k| k as f64 * 0.5).collect();
        let mut y: Vec<f64> = t.iter().map(|t| 0.3 * (-1.7 * t).exp()).collect();
        y.push(0.0);
        let t: Vec<f64> = t.iter().copied().chain([10.0]).collect();
        let fit = fit_exponential_rate(&t, &y).unwrap();
        assert!((fit.rate - 1.7).abs() < 1e-10 && fit.r_squared > 0.999_999);
    }

    #[test]
    fn rate_fit_on_a_short_undecayed_series() {
        let t: Vec<f64> = (0..6).map(|k| k as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|t| 0.05 * (-3.0 * t).exp()).collect();
        assert!((fit_exponential_rate(&t, &y).unwrap().rate - 3.0).abs() < 1e-10);
    }
}
