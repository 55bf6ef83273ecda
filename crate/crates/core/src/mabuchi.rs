//! The twisted Mabuchi energy, by integrating its variation along a path of
//! potentials and along the normalized flow.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::flow::{FlowMode, Trajectory};
use crate::geometry::{MetricProfile, TwistProfile};
use crate::numerics::{diff1_with, integrate_slice, simpson_weights, DiffOrder, Field};
use crate::potential::ricci_potential_slope;

/// Smallest number of σ-nodes accepted for a path.
pub const MIN_PATH_NODES: usize = 33;

/// Potentials `φ(σ)` on a uniform grid `σ ∈ [0, 1]`, `φ(0) = 0`, relative to
/// a base metric.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialPath {
    base: MetricProfile,
    twist: TwistProfile,
    potentials: Vec<Field>,
    metrics: Vec<MetricProfile>,
}

impl PotentialPath {
    pub fn new(base: MetricProfile, twist: TwistProfile, potentials: Vec<Field>) -> Result<Self> {
        Self::check(&base, &twist, &potentials)?;
        let metrics = potentials.iter().map(|p| base.with_potential(p)).collect::<Result<Vec<_>>>()?;
        Ok(Self { base, twist, potentials, metrics })
    }

    /// A path whose metrics are given rather than rebuilt from `h₀ + ½φ_xx`.
    /// Near the poles `h` is tiny and the rebuilt profile can lose its decay,
    /// so paths along a flow should carry the flow's own metrics.
    pub fn with_metrics(
        base: MetricProfile,
        twist: TwistProfile,
        potentials: Vec<Field>,
        metrics: Vec<MetricProfile>,
    ) -> Result<Self> {
        Self::check(&base, &twist, &potentials)?;
        if metrics.len() != potentials.len() || metrics.iter().any(|m| m.grid() != base.grid()) {
            return Err(Error::GridMismatch);
        }
        Ok(Self { base, twist, potentials, metrics })
    }

    fn check(base: &MetricProfile, twist: &TwistProfile, potentials: &[Field]) -> Result<()> {
        let k = potentials.len();
        if k < MIN_PATH_NODES || k % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "paths need an odd number of at least {MIN_PATH_NODES} nodes, got {k}"
            )));
        }
        if potentials[0].sup_abs() != 0.0 {
            return Err(Error::InvalidArgument("path must start at φ = 0".into()));
        }
        if potentials.iter().any(|p| p.grid() != base.grid()) || twist.a().grid() != base.grid() {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// `σ ↦ φ(σ)` sampled at `nodes` equally spaced points.
    pub fn from_fn(base: MetricProfile, twist: TwistProfile, nodes: usize, f: impl Fn(f64) -> Field) -> Result<Self> {
        let potentials = (0..nodes).map(|k| f(k as f64 / (nodes - 1) as f64)).collect();
        Self::new(base, twist, potentials)
    }

    /// `φ(σ) = σ φ₁`.
    pub fn linear(base: MetricProfile, twist: TwistProfile, end: &Field, nodes: usize) -> Result<Self> {
        Self::from_fn(base, twist, nodes, |s| end.map(|p| s * p))
    }

    /// `φ(σ) = σ φ₁` where `φ₁` joins `base` to `end`, with metrics
    /// `(1 - σ) h₀ + σ h₁`.
    pub fn linear_to(base: MetricProfile, twist: TwistProfile, end: &MetricProfile, end_phi: &Field, nodes: usize) -> Result<Self> {
        let ss: Vec<f64> = (0..nodes).map(|k| k as f64 / (nodes - 1) as f64).collect();
        let potentials = ss.iter().map(|&s| end_phi.map(|p| s * p)).collect();
        let metrics = ss
            .iter()
            .map(|&s| MetricProfile::new(base.h().zip_map(end.h(), |a, b| (1.0 - s) * a + s * b)))
            .collect::<Result<Vec<_>>>()?;
        Self::with_metrics(base, twist, potentials, metrics)
    }

    /// The recorded `φ(t)` of a normalized trajectory, with `σ = t / t_end`.
    pub fn from_trajectory(traj: &Trajectory) -> Result<Self> {
        if traj.mode != FlowMode::Normalized {
            return Err(Error::InvalidArgument("only the normalized flow carries a potential".into()));
        }
        let times = traj.times();
        let span = times[times.len() - 1] - times[0];
        let uniform = times.windows(2).all(|w| ((w[1] - w[0]) * (times.len() - 1) as f64 / span - 1.0).abs() < 1e-6);
        if !uniform {
            return Err(Error::InvalidArgument("trajectory samples are not equally spaced".into()));
        }
        let potentials = traj.states.iter().map(|s| s.phi.clone()).collect();
        let metrics = traj.states.iter().map(|s| s.metric.clone()).collect();
        Self::with_metrics(traj.first().metric.clone(), traj.twist().clone(), potentials, metrics)
    }

    pub fn nodes(&self) -> usize {
        self.potentials.len()
    }

    pub fn end_metric(&self) -> &MetricProfile {
        self.metrics.last().expect("non-empty path")
    }

    pub fn base(&self) -> &MetricProfile {
        &self.base
    }
}

/// `∫ δφ (R - Tr α - 1) dm = -π ∫ δφ u_xx dx = π ∫ δφ_x u_x dx`, the last
/// form because `u_x` vanishes at both poles. It avoids a second derivative
/// of `log h` in the tails, where `h = h₀ + ½φ_xx` is only known to a
/// relative accuracy far worse than its absolute one.
fn variation(m: &MetricProfile, t: &TwistProfile, dphi: &Field) -> Result<f64> {
    let ux = ricci_potential_slope(m, t)?;
    let dx = diff1_with(dphi, DiffOrder::Sixth);
    let g: Vec<f64> = dx.values().iter().zip(ux.values()).map(|(a, b)| a * b).collect();
    Ok(PI * integrate_slice(&g, m.grid().spacing()))
}

/// Fourth-order finite differences in σ.
fn sigma_derivative(p: &[Field], k: usize, ds: f64) -> Field {
    let n = p.len();
    let (coeffs, start): (&[f64], usize) = match k {
        0 => (&[-25.0, 48.0, -36.0, 16.0, -3.0], 0),
        1 => (&[-3.0, -10.0, 18.0, -6.0, 1.0], 0),
        _ if k == n - 2 => (&[-1.0, 6.0, -18.0, 10.0, 3.0], n - 5),
        _ if k == n - 1 => (&[3.0, -16.0, 36.0, -48.0, 25.0], n - 5),
        _ => (&[1.0, -8.0, 0.0, 8.0, -1.0], k - 2),
    };
    let grid = *p[0].grid();
    let mut out = vec![0.0; grid.n_nodes()];
    for (j, c) in coeffs.iter().enumerate() {
        if *c != 0.0 {
            for (o, v) in out.iter_mut().zip(p[start + j].values()) {
                *o += c * v;
            }
        }
    }
    Field::new(grid, out.iter().map(|v| v / (12.0 * ds)).collect()).expect("finite derivative")
}

fn path_integral(p: &PotentialPath, stride: usize) -> Result<f64> {
    let pot: Vec<Field> = p.potentials.iter().step_by(stride).cloned().collect();
    let met: Vec<&MetricProfile> = p.metrics.iter().step_by(stride).collect();
    let n = pot.len();
    let ds = 1.0 / (n - 1) as f64;
    let integrand = (0..n)
        .map(|k| variation(met[k], &p.twist, &sigma_derivative(&pot, k, ds)).map(|v| -v))
        .collect::<Result<Vec<f64>>>()?;
    Ok(simpson_weights(n, ds).iter().zip(&integrand).map(|(w, v)| w * v).sum())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathEnergy {
    pub value: f64,
    /// Richardson estimate of the σ-quadrature error, from the same
    /// integral on every other node.
    pub quadrature_error: f64,
}

/// `𝓜(ω₀, ω_φ(1)) = -∫₀¹ ∫ φ'(σ) (R - Tr α - 1) dm_σ dσ`.
pub fn mabuchi_energy_path(p: &PotentialPath) -> Result<f64> {
    path_integral(p, 1)
}

pub fn mabuchi_energy_path_report(p: &PotentialPath) -> Result<PathEnergy> {
    let fine = path_integral(p, 1)?;
    let quadrature_error = if (p.nodes() - 1) % 4 == 0 && (p.nodes() - 1) / 2 >= 4 {
        (fine - path_integral(p, 2)?).abs() / 15.0
    } else {
        f64::NAN
    };
    Ok(PathEnergy { value: fine, quadrature_error })
}

/// `(t, 𝓜(ω₀, ω(t)))` along a normalized trajectory, accumulated by the
/// stepper as `-∫₀ᵗ ∫|∇u|² dm ds`.
pub fn mabuchi_energy_flow(traj: &Trajectory) -> Vec<(f64, f64)> {
    traj.states.iter().map(|s| (s.time, s.mabuchi)).collect()
}

/// `(t, Y(t))` with `Y = ∫ |∇u|²_c dm`.
pub fn dissipation_series(traj: &Trajectory) -> Vec<(f64, f64)> {
    traj.states
        .iter()
        .filter_map(|s| s.potential.as_ref().map(|p| (s.time, crate::potential::gradient_energy(&s.metric, p))))
        .collect()
}

/// Smallest `C` with `Y(t_{k+1}) - Y(t_k) ≤ C (t_{k+1} - t_k) Y(t_k)` on the
/// samples, ignoring samples below `floor`.
pub fn growth_constant(series: &[(f64, f64)], floor: f64) -> f64 {
    series
        .windows(2)
        .filter(|w| w[0].1 > floor)
        .map(|w| (w[1].1 - w[0].1) / ((w[1].0 - w[0].0) * w[0].1))
        .fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Grid;

    fn bump(g: Grid, amp: f64, c: f64) -> Field {
        Field::from_fn(g, |x| amp * (-(x - c) * (x - c)).exp())
    }

    #[test]
    fn constant_path_is_zero() {
        let g = Grid::standard();
        let p = PotentialPath::from_fn(MetricProfile::fubini_study(g), TwistProfile::zero(g), 33, |_| Field::zeros(g)).unwrap();
        assert_eq!(mabuchi_energy_path(&p).unwrap(), 0.0);
    }

    #[test]
    fn path_independence() {
        let g = Grid::standard();
        let t = TwistProfile::sech2(g, 0.25).unwrap();
        let base = MetricProfile::scaled_fubini_study(g, 0.75);
        let end = bump(g, 0.1, 0.3);
        let lin = PotentialPath::linear(base.clone(), t.clone(), &end, 33).unwrap();
        let quad = PotentialPath::from_fn(base, t, 33, |s| end.map(|p| s * s * p)).unwrap();
        let (a, b) = (mabuchi_energy_path(&lin).unwrap(), mabuchi_energy_path(&quad).unwrap());
        assert!((a - b).abs() < 1e-6, "{a} {b}");
        assert!(a > 0.0);
        assert!(mabuchi_energy_path_report(&lin).unwrap().quadrature_error < 1e-7);
    }

    #[test]
    fn short_paths_rejected() {
        let g = Grid::standard();
        let r = PotentialPath::from_fn(MetricProfile::fubini_study(g), TwistProfile::zero(g), 9, |_| Field::zeros(g));
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn growth_constant_of_exponential() {
        let s: Vec<(f64, f64)> = (0..10).map(|k| (k as f64, (-(k as f64)).exp())).collect();
        assert!((growth_constant(&s, 0.0) - ((-1f64).exp() - 1.0)).abs() < 1e-12);
    }
}
