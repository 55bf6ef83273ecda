//! Distances from the pole at `x → +∞`, the momentum reparametrization and
//! translations along the cylinder.

use std::f64::consts::PI;

use super::{integrate_with_tails, log_derivatives, MetricProfile};
use crate::error::{Error, Result};
use crate::numerics::{cumulative_integrate, interpolate_lagrange, Field, Grid};

/// Cubic Hermite interpolant on `[x0, x1]` with values `y` and slopes `d`.
fn hermite(x0: f64, x1: f64, y: (f64, f64), d: (f64, f64), x: f64) -> f64 {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y.0
        + (t3 - 2.0 * t2 + t) * h * d.0
        + (-2.0 * t3 + 3.0 * t2) * y.1
        + (t3 - t2) * h * d.1
}

/// Distance from the `+∞` pole to each node, `√h(X) + ∫_x^X √h`.
pub fn pole_distance(m: &MetricProfile) -> Vec<f64> {
    let n = m.grid().n_nodes();
    let root: Vec<f64> = m.h().values().iter().rev().map(|h| h.sqrt()).collect();
    let cum = cumulative_integrate(&root, m.grid().spacing());
    let tail = root[0];
    let mut d: Vec<f64> = cum.iter().map(|c| tail + c).collect();
    d.reverse();
    debug_assert_eq!(d.len(), n);
    d
}

/// `∫√h dx` plus the two polar tails `√h(±X)`.
pub fn meridian_length(m: &MetricProfile) -> f64 {
    let root: Vec<f64> = m.h().values().iter().map(|h| h.sqrt()).collect();
    let n = root.len();
    crate::numerics::integrate_slice(&root, m.grid().spacing()) + root[0] + root[n - 1]
}

/// For invariant metrics the diameter is realized by the two poles.
pub fn diameter(m: &MetricProfile) -> f64 {
    meridian_length(m)
}

/// Volume of the geodesic ball of radius `r` about the pole at `x → +∞`.
pub fn pole_ball_volume(m: &MetricProfile, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {r}")));
    }
    let limit = 0.5 * meridian_length(m);
    if r > limit {
        return Err(Error::RadiusTooLarge { radius: r, limit });
    }
    let g = m.grid();
    let n = g.n_nodes();
    let dx = g.spacing();
    let h = m.h().values();
    let d = pole_distance(m);
    if r <= d[n - 1] {
        // inside the model tail the cap is a flat disc
        return Ok(PI * r * r);
    }
    // d is decreasing in x; the boundary of the cap sits in cell [j, j+1]
    let j = (0..n - 1).rev().find(|&i| d[i] >= r).expect("r below half the meridian");
    let (x0, x1) = (g.x(j), g.x(j + 1));
    let slope = (-h[j].sqrt(), -h[j + 1].sqrt());
    let (mut lo, mut hi) = (x0, x1);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if hermite(x0, x1, (d[j], d[j + 1]), slope, mid) >= r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let xr = 0.5 * (lo + hi);
    // ∫_{xr}^{X} h from the right-cumulative integral and a Hermite cell piece
    let rev: Vec<f64> = h.iter().rev().copied().collect();
    let mut right = cumulative_integrate(&rev, dx);
    right.reverse();
    let hv = log_derivatives(m.log_h()).0;
    let dh = (h[j] * hv[j], h[j + 1] * hv[j + 1]);
    let piece = gauss_legendre(xr, x1, |x| hermite(x0, x1, (h[j], h[j + 1]), dh, x));
    let inner = right[j + 1] + piece + 0.5 * h[n - 1];
    Ok(2.0 * PI * inner)
}

fn gauss_legendre(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    const NODES: [(f64, f64); 4] = [
        (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
        (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
        (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
        (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    ];
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    NODES.iter().map(|(t, w)| w * f(c + r * t)).sum::<f64>() * r
}

/// `ψ(s) = h(x(s))` with `s(x) = h(X_min)/2 + ∫_{x_min}^x h`; the tail term
/// places `s = 0` at the pole `x → -∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumProfile {
    s_values: Vec<f64>,
    psi: Vec<f64>,
    /// `dψ/ds = (log h)_x` at each node.
    slope: Vec<f64>,
    length: f64,
    x_nodes: Vec<f64>,
}

pub fn to_momentum(m: &MetricProfile) -> MomentumProfile {
    let g = m.grid();
    let h = m.h().values();
    let n = h.len();
    let cum = cumulative_integrate(h, g.spacing());
    let s_values: Vec<f64> = cum.iter().map(|c| c + 0.5 * h[0]).collect();
    let slope = log_derivatives(m.log_h()).0.into_values();
    MomentumProfile {
        length: integrate_with_tails(h, g.spacing()),
        s_values,
        psi: h.to_vec(),
        slope,
        x_nodes: g.nodes(),
    }
    .check_len(n)
}

impl MomentumProfile {
    fn check_len(self, n: usize) -> Self {
        debug_assert_eq!(self.s_values.len(), n);
        self
    }

    pub fn s_values(&self) -> &[f64] {
        &self.s_values
    }

    pub fn psi_values(&self) -> &[f64] {
        &self.psi
    }

    /// Total length `L` of the momentum interval.
    pub fn length(&self) -> f64 {
        self.length
    }

    /// Slopes of `ψ` at the two ends of the sampled interval.
    pub fn end_slopes(&self) -> (f64, f64) {
        (self.slope[0], self.slope[self.slope.len() - 1])
    }

    /// `ψ(s)`, clamped to zero off `[0, L]`; the tails are the exact model
    /// `ψ = 2s` and `ψ = 2(L - s)`.
    pub fn psi(&self, s: f64) -> f64 {
        let n = self.s_values.len();
        if s <= 0.0 || s >= self.length {
            return 0.0;
        }
        if s <= self.s_values[0] {
            return self.psi[0] * s / self.s_values[0];
        }
        if s >= self.s_values[n - 1] {
            return self.psi[n - 1] * (self.length - s) / (self.length - self.s_values[n - 1]);
        }
        let j = self.s_values.partition_point(|&v| v <= s).saturating_sub(1).min(n - 2);
        hermite(
            self.s_values[j],
            self.s_values[j + 1],
            (self.psi[j], self.psi[j + 1]),
            (self.slope[j], self.slope[j + 1]),
            s,
        )
    }

    /// Reconstructs `h` on `grid` from `ψ` alone, via `dx = ds/ψ`. The
    /// profile is anchored at the centre of its own sample.
    pub fn invert(&self, grid: Grid) -> Result<MetricProfile> {
        let n = self.s_values.len();
        let mid = n / 2;
        let mut x = vec![0.0; n];
        x[mid] = self.x_nodes[mid];
        let step = |a: f64, b: f64| gauss_legendre(a, b, |s| 1.0 / self.psi(s));
        for j in mid + 1..n {
            x[j] = x[j - 1] + step(self.s_values[j - 1], self.s_values[j]);
        }
        for j in (0..mid).rev() {
            x[j] = x[j + 1] - step(self.s_values[j], self.s_values[j + 1]);
        }
        let logs: Vec<f64> = self.psi.iter().map(|p| p.ln()).collect();
        let values = grid
            .nodes()
            .iter()
            .map(|&xq| {
                if xq <= x[0] {
                    return logs[0] + self.slope[0] * (xq - x[0]);
                }
                if xq >= x[n - 1] {
                    return logs[n - 1] + self.slope[n - 1] * (xq - x[n - 1]);
                }
                let j = x.partition_point(|&v| v <= xq).saturating_sub(1).min(n - 2);
                // d(log ψ)/dx = (log h)_x
                hermite(x[j], x[j + 1], (logs[j], logs[j + 1]), (self.slope[j], self.slope[j + 1]), xq)
            })
            .collect();
        MetricProfile::from_log(Field::new(grid, values)?)
    }
}

/// `h(x - c)`: the metric pulled back by the translation `x ↦ x - c`,
/// extended past the grid by the pole tails.
pub fn translate(m: &MetricProfile, c: f64) -> MetricProfile {
    let g = *m.grid();
    let v = m.log_h().values();
    let n = v.len();
    let (x0, x1) = (g.x_min(), g.x_max());
    let values = (0..n)
        .map(|i| {
            let xs = g.x(i) - c;
            if xs < x0 {
                v[0] + 2.0 * (xs - x0)
            } else if xs > x1 {
                v[n - 1] - 2.0 * (xs - x1)
            } else {
                interpolate_lagrange(&g, v, xs, 8)
            }
        })
        .collect();
    MetricProfile::from_log(Field::new(g, values).expect("finite translate")).expect("translate keeps decay")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_diameter_is_pi() {
        let m = MetricProfile::fubini_study(Grid::standard());
        assert!((diameter(&m) - PI).abs() < 1e-6);
    }

    #[test]
    fn round_caps() {
        let m = MetricProfile::fubini_study(Grid::standard());
        for r in [1e-5f64, 0.05, 0.1, 0.5, 1.0, 1.5] {
            let exact = 2.0 * PI * (1.0 - r.cos());
            let got = pole_ball_volume(&m, r).unwrap();
            assert!((got / exact - 1.0).abs() < 1e-6, "r={r} {got} {exact}");
        }
        assert!(matches!(pole_ball_volume(&m, 10.0 * PI), Err(Error::RadiusTooLarge { .. })));
    }

    #[test]
    fn momentum_of_round_metric() {
        let m = MetricProfile::fubini_study(Grid::standard());
        let p = to_momentum(&m);
        for k in 0..=200 {
            let s = 2.0 * k as f64 / 200.0;
            assert!((p.psi(s) - s * (2.0 - s)).abs() < 1e-5, "s={s}");
        }
        assert!((p.psi(1.0) - 1.0).abs() < 1e-10);
        assert_eq!(p.psi(-0.5), 0.0);
        assert_eq!(p.psi(2.5), 0.0);
        let (l, r) = p.end_slopes();
        assert!((l - 2.0).abs() < 0.2 && (r + 2.0).abs() < 0.2);
        let scaled = to_momentum(&MetricProfile::scaled_fubini_study(Grid::standard(), 0.75));
        assert!((scaled.psi(0.75) - 0.75).abs() < 1e-8);
    }

    #[test]
    fn momentum_round_trip() {
        let g = Grid::standard();
        let m = MetricProfile::new(Field::from_fn(g, |x| {
            let s = 1.0 / x.cosh();
            s * s * (1.0 + 0.3 * (-(x - 0.5).powi(2)).exp())
        }))
        .unwrap();
        let back = to_momentum(&m).invert(g).unwrap();
        let rel = m.h().zip_map(back.h(), |a, b| (a - b).abs() / a).max();
        assert!(rel < 1e-6, "{rel}");
    }

    #[test]
    fn translation_roundtrip() {
        let g = Grid::standard();
        let m = MetricProfile::fubini_study(g);
        let t = translate(&m, 0.3);
        let exact = Field::from_fn(g, |x| super::super::reference_log_density(x - 0.3));
        assert!(t.log_h().sup_distance(&exact) < 1e-8, "{}", t.log_h().sup_distance(&exact));
        assert!((t.class_size() - 2.0).abs() < 1e-9);
    }
}
