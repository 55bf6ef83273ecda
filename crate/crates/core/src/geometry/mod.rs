//! Invariant Kähler metrics on the sphere as densities on the cylinder.
//!
//! `ω = h(x) dx∧dθ`, `g = h (dx² + dθ²)`, `dm = h dx dθ`, and the twist
//! `α = a(x) dx∧dθ`. The poles sit at `x → ±∞`; the truncated grid only sees
//! them through tails `h ≈ h(±X) e^{∓2(x ∓ X)}`, which are added back in
//! every integral over `M`.
//!
//! Derivatives of `log h` are taken relative to the round reference
//! `log sech² x`, whose derivatives are known in closed form. This keeps the
//! stencils working on an O(1) quantity instead of one that grows like
//! `-2|x|`, which otherwise dominates the roundoff of `(log h)_xx`.

mod distance;
pub mod oracle;

pub use distance::{diameter, meridian_length, pole_ball_volume, pole_distance, to_momentum, translate, MomentumProfile};
pub use oracle::{tensor_oracle_2d, OracleOptions, OracleReport};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{diff1_with, diff2_with, integrate_slice, DiffOrder, Field, Grid};

/// Pointwise checks (curvature, Laplacians) are reported on nodes where
/// `h >= CORE_FRACTION · max h`. Closer to the truncation the curvature is
/// an O(1) quantity divided by `h ~ e^{-2|x|}` and is resolved only to
/// roundoff over `h`.
pub const CORE_FRACTION: f64 = 1e-3;

/// Tolerance of the cohomology condition `L + A = 2`.
pub const CLASS_TOLERANCE: f64 = 1e-6;

/// Admissible deviation of the boundary log-slope from the pole value `∓2`.
pub const DECAY_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Normalization {
    Complex,
    Riemannian,
}

impl Normalization {
    pub fn factor(self) -> f64 {
        match self {
            Normalization::Complex => 1.0,
            Normalization::Riemannian => 2.0,
        }
    }
}

/// `log sech² x`, evaluated without overflow.
pub fn reference_log_density(x: f64) -> f64 {
    let ax = x.abs();
    (4.0f64).ln() - 2.0 * ax - 2.0 * (-2.0 * ax).exp().ln_1p()
}

fn sech2(x: f64) -> f64 {
    let c = x.cosh();
    if c.is_finite() {
        1.0 / (c * c)
    } else {
        0.0
    }
}

/// First and second derivative of `v = log h`, stenciled relative to the
/// round reference.
pub fn log_derivatives(v: &Field) -> (Field, Field) {
    let g = *v.grid();
    let dev = Field::new(g, (0..g.n_nodes()).map(|i| v[i] - reference_log_density(g.x(i))).collect())
        .expect("finite log density");
    let d1 = diff1_with(&dev, DiffOrder::Sixth);
    let d2 = diff2_with(&dev, DiffOrder::Sixth);
    let d1 = Field::from_fn(g, |x| -2.0 * x.tanh()).zip_map(&d1, |a, b| a + b);
    let d2 = Field::from_fn(g, |x| -2.0 * sech2(x)).zip_map(&d2, |a, b| a + b);
    (d1, d2)
}

/// Integral over `[x_min, x_max]` plus the two exponential tails
/// `f(±X)/2` of a density decaying like `e^{∓2x}`.
pub fn integrate_with_tails(values: &[f64], dx: f64) -> f64 {
    let n = values.len();
    integrate_slice(values, dx) + 0.5 * (values[0] + values[n - 1])
}

/// The area density `h` of an invariant Kähler form.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricProfile {
    h: Field,
    log_h: Field,
    class_size: f64,
}

impl MetricProfile {
    pub fn new(h: Field) -> Result<Self> {
        if let Some(i) = h.values().iter().position(|&v| v <= 0.0) {
            return Err(Error::PositivityLoss { node: i });
        }
        let log_h = h.map(f64::ln);
        Self::assemble(h, log_h)
    }

    /// Builds the profile from `v = log h`.
    pub fn from_log(log_h: Field) -> Result<Self> {
        let h = log_h.map(f64::exp);
        if let Some(i) = h.values().iter().position(|&v| v <= 0.0 || !v.is_finite()) {
            return Err(Error::PositivityLoss { node: i });
        }
        // Re-derive the log from h, so a metric rebuilt from stored h is
        // bit-identical to this one.
        let log_h = h.map(f64::ln);
        Self::assemble(h, log_h)
    }

    fn assemble(h: Field, log_h: Field) -> Result<Self> {
        let g = *h.grid();
        let n = g.n_nodes();
        let dx = g.spacing();
        let left = (log_h[1] - log_h[0]) / dx;
        let right = (log_h[n - 1] - log_h[n - 2]) / dx;
        if (left - 2.0).abs() > DECAY_TOLERANCE || (right + 2.0).abs() > DECAY_TOLERANCE {
            return Err(Error::InvalidMetric(format!(
                "boundary log-slopes ({left:.4}, {right:.4}) do not match pole decay (2, -2)"
            )));
        }
        let class_size = integrate_with_tails(h.values(), dx);
        if !(class_size > 0.0) {
            return Err(Error::InvalidMetric("non-positive class size".into()));
        }
        Ok(Self { h, log_h, class_size })
    }

    pub fn fubini_study(grid: Grid) -> Self {
        Self::scaled_fubini_study(grid, 1.0)
    }

    /// `c · sech² x`, the twisted Kähler-Einstein metric for the twist `(1-c) sech² x`.
    pub fn scaled_fubini_study(grid: Grid, c: f64) -> Self {
        let log_h = Field::from_fn(grid, |x| c.ln() + reference_log_density(x));
        Self::from_log(log_h).expect("scaled round metric is valid")
    }

    /// `h₀ + ½ φ_xx`, the metric `ω₀ + i∂∂̄φ` for an invariant potential.
    pub fn with_potential(&self, phi: &Field) -> Result<Self> {
        let d2 = diff2_with(phi, DiffOrder::Sixth);
        Self::new(self.h.zip_map(&d2, |h, p| h + 0.5 * p))
    }

    pub fn grid(&self) -> &Grid {
        self.h.grid()
    }

    pub fn h(&self) -> &Field {
        &self.h
    }

    pub fn log_h(&self) -> &Field {
        &self.log_h
    }

    /// `L = ∫ h dx`, the class size; `[ω] = 2π c₁ - [α]` reads `L + A = 2`.
    pub fn class_size(&self) -> f64 {
        self.class_size
    }

    pub fn volume(&self) -> f64 {
        2.0 * PI * self.class_size
    }

    /// `∫_M f dm` including the polar tails.
    pub fn integrate_dm(&self, f: &[f64]) -> f64 {
        let fh: Vec<f64> = f.iter().zip(self.h.values()).map(|(a, b)| a * b).collect();
        2.0 * PI * integrate_with_tails(&fh, self.grid().spacing())
    }

    /// Same profile multiplied by a constant (the metric `c·g`).
    pub fn scaled(&self, c: f64) -> Self {
        Self::from_log(self.log_h.map(|v| v + c.ln())).expect("positive rescaling keeps validity")
    }

    /// Nodes on which pointwise curvature-type quantities are resolved.
    pub fn core_mask(&self) -> Vec<bool> {
        let cut = CORE_FRACTION * self.h.max();
        self.h.values().iter().map(|&v| v >= cut).collect()
    }
}

/// Sup of `|f|` over the resolved core of `m`.
pub fn core_sup_abs(m: &MetricProfile, f: &Field) -> f64 {
    m.core_mask().iter().zip(f.values()).filter(|(c, _)| **c).fold(0.0, |s, (_, v)| s.max(v.abs()))
}

/// `(min, max)` of `f` over the resolved core of `m`.
pub fn core_range(m: &MetricProfile, f: &Field) -> (f64, f64) {
    m.core_mask()
        .iter()
        .zip(f.values())
        .filter(|(c, _)| **c)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, &v)| (lo.min(v), hi.max(v)))
}

/// Density `a ≥ 0` of the fixed twist form `α`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwistProfile {
    a: Field,
    mass: f64,
}

impl TwistProfile {
    pub fn new(a: Field) -> Result<Self> {
        if let Some(i) = a.values().iter().position(|&v| v < 0.0) {
            return Err(Error::InvalidTwist(format!("negative density at node {i}")));
        }
        let n = a.len();
        let peak = a.max();
        if peak > 0.0 && a[0].max(a[n - 1]) > 1e-8 * peak {
            return Err(Error::InvalidTwist("density does not decay toward the poles".into()));
        }
        let mass = integrate_with_tails(a.values(), a.grid().spacing());
        if mass > 2.0 - CLASS_TOLERANCE {
            return Err(Error::InvalidTwist(format!("twist mass {mass} leaves no Kähler class")));
        }
        Ok(Self { a, mass })
    }

    /// Skips the sign and mass checks. Used to build deliberately broken
    /// fixtures.
    #[doc(hidden)]
    pub fn new_unchecked(a: Field) -> Self {
        let mass = integrate_with_tails(a.values(), a.grid().spacing());
        Self { a, mass }
    }

    pub fn zero(grid: Grid) -> Self {
        Self { a: Field::zeros(grid), mass: 0.0 }
    }

    /// `ε sech² x`.
    pub fn sech2(grid: Grid, epsilon: f64) -> Result<Self> {
        Self::new(Field::from_fn(grid, |x| epsilon * sech2(x)))
    }

    pub fn a(&self) -> &Field {
        &self.a
    }

    /// `A = ∫ a dx`; `∫_M α = 2π A`.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn is_zero(&self) -> bool {
        self.a.values().iter().all(|&v| v == 0.0)
    }
}

/// Accepts iff `|L + A - 2| < 1e-6`.
pub fn validate_class(m: &MetricProfile, t: &TwistProfile) -> Result<()> {
    if m.grid() != t.a.grid() {
        return Err(Error::GridMismatch);
    }
    let defect = m.class_size() + t.mass() - 2.0;
    if defect.abs() < CLASS_TOLERANCE {
        Ok(())
    } else {
        Err(Error::ClassMismatch { defect })
    }
}

/// Complex scalar curvature `R = -(log h)_xx / (2h)` (Gauss curvature);
/// the Riemannian scalar curvature is twice this.
pub fn scalar_curvature(m: &MetricProfile) -> Field {
    let (_, d2) = log_derivatives(m.log_h());
    d2.zip_map(m.h(), |d, h| -d / (2.0 * h))
}

pub fn laplacian(m: &MetricProfile, f: &Field, norm: Normalization) -> Field {
    let c = norm.factor();
    diff2_with(f, DiffOrder::Sixth).zip_map(m.h(), |d, h| c * d / (2.0 * h))
}

pub fn grad_sq(m: &MetricProfile, f: &Field, norm: Normalization) -> Field {
    let c = norm.factor();
    diff1_with(f, DiffOrder::Sixth).zip_map(m.h(), |d, h| c * d * d / (2.0 * h))
}

/// `Tr_ω α = a/h` (complex) or `Tr_g β = 2a/h` (Riemannian).
pub fn trace_twist(m: &MetricProfile, t: &TwistProfile, norm: Normalization) -> Field {
    let c = norm.factor();
    t.a().zip_map(m.h(), |a, h| c * a / h)
}

/// Hessian of an invariant function in the orthonormal frame
/// `(∂_x/√h, ∂_θ/√h)` together with its complex type decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianFrames {
    pub h11: Field,
    pub h22: Field,
    /// `|∇∇̄f|²` in complex normalization.
    pub mixed_sq: Field,
    /// `|∇∇f|²` in complex normalization.
    pub pure_sq: Field,
}

pub fn hessian_frames(m: &MetricProfile, f: &Field) -> HessianFrames {
    let g = *m.grid();
    let (dv, _) = log_derivatives(m.log_h());
    let f1 = diff1_with(f, DiffOrder::Sixth);
    let f2 = diff2_with(f, DiffOrder::Sixth);
    let n = g.n_nodes();
    let (mut h11, mut h22, mut mixed, mut pure) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for i in 0..n {
        let h = m.h()[i];
        h11[i] = (f2[i] - 0.5 * dv[i] * f1[i]) / h;
        h22[i] = 0.5 * dv[i] * f1[i] / h;
        mixed[i] = f2[i] * f2[i] / (4.0 * h * h);
        let p = f2[i] - dv[i] * f1[i];
        pure[i] = p * p / (4.0 * h * h);
    }
    let mk = |v| Field::new(g, v).expect("finite hessian");
    HessianFrames { h11: mk(h11), h22: mk(h22), mixed_sq: mk(mixed), pure_sq: mk(pure) }
}
