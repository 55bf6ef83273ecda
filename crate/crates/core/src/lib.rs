//! Numerical laboratory for the twisted Kähler-Ricci flow on S¹-invariant
//! metrics of the two-sphere.
//!
//! Invariant metrics are represented on the cylinder `x ∈ [-X, X]`,
//! `θ ∈ [0, 2π)` by the area density `h(x)` of `ω = h dx∧dθ`; the twist form
//! is `α = a(x) dx∧dθ`. Complex normalizations are the default: scalar
//! curvature `R = -(log h)_xx / (2h)`, Laplacian `f_xx / (2h)`, gradient norm
//! `f_x² / (2h)`. Riemannian quantities are twice these.

pub mod einstein;
pub mod entropy;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod mabuchi;
pub mod monitors;
pub mod numerics;
pub mod potential;

pub use error::{Error, Result};
