//! Residuals of the evolution equations satisfied by the normalized Ricci
//! potential, with time derivatives taken by centered differences of three
//! consecutive states.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{time_derivative, FlowMode, FlowState};
use crate::geometry::{grad_sq, hessian_frames, laplacian, MetricProfile, Normalization};
use crate::numerics::Field;
use crate::potential::{c_constant, RicciPotential};

const C: Normalization = Normalization::Complex;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityResiduals {
    pub time: f64,
    /// `∂_t u - (Δu + u - c)`.
    pub u: f64,
    /// `∂_t|∇u|² - (Δ|∇u|² + |∇u|² - α(∇u, ∇̄u) - |∇∇u|² - |∇∇̄u|²)`.
    pub grad_sq: f64,
    /// `∂_t Δu - (Δ(Δu) + Δu - |∇∇̄u|²)`.
    pub laplacian: f64,
}

fn potential(s: &FlowState) -> Result<&RicciPotential> {
    s.potential.as_ref().ok_or_else(|| Error::InvalidArgument("identities need a normalized trajectory".into()))
}

/// Fraction of `max h` above which residuals are measured. The identity for
/// `Δu` involves `(log h)_xxxx / h²`, which amplifies the Newton tolerance
/// of the stepper near the poles.
pub const BULK_FRACTION: f64 = 0.05;

fn bulk_sup(m: &MetricProfile, f: &Field, fraction: f64) -> f64 {
    let cut = fraction * m.h().max();
    (0..f.len()).filter(|&i| m.h()[i] >= cut).map(|i| f[i].abs()).fold(0.0, f64::max)
}

/// Sup-norm residuals over the bulk at the middle state.
pub fn identity_residuals(prev: &FlowState, mid: &FlowState, next: &FlowState) -> Result<IdentityResiduals> {
    identity_residuals_on(prev, mid, next, BULK_FRACTION)
}

/// As [`identity_residuals`], measured where `h ≥ fraction · max h`.
pub fn identity_residuals_on(
    prev: &FlowState,
    mid: &FlowState,
    next: &FlowState,
    fraction: f64,
) -> Result<IdentityResiduals> {
    if mid.mode != FlowMode::Normalized {
        return Err(Error::InvalidArgument("identities need a normalized trajectory".into()));
    }
    let span = next.time - prev.time;
    if !(span > 0.0) {
        return Err(Error::InvalidTimeStep(span));
    }
    let (pp, pm, pn) = (potential(prev)?, potential(mid)?, potential(next)?);
    let m: &MetricProfile = &mid.metric;
    let ddt = |a: &Field, b: &Field| b.zip_map(a, |b, a| (b - a) / span);

    let u = &pm.u;
    let lap_u = laplacian(m, u, C);
    let c = c_constant(m, pm);
    let rhs_u = lap_u.zip_map(u, |l, u| l + u - c);
    let r_u = ddt(&pp.u, &pn.u).zip_map(&rhs_u, |a, b| a - b);

    let q = |s: &FlowState, p: &RicciPotential| grad_sq(&s.metric, &p.u, C);
    let g_mid = q(mid, pm);
    let hess = hessian_frames(m, u);
    let a = mid.twist.a();
    let lap_g = laplacian(m, &g_mid, C);
    let rhs_g = Field::new(
        *m.grid(),
        (0..u.len())
            .map(|i| lap_g[i] + g_mid[i] - a[i] / m.h()[i] * g_mid[i] - hess.pure_sq[i] - hess.mixed_sq[i])
            .collect(),
    )?;
    let r_g = ddt(&q(prev, pp), &q(next, pn)).zip_map(&rhs_g, |a, b| a - b);

    let l = |s: &FlowState, p: &RicciPotential| laplacian(&s.metric, &p.u, C);
    let rhs_l = laplacian(m, &lap_u, C).zip_map(&lap_u, |a, b| a + b).zip_map(&hess.mixed_sq, |a, b| a - b);
    let r_l = ddt(&l(prev, pp), &l(next, pn)).zip_map(&rhs_l, |a, b| a - b);

    Ok(IdentityResiduals {
        time: mid.time,
        u: bulk_sup(m, &r_u, fraction),
        grad_sq: bulk_sup(m, &r_g, fraction),
        laplacian: bulk_sup(m, &r_l, fraction),
    })
}

/// Residuals of the semi-discrete system at fixed data: time derivatives are
/// taken along the exact method-of-lines direction `ḣ` by a centered
/// perturbation of size `delta`, so only the spatial error remains.
pub fn semidiscrete_identity_residuals(state: &FlowState, delta: f64, fraction: f64) -> Result<IdentityResiduals> {
    if state.mode != FlowMode::Normalized {
        return Err(Error::InvalidArgument("identities need a normalized trajectory".into()));
    }
    let hdot = time_derivative(state);
    let shifted = |sign: f64| -> Result<FlowState> {
        let h = state.metric.h().zip_map(&hdot, |h, d| h + sign * delta * d);
        let mut s = FlowState::new(MetricProfile::new(h)?, (*state.twist).clone(), FlowMode::Normalized)?;
        s.time = state.time + sign * delta;
        Ok(s)
    };
    identity_residuals_on(&shifted(-1.0)?, state, &shifted(1.0)?, fraction)
}
