//! The twisted Ricci potential `i∂∂̄u = ω + α - Ric(ω)`, normalized by
//! `∫ e^{-u} dm = Vol`, and the quantities built from it.

use crate::error::{Error, Result};
use crate::geometry::{log_derivatives, MetricProfile, TwistProfile};
use crate::numerics::{cumulative_integrate, diff1_with, DiffOrder, Field};

/// Largest tolerated `|u_x(x_max)|` before the Neumann problem is declared
/// unsolvable.
pub const SOLVABILITY_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct RicciPotential {
    pub u: Field,
    /// Constant added to the raw double integral.
    pub c_norm: f64,
    /// Solvability defect `|u_x(x_max)|`.
    pub residual: f64,
}

/// `u_x = ∫_{-∞}^x (2h + 2a) + (log h)_x - 2`, the slope of the Ricci
/// potential that vanishes at the south pole. The model tail carries the
/// mass beyond `x_min`; 2 is the pole value of `(log h)_x`.
pub fn ricci_potential_slope(m: &MetricProfile, t: &TwistProfile) -> Result<Field> {
    if m.grid() != t.a().grid() {
        return Err(Error::GridMismatch);
    }
    let (dv, _) = log_derivatives(m.log_h());
    let mass: Vec<f64> = m.h().values().iter().zip(t.a().values()).map(|(h, a)| 2.0 * (h + a)).collect();
    let cum = cumulative_integrate(&mass, m.grid().spacing());
    let tail = 0.5 * mass[0];
    Field::new(*m.grid(), (0..cum.len()).map(|i| tail + cum[i] + dv[i] - 2.0).collect())
}

/// Solves `u_xx = 2h + 2a + (log h)_xx` with zero slope at the south pole
/// by integrating twice, then shifts `u` to normalize `∫ e^{-u} dm`.
pub fn solve_ricci_potential(m: &MetricProfile, t: &TwistProfile) -> Result<RicciPotential> {
    let dx = m.grid().spacing();
    let ux = ricci_potential_slope(m, t)?.into_values();
    let n = ux.len();
    let residual = ux[n - 1].abs();
    if residual > SOLVABILITY_TOLERANCE {
        return Err(Error::SolvabilityDefect { defect: ux[n - 1] });
    }
    let raw = cumulative_integrate(&ux, dx);
    let weights: Vec<f64> = raw.iter().map(|u| (-u).exp()).collect();
    let c_norm = (m.integrate_dm(&weights) / m.volume()).ln();
    let u = Field::new(*m.grid(), raw.iter().map(|u| u + c_norm).collect())?;
    Ok(RicciPotential { u, c_norm, residual })
}

/// `c = (1/V) ∫ u e^{-u} dm`, non-positive by Jensen.
pub fn c_constant(m: &MetricProfile, p: &RicciPotential) -> f64 {
    let w: Vec<f64> = p.u.values().iter().map(|u| u * (-u).exp()).collect();
    let c = m.integrate_dm(&w) / m.volume();
    debug_assert!(c <= 1e-10, "c = {c} violates Jensen");
    c
}

/// Margin `RHS - LHS` of
/// `(1/V)∫f² e^{-u} ≤ (1/V)∫|∇f|²_c e^{-u} + ((1/V)∫f e^{-u})²`.
pub fn check_weighted_poincare(m: &MetricProfile, p: &RicciPotential, f: &Field) -> f64 {
    let vol = m.volume();
    let fx = diff1_with(f, DiffOrder::Sixth);
    let n = f.len();
    let mut sq = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut lin = vec![0.0; n];
    for i in 0..n {
        let w = (-p.u[i]).exp();
        sq[i] = f[i] * f[i] * w;
        grad[i] = fx[i] * fx[i] / (2.0 * m.h()[i]) * w;
        lin[i] = f[i] * w;
    }
    let mean = m.integrate_dm(&lin) / vol;
    m.integrate_dm(&grad) / vol + mean * mean - m.integrate_dm(&sq) / vol
}

/// `∫ |∇u|²_c dm = π ∫ u_x² dx`.
pub fn gradient_energy(m: &MetricProfile, p: &RicciPotential) -> f64 {
    let ux = diff1_with(&p.u, DiffOrder::Sixth);
    let sq: Vec<f64> = ux.values().iter().map(|d| d * d).collect();
    std::f64::consts::PI * crate::numerics::integrate_slice(&sq, m.grid().spacing())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{core_sup_abs, laplacian, scalar_curvature, trace_twist, Normalization};
    use crate::numerics::Grid;

    fn bump(g: Grid, eps: f64) -> MetricProfile {
        let base = MetricProfile::fubini_study(g);
        base.with_potential(&Field::from_fn(g, |x| eps * (-x * x).exp())).unwrap()
    }

    #[test]
    fn kahler_einstein_potentials_vanish() {
        let g = Grid::standard();
        let p = solve_ricci_potential(&MetricProfile::fubini_study(g), &TwistProfile::zero(g)).unwrap();
        assert!(p.u.sup_abs() < 1e-10, "{}", p.u.sup_abs());
        let m = MetricProfile::scaled_fubini_study(g, 0.75);
        let t = TwistProfile::sech2(g, 0.25).unwrap();
        let p = solve_ricci_potential(&m, &t).unwrap();
        assert!(p.u.sup_abs() < 1e-10);
        assert_eq!(c_constant(&m, &p).abs() < 1e-12, true);
    }

    #[test]
    fn class_defect_is_detected() {
        let g = Grid::standard();
        let t = TwistProfile::sech2(g, 0.25).unwrap();
        match solve_ricci_potential(&MetricProfile::fubini_study(g), &t) {
            Err(Error::SolvabilityDefect { defect }) => assert!((defect - 1.0).abs() < 1e-6),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn potential_traces_the_defining_equation() {
        let g = Grid::standard();
        let m = bump(g, 0.3);
        let t = TwistProfile::zero(g);
        let p = solve_ricci_potential(&m, &t).unwrap();
        let w: Vec<f64> = p.u.values().iter().map(|u| (-u).exp()).collect();
        assert!((m.integrate_dm(&w) / m.volume() - 1.0).abs() < 1e-12);
        let lhs = laplacian(&m, &p.u, Normalization::Complex);
        let r = scalar_curvature(&m);
        let tr = trace_twist(&m, &t, Normalization::Complex);
        let rhs = Field::from_fn(g, |_| 1.0).zip_map(&tr, |a, b| a + b).zip_map(&r, |a, b| a - b);
        assert!(core_sup_abs(&m, &lhs.zip_map(&rhs, |a, b| a - b)) < 1e-6);
        assert!(c_constant(&m, &p) < -1e-6);
    }

    #[test]
    fn poincare_equality_for_constants() {
        let g = Grid::standard();
        let m = bump(g, 0.3);
        let p = solve_ricci_potential(&m, &TwistProfile::zero(g)).unwrap();
        assert!(check_weighted_poincare(&m, &p, &Field::constant(g, 2.5)).abs() < 1e-12);
        assert!(check_weighted_poincare(&m, &p, &p.u) >= 0.0);
    }

    #[test]
    fn translation_equivariance() {
        let g = Grid::standard();
        let m = bump(g, 0.3);
        let shifted = crate::geometry::translate(&m, g.spacing());
        let t = TwistProfile::zero(g);
        let p = solve_ricci_potential(&m, &t).unwrap();
        let q = solve_ricci_potential(&shifted, &t).unwrap();
        let n = g.n_nodes();
        let dev = (100..n - 100).map(|i| (q.u[i + 1] - p.u[i]).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-8, "{dev}");
    }
}
