//! The twisted entropy `W(g, f, τ)` in Riemannian normalization with
//! `n = 1`, the functional `μ(g, τ)`, and their consequences.
//!
//! In the reduced variables, with `q = -(log h)_xx - 2a = h (R - Tr β)`,
//!
//! `W = (2τ)⁻¹ ∫ [τ (q + f_x²) + (f - 2) h] e^{-f} dx`,
//! `(2τ)⁻¹ ∫ h e^{-f} dx = 1`.
//!
//! Only invariant `f` are admitted, so the computed `μ` is the infimum over
//! invariant functions and bounds the true `μ` from above.

mod collapse;
mod coupled;

pub use collapse::{
    check_diameter_bound, check_non_collapsing, check_restricted_log_sobolev, entropy_infimum, kappa,
    log_sobolev_c1, sobolev_constant_estimate, DiameterCheck, EntropyInfimum, LogSobolevReport,
    LogSobolevViolation, NonCollapsingEntry, NonCollapsingReport, INFIMUM_MARGIN,
};
pub use coupled::{backwards_f_step, coupled_from_trajectory, coupled_w_run, dw_dt_formula, CoupledWRun};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{integrate_with_tails, log_derivatives, pole_distance, MetricProfile, TwistProfile};
use crate::numerics::{
    diff1_with, newton_solve, simpson_weights, BandMatrix, DiffOrder, Field, LinearSystem, NewtonOptions,
    StencilRow,
};

/// `q = -(log h)_xx - 2a`.
pub(crate) fn curvature_density(m: &MetricProfile, t: &TwistProfile) -> Vec<f64> {
    let (_, d2v) = log_derivatives(m.log_h());
    d2v.values().iter().zip(t.a().values()).map(|(d, a)| -d - 2.0 * a).collect()
}

/// Quadrature weights of `∫ · dx` including the polar tails.
pub(crate) fn tail_weights(n: usize, dx: f64) -> Vec<f64> {
    let mut w = simpson_weights(n, dx);
    w[0] += 0.5;
    w[n - 1] += 0.5;
    w
}

pub fn w_functional(m: &MetricProfile, t: &TwistProfile, f: &Field, tau: f64) -> f64 {
    let q = curvature_density(m, t);
    let fx = diff1_with(f, DiffOrder::Sixth);
    let h = m.h().values();
    let g: Vec<f64> = (0..f.len())
        .map(|i| (tau * (q[i] + fx[i] * fx[i]) + (f[i] - 2.0) * h[i]) * (-f[i]).exp())
        .collect();
    integrate_with_tails(&g, m.grid().spacing()) / (2.0 * tau)
}

/// `(4πτ)⁻¹ ∫ e^{-f} dm - 1`.
pub fn constraint_defect(m: &MetricProfile, f: &Field, tau: f64) -> f64 {
    let e: Vec<f64> = f.values().iter().map(|v| (-v).exp()).collect();
    m.integrate_dm(&e) / (4.0 * std::f64::consts::PI * tau) - 1.0
}

/// The constant admissible at `τ`: `f = log(Vol / (4πτ))`.
pub fn constant_test_function(m: &MetricProfile, tau: f64) -> Field {
    Field::constant(*m.grid(), (m.volume() / (4.0 * std::f64::consts::PI * tau)).ln())
}

/// `W(g, log(Vol/2π), ½)`, the upper bound for `μ(g, ½)`.
pub fn constant_test_value(m: &MetricProfile, t: &TwistProfile) -> f64 {
    w_functional(m, t, &constant_test_function(m, 0.5), 0.5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyResult {
    pub mu: f64,
    #[serde(skip)]
    pub minimizer_f: Option<Field>,
    pub tau: f64,
    /// `sup |τ(2Δf - |∇f|² + R - Tr β) + f - 2 - μ|` over the resolved core.
    pub euler_lagrange_residual: f64,
    pub constraint_residual: f64,
    /// Lagrange multiplier of the discrete system, `μ ≈ λ - 1`.
    pub lambda: f64,
}

impl EntropyResult {
    pub fn minimizer(&self) -> &Field {
        self.minimizer_f.as_ref().expect("minimizer is kept unless deserialized")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyOptions {
    pub newton: NewtonOptions,
    /// Preconditioned descent steps before the Newton polish.
    pub descent_steps: usize,
}

impl Default for EntropyOptions {
    fn default() -> Self {
        Self { newton: NewtonOptions { tol: 2e-10, max_iter: 60, min_damping: 1e-6 }, descent_steps: 40 }
    }
}

/// Jacobian of the Euler–Lagrange system bordered by the multiplier column
/// and the constraint row.
struct Bordered {
    band: BandMatrix,
    column: Vec<f64>,
    row: Vec<f64>,
}

impl LinearSystem for Bordered {
    fn dim(&self) -> usize {
        self.column.len() + 1
    }

    fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.column.len();
        let y = self.band.solve(&rhs[..n])?;
        let z = self.band.solve(&self.column)?;
        let ry: f64 = self.row.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rz: f64 = self.row.iter().zip(&z).map(|(a, b)| a * b).sum();
        if rz.abs() < 1e-300 {
            return Err(Error::SingularSystem { row: n, pivot: rz });
        }
        let dl = (ry - rhs[n]) / rz;
        let mut out: Vec<f64> = y.iter().zip(&z).map(|(a, b)| a - b * dl).collect();
        out.push(dl);
        Ok(out)
    }
}

/// Discrete Euler–Lagrange problem for `w = e^{-f/2}`:
/// `-4τ w_xx + τ q w - h w log w² - h w - λ h w = 0`, Neumann ends, and
/// `(2τ)⁻¹ ∫ h w² = 1`.
struct Problem<'a> {
    h: &'a [f64],
    q: Vec<f64>,
    tau: f64,
    rows: Vec<StencilRow>,
    ends: (StencilRow, StencilRow),
    weights: Vec<f64>,
    inv_dx: f64,
}

impl<'a> Problem<'a> {
    fn new(m: &'a MetricProfile, t: &TwistProfile, tau: f64) -> Self {
        let n = m.grid().n_nodes();
        let dx = m.grid().spacing();
        Self {
            h: m.h().values(),
            q: curvature_density(m, t),
            tau,
            rows: (0..n).map(|i| StencilRow::second_derivative(i, n, DiffOrder::Sixth)).collect(),
            ends: (
                StencilRow::first_derivative(0, n, DiffOrder::Second),
                StencilRow::first_derivative(n - 1, n, DiffOrder::Second),
            ),
            weights: tail_weights(n, dx),
            inv_dx: 1.0 / dx,
        }
    }

    fn n(&self) -> usize {
        self.h.len()
    }

    /// Residual rows without the multiplier term, `A(w)`.
    fn operator(&self, w: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut r = vec![0.0; n];
        let inv2 = self.inv_dx * self.inv_dx;
        for i in 1..n - 1 {
            let d2 = self.rows[i].apply(w) * inv2;
            r[i] = -4.0 * self.tau * d2 + self.tau * self.q[i] * w[i] - self.h[i] * w[i] * (w[i] * w[i]).ln()
                - self.h[i] * w[i];
        }
        r[0] = self.ends.0.apply(w) * self.inv_dx;
        r[n - 1] = self.ends.1.apply(w) * self.inv_dx;
        r
    }

    fn mass(&self, w: &[f64]) -> f64 {
        (0..self.n()).map(|i| self.weights[i] * self.h[i] * w[i] * w[i]).sum::<f64>() / (2.0 * self.tau)
    }

    fn normalize(&self, w: &mut [f64]) {
        let s = self.mass(w).sqrt();
        w.iter_mut().for_each(|v| *v /= s);
    }

    /// Multiplier that makes `A(w) - λ h w` orthogonal to `w`.
    fn rayleigh(&self, w: &[f64], a: &[f64]) -> f64 {
        let n = self.n();
        let num: f64 = (1..n - 1).map(|i| self.weights[i] * w[i] * a[i]).sum();
        let den: f64 = (1..n - 1).map(|i| self.weights[i] * self.h[i] * w[i] * w[i]).sum();
        num / den
    }

    fn eval(&self, x: &[f64]) -> Result<(Vec<f64>, Bordered)> {
        let n = self.n();
        let (w, lambda) = (&x[..n], x[n]);
        if w.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::NegativeDensity);
        }
        let mut r = self.operator(w);
        let mut band = BandMatrix::zeros(n, 3, 3);
        let mut column = vec![0.0; n];
        let inv2 = self.inv_dx * self.inv_dx;
        for i in 1..n - 1 {
            r[i] -= lambda * self.h[i] * w[i];
            let row = &self.rows[i];
            for (k, c) in row.coeffs.iter().enumerate() {
                band.add(i, row.start + k, -4.0 * self.tau * c * inv2);
            }
            let diag = self.tau * self.q[i] - self.h[i] * ((w[i] * w[i]).ln() + 3.0 + lambda);
            band.add(i, i, diag);
            column[i] = -self.h[i] * w[i];
        }
        for (i, row) in [(0, &self.ends.0), (n - 1, &self.ends.1)] {
            for (k, c) in row.coeffs.iter().enumerate() {
                band.add(i, row.start + k, c * self.inv_dx);
            }
        }
        let row: Vec<f64> = (0..n).map(|i| self.weights[i] * self.h[i] * w[i] / self.tau).collect();
        r.push(self.mass(w) - 1.0);
        Ok((r, Bordered { band, column, row }))
    }

    fn energy(&self, m: &MetricProfile, t: &TwistProfile, w: &[f64]) -> f64 {
        let f = Field::new(*m.grid(), w.iter().map(|v| -(v * v).ln()).collect()).expect("positive density");
        w_functional(m, t, &f, self.tau)
    }

    /// Tridiagonal Sobolev preconditioner `-4τ ∂² + h`.
    fn precondition(&self, g: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        let inv2 = self.inv_dx * self.inv_dx;
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for i in 1..n - 1 {
            lower[i] = -4.0 * self.tau * inv2;
            upper[i] = -4.0 * self.tau * inv2;
            diag[i] = 8.0 * self.tau * inv2 + self.h[i];
        }
        diag[0] = 1.0;
        upper[0] = -1.0;
        diag[n - 1] = 1.0;
        lower[n - 1] = -1.0;
        let mut rhs = g.to_vec();
        rhs[0] = 0.0;
        rhs[n - 1] = 0.0;
        crate::numerics::solve_tridiagonal(&lower, &diag, &upper, &rhs)
    }

    /// Normalized preconditioned descent with Armijo backtracking.
    fn descend(&self, m: &MetricProfile, t: &TwistProfile, mut w: Vec<f64>, steps: usize) -> Result<Vec<f64>> {
        let n = self.n();
        self.normalize(&mut w);
        let mut e = self.energy(m, t, &w);
        for _ in 0..steps {
            let a = self.operator(&w);
            let lambda = self.rayleigh(&w, &a);
            let mut g: Vec<f64> = (0..n).map(|i| a[i] - lambda * self.h[i] * w[i]).collect();
            g[0] = 0.0;
            g[n - 1] = 0.0;
            let d = self.precondition(&g)?;
            let slope: f64 = (0..n).map(|i| self.weights[i] * g[i] * d[i]).sum::<f64>() / self.tau;
            if !(slope > 1e-14) {
                break;
            }
            let mut s = 1.0;
            let mut accepted = false;
            while s > 1e-8 {
                let mut trial: Vec<f64> = (0..n).map(|i| w[i] - s * d[i]).collect();
                if trial.iter().all(|v| *v > 0.0) {
                    self.normalize(&mut trial);
                    let et = self.energy(m, t, &trial);
                    if et <= e - 1e-4 * s * slope {
                        w = trial;
                        e = et;
                        accepted = true;
                        break;
                    }
                }
                s *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        Ok(w)
    }
}

fn constant_start(m: &MetricProfile, tau: f64) -> Vec<f64> {
    vec![(2.0 * tau / m.class_size()).sqrt(); m.grid().n_nodes()]
}

/// Heat-kernel-shaped start concentrated at one pole, `w² ∝ e^{-d²/(4τ)}`.
fn pole_start(m: &MetricProfile, tau: f64, north: bool) -> Vec<f64> {
    let d = pole_distance(m);
    let total = crate::geometry::meridian_length(m);
    d.iter()
        .map(|&r| {
            let r = if north { r } else { total - r };
            (-r * r / (8.0 * tau)).exp().max(1e-150)
        })
        .collect()
}

pub fn minimize_w(m: &MetricProfile, t: &TwistProfile, tau: f64, tol: f64) -> Result<EntropyResult> {
    let mut opts = EntropyOptions::default();
    opts.newton.tol = opts.newton.tol.min(tol);
    minimize_w_with(m, t, tau, &opts)
}

/// Minimizes over invariant `f` from a constant start and from starts
/// concentrated at each pole, keeping the smallest converged value.
pub fn minimize_w_with(m: &MetricProfile, t: &TwistProfile, tau: f64, opts: &EntropyOptions) -> Result<EntropyResult> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
    }
    if m.grid() != t.a().grid() {
        return Err(Error::GridMismatch);
    }
    let starts = [constant_start(m, tau), pole_start(m, tau, true), pole_start(m, tau, false)];
    let mut best: Option<EntropyResult> = None;
    let mut last_err = Error::NoConvergence { iterations: 0, residual: f64::NAN };
    for start in starts {
        match solve_from(m, t, tau, start, opts) {
            Ok(r) => {
                if best.as_ref().map_or(true, |b| r.mu < b.mu) {
                    best = Some(r);
                }
            }
            Err(e) => last_err = e,
        }
    }
    best.ok_or(last_err)
}

/// Descent then Newton from a single start.
pub fn solve_from(
    m: &MetricProfile,
    t: &TwistProfile,
    tau: f64,
    start: Vec<f64>,
    opts: &EntropyOptions,
) -> Result<EntropyResult> {
    let p = Problem::new(m, t, tau);
    let n = p.n();
    let attempt = |w0: Vec<f64>| -> Result<Vec<f64>> {
        let w = p.descend(m, t, w0, opts.descent_steps)?;
        let a = p.operator(&w);
        let lambda = p.rayleigh(&w, &a);
        let mut x = w;
        x.push(lambda);
        // Roundoff in the `-4τ w_xx` rows grows like τ; at τ = 1 it reaches
        // about 2e-10.
        let scale = opts.newton.tol * (2.0 * tau).max(1.0);
        let newton = NewtonOptions { tol: scale, ..opts.newton };
        Ok(newton_solve(|x: &[f64]| p.eval(x), x, &newton)?.solution)
    };
    let x = match attempt(start) {
        Err(Error::NegativeDensity) => attempt(constant_start(m, tau))?,
        other => other?,
    };
    let (w, lambda) = (&x[..n], x[n]);
    let f = Field::new(*m.grid(), w.iter().map(|v| -(v * v).ln()).collect())?;
    let mu = w_functional(m, t, &f, tau);
    let a = p.operator(w);
    let core = m.core_mask();
    let el = (1..n - 1)
        .filter(|&i| core[i])
        .map(|i| ((a[i] - lambda * p.h[i] * w[i]) / (p.h[i] * w[i])).abs())
        .fold(0.0, f64::max);
    Ok(EntropyResult {
        mu,
        minimizer_f: Some(f.clone()),
        tau,
        euler_lagrange_residual: el,
        constraint_residual: constraint_defect(m, &f, tau).abs(),
        lambda,
    })
}

/// `μ(g, ½)` evaluated at `W(g_tKE, const, ½) = log(Vol/2π) - 1`, computed
/// directly at the solved metric.
pub fn lambda_impl(tke: &MetricProfile, t: &TwistProfile) -> f64 {
    constant_test_value(tke, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Grid;

    #[test]
    fn constant_value_at_kahler_einstein() {
        let g = Grid::standard();
        for eps in [0.0, 0.25] {
            let m = MetricProfile::scaled_fubini_study(g, 1.0 - eps);
            let t = TwistProfile::sech2(g, eps).unwrap();
            let expected = (m.volume() / (2.0 * std::f64::consts::PI)).ln() - 1.0;
            assert!((constant_test_value(&m, &t) - expected).abs() < 1e-10);
            assert!(constraint_defect(&m, &constant_test_function(&m, 0.5), 0.5).abs() < 1e-12);
        }
        let fs = MetricProfile::fubini_study(g);
        assert!((constant_test_value(&fs, &TwistProfile::zero(g)) - (2f64.ln() - 1.0)).abs() < 1e-10);
    }

    #[test]
    fn scaling_identity() {
        let g = Grid::standard();
        let m = MetricProfile::fubini_study(g).with_potential(&Field::from_fn(g, |x| 0.1 * (-x * x).exp())).unwrap();
        let t = TwistProfile::zero(g);
        let f = Field::from_fn(g, |x| 0.3 * x.tanh() + 0.2 * (-x * x).exp());
        let a = w_functional(&m, &t, &f, 0.5);
        let b = w_functional(&m.scaled(2.0), &t, &f, 1.0);
        assert!((a - b).abs() < 1e-8, "{a} {b}");
    }

    #[test]
    fn minimizer_at_kahler_einstein_is_constant() {
        let g = Grid::standard();
        let m = MetricProfile::scaled_fubini_study(g, 0.75);
        let t = TwistProfile::sech2(g, 0.25).unwrap();
        let r = minimize_w(&m, &t, 0.5, 1e-10).unwrap();
        assert!(r.minimizer().osc() < 1e-5, "{}", r.minimizer().osc());
        assert!((r.mu - lambda_impl(&m, &t)).abs() < 1e-8, "{r:?}");
        assert!(r.euler_lagrange_residual < 1e-6 && r.constraint_residual < 1e-8, "{r:?}");
    }

    #[test]
    fn mu_below_constant_value_and_scale_invariant() {
        let g = Grid::standard();
        let m = MetricProfile::fubini_study(g).with_potential(&Field::from_fn(g, |x| 0.2 * (-(x - 0.5) * (x - 0.5)).exp())).unwrap();
        let t = TwistProfile::zero(g);
        let r = minimize_w(&m, &t, 0.5, 1e-10).unwrap();
        assert!(r.mu <= constant_test_value(&m, &t) + 1e-9);
        assert!(r.euler_lagrange_residual < 1e-6, "{r:?}");
        let fs = MetricProfile::fubini_study(g);
        let a = minimize_w(&fs, &t, 0.5, 1e-10).unwrap().mu;
        let b = minimize_w(&fs.scaled(2.0), &t, 1.0, 1e-10).unwrap().mu;
        assert!((a - b).abs() < 1e-6, "{a} {b}");
    }
}
