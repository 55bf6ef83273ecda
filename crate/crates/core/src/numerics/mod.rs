//! Uniform grids on the truncated cylinder, sampled fields, finite differences,
//! quadrature and the linear / nonlinear solvers shared by every other module.

mod grid;
mod linalg;
mod newton;
mod quadrature;
mod stencil;

pub use grid::{Field, Grid};
pub use linalg::{solve_tridiagonal, BandMatrix, LinearSystem, Tridiagonal};
pub use newton::{newton_1d_bvp, newton_solve, NewtonOptions, NewtonOutcome};
pub use quadrature::{cumulative_integrate, integrate, integrate_slice, simpson_weights};
pub use stencil::{diff1, diff1_with, diff2, diff2_with, interpolate_lagrange, DiffOrder, StencilRow};

/// Observed orders `log2(e_k / e_{k+1})` of errors on a halving sequence,
/// skipping pairs whose finer error is at or below `floor`: once an error
/// reaches roundoff its ratio says nothing about the scheme.
pub fn refinement_orders(errors: &[f64], floor: f64) -> Vec<f64> {
    errors.windows(2).filter(|p| p[1] > floor).map(|p| (p[0] / p[1]).log2()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orders_skip_the_floor() {
        let o = refinement_orders(&[1.6e-3, 1e-4, 1e-9, 3e-9], 1e-8);
        assert_eq!(o, vec![4.0]);
        assert!(refinement_orders(&[1e-9, 1e-9], 1e-8).is_empty());
    }
}
