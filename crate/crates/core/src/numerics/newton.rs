use super::grid::Field;
use super::linalg::LinearSystem;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Target sup norm of the residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Smallest admissible fraction of the full Newton step.
    pub min_damping: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 50, min_damping: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| if x.is_finite() { m.max(x.abs()) } else { f64::INFINITY })
}

/// Damped Newton iteration on a vector unknown.
///
/// `eval` returns the residual and a solver for the Jacobian at the given
/// iterate. A trial step is halved while the residual does not decrease; if
/// the step shrinks below `min_damping` of the full step the iteration stops
/// with `StepCollapse`. Errors raised by `eval` at a trial point count as a
/// failed trial.
pub fn newton_solve<J, F>(mut eval: F, initial: Vec<f64>, opts: &NewtonOptions) -> Result<NewtonOutcome>
where
    J: LinearSystem,
    F: FnMut(&[f64]) -> Result<(Vec<f64>, J)>,
{
    if opts.max_iter == 0 {
        return Err(Error::NoConvergence { iterations: 0, residual: f64::NAN });
    }
    let mut x = initial;
    let (mut r, mut jac) = eval(&x)?;
    let mut norm = sup(&r);
    for it in 0..opts.max_iter {
        if norm < opts.tol {
            return Ok(NewtonOutcome { solution: x, iterations: it, residual: norm });
        }
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let step = jac.solve(&neg)?;
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, d)| a + lambda * d).collect();
            if let Ok((rt, jt)) = eval(&trial) {
                let nt = sup(&rt);
                if nt < norm || nt < opts.tol {
                    x = trial;
                    r = rt;
                    jac = jt;
                    norm = nt;
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < opts.min_damping {
                return Err(Error::StepCollapse { iteration: it, residual: norm });
            }
        }
    }
    if norm < opts.tol {
        return Ok(NewtonOutcome { solution: x, iterations: opts.max_iter, residual: norm });
    }
    Err(Error::NoConvergence { iterations: opts.max_iter, residual: norm })
}

/// Newton for a two-point boundary value problem sampled on a grid. The
/// callback supplies the residual and a (banded or tridiagonal) Jacobian.
pub fn newton_1d_bvp<J, F>(eval: F, initial: &Field, opts: &NewtonOptions) -> Result<Field>
where
    J: LinearSystem,
    F: FnMut(&[f64]) -> Result<(Vec<f64>, J)>,
{
    let grid = *initial.grid();
    let out = newton_solve(eval, initial.values().to_vec(), opts)?;
    Field::new(grid, out.solution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{BandMatrix, DiffOrder, Grid, StencilRow, Tridiagonal};


    #[test]
    fn linear_residual_converges_in_one_step() {
        let g = Grid::new(1.0, 65).unwrap();
        let target: Vec<f64> = g.nodes().iter().map(|x| x.sin()).collect();
        let eval = |v: &[f64]| {
            let r: Vec<f64> = v.iter().zip(&target).map(|(a, b)| 2.0 * (a - b)).collect();
            let n = v.len();
            Ok((r, Tridiagonal::new(vec![0.0; n], vec![2.0; n], vec![0.0; n])))
        };
        let out = newton_solve(eval, vec![0.0; 65], &NewtonOptions::default()).unwrap();
        assert_eq!(out.iterations, 1);
    }

    #[test]
    fn zero_budget_fails() {
        let g = Grid::new(1.0, 65).unwrap();
        let eval = |v: &[f64]| Ok((v.to_vec(), Tridiagonal::identity(v.len())));
        let opts = NewtonOptions { max_iter: 0, ..Default::default() };
        assert!(matches!(
            newton_1d_bvp(eval, &Field::constant(g, 1.0), &opts),
            Err(Error::NoConvergence { .. })
        ));
    }

    /// v'' = -2 e^v on [0, X] with v'(0) = 0 and v'(X) = -2: the even half of
    /// the Liouville solution v = log sech^2 x. The symmetric reduction removes
    /// the translation mode of the full-line problem.
    #[test]
    fn liouville_from_parabolic_guess() {
        let n = 1001;
        let dx = 10.0 / (n - 1) as f64;
        let xs: Vec<f64> = (0..n).map(|i| i as f64 * dx).collect();
        let eval = |v: &[f64]| {
            let mut r = vec![0.0; n];
            let mut jac = BandMatrix::zeros(n, 3, 3);
            // v'(0) = 0, one-sided second order
            r[0] = (-1.5 * v[0] + 2.0 * v[1] - 0.5 * v[2]) / dx;
            jac.add(0, 0, -1.5 / dx);
            jac.add(0, 1, 2.0 / dx);
            jac.add(0, 2, -0.5 / dx);
            r[n - 1] = (v[n - 1] - v[n - 2]) / dx + 2.0;
            jac.add(n - 1, n - 1, 1.0 / dx);
            jac.add(n - 1, n - 2, -1.0 / dx);
            for i in 1..n - 1 {
                let row = StencilRow::second_derivative(i, n, DiffOrder::Sixth);
                r[i] = row.apply(v) / (dx * dx) + 2.0 * v[i].exp();
                for (k, c) in row.coeffs.iter().enumerate() {
                    jac.add(i, row.start + k, c / (dx * dx));
                }
                jac.add(i, i, 2.0 * v[i].exp());
            }
            Ok((r, jac))
        };
        let guess: Vec<f64> = xs.iter().map(|x| -x * x / 4.0).collect();
        let opts = NewtonOptions { tol: 1e-9, max_iter: 200, min_damping: 1e-4 };
        let out = newton_solve(eval, guess, &opts).unwrap();
        assert!(out.residual < 1e-9);
        let h_err = out
            .solution
            .iter()
            .zip(&xs)
            .fold(0.0f64, |m, (v, x)| m.max((v.exp() - 1.0 / x.cosh().powi(2)).abs()));
        assert!(h_err < 1e-5, "sup |h - sech^2| = {h_err}");
    }
}
