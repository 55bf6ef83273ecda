use super::grid::{Field, Grid};

/// Accuracy of the interior difference stencils.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DiffOrder {
    /// Centered three-point stencils.
    Second,
    /// Centered seven-point stencils, tapering to fourth and second order
    /// on the two node layers next to each boundary.
    #[default]
    Sixth,
}

/// One row of a difference operator: coefficients (unscaled by the spacing)
/// applied to the nodes `start .. start + coeffs.len()`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StencilRow {
    pub start: usize,
    pub coeffs: &'static [f64],
}

impl StencilRow {
    pub fn apply(&self, values: &[f64]) -> f64 {
        self.coeffs.iter().zip(&values[self.start..]).map(|(c, v)| c * v).sum()
    }
}

const D1_LEFT: [f64; 3] = [-1.5, 2.0, -0.5];
const D1_RIGHT: [f64; 3] = [0.5, -2.0, 1.5];
const D1_C2: [f64; 3] = [-0.5, 0.0, 0.5];
const D1_C4: [f64; 5] = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
const D1_C6: [f64; 7] = [-1.0 / 60.0, 3.0 / 20.0, -0.75, 0.0, 0.75, -3.0 / 20.0, 1.0 / 60.0];

const D2_LEFT: [f64; 4] = [2.0, -5.0, 4.0, -1.0];
const D2_RIGHT: [f64; 4] = [-1.0, 4.0, -5.0, 2.0];
const D2_C2: [f64; 3] = [1.0, -2.0, 1.0];
const D2_C4: [f64; 5] = [-1.0 / 12.0, 4.0 / 3.0, -2.5, 4.0 / 3.0, -1.0 / 12.0];
const D2_C6: [f64; 7] = [1.0 / 90.0, -3.0 / 20.0, 1.5, -49.0 / 18.0, 1.5, -3.0 / 20.0, 1.0 / 90.0];

fn centered(i: usize, coeffs: &'static [f64]) -> StencilRow {
    StencilRow { start: i - coeffs.len() / 2, coeffs }
}

/// Layers from the nearest boundary at which an interior stencil of the given
/// half width still fits.
fn interior_half_width(i: usize, n: usize, order: DiffOrder) -> usize {
    let depth = i.min(n - 1 - i);
    match order {
        DiffOrder::Second => 1,
        DiffOrder::Sixth => depth.min(3),
    }
}

impl StencilRow {
    pub fn first_derivative(i: usize, n: usize, order: DiffOrder) -> Self {
        if i == 0 {
            return StencilRow { start: 0, coeffs: &D1_LEFT };
        }
        if i == n - 1 {
            return StencilRow { start: n - 3, coeffs: &D1_RIGHT };
        }
        match interior_half_width(i, n, order) {
            1 => centered(i, &D1_C2),
            2 => centered(i, &D1_C4),
            _ => centered(i, &D1_C6),
        }
    }

    pub fn second_derivative(i: usize, n: usize, order: DiffOrder) -> Self {
        if i == 0 {
            return StencilRow { start: 0, coeffs: &D2_LEFT };
        }
        if i == n - 1 {
            return StencilRow { start: n - 4, coeffs: &D2_RIGHT };
        }
        match interior_half_width(i, n, order) {
            1 => centered(i, &D2_C2),
            2 => centered(i, &D2_C4),
            _ => centered(i, &D2_C6),
        }
    }
}

pub fn diff1_with(f: &Field, order: DiffOrder) -> Field {
    let n = f.len();
    let inv = 1.0 / f.grid().spacing();
    let v = f.values();
    let out = (0..n).map(|i| StencilRow::first_derivative(i, n, order).apply(v) * inv).collect();
    Field::new(*f.grid(), out).expect("derivative of a finite field is finite")
}

pub fn diff2_with(f: &Field, order: DiffOrder) -> Field {
    let n = f.len();
    let inv = 1.0 / (f.grid().spacing() * f.grid().spacing());
    let v = f.values();
    let out = (0..n).map(|i| StencilRow::second_derivative(i, n, order).apply(v) * inv).collect();
    Field::new(*f.grid(), out).expect("derivative of a finite field is finite")
}

/// Second-order centered first derivative with one-sided boundary stencils.
pub fn diff1(f: &Field) -> Field {
    diff1_with(f, DiffOrder::Second)
}

/// Second-order centered second derivative with one-sided boundary stencils.
pub fn diff2(f: &Field) -> Field {
    diff2_with(f, DiffOrder::Second)
}

/// Lagrange interpolation through the `points` nodes closest to `x`.
/// Only meaningful inside `[x_min, x_max]`.
pub fn interpolate_lagrange(grid: &Grid, values: &[f64], x: f64, points: usize) -> f64 {
    let n = grid.n_nodes();
    let points = points.clamp(2, n);
    let s = (x - grid.x_min()) / grid.spacing();
    let centre = s.floor() as isize - (points as isize - 1) / 2;
    let start = centre.clamp(0, (n - points) as isize) as usize;
    let mut acc = 0.0;
    for j in start..start + points {
        let xj = grid.x(j);
        let mut w = 1.0;
        for k in start..start + points {
            if k != j {
                w *= (x - grid.x(k)) / (xj - grid.x(k));
            }
        }
        acc += w * values[j];
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Grid {
        Grid::new(10.0, n).unwrap()
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let f = Field::constant(grid(101), 1.0);
        assert!(diff1(&f).sup_abs() < 1e-14);
        assert!(diff2(&f).sup_abs() < 1e-12);
        assert!(diff2_with(&f, DiffOrder::Sixth).sup_abs() < 1e-12);
    }

    #[test]
    fn second_derivative_exact_on_quadratics() {
        for order in [DiffOrder::Second, DiffOrder::Sixth] {
            let f = Field::from_fn(grid(201), |x| x * x - 3.0 * x + 1.0);
            let d2 = diff2_with(&f, order);
            assert!(d2.values().iter().all(|v| (v - 2.0).abs() < 1e-9), "{order:?}");
            let d1 = diff1_with(&f, order);
            for i in 0..f.len() {
                let x = f.grid().x(i);
                assert!((d1[i] - (2.0 * x - 3.0)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sech2_slope_at_origin() {
        let g = grid(2001);
        let f = Field::from_fn(g, |x| 1.0 / x.cosh().powi(2));
        let d1 = diff1(&f);
        let h = g.spacing();
        assert!(d1[1000].abs() < h * h);
        // away from the origin the derivative is -2 sech^2 tanh
        let x = g.x(1200);
        let exact = -2.0 * x.tanh() / x.cosh().powi(2);
        assert!((d1[1200] - exact).abs() < 2.0 * h * h);
        assert!((diff1_with(&f, DiffOrder::Sixth)[1200] - exact).abs() < 1e-10);
    }

    #[test]
    fn sixth_order_converges_faster() {
        let err = |n: usize| {
            let g = grid(n);
            let f = Field::from_fn(g, |x| (0.3 * x).sin() * (-0.05 * x * x).exp());
            let d2 = diff2_with(&f, DiffOrder::Sixth);
            (0..n)
                .filter(|&i| g.x(i).abs() < 5.0)
                .map(|i| {
                    let x = g.x(i);
                    let e = (-0.05 * x * x).exp();
                    let s = (0.3 * x).sin();
                    let c = (0.3 * x).cos();
                    let exact = e * (-0.09 * s - 0.06 * x * c + (0.01 * x * x - 0.1) * s);
                    (d2[i] - exact).abs()
                })
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(101), err(201));
        assert!(e1 / e2 > 40.0, "observed ratio {}", e1 / e2);
    }

    #[test]
    fn lagrange_reproduces_polynomials() {
        let g = grid(65);
        let f: Vec<f64> = g.nodes().iter().map(|x| x.powi(3) - x).collect();
        for &x in &[-9.87, -0.01, 3.3, 9.99] {
            let v = interpolate_lagrange(&g, &f, x, 6);
            assert!((v - (x * x * x - x)).abs() < 1e-9);
        }
    }
}
