use super::grid::Field;

/// Composite Simpson weights (including the spacing) for an odd node count.
pub fn simpson_weights(n: usize, dx: f64) -> Vec<f64> {
    assert!(n >= 3 && n % 2 == 1, "Simpson weights need an odd node count");
    (0..n)
        .map(|i| {
            let w = if i == 0 || i == n - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * dx / 3.0
        })
        .collect()
}

pub fn integrate_slice(values: &[f64], dx: f64) -> f64 {
    let n = values.len();
    assert!(n >= 3 && n % 2 == 1, "Simpson rule needs an odd node count");
    let mut odd = 0.0;
    let mut even = 0.0;
    for (i, v) in values.iter().enumerate().take(n - 1).skip(1) {
        if i % 2 == 1 {
            odd += v;
        } else {
            even += v;
        }
    }
    dx / 3.0 * (values[0] + values[n - 1] + 4.0 * odd + 2.0 * even)
}

/// Composite Simpson value of the integral over `[x_min, x_max]`.
pub fn integrate(f: &Field) -> f64 {
    integrate_slice(f.values(), f.grid().spacing())
}

/// Running integral `F(x_i) = ∫_{x_min}^{x_i} f dx`.
///
/// Interior cells use the six-point rule
/// `dx/1440 (11, -93, 802, 802, -93, 11)`, the next layer the four-point rule
/// `dx/24 (-1, 13, 13, -1)` and the end cells `dx/12 (5, 8, -1)`.
pub fn cumulative_integrate(values: &[f64], dx: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    if n < 3 {
        for i in 1..n {
            out[i] = out[i - 1] + 0.5 * dx * (values[i - 1] + values[i]);
        }
        return out;
    }
    for i in 0..n - 1 {
        let cell = if i == 0 {
            dx / 12.0 * (5.0 * values[0] + 8.0 * values[1] - values[2])
        } else if i == n - 2 {
            dx / 12.0 * (5.0 * values[n - 1] + 8.0 * values[n - 2] - values[n - 3])
        } else if i == 1 || i == n - 3 {
            dx / 24.0 * (-values[i - 1] + 13.0 * values[i] + 13.0 * values[i + 1] - values[i + 2])
        } else {
            dx / 1440.0
                * (11.0 * (values[i - 2] + values[i + 3]) - 93.0 * (values[i - 1] + values[i + 2])
                    + 802.0 * (values[i] + values[i + 1]))
        };
        out[i + 1] = out[i] + cell;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Grid;

    #[test]
    fn zero_and_odd_integrands() {
        let g = Grid::new(10.0, 2001).unwrap();
        assert_eq!(integrate(&Field::zeros(g)), 0.0);
        assert!(integrate(&Field::from_fn(g, |x| x)).abs() < 1e-12);
    }

    #[test]
    fn sech2_integral() {
        let g = Grid::new(10.0, 2001).unwrap();
        let v = integrate(&Field::from_fn(g, |x| 1.0 / x.cosh().powi(2)));
        assert!((v - 2.0 * 10f64.tanh()).abs() < 1e-12);
        assert!((v - 2.0).abs() < 1e-8);
    }

    #[test]
    fn simpson_order_at_least_four() {
        // integrand with kinks in no derivative but a finite truncation cost
        let f = |x: f64| (-(x - 0.3) * (x - 0.3)).exp() * (2.0 * x).cos();
        let exact = {
            let g = Grid::new(10.0, 40001).unwrap();
            integrate(&Field::from_fn(g, f))
        };
        let err = |n| (integrate(&Field::from_fn(Grid::new(10.0, n).unwrap(), f)) - exact).abs();
        let (e1, e2) = (err(65), err(129));
        assert!(e1 / e2 >= 16.0 || e2 < 1e-14, "ratio {}", e1 / e2);
    }

    #[test]
    fn cumulative_matches_antiderivative() {
        let g = Grid::new(10.0, 2001).unwrap();
        let f: Vec<f64> = g.nodes().iter().map(|x| 1.0 / x.cosh().powi(2)).collect();
        let c = cumulative_integrate(&f, g.spacing());
        for (i, ci) in c.iter().enumerate() {
            let exact = g.x(i).tanh() - (-10f64).tanh();
            assert!((ci - exact).abs() < 1e-12, "{i} {}", ci - exact);
        }
    }
}
