use crate::error::{Error, Result};

const PIVOT_FLOOR: f64 = 1e-14;

/// Anything that can solve `A x = b` for the Jacobians handed to Newton.
pub trait LinearSystem {
    fn dim(&self) -> usize;
    fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>>;
}

/// Tridiagonal matrix; `lower[0]` and `upper[n-1]` are unused.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn new(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Self {
        assert!(lower.len() == diag.len() && upper.len() == diag.len());
        Self { lower, diag, upper }
    }

    pub fn identity(n: usize) -> Self {
        Self::new(vec![0.0; n], vec![1.0; n], vec![0.0; n])
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * x[i];
                if i > 0 {
                    s += self.lower[i] * x[i - 1];
                }
                if i + 1 < n {
                    s += self.upper[i] * x[i + 1];
                }
                s
            })
            .collect()
    }
}

impl LinearSystem for Tridiagonal {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        solve_tridiagonal(&self.lower, &self.diag, &self.upper, rhs)
    }
}

/// Thomas algorithm. Fails with `SingularSystem` when a pivot falls below
/// `1e-14` of the magnitude of its row.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if lower.len() != n || upper.len() != n || rhs.len() != n {
        return Err(Error::LengthMismatch { expected: n, found: rhs.len() });
    }
    let row_scale = |i: usize| {
        let l = if i > 0 { lower[i].abs() } else { 0.0 };
        let u = if i + 1 < n { upper[i].abs() } else { 0.0 };
        diag[i].abs().max(l).max(u)
    };
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    for i in 0..n {
        let l = if i > 0 { lower[i] } else { 0.0 };
        let (cp, dp) = if i > 0 { (c[i - 1], d[i - 1]) } else { (0.0, 0.0) };
        let pivot = diag[i] - l * cp;
        let scale = row_scale(i);
        if !(pivot.abs() > PIVOT_FLOOR * scale) || scale == 0.0 {
            return Err(Error::SingularSystem { row: i, pivot });
        }
        c[i] = if i + 1 < n { upper[i] / pivot } else { 0.0 };
        d[i] = (rhs[i] - l * dp) / pivot;
    }
    let mut x = d;
    for i in (0..n.saturating_sub(1)).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(x)
}

/// Square band matrix with `kl` sub- and `ku` super-diagonals, solved by
/// Gaussian elimination with partial pivoting.
///
/// Row `i` stores columns `i - kl ..= i + kl + ku`; the extra `kl` columns
/// hold fill-in created by row interchanges.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self { n, kl, ku, width, data: vec![0.0; n * width] }
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let off = j as isize - i as isize + self.kl as isize;
        (off >= 0 && (off as usize) < self.width && j < self.n).then(|| i * self.width + off as usize)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    /// Adds `v` to entry `(i, j)`; panics outside the declared band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let in_band = j + self.kl >= i && j <= i + self.ku;
        assert!(in_band, "entry ({i}, {j}) outside band (kl={}, ku={})", self.kl, self.ku);
        let s = self.slot(i, j).expect("in band");
        self.data[s] += v;
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j).expect("entry outside band storage");
        self.data[s] = v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku + self.kl).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    fn factor_solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let (n, kl) = (self.n, self.kl);
        let reach = self.kl + self.ku;
        let mut a = self.data.clone();
        let mut b = rhs.to_vec();
        let w = self.width;
        let idx = |i: usize, j: usize| i * w + (j + kl - i);
        let row_scale: Vec<f64> = (0..n)
            .map(|i| {
                let lo = i.saturating_sub(kl);
                let hi = (i + reach).min(n - 1);
                (lo..=hi).fold(0.0f64, |m, j| m.max(self.get(i, j).abs()))
            })
            .collect();
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = a[idx(k, k)].abs();
            for r in k + 1..=last {
                let v = a[idx(r, k)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            let scale = row_scale[k].max(row_scale[p]);
            if !(best > PIVOT_FLOOR * scale) || scale == 0.0 {
                return Err(Error::SingularSystem { row: k, pivot: best });
            }
            let jmax = (k + reach).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    a.swap(idx(k, j), idx(p, j));
                }
                b.swap(k, p);
            }
            let pivot = a[idx(k, k)];
            for r in k + 1..=last {
                let m = a[idx(r, k)] / pivot;
                if m == 0.0 {
                    continue;
                }
                a[idx(r, k)] = 0.0;
                for j in k + 1..=jmax {
                    a[idx(r, j)] -= m * a[idx(k, j)];
                }
                b[r] -= m * b[k];
            }
        }
        for k in (0..n).rev() {
            let jmax = (k + reach).min(n - 1);
            let mut s = b[k];
            for j in k + 1..=jmax {
                s -= a[idx(k, j)] * b[j];
            }
            b[k] = s / a[idx(k, k)];
        }
        Ok(b)
    }
}

impl LinearSystem for BandMatrix {
    fn dim(&self) -> usize {
        self.n
    }

    fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.n {
            return Err(Error::LengthMismatch { expected: self.n, found: rhs.len() });
        }
        self.factor_solve(rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Field, Grid};

    #[test]
    fn identity_returns_rhs() {
        let r = vec![1.0, -2.0, 3.5, 0.25];
        assert_eq!(Tridiagonal::identity(4).solve(&r).unwrap(), r);
    }

    #[test]
    fn zero_diagonal_is_singular() {
        let err = solve_tridiagonal(&[0.0, 0.0], &[0.0, 1.0], &[0.0, 0.0], &[1.0, 1.0]);
        assert!(matches!(err, Err(Error::SingularSystem { row: 0, .. })));
    }

    #[test]
    fn manufactured_helmholtz_second_order() {
        // -u'' + u = f with u = exp(-x^2) sin(x), Dirichlet data at the ends
        let exact = |x: f64| (-x * x).exp() * x.sin();
        let forcing = |x: f64| {
            let e = (-x * x).exp();
            let upp = e * ((4.0 * x * x - 3.0) * x.sin() - 4.0 * x * x.cos());
            -upp + exact(x)
        };
        let err = |n: usize| {
            let g = Grid::new(5.0, n).unwrap();
            let dx = g.spacing();
            let (mut lo, mut di, mut up) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
            let mut rhs: Vec<f64> = g.nodes().iter().map(|&x| forcing(x)).collect();
            for i in 1..n - 1 {
                lo[i] = -1.0 / (dx * dx);
                up[i] = -1.0 / (dx * dx);
                di[i] = 2.0 / (dx * dx) + 1.0;
            }
            di[0] = 1.0;
            di[n - 1] = 1.0;
            rhs[0] = exact(g.x(0));
            rhs[n - 1] = exact(g.x(n - 1));
            let u = solve_tridiagonal(&lo, &di, &up, &rhs).unwrap();
            let ex = Field::from_fn(g, exact);
            Field::new(g, u).unwrap().sup_distance(&ex)
        };
        let (e1, e2) = (err(101), err(201));
        let order = (e1 / e2).log2();
        assert!(order > 1.9, "order {order}");
    }

    #[test]
    fn band_solver_matches_multiplication() {
        let n = 50;
        let mut m = BandMatrix::zeros(n, 3, 3);
        for i in 0..n {
            for j in i.saturating_sub(3)..=(i + 3).min(n - 1) {
                let v = ((i * 7 + j * 13) % 11) as f64 - 5.0;
                m.add(i, j, if i == j { v + 0.5 } else { v });
            }
        }
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let b = m.mul_vec(&x);
        let y = m.solve(&b).unwrap();
        let err = x.iter().zip(&y).fold(0.0f64, |e, (a, b)| e.max((a - b).abs()));
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn band_solver_needs_pivoting() {
        // zero leading entry forces a row interchange
        let mut m = BandMatrix::zeros(3, 1, 1);
        m.add(0, 1, 1.0);
        m.add(1, 0, 1.0);
        m.add(1, 1, 1.0);
        m.add(1, 2, 2.0);
        m.add(2, 1, 3.0);
        m.add(2, 2, 1.0);
        let b = m.mul_vec(&[1.0, 2.0, 3.0]);
        let y = m.solve(&b).unwrap();
        for (a, e) in y.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - e).abs() < 1e-12);
        }
    }
}
