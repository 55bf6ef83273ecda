use std::ops::Index;

use crate::error::{Error, Result};

/// Uniform symmetric grid `x_min = -x_max`, odd node count so that `x = 0`
/// is a node and composite Simpson weights are well defined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    x_min: f64,
    x_max: f64,
    n_nodes: usize,
}

impl Grid {
    pub const MIN_NODES: usize = 65;

    pub fn new(x_max: f64, n_nodes: usize) -> Result<Self> {
        if !(x_max.is_finite() && x_max > 0.0) {
            return Err(Error::InvalidGrid(format!("x_max must be positive, got {x_max}")));
        }
        if n_nodes < Self::MIN_NODES || n_nodes % 2 == 0 {
            return Err(Error::InvalidGrid(format!(
                "n_nodes must be odd and >= {}, got {n_nodes}",
                Self::MIN_NODES
            )));
        }
        Ok(Self { x_min: -x_max, x_max, n_nodes })
    }

    /// Default desk-scale grid: X = 10, 2001 nodes.
    pub fn standard() -> Self {
        Self::new(10.0, 2001).expect("standard grid is valid")
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn spacing(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_nodes - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        // symmetric evaluation keeps x(i) = -x(n-1-i) bit for bit
        let mid = (self.n_nodes - 1) / 2;
        let dx = self.spacing();
        if i >= mid {
            (i - mid) as f64 * dx
        } else {
            -((mid - i) as f64 * dx)
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_nodes).map(|i| self.x(i)).collect()
    }

    /// Subsampled grid keeping every `stride`-th node.
    pub fn coarsen(&self, stride: usize) -> Result<Self> {
        if stride == 0 || (self.n_nodes - 1) % stride != 0 {
            return Err(Error::InvalidGrid(format!("stride {stride} does not divide the grid")));
        }
        Self::new(self.x_max, (self.n_nodes - 1) / stride + 1)
    }
}

/// Real samples of a scalar function at the nodes of a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return Err(Error::LengthMismatch { expected: grid.n_nodes(), found: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..grid.n_nodes()).map(|i| f(grid.x(i))).collect();
        Self { grid, values }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self { grid, values: vec![c; grid.n_nodes()] }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Pointwise combination; both fields must share the grid.
    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        assert_eq!(self.grid, other.grid, "zip_map across different grids");
        Field {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn osc(&self) -> f64 {
        self.max() - self.min()
    }

    pub fn sup_distance(&self, other: &Field) -> f64 {
        self.values.iter().zip(&other.values).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

impl Index<usize> for Field {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_even_and_small() {
        assert!(Grid::new(10.0, 2000).is_err());
        assert!(Grid::new(10.0, 63).is_err());
        assert!(Grid::new(-1.0, 101).is_err());
        let g = Grid::new(10.0, 2001).unwrap();
        assert_eq!(g.x(1000), 0.0);
        assert_eq!(g.x(0), -10.0);
        assert_eq!(g.x(2000), 10.0);
        assert!((g.spacing() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn grid_is_symmetric() {
        let g = Grid::new(7.3, 333).unwrap();
        for i in 0..g.n_nodes() {
            assert_eq!(g.x(i), -g.x(g.n_nodes() - 1 - i));
        }
    }

    #[test]
    fn field_rejects_non_finite() {
        let g = Grid::new(1.0, 65).unwrap();
        let mut v = vec![0.0; 65];
        v[3] = f64::NAN;
        assert_eq!(Field::new(g, v), Err(Error::NonFinite(3)));
        assert!(matches!(Field::new(g, vec![0.0; 3]), Err(Error::LengthMismatch { .. })));
    }
}
