//! Time grids, sample paths and quadrature along paths.
//!
//! Paths are stored at grid nodes; off-node queries use piecewise-linear
//! interpolation. All time integrals in the library go through the
//! trapezoidal rule on the path grid.

use crate::error::{CoreError, Result};

/// Strictly increasing time grid on `[0, t_end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
}

impl TimeGrid {
    /// Uniform grid with spacing `t_end / n_steps`.
    pub fn uniform(t_end: f64, n_steps: usize) -> Result<Self> {
        if !(t_end > 0.0) {
            return Err(CoreError::InvalidGrid(format!(
                "t_end must be positive, got {t_end}"
            )));
        }
        if n_steps == 0 {
            return Err(CoreError::InvalidGrid("n_steps must be >= 1".into()));
        }
        let dt = t_end / n_steps as f64;
        let mut nodes: Vec<f64> = (0..=n_steps).map(|j| j as f64 * dt).collect();
        // force exact endpoints
        nodes[0] = 0.0;
        nodes[n_steps] = t_end;
        Ok(Self { nodes })
    }

    /// Grid from explicit nodes; must start at 0 and be strictly increasing.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(CoreError::InvalidGrid("need at least two nodes".into()));
        }
        if nodes[0] != 0.0 {
            return Err(CoreError::InvalidGrid("first node must be 0".into()));
        }
        for w in nodes.windows(2) {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(CoreError::InvalidGrid(
                    "nodes must be strictly increasing and finite".into(),
                ));
            }
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn t_end(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// Number of steps (= node count - 1).
    pub fn n_steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Step `j`: `s_{j+1} - s_j`.
    pub fn dt(&self, j: usize) -> f64 {
        self.nodes[j + 1] - self.nodes[j]
    }
}

/// A `d`-dimensional path sampled at the nodes of a [`TimeGrid`].
#[derive(Debug, Clone)]
pub struct SamplePath {
    grid: TimeGrid,
    dim: usize,
    /// Row-major: node j occupies `values[j*dim .. (j+1)*dim]`.
    values: Vec<f64>,
}

impl SamplePath {
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(CoreError::InvalidPath("dimension must be >= 1".into()));
        }
        if values.len() != grid.n_nodes() * dim {
            return Err(CoreError::InvalidPath(format!(
                "expected {} values, got {}",
                grid.n_nodes() * dim,
                values.len()
            )));
        }
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            return Err(CoreError::InvalidPath(format!(
                "non-finite value at flat index {idx}"
            )));
        }
        Ok(Self { grid, dim, values })
    }

    /// One-dimensional path.
    pub fn scalar(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, 1, values)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Value vector at node `j`.
    pub fn value(&self, j: usize) -> &[f64] {
        &self.values[j * self.dim..(j + 1) * self.dim]
    }

    pub fn at(&self, j: usize, comp: usize) -> f64 {
        self.values[j * self.dim + comp]
    }

    /// All values of a scalar path.
    pub fn scalar_values(&self) -> &[f64] {
        assert_eq!(self.dim, 1, "scalar_values on a {}-dim path", self.dim);
        &self.values
    }

    /// Piecewise-linear interpolation of component `comp` at time `s`.
    pub fn interpolate(&self, s: f64, comp: usize) -> f64 {
        let nodes = self.grid.nodes();
        if s <= nodes[0] {
            return self.at(0, comp);
        }
        if s >= *nodes.last().unwrap() {
            return self.at(nodes.len() - 1, comp);
        }
        let j = match nodes.binary_search_by(|n| n.partial_cmp(&s).unwrap()) {
            Ok(j) => return self.at(j, comp),
            Err(j) => j - 1,
        };
        let w = (s - nodes[j]) / (nodes[j + 1] - nodes[j]);
        (1.0 - w) * self.at(j, comp) + w * self.at(j + 1, comp)
    }

    /// Terminal value of a scalar path.
    pub fn terminal(&self) -> f64 {
        self.at(self.grid.n_nodes() - 1, 0)
    }
}

/// Trapezoidal rule over explicit node values.
pub fn trapezoid(nodes: &[f64], values: &[f64]) -> f64 {
    assert_eq!(nodes.len(), values.len());
    let mut acc = 0.0;
    for j in 0..nodes.len() - 1 {
        acc += 0.5 * (values[j] + values[j + 1]) * (nodes[j + 1] - nodes[j]);
    }
    acc
}

/// Trapezoidal approximation of `∫ f ds` along the path grid.
///
/// The integrand sees the node index and time; it may read the path
/// nonanticipatively through the closure's captures.
pub fn quad_along_path<F>(path: &SamplePath, f: F) -> Result<f64>
where
    F: Fn(usize, f64) -> f64,
{
    let nodes = path.grid().nodes();
    let mut vals = Vec::with_capacity(nodes.len());
    for (j, &s) in nodes.iter().enumerate() {
        let v = f(j, s);
        if !v.is_finite() {
            return Err(CoreError::NonFiniteIntegrand { node: j, s });
        }
        vals.push(v);
    }
    Ok(trapezoid(nodes, &vals))
}
