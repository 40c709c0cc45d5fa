use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform time grid `t0 + k*dt`, `k = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t0: f64,
    dt: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, n_steps: usize) -> Result<Self> {
        if !(t0.is_finite() && t0 >= 0.0) {
            return Err(Error::InvalidGrid(format!("t0 must be finite and >= 0, got {t0}")));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidGrid(format!("dt must be finite and > 0, got {dt}")));
        }
        if n_steps == 0 {
            return Err(Error::InvalidGrid("n_steps must be >= 1".into()));
        }
        let last = t0 + dt * n_steps as f64;
        if !last.is_finite() || last <= t0 + dt * (n_steps as f64 - 1.0) {
            return Err(Error::InvalidGrid("node times are not strictly increasing".into()));
        }
        Ok(Self { t0, dt, n_steps })
    }

    /// Grid on `[0, horizon]` with step `dt`; the step count is rounded to the
    /// nearest integer so that `horizon` is hit when it is a multiple of `dt`.
    pub fn horizon(horizon: f64, dt: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidGrid(format!("horizon must be > 0, got {horizon}")));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidGrid(format!("dt must be finite and > 0, got {dt}")));
        }
        let n = (horizon / dt).round().max(1.0) as usize;
        Self::new(0.0, dt, n)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }
    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }
    pub fn time(&self, k: usize) -> f64 {
        self.t0 + self.dt * k as f64
    }
    pub fn end(&self) -> f64 {
        self.time(self.n_steps)
    }
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(move |k| self.time(k))
    }

    /// Index of the node closest to `t`, clamped to the grid.
    pub fn index_of(&self, t: f64) -> usize {
        let k = ((t - self.t0) / self.dt).round();
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(self.n_steps)
        }
    }
}

/// Values of a `dim`-dimensional process at every node of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
    stop_index: Option<usize>,
}

impl SamplePath {
    /// `values` is node-major: node `k` occupies `values[k*dim..(k+1)*dim]`.
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(crate::error::param("dim", "must be >= 1"));
        }
        if values.len() != grid.n_nodes() * dim {
            return Err(crate::error::param(
                "values",
                format!("expected {} entries, got {}", grid.n_nodes() * dim, values.len()),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteIntegrand { index: i / dim });
        }
        Ok(Self {
            grid,
            dim,
            values,
            stop_index: None,
        })
    }

    pub fn scalar(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, 1, values)
    }

    /// Marks the path as stopped from node `index` on. Values after the stop
    /// are held at the stopped value.
    pub fn with_stop(mut self, index: usize) -> Self {
        let index = index.min(self.grid.n_steps());
        let held: Vec<f64> = self.node(index).to_vec();
        for k in index + 1..self.grid.n_nodes() {
            self.values[k * self.dim..(k + 1) * self.dim].copy_from_slice(&held);
        }
        self.stop_index = Some(index);
        self
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn stop_index(&self) -> Option<usize> {
        self.stop_index
    }
    pub fn len(&self) -> usize {
        self.grid.n_nodes()
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn node(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Scalar value at node `k`; panics on multi-dimensional paths.
    pub fn at(&self, k: usize) -> f64 {
        assert_eq!(self.dim, 1, "at() on a {}-dimensional path", self.dim);
        self.values[k]
    }

    pub fn last(&self) -> &[f64] {
        self.node(self.grid.n_steps())
    }

    /// Linear interpolation of a scalar path at time `t` (clamped to the grid).
    pub fn interpolate(&self, t: f64) -> f64 {
        assert_eq!(self.dim, 1);
        let g = &self.grid;
        let u = ((t - g.t0()) / g.dt()).clamp(0.0, g.n_steps() as f64);
        let k = (u.floor() as usize).min(g.n_steps() - 1);
        let w = u - k as f64;
        self.values[k] * (1.0 - w) + self.values[k + 1] * w
    }

    /// Writes `t,x0,...,x{d-1}` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "t")?;
        for i in 0..self.dim {
            write!(out, ",x{i}")?;
        }
        writeln!(out)?;
        for k in 0..self.len() {
            write!(out, "{:.16e}", self.grid.time(k))?;
            for v in self.node(k) {
                write!(out, ",{v:.16e}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}
