//! Uniform space-time grids over B_R × [0, T] and fields sampled on them.

use crate::error::{Error, Result};
use crate::geometry::{ball_volume, Point};
use serde::{Deserialize, Serialize};

/// Nodes x = −R + i·h on each axis, i = 0..nx−1, h = 2R/(nx−1), and time
/// levels t_k = k·dt, k = 0..nt, dt = T/nt.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub nx: usize,
    pub nt: usize,
    pub radius: f64,
    pub horizon: f64,
}

impl GridSpec {
    pub fn new(n: usize, nx: usize, nt: usize, radius: f64, horizon: f64) -> Result<Self> {
        let g = Self {
            n,
            nx,
            nt,
            radius,
            horizon,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.n) {
            return Err(Error::Grid(format!("dimension {} unsupported", self.n)));
        }
        if self.nx < 3 || self.nt < 1 {
            return Err(Error::Grid(format!(
                "need nx ≥ 3 and nt ≥ 1, got nx = {}, nt = {}",
                self.nx, self.nt
            )));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::Grid(format!("radius {} must be positive", self.radius)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Grid(format!("horizon {} must be positive", self.horizon)));
        }
        if self.nx.checked_pow(self.n as u32).map_or(true, |v| v > 50_000_000) {
            return Err(Error::Grid("too many spatial nodes".into()));
        }
        Ok(())
    }

    pub fn h(&self) -> f64 {
        2.0 * self.radius / (self.nx - 1) as f64
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.nt as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.n as i32)
    }

    pub fn node_count(&self) -> usize {
        self.nx.pow(self.n as u32)
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.nt {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }

    /// Axis stride of the flat node index (axis 0 fastest).
    pub fn stride(&self, axis: usize) -> usize {
        self.nx.pow(axis as u32)
    }

    pub fn multi_index(&self, node: usize) -> [usize; 3] {
        let mut out = [0; 3];
        let mut rest = node;
        for slot in out.iter_mut().take(self.n) {
            *slot = rest % self.nx;
            rest /= self.nx;
        }
        out
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .take(self.n)
            .rev()
            .fold(0, |acc, &i| acc * self.nx + i)
    }

    pub fn axis_coord(&self, i: usize) -> f64 {
        if i == self.nx - 1 {
            self.radius
        } else {
            -self.radius + i as f64 * self.h()
        }
    }

    pub fn node_point(&self, node: usize) -> Point {
        let idx = self.multi_index(node);
        let c: Vec<f64> = (0..self.n).map(|d| self.axis_coord(idx[d])).collect();
        Point::new(&c)
    }

    /// Nodes strictly inside B_R carry unknowns; all others hold the
    /// homogeneous Dirichlet value.
    pub fn is_active(&self, node: usize) -> bool {
        self.node_point(node).norm() < self.radius * (1.0 - 1e-12)
    }

    pub fn active_mask(&self) -> Vec<bool> {
        (0..self.node_count()).map(|i| self.is_active(i)).collect()
    }

    /// Nearest node to a point, if the point lies in the grid cube.
    pub fn nearest_node(&self, x: &Point) -> Option<usize> {
        let h = self.h();
        let mut idx = [0usize; 3];
        for d in 0..self.n {
            let s = (x.coord(d) + self.radius) / h;
            if s < -0.5 || s > (self.nx - 1) as f64 + 0.5 {
                return None;
            }
            idx[d] = (s.round() as usize).min(self.nx - 1);
        }
        Some(self.flat_index(&idx[..self.n]))
    }

    /// Time level closest to t, clamped to [0, nt].
    pub fn nearest_time(&self, t: f64) -> usize {
        ((t / self.dt()).round().max(0.0) as usize).min(self.nt)
    }

    pub fn domain_volume(&self) -> f64 {
        ball_volume(self.n, self.radius)
    }

    /// Same domain with h and dt halved.
    pub fn refined(&self) -> Self {
        Self {
            nx: 2 * self.nx - 1,
            nt: 2 * self.nt,
            ..*self
        }
    }
}

/// Nodal values on a single time level.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl SpatialField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.node_count()],
        }
    }

    /// Σ values · h^n
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }
}

/// Space-time field, time-major: `values[k * node_count + node]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        let want = (grid.nt + 1) * grid.node_count();
        if values.len() != want {
            return Err(Error::Grid(format!(
                "field has {} values, grid needs {want}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Grid(format!("non-finite value at flat index {i}")));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            values: vec![0.0; (grid.nt + 1) * grid.node_count()],
            grid,
        }
    }

    /// Field with values f(x, t) at every node, including inactive ones.
    pub fn from_fn(grid: GridSpec, f: impl Fn(&Point, f64) -> f64) -> Result<Self> {
        let nn = grid.node_count();
        let pts: Vec<Point> = (0..nn).map(|i| grid.node_point(i)).collect();
        let mut values = Vec::with_capacity((grid.nt + 1) * nn);
        for k in 0..=grid.nt {
            let t = grid.time(k);
            values.extend(pts.iter().map(|x| f(x, t)));
        }
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        let nn = self.grid.node_count();
        &self.values[k * nn..(k + 1) * nn]
    }

    pub(crate) fn slice_mut(&mut self, k: usize) -> &mut [f64] {
        let nn = self.grid.node_count();
        &mut self.values[k * nn..(k + 1) * nn]
    }

    pub fn value(&self, k: usize, node: usize) -> f64 {
        self.values[k * self.grid.node_count() + node]
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    /// Multilinear interpolation in space on time level k; zero outside the
    /// grid cube.
    pub fn interpolate(&self, k: usize, x: &Point) -> f64 {
        let g = &self.grid;
        let h = g.h();
        let slice = self.slice(k);
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for d in 0..g.n {
            let s = (x.coord(d) + g.radius) / h;
            if !(s >= -1e-9 && s <= (g.nx - 1) as f64 + 1e-9) {
                return 0.0;
            }
            let i = (s.floor().max(0.0) as usize).min(g.nx - 2);
            base[d] = i;
            frac[d] = (s - i as f64).clamp(0.0, 1.0);
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << g.n) {
            let mut w = 1.0;
            let mut idx = 0usize;
            for d in 0..g.n {
                let bit = (corner >> d) & 1;
                w *= if bit == 1 { frac[d] } else { 1.0 - frac[d] };
                idx += (base[d] + bit) * g.stride(d);
            }
            if w != 0.0 {
                acc += w * slice[idx];
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_roundtrip() {
        let g = GridSpec::new(3, 5, 2, 1.0, 1.0).unwrap();
        for node in 0..g.node_count() {
            let idx = g.multi_index(node);
            assert_eq!(g.flat_index(&idx[..3]), node);
        }
        assert_eq!(g.h(), 0.5);
        let p = g.node_point(g.flat_index(&[2, 2, 2]));
        assert_eq!(p.norm(), 0.0);
    }

    #[test]
    fn boundary_nodes_inactive() {
        let g = GridSpec::new(1, 9, 4, 1.0, 1.0).unwrap();
        let mask = g.active_mask();
        assert!(!mask[0] && !mask[8]);
        assert!(mask[1..8].iter().all(|&a| a));
    }

    #[test]
    fn interpolation_reproduces_bilinear() {
        let g = GridSpec::new(2, 9, 1, 1.0, 1.0).unwrap();
        let f = GridField::from_fn(g, |x, _| 1.0 + 2.0 * x.coord(0) - x.coord(1) + 0.5 * x.coord(0) * x.coord(1))
            .unwrap();
        let x = Point::new(&[0.123, -0.377]);
        let want = 1.0 + 0.246 + 0.377 + 0.5 * 0.123 * -0.377;
        assert!((f.interpolate(0, &x) - want).abs() < 1e-14);
        let node = g.flat_index(&[3, 6]);
        assert_eq!(f.interpolate(1, &g.node_point(node)), f.value(1, node));
    }
}
