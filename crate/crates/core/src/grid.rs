//! Uniform interior-node grids on `[0, L]²`, optionally tensored with a
//! uniform angular grid on the unit circle.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Interior nodes `(x_i, y_j) = (i h, j h)`, `i, j = 1..m-1`, `h = L / m`.
///
/// Fields are vectorized x-major: node `(i, j)` lives at `(i-1)(m-1) + (j-1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    length: f64,
    m_intervals: usize,
}

impl Grid2D {
    /// Panics unless `length > 0` and `m_intervals >= 2`.
    pub fn new(length: f64, m_intervals: usize) -> Self {
        assert!(length > 0.0, "domain length must be positive");
        assert!(m_intervals >= 2, "need at least one interior node per axis");
        Self {
            length,
            m_intervals,
        }
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn m_intervals(&self) -> usize {
        self.m_intervals
    }

    pub fn h(&self) -> f64 {
        self.length / self.m_intervals as f64
    }

    /// Interior nodes per axis, `m - 1`.
    pub fn n_axis(&self) -> usize {
        self.m_intervals - 1
    }

    /// Total unknowns, `(m - 1)²`.
    pub fn n_nodes(&self) -> usize {
        self.n_axis() * self.n_axis()
    }

    /// Coordinate of the interior node with 0-based axis index `k`.
    pub fn coord(&self, k: usize) -> f64 {
        (k + 1) as f64 * self.h()
    }

    /// Vector index of the node with 0-based axis indices `(ix, iy)`.
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        ix * self.n_axis() + iy
    }

    /// Iterate `(index, x, y)` over all interior nodes in vector order.
    pub fn nodes(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        let n = self.n_axis();
        (0..n).flat_map(move |ix| {
            (0..n).map(move |iy| (self.index(ix, iy), self.coord(ix), self.coord(iy)))
        })
    }

    /// Sample `f(x, y)` at every interior node.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.nodes().map(|(_, x, y)| f(x, y)).collect()
    }
}

/// Spatial grid × `n_v` angles `θ_l = 2πl / n_v`. Vectorized space-major,
/// velocity-minor: `(node, l)` lives at `node * n_v + l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    spatial: Grid2D,
    n_v: usize,
}

impl PhaseGrid {
    pub fn new(spatial: Grid2D, n_v: usize) -> Self {
        assert!(n_v >= 1, "need at least one angle");
        Self { spatial, n_v }
    }

    pub fn spatial(&self) -> &Grid2D {
        &self.spatial
    }

    pub fn n_v(&self) -> usize {
        self.n_v
    }

    pub fn n_total(&self) -> usize {
        self.spatial.n_nodes() * self.n_v
    }

    pub fn angle(&self, l: usize) -> f64 {
        2.0 * PI * l as f64 / self.n_v as f64
    }

    pub fn velocity(&self, l: usize) -> (f64, f64) {
        let t = self.angle(l);
        (t.cos(), t.sin())
    }

    /// Uniform quadrature weight of the normalized angular measure.
    pub fn weight(&self) -> f64 {
        1.0 / self.n_v as f64
    }

    pub fn index(&self, node: usize, l: usize) -> usize {
        node * self.n_v + l
    }

    pub fn sample(&self, f: impl Fn(f64, f64, f64) -> f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_total());
        for (_, x, y) in self.spatial.nodes() {
            for l in 0..self.n_v {
                out.push(f(x, y, self.angle(l)));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_scale_counts() {
        let g = Grid2D::new(0.5, 64);
        assert_eq!(g.n_nodes(), 3969);
        assert!((g.h() * 64.0 - 0.5).abs() < 1e-15);
        assert_eq!(PhaseGrid::new(g, 40).n_total(), 158_760);
    }

    #[test]
    fn angle_grid_contains_plot_slices() {
        let pg = PhaseGrid::new(Grid2D::new(0.5, 8), 40);
        assert_eq!(pg.angle(0), 0.0);
        assert!((pg.angle(35) - 1.75 * PI).abs() < 1e-14);
    }

    #[test]
    fn x_major_ordering() {
        let g = Grid2D::new(1.0, 4);
        let xs = g.sample(|x, _| x);
        assert_eq!(&xs[0..3], &[0.25, 0.25, 0.25]);
        let ys = g.sample(|_, y| y);
        assert_eq!(&ys[0..3], &[0.25, 0.5, 0.75]);
    }
}
