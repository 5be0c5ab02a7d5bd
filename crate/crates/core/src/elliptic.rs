//! Multiscale divergence-form elliptic operator with homogeneous Dirichlet
//! data, 5-point flux stencil on the interior grid.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::grid::Grid2D;
use crate::linalg::{SparseOperator, TripletBuilder};

/// Multiscale conductivity with oscillation period `ε`.
pub fn kappa(x1: f64, x2: f64, eps: f64) -> f64 {
    2.0 + (2.0 * PI * x1).sin() * (2.0 * PI * x2).cos()
        + (2.0 + 1.8 * (2.0 * PI * x1 / eps).sin()) / (2.0 + 1.8 * (2.0 * PI * x2 / eps).cos())
        + (2.0 + (2.0 * PI * x2 / eps).sin()) / (2.0 + 1.8 * (2.0 * PI * x1 / eps).cos())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticMedium {
    pub epsilon: f64,
}

impl EllipticMedium {
    pub fn new(epsilon: f64) -> Self {
        assert!(epsilon > 0.0, "epsilon must be positive");
        Self { epsilon }
    }

    pub fn eval(&self, x1: f64, x2: f64) -> f64 {
        kappa(x1, x2, self.epsilon)
    }
}

/// `-∇·(κ∇u)` with `κ` sampled at edge midpoints.
pub fn assemble_elliptic(grid: &Grid2D, medium: &EllipticMedium) -> SparseOperator {
    assemble_divergence_form(grid, |x, y| medium.eval(x, y))
}

/// Same stencil for an arbitrary conductivity.
pub fn assemble_divergence_form(grid: &Grid2D, kappa: impl Fn(f64, f64) -> f64) -> SparseOperator {
    let n = grid.n_axis();
    let h = grid.h();
    let ih2 = 1.0 / (h * h);
    let mut b = TripletBuilder::with_capacity(grid.n_nodes(), grid.n_nodes(), 5 * grid.n_nodes());
    for ix in 0..n {
        for iy in 0..n {
            let (x, y) = (grid.coord(ix), grid.coord(iy));
            let row = grid.index(ix, iy);
            // midpoints from one expression each so shared edges match bitwise
            let (xe, xw) = ((ix as f64 + 1.5) * h, (ix as f64 + 0.5) * h);
            let (yn, ys) = ((iy as f64 + 1.5) * h, (iy as f64 + 0.5) * h);
            let east = kappa(xe, y);
            let west = kappa(xw, y);
            let north = kappa(x, yn);
            let south = kappa(x, ys);
            b.push(row, row, (east + west + north + south) * ih2);
            if ix + 1 < n {
                b.push(row, grid.index(ix + 1, iy), -east * ih2);
            }
            if ix > 0 {
                b.push(row, grid.index(ix - 1, iy), -west * ih2);
            }
            if iy + 1 < n {
                b.push(row, grid.index(ix, iy + 1), -north * ih2);
            }
            if iy > 0 {
                b.push(row, grid.index(ix, iy - 1), -south * ih2);
            }
        }
    }
    b.build()
}

/// One-dimensional analogue on `n` interior nodes of `[0, length]`, with the
/// medium sampled along the diagonal `x₁ = x₂`. Small dense-oracle toy.
pub fn assemble_elliptic_1d(n: usize, length: f64, eps: f64) -> SparseOperator {
    let h = length / (n + 1) as f64;
    let ih2 = 1.0 / (h * h);
    let k = |x: f64| kappa(x, x, eps);
    let mut b = TripletBuilder::with_capacity(n, n, 3 * n);
    for i in 0..n {
        let (right, left) = (k((i as f64 + 1.5) * h), k((i as f64 + 0.5) * h));
        b.push(i, i, (right + left) * ih2);
        if i + 1 < n {
            b.push(i, i + 1, -right * ih2);
        }
        if i > 0 {
            b.push(i, i - 1, -left * ih2);
        }
    }
    b.build()
}

/// `amplitude · sin(4πx) sin(4πy)` at interior nodes.
pub fn eval_source_elliptic(grid: &Grid2D, amplitude: f64) -> Vec<f64> {
    grid.sample(|x, y| amplitude * ((4.0 * PI * x).sin() * (4.0 * PI * y).sin()))
}
