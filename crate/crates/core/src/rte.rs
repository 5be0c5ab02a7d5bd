//! Steady radiative transport on the phase-space grid: first-order upwind
//! streaming, Henyey–Greenstein scattering with uniform angular quadrature,
//! zero inflow on the boundary.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::elliptic::kappa;
use crate::grid::PhaseGrid;
use crate::linalg::{DenseMatrix, SparseOperator, TripletBuilder};

/// Velocity components below this are treated as tangential.
const TANGENT_EPS: f64 = 1e-14;

/// Henyey–Greenstein kernel on the angle grid, rows normalized so that
/// `Σ_{l'} K[l][l'] / N_v = 1`.
pub fn hg_kernel_matrix(g: f64, n_v: usize) -> DenseMatrix {
    assert!(g.abs() < 1.0, "anisotropy must satisfy |g| < 1");
    let theta = |l: usize| 2.0 * PI * l as f64 / n_v as f64;
    let mut k = DenseMatrix::from_fn(n_v, n_v, |l, lp| {
        let c = (theta(l) - theta(lp)).cos();
        (1.0 - g * g) / (1.0 + g * g - 2.0 * g * c).powf(1.5)
    });
    for l in 0..n_v {
        let mean: f64 = (0..n_v).map(|lp| k[(l, lp)]).sum::<f64>() / n_v as f64;
        for lp in 0..n_v {
            k[(l, lp)] /= mean;
        }
    }
    k
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RteCoefficients {
    /// Knudsen number.
    pub eps1: f64,
    /// Oscillation period of the media.
    pub eps2: f64,
    /// Scattering anisotropy.
    pub g: f64,
}

impl RteCoefficients {
    pub fn new(eps1: f64, eps2: f64, g: f64) -> Self {
        assert!(eps1 > 0.0 && eps2 > 0.0, "eps1 and eps2 must be positive");
        assert!(g.abs() < 1.0, "anisotropy must satisfy |g| < 1");
        Self { eps1, eps2, g }
    }
}

pub fn sigma_s(x1: f64, x2: f64, eps1: f64, eps2: f64) -> f64 {
    kappa(x1, x2, eps2) / eps1
}

pub fn sigma_a(x1: f64, x2: f64, eps1: f64, eps2: f64) -> f64 {
    eps1 * (1.0
        + (4.0 * x1 * x1 * x2 * x2).sin()
        + (1.1 + (2.0 * PI * x1 / eps2).cos()) / (1.1 + (2.0 * PI * x2 / eps2).cos())
        + (1.1 + (PI * x2 / eps2).sin()) / (1.1 + (PI * x1 / eps2).sin()))
}

/// Two-photon absorption coefficient.
pub fn sigma_b(x1: f64, x2: f64, eps1: f64) -> f64 {
    0.1 * eps1 * (2.0 + 0.5 * x1.cos() + 0.5 * x2.sin())
}

pub fn assemble_rte(pg: &PhaseGrid, coeff: &RteCoefficients) -> SparseOperator {
    let kernel = hg_kernel_matrix(coeff.g, pg.n_v());
    assemble_transport(
        pg,
        |x, y| sigma_s(x, y, coeff.eps1, coeff.eps2),
        |x, y| sigma_a(x, y, coeff.eps1, coeff.eps2),
        &kernel,
    )
}

/// `v·∇u + (σ_a + σ_s)u − σ_s 𝒦u` for arbitrary coefficients and kernel.
pub fn assemble_transport(
    pg: &PhaseGrid,
    sigma_s: impl Fn(f64, f64) -> f64,
    sigma_a: impl Fn(f64, f64) -> f64,
    kernel: &DenseMatrix,
) -> SparseOperator {
    let grid = pg.spatial();
    let nv = pg.n_v();
    assert_eq!((kernel.nrows(), kernel.ncols()), (nv, nv), "kernel size");
    let n = grid.n_axis();
    let ih = 1.0 / grid.h();
    let w = pg.weight();
    let total = pg.n_total();
    let mut b = TripletBuilder::with_capacity(total, total, total * (nv + 3));
    let vel: Vec<(f64, f64)> = (0..nv).map(|l| pg.velocity(l)).collect();

    for ix in 0..n {
        for iy in 0..n {
            let node = grid.index(ix, iy);
            let (x, y) = (grid.coord(ix), grid.coord(iy));
            let ss = sigma_s(x, y);
            let sa = sigma_a(x, y);
            for (l, &(c, s)) in vel.iter().enumerate() {
                let row = pg.index(node, l);
                let mut diag = sa + ss;
                // upwind neighbour sits against the direction of travel
                if c > TANGENT_EPS {
                    diag += c * ih;
                    if ix > 0 {
                        b.push(row, pg.index(grid.index(ix - 1, iy), l), -c * ih);
                    }
                } else if c < -TANGENT_EPS {
                    diag -= c * ih;
                    if ix + 1 < n {
                        b.push(row, pg.index(grid.index(ix + 1, iy), l), c * ih);
                    }
                }
                if s > TANGENT_EPS {
                    diag += s * ih;
                    if iy > 0 {
                        b.push(row, pg.index(grid.index(ix, iy - 1), l), -s * ih);
                    }
                } else if s < -TANGENT_EPS {
                    diag -= s * ih;
                    if iy + 1 < n {
                        b.push(row, pg.index(grid.index(ix, iy + 1), l), s * ih);
                    }
                }
                b.push(row, row, diag);
                if ss != 0.0 {
                    for lp in 0..nv {
                        b.push(row, pg.index(node, lp), -ss * kernel[(l, lp)] * w);
                    }
                }
            }
        }
    }
    b.build()
}

/// Gaussian beam centred in space and aimed along `θ = 0`.
pub fn eval_source_rte(pg: &PhaseGrid, scale: f64) -> Vec<f64> {
    let l = pg.spatial().length();
    let (cx, r2) = (0.5 * l, (0.25 * l) * (0.25 * l));
    pg.sample(|x, y, t| {
        let spatial = ((x - cx).powi(2) + (y - cx).powi(2)) / r2;
        let angular = ((t.cos() - 1.0).powi(2) + t.sin().powi(2)) / 0.04;
        scale * (-spatial - angular).exp()
    })
}
