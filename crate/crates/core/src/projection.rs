//! Basis projections and reconstructions shared by the linear and
//! semilinear solvers.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::grid::Grid2D;
use crate::linalg::{norm2, DenseMatrix};
use crate::rsvd::SVDBasis;
use crate::sobolev::{energy_norm, WeightFactor};

/// Leading `n` triplets with `Π_X V̂_n` cached, so that
/// `⟨g, v̂_i⟩_X = (Π_X v̂_i)·g` costs one pass over `g`.
#[derive(Debug, Clone)]
pub struct Projector<'a> {
    basis: &'a SVDBasis,
    n: usize,
    pi_v: DenseMatrix,
}

impl<'a> Projector<'a> {
    pub fn new(basis: &'a SVDBasis, fx: &WeightFactor, n: usize) -> Result<Self> {
        if n > basis.rank() {
            return Err(Error::RankExhausted {
                n,
                available: basis.rank(),
            });
        }
        check_dim(basis.dim(), fx.dim())?;
        let v = basis.v_hat.subcols(0, n).to_owned();
        let pi_v = fx.factor_transpose_mat(&fx.factor_mat(&v)?)?;
        Ok(Self { basis, n, pi_v })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.basis.lambdas[..self.n]
    }

    /// `c_i = ⟨g, v̂_i⟩_X`, `i < n`.
    pub fn coefficients(&self, g: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.basis.dim(), g.len())?;
        Ok((0..self.n)
            .map(|i| crate::linalg::dot(self.pi_v.col_as_slice(i), g))
            .collect())
    }

    /// `Σ_i λ̂_i c_i û_i`.
    pub fn reconstruct(&self, c: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n, c.len())?;
        let mut u = vec![0.0; self.basis.dim()];
        for (i, &ci) in c.iter().enumerate() {
            let a = self.basis.lambdas[i] * ci;
            for (uk, &bk) in u.iter_mut().zip(self.basis.u_hat.col_as_slice(i)) {
                *uk += a * bk;
            }
        }
        Ok(u)
    }

    /// `(P_n g, g − P_n g)` with `P_n g = Σ_i ⟨g, v̂_i⟩_X v̂_i`.
    pub fn split(&self, g: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let c = self.coefficients(g)?;
        let mut pg = vec![0.0; g.len()];
        for (i, &ci) in c.iter().enumerate() {
            for (pk, &vk) in pg.iter_mut().zip(self.basis.v_hat.col_as_slice(i)) {
                *pk += ci * vk;
            }
        }
        let perp = g.iter().zip(&pg).map(|(a, b)| a - b).collect();
        Ok((pg, perp))
    }
}

pub fn project_pn(basis: &SVDBasis, fx: &WeightFactor, g: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    Projector::new(basis, fx, n)?.split(g)
}

/// `u_n = Σ_{i≤n} λ̂_i ⟨f, v̂_i⟩_X û_i`.
pub fn solve_linear_projection(basis: &SVDBasis, fx: &WeightFactor, f: &[f64], n: usize) -> Result<Vec<f64>> {
    let p = Projector::new(basis, fx, n)?;
    p.reconstruct(&p.coefficients(f)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub n: usize,
    pub rel_l2: f64,
    pub rel_energy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorCurve {
    pub rows: Vec<ErrorRow>,
}

impl ErrorCurve {
    pub fn has_energy(&self) -> bool {
        self.rows.first().is_some_and(|r| r.rel_energy.is_some())
    }

    pub fn to_csv(&self) -> String {
        let energy = self.has_energy();
        let mut out = String::from(if energy { "n,rel_l2,rel_energy\n" } else { "n,rel_l2\n" });
        for r in &self.rows {
            match (energy, r.rel_energy) {
                (true, Some(e)) => out.push_str(&format!("{},{:e},{:e}\n", r.n, r.rel_l2, e)),
                _ => out.push_str(&format!("{},{:e}\n", r.n, r.rel_l2)),
            }
        }
        out
    }
}

/// Relative errors of a basis approximation against a reference field.
pub fn relative_errors(u_ref: &[f64], u_n: &[f64], grid: Option<&Grid2D>) -> Result<(f64, Option<f64>)> {
    check_dim(u_ref.len(), u_n.len())?;
    let diff: Vec<f64> = u_ref.iter().zip(u_n).map(|(a, b)| a - b).collect();
    let rel_l2 = norm2(&diff) / norm2(u_ref);
    let rel_energy = match grid {
        Some(g) => Some(energy_norm(&diff, g)? / energy_norm(u_ref, g)?),
        None => None,
    };
    Ok((rel_l2, rel_energy))
}

/// Relative L² (and optionally energy) error of the linear projection for
/// each `n` in `n_list`. `energy_grid` enables the energy column.
pub fn error_curve(
    u_ref: &[f64],
    basis: &SVDBasis,
    fx: &WeightFactor,
    f: &[f64],
    n_list: &[usize],
    energy_grid: Option<&Grid2D>,
) -> Result<ErrorCurve> {
    let mut ns = n_list.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let n_max = ns.last().copied().unwrap_or(0);
    let p = Projector::new(basis, fx, n_max)?;
    let c = p.coefficients(f)?;
    let mut u = vec![0.0; basis.dim()];
    let mut done = 0;
    let mut rows = Vec::with_capacity(ns.len());
    for &n in &ns {
        for i in done..n {
            let a = basis.lambdas[i] * c[i];
            for (uk, &bk) in u.iter_mut().zip(basis.u_hat.col_as_slice(i)) {
                *uk += a * bk;
            }
        }
        done = n;
        let (rel_l2, rel_energy) = relative_errors(u_ref, &u, energy_grid)?;
        rows.push(ErrorRow { n, rel_l2, rel_energy });
    }
    Ok(ErrorCurve { rows })
}
