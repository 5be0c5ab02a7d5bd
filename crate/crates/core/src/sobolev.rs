//! Discrete Sobolev weights `Π = FᵀF` realizing the inner products
//! `⟨a, b⟩ = aᵀ Π b` on source and solution spaces.
//!
//! `F` is the upper Cholesky factor of `Π` in natural (x-major) ordering.
//! The difference stencils only couple nodes within two grid lines of each
//! other, so `Π` is banded and the factor stays banded with no fill outside
//! the band.

use crate::error::{check_dim, Error, Result};
use crate::grid::{Grid2D, PhaseGrid};
use crate::linalg::{DenseMatrix, SparseOperator, TripletBuilder};

/// 1D k-th forward divided difference on the `m - 1` interior values.
#[derive(Debug, Clone)]
pub struct DiffOp1D {
    pub order: usize,
    pub h: f64,
    pub matrix: SparseOperator,
}

pub fn fd_operator_1d(m_intervals: usize, k: usize, h: f64) -> Result<DiffOp1D> {
    let n = m_intervals.saturating_sub(1);
    if k >= n {
        return Err(Error::OrderTooHigh {
            order: k,
            intervals: m_intervals,
        });
    }
    let mut d = SparseOperator::identity(n);
    for level in 1..=k {
        // rows of the previous level: n - level + 1
        let rows = n - level;
        let mut step = TripletBuilder::with_capacity(rows, rows + 1, 2 * rows);
        for i in 0..rows {
            step.push(i, i, -1.0 / h);
            step.push(i, i + 1, 1.0 / h);
        }
        d = step.build().matmul(&d)?;
    }
    Ok(DiffOp1D {
        order: k,
        h,
        matrix: d,
    })
}

/// `D^{i,j} = D^i ⊗ D^j` on x-major fields; `family[k]` must have order `k`.
pub fn fd_operator_2d(i: usize, j: usize, family: &[DiffOp1D]) -> Result<SparseOperator> {
    let top = i.max(j);
    if top >= family.len() {
        return Err(Error::DimensionMismatch {
            expected: top + 1,
            found: family.len(),
        });
    }
    Ok(family[i].matrix.kron(&family[j].matrix))
}

fn diff_family(grid: &Grid2D, p: usize) -> Result<Vec<DiffOp1D>> {
    (0..=p)
        .map(|k| fd_operator_1d(grid.m_intervals(), k, grid.h()))
        .collect()
}

/// Assembled spatial Sobolev Gram matrix
/// `Π = h² Σ_{k=0..p} Σ_{i=0..k} (D^{i,k-i})ᵀ D^{i,k-i}`.
pub fn sobolev_gram(p: usize, grid: &Grid2D) -> Result<SparseOperator> {
    let family = diff_family(grid, p)?;
    let h2 = grid.h() * grid.h();
    let mut gram: Option<SparseOperator> = None;
    for k in 0..=p {
        for i in 0..=k {
            let d = fd_operator_2d(i, k - i, &family)?;
            let term = d.transpose().matmul(&d)?;
            gram = Some(match gram {
                None => term,
                Some(g) => g.add(&term)?,
            });
        }
    }
    Ok(gram.expect("k = 0 term always present").scaled(h2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Space {
    Source,
    Solution,
}

/// Upper-triangular band matrix, row-major band storage.
#[derive(Debug, Clone)]
struct BandedUpper {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedUpper {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * (self.bw + 1) + (j - i)]
    }

    fn cholesky(gram: &SparseOperator) -> Result<Self> {
        let n = gram.n_rows();
        let bw = gram
            .triplets()
            .map(|(i, j, _)| i.abs_diff(j))
            .max()
            .unwrap_or(0);
        let w = bw + 1;
        let mut data = vec![0.0; n * w];
        for (i, j, v) in gram.triplets() {
            if j >= i {
                data[i * w + (j - i)] = v;
            }
        }
        for i in 0..n {
            let jmax = (i + bw).min(n - 1);
            for j in i..=jmax {
                let mut s = data[i * w + (j - i)];
                for k in j.saturating_sub(bw)..i {
                    s -= data[k * w + (i - k)] * data[k * w + (j - k)];
                }
                if j == i {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(Error::SingularOperator(format!(
                            "weight matrix not positive definite at row {i}"
                        )));
                    }
                    data[i * w] = s.sqrt();
                } else {
                    data[i * w + (j - i)] = s / data[i * w];
                }
            }
        }
        Ok(Self { n, bw, data })
    }

    fn mul(&self, v: &[f64], out: &mut [f64]) {
        for i in 0..self.n {
            let jmax = (i + self.bw).min(self.n - 1);
            out[i] = (i..=jmax).map(|j| self.at(i, j) * v[j]).sum();
        }
    }

    fn mul_transpose(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 0..self.n {
            let jmax = (i + self.bw).min(self.n - 1);
            for j in i..=jmax {
                out[j] += self.at(i, j) * v[i];
            }
        }
    }

    fn solve(&self, w: &[f64], out: &mut [f64]) {
        for i in (0..self.n).rev() {
            let jmax = (i + self.bw).min(self.n - 1);
            let s: f64 = (i + 1..=jmax).map(|j| self.at(i, j) * out[j]).sum();
            out[i] = (w[i] - s) / self.at(i, i);
        }
    }

    fn solve_transpose(&self, w: &[f64], out: &mut [f64]) {
        for j in 0..self.n {
            let s: f64 = (j.saturating_sub(self.bw)..j)
                .map(|i| self.at(i, j) * out[i])
                .sum();
            out[j] = (w[j] - s) / self.at(j, j);
        }
    }

    fn to_sparse(&self) -> SparseOperator {
        let mut b = TripletBuilder::new(self.n, self.n);
        for i in 0..self.n {
            for j in i..=(i + self.bw).min(self.n - 1) {
                let v = self.at(i, j);
                if v != 0.0 {
                    b.push(i, j, v);
                }
            }
        }
        b.build()
    }
}

#[derive(Debug, Clone, Copy)]
enum Apply {
    Factor,
    FactorTranspose,
    Inverse,
    InverseTranspose,
}

/// Factor `F` of a weight matrix `Π = FᵀF`.
///
/// Internally `F = F_s ⊗ (c I_{n_v})`: a banded spatial factor, optionally
/// tensored with a constant velocity weight `c`. Purely spatial or general
/// weights have `n_v = 1, c = 1`.
#[derive(Debug, Clone)]
pub struct WeightFactor {
    space: Space,
    order: usize,
    spatial_gram: SparseOperator,
    spatial: BandedUpper,
    n_v: usize,
    velocity_scale: f64,
}

impl WeightFactor {
    /// Unweighted Euclidean inner product, `Π = I`.
    pub fn identity(n: usize, space: Space) -> Self {
        let gram = SparseOperator::identity(n);
        Self {
            space,
            order: 0,
            spatial: BandedUpper {
                n,
                bw: 0,
                data: vec![1.0; n],
            },
            spatial_gram: gram,
            n_v: 1,
            velocity_scale: 1.0,
        }
    }

    /// Factor an arbitrary symmetric positive definite Gram matrix.
    pub fn from_gram(gram: &SparseOperator, space: Space, order: usize) -> Result<Self> {
        if !gram.is_square() {
            return Err(Error::DimensionMismatch {
                expected: gram.n_rows(),
                found: gram.n_cols(),
            });
        }
        Ok(Self {
            space,
            order,
            spatial: BandedUpper::cholesky(gram)?,
            spatial_gram: gram.clone(),
            n_v: 1,
            velocity_scale: 1.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.spatial.n * self.n_v
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Assembled `Π`.
    pub fn gram_matrix(&self) -> SparseOperator {
        if self.n_v == 1 && self.velocity_scale == 1.0 {
            return self.spatial_gram.clone();
        }
        let c2 = self.velocity_scale * self.velocity_scale;
        self.spatial_gram
            .kron(&SparseOperator::identity(self.n_v))
            .scaled(c2)
    }

    /// Assembled `F`.
    pub fn factor_matrix(&self) -> SparseOperator {
        let fs = self.spatial.to_sparse();
        if self.n_v == 1 && self.velocity_scale == 1.0 {
            return fs;
        }
        fs.kron(&SparseOperator::identity(self.n_v))
            .scaled(self.velocity_scale)
    }

    fn apply(&self, v: &[f64], mode: Apply) -> Result<Vec<f64>> {
        check_dim(self.dim(), v.len())?;
        let ns = self.spatial.n;
        let run = |src: &[f64], dst: &mut [f64]| match mode {
            Apply::Factor => self.spatial.mul(src, dst),
            Apply::FactorTranspose => self.spatial.mul_transpose(src, dst),
            Apply::Inverse => self.spatial.solve(src, dst),
            Apply::InverseTranspose => self.spatial.solve_transpose(src, dst),
        };
        let scale = match mode {
            Apply::Factor | Apply::FactorTranspose => self.velocity_scale,
            Apply::Inverse | Apply::InverseTranspose => 1.0 / self.velocity_scale,
        };
        if self.n_v == 1 {
            let mut out = vec![0.0; ns];
            run(v, &mut out);
            if scale != 1.0 {
                out.iter_mut().for_each(|o| *o *= scale);
            }
            return Ok(out);
        }
        let mut out = vec![0.0; v.len()];
        let mut src = vec![0.0; ns];
        let mut dst = vec![0.0; ns];
        for l in 0..self.n_v {
            for s in 0..ns {
                src[s] = v[s * self.n_v + l];
            }
            run(&src, &mut dst);
            for s in 0..ns {
                out[s * self.n_v + l] = scale * dst[s];
            }
        }
        Ok(out)
    }

    pub fn apply_factor(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.apply(v, Apply::Factor)
    }

    pub fn apply_factor_transpose(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.apply(v, Apply::FactorTranspose)
    }

    pub fn apply_factor_inverse(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.apply(v, Apply::Inverse)
    }

    pub fn apply_factor_inverse_transpose(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.apply(v, Apply::InverseTranspose)
    }

    fn apply_columns(&self, a: &DenseMatrix, mode: Apply) -> Result<DenseMatrix> {
        check_dim(self.dim(), a.nrows())?;
        let mut out = DenseMatrix::zeros(a.nrows(), a.ncols());
        for j in 0..a.ncols() {
            let col = self.apply(a.col_as_slice(j), mode)?;
            out.col_as_slice_mut(j).copy_from_slice(&col);
        }
        Ok(out)
    }

    /// Column-wise `F A`.
    pub fn factor_mat(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        self.apply_columns(a, Apply::Factor)
    }

    /// Column-wise `Fᵀ A`.
    pub fn factor_transpose_mat(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        self.apply_columns(a, Apply::FactorTranspose)
    }

    /// Column-wise `F⁻¹ A`.
    pub fn inverse_mat(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        self.apply_columns(a, Apply::Inverse)
    }

    /// Column-wise `F⁻ᵀ A`.
    pub fn inverse_transpose_mat(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        self.apply_columns(a, Apply::InverseTranspose)
    }

    /// `⟨a, b⟩ = (F a)·(F b)`.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        let fa = self.apply_factor(a)?;
        let fb = self.apply_factor(b)?;
        Ok(crate::linalg::dot(&fa, &fb))
    }

    pub fn norm(&self, v: &[f64]) -> Result<f64> {
        Ok(crate::linalg::norm2(&self.apply_factor(v)?))
    }
}

/// Weight of the discrete `H^p` norm on a 2D grid (`p = 0` gives `h² I`).
pub fn build_sobolev_weight(p: usize, grid: &Grid2D) -> Result<WeightFactor> {
    if p == 0 {
        let n = grid.n_nodes();
        let h = grid.h();
        return Ok(WeightFactor {
            space: Space::Source,
            order: 0,
            spatial_gram: SparseOperator::from_diagonal(&vec![h * h; n]),
            spatial: BandedUpper {
                n,
                bw: 0,
                data: vec![h; n],
            },
            n_v: 1,
            velocity_scale: 1.0,
        });
    }
    WeightFactor::from_gram(&sobolev_gram(p, grid)?, Space::Source, p)
}

/// Spatial `H^p` weight tensored with the uniform `1/N_v` velocity weight.
pub fn build_rte_weight(p: usize, pg: &PhaseGrid) -> Result<WeightFactor> {
    let mut wf = build_sobolev_weight(p, pg.spatial())?;
    wf.n_v = pg.n_v();
    wf.velocity_scale = (1.0 / pg.n_v() as f64).sqrt();
    Ok(wf)
}

/// `‖u‖_E = sqrt(h²‖D^{1,0}u‖² + h²‖D^{0,1}u‖²)`.
pub fn energy_norm(u: &[f64], grid: &Grid2D) -> Result<f64> {
    check_dim(grid.n_nodes(), u.len())?;
    let family = diff_family(grid, 1)?;
    let dx = fd_operator_2d(1, 0, &family)?.matvec(u)?;
    let dy = fd_operator_2d(0, 1, &family)?.matvec(u)?;
    let h2 = grid.h() * grid.h();
    Ok((h2 * (crate::linalg::dot(&dx, &dx) + crate::linalg::dot(&dy, &dy))).sqrt())
}
