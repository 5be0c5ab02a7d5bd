//! Sparse assembly, reusable direct factorizations, and the small set of
//! dense kernels (thin QR, SVD) the basis construction needs.
//!
//! Dense matrices are `faer::Mat<f64>` (column-major). Sparse operators are
//! stored in compressed-row form and handed to faer's sparse LU once; the
//! resulting [`FactorizedSolver`] serves both `L x = b` and `Lᵀ x = b`.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{check_dim, Error, Result};

pub type DenseMatrix = Mat<f64>;

/// Collects `(row, col, value)` entries; duplicates are summed on `build`.
#[derive(Debug, Clone)]
pub struct TripletBuilder {
    n_rows: usize,
    n_cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(n_rows: usize, n_cols: usize, cap: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            entries: Vec::with_capacity(cap),
        }
    }

    /// Panics on out-of-range indices; assembly code computes them.
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        assert!(
            row < self.n_rows && col < self.n_cols,
            "entry ({row}, {col}) outside {}x{}",
            self.n_rows,
            self.n_cols
        );
        self.entries.push((row, col, value));
    }

    pub fn build(mut self) -> SparseOperator {
        self.entries
            .sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; self.n_rows + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in self.entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((r, c));
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for i in 0..self.n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseOperator {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }
}

/// Compressed sparse row matrix with unique, column-sorted entries per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseOperator {
    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    pub fn from_dense(a: &DenseMatrix) -> Self {
        let mut b = TripletBuilder::new(a.nrows(), a.ncols());
        for j in 0..a.ncols() {
            for i in 0..a.nrows() {
                let v = a[(i, j)];
                if v != 0.0 {
                    b.push(i, j, v);
                }
            }
        }
        b.build()
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    /// Entries of row `i` as `(col, value)` pairs, columns ascending.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n_cols, x.len())?;
        Ok((0..self.n_rows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect())
    }

    pub fn matvec_transpose(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n_rows, x.len())?;
        let mut y = vec![0.0; self.n_cols];
        for (i, &xi) in x.iter().enumerate() {
            for (j, v) in self.row(i) {
                y[j] += v * xi;
            }
        }
        Ok(y)
    }

    /// `self * b` for a dense right-hand block.
    pub fn mul_dense(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        check_dim(self.n_cols, b.nrows())?;
        let mut out = Mat::zeros(self.n_rows, b.ncols());
        for k in 0..b.ncols() {
            let x = b.col_as_slice(k);
            let y = out.col_as_slice_mut(k);
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> SparseOperator {
        let mut b = TripletBuilder::with_capacity(self.n_cols, self.n_rows, self.nnz());
        for (i, j, v) in self.triplets() {
            b.push(j, i, v);
        }
        b.build()
    }

    pub fn scaled(&self, alpha: f64) -> SparseOperator {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// `self + other`, shapes must agree.
    pub fn add(&self, other: &SparseOperator) -> Result<SparseOperator> {
        check_dim(self.n_rows, other.n_rows)?;
        check_dim(self.n_cols, other.n_cols)?;
        let mut b = TripletBuilder::with_capacity(self.n_rows, self.n_cols, self.nnz() + other.nnz());
        for (i, j, v) in self.triplets().chain(other.triplets()) {
            b.push(i, j, v);
        }
        Ok(b.build())
    }

    /// Sparse product `self * other`.
    pub fn matmul(&self, other: &SparseOperator) -> Result<SparseOperator> {
        check_dim(self.n_cols, other.n_rows)?;
        let mut b = TripletBuilder::new(self.n_rows, other.n_cols);
        let mut acc = vec![0.0; other.n_cols];
        let mut touched: Vec<usize> = Vec::new();
        let mut mark = vec![false; other.n_cols];
        for i in 0..self.n_rows {
            for (k, a) in self.row(i) {
                for (j, v) in other.row(k) {
                    if !mark[j] {
                        mark[j] = true;
                        touched.push(j);
                    }
                    acc[j] += a * v;
                }
            }
            for &j in &touched {
                b.push(i, j, acc[j]);
                acc[j] = 0.0;
                mark[j] = false;
            }
            touched.clear();
        }
        Ok(b.build())
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &SparseOperator) -> SparseOperator {
        let mut b = TripletBuilder::with_capacity(
            self.n_rows * other.n_rows,
            self.n_cols * other.n_cols,
            self.nnz() * other.nnz(),
        );
        for (i, j, a) in self.triplets() {
            for (k, l, v) in other.triplets() {
                b.push(i * other.n_rows + k, j * other.n_cols + l, a * v);
            }
        }
        b.build()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut a = Mat::zeros(self.n_rows, self.n_cols);
        for (i, j, v) in self.triplets() {
            a[(i, j)] = v;
        }
        a
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let trips: Vec<Triplet<usize, usize, f64>> = self
            .triplets()
            .map(|(row, col, val)| Triplet { row, col, val })
            .collect();
        SparseColMat::try_new_from_triplets(self.n_rows, self.n_cols, &trips)
            .map_err(|e| Error::SingularOperator(format!("sparse conversion failed: {e:?}")))
    }
}

/// Direct LU factorization of a square operator, reused for any number of
/// right-hand sides with either `L` or `Lᵀ`.
#[derive(Clone)]
pub struct FactorizedSolver {
    n: usize,
    lu: Lu<usize, f64>,
}

impl std::fmt::Debug for FactorizedSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FactorizedSolver").field("n", &self.n).finish()
    }
}

// Relative error allowed when re-solving `L·1`; anything worse means the
// factorization hit a (near) zero pivot.
const SINGULAR_PROBE_TOL: f64 = 1e-6;

/// Factorize `op` once. Exact or near singularity is detected by a probe
/// solve of `L x = L·1` in both orientations.
pub fn factorize(op: &SparseOperator) -> Result<FactorizedSolver> {
    if !op.is_square() {
        return Err(Error::DimensionMismatch {
            expected: op.n_rows(),
            found: op.n_cols(),
        });
    }
    let n = op.n_rows();
    let scale = op.max_abs();
    if n > 0 && scale == 0.0 {
        return Err(Error::SingularOperator("zero operator".into()));
    }
    let lu = op
        .to_faer()?
        .sp_lu()
        .map_err(|e| Error::SingularOperator(format!("{e:?}")))?;
    let fs = FactorizedSolver { n, lu };
    if n > 0 {
        let ones = vec![1.0; n];
        for transpose in [false, true] {
            let b = if transpose {
                op.matvec_transpose(&ones)?
            } else {
                op.matvec(&ones)?
            };
            let x = fs.solve_vec(&b, transpose)?;
            let err = x.iter().fold(0.0f64, |m, v| {
                if v.is_finite() {
                    m.max((v - 1.0).abs())
                } else {
                    f64::INFINITY
                }
            });
            if err > SINGULAR_PROBE_TOL {
                return Err(Error::SingularOperator(format!(
                    "probe solve error {err:.3e}"
                )));
            }
        }
    }
    Ok(fs)
}

impl FactorizedSolver {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.solve_vec(b, false)
    }

    pub fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.solve_vec(b, true)
    }

    fn solve_vec(&self, b: &[f64], transpose: bool) -> Result<Vec<f64>> {
        check_dim(self.n, b.len())?;
        let mut rhs = Mat::from_fn(self.n, 1, |i, _| b[i]);
        if transpose {
            self.lu.solve_transpose_in_place(rhs.as_mut());
        } else {
            self.lu.solve_in_place(rhs.as_mut());
        }
        Ok(rhs.col_as_slice(0).to_vec())
    }

    /// Solve every column of `b` against `L` (or `Lᵀ` when `transpose`).
    pub fn solve_multi(&self, b: &DenseMatrix, transpose: bool) -> Result<DenseMatrix> {
        check_dim(self.n, b.nrows())?;
        let mut x = b.clone();
        if b.ncols() == 0 {
            return Ok(x);
        }
        if transpose {
            self.lu.solve_transpose_in_place(x.as_mut());
        } else {
            self.lu.solve_in_place(x.as_mut());
        }
        Ok(x)
    }
}

/// Free-function form of [`FactorizedSolver::solve_multi`].
pub fn solve_multi(fs: &FactorizedSolver, b: &DenseMatrix, transpose: bool) -> Result<DenseMatrix> {
    fs.solve_multi(b, transpose)
}

/// Thin QR result. Columns whose `|R_kk|` falls below a relative threshold
/// are dropped, so `q` spans the numerically detected range of the input.
#[derive(Debug, Clone)]
pub struct ThinQr {
    pub q: DenseMatrix,
    pub dropped: usize,
}

impl ThinQr {
    pub fn is_full_rank(&self) -> bool {
        self.dropped == 0
    }

    /// `RankDeficient` describing the drop, if any.
    pub fn rank_deficiency(&self) -> Option<Error> {
        (self.dropped > 0).then(|| Error::RankDeficient {
            requested: self.q.ncols() + self.dropped,
            achieved: self.q.ncols(),
        })
    }
}

const QR_RANK_TOL: f64 = 1e-12;

pub fn qr_thin(a: &DenseMatrix) -> Result<ThinQr> {
    let (m, n) = (a.nrows(), a.ncols());
    if m < n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: m,
        });
    }
    if n == 0 {
        return Ok(ThinQr {
            q: Mat::zeros(m, 0),
            dropped: 0,
        });
    }
    let qr = a.qr();
    let r = qr.thin_R();
    let q_full = qr.compute_thin_Q();
    let rmax = (0..n).fold(0.0f64, |acc, k| acc.max(r[(k, k)].abs()));
    let keep: Vec<usize> = (0..n)
        .filter(|&k| rmax > 0.0 && r[(k, k)].abs() > QR_RANK_TOL * rmax)
        .collect();
    let q = Mat::from_fn(m, keep.len(), |i, j| q_full[(i, keep[j])]);
    Ok(ThinQr {
        q,
        dropped: n - keep.len(),
    })
}

/// Thin SVD `A = U diag(s) Vᵀ` with `s` nonincreasing.
pub fn svd_dense(a: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>, DenseMatrix)> {
    let k = a.nrows().min(a.ncols());
    if k == 0 {
        return Ok((Mat::zeros(a.nrows(), 0), Vec::new(), Mat::zeros(a.ncols(), 0)));
    }
    let svd = a.thin_svd().map_err(|_| Error::SvdFailure)?;
    let s_diag = svd.S().column_vector();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| s_diag[j].partial_cmp(&s_diag[i]).unwrap_or(std::cmp::Ordering::Equal));
    let (u0, v0) = (svd.U(), svd.V());
    let u = Mat::from_fn(a.nrows(), k, |i, j| u0[(i, order[j])]);
    let v = Mat::from_fn(a.ncols(), k, |i, j| v0[(i, order[j])]);
    let s = order.iter().map(|&j| s_diag[j].max(0.0)).collect();
    Ok((u, s, v))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Largest absolute entry of `a - b`.
pub fn max_abs_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max((a[(i, j)] - b[(i, j)]).abs());
        }
    }
    m
}

#[cfg(test)]
pub(crate) fn column(a: &DenseMatrix, j: usize) -> Vec<f64> {
    a.col_as_slice(j).to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(rows: &[&[f64]]) -> DenseMatrix {
        Mat::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
    }

    #[test]
    fn builder_sums_duplicates() {
        let mut b = TripletBuilder::new(2, 2);
        b.push(0, 0, 1.0);
        b.push(1, 1, 2.0);
        b.push(0, 0, 3.0);
        let a = b.build();
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.get(0, 0), 4.0);
        assert_eq!(a.get(0, 1), 0.0);
    }

    #[test]
    fn identity_solve() {
        let fs = factorize(&SparseOperator::identity(5)).unwrap();
        let mut e3 = vec![0.0; 5];
        e3[2] = 1.0;
        assert_eq!(fs.solve(&e3).unwrap(), e3);
    }

    #[test]
    fn diagonal_solve() {
        let fs = factorize(&SparseOperator::from_diagonal(&[1.0, 2.0, 4.0])).unwrap();
        let x = fs.solve(&[1.0, 1.0, 1.0]).unwrap();
        for (a, b) in x.iter().zip([1.0, 0.5, 0.25]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn dirichlet_laplacian_three_nodes() {
        // (-1, 2, -1)/h^2 with h = 0.25, f = 1. Hand inverse of
        // [[2,-1,0],[-1,2,-1],[0,-1,2]] is (1/4)[[3,2,1],[2,4,2],[1,2,3]],
        // so x = h^2/4 * (6, 8, 6) = (0.09375, 0.125, 0.09375).
        let h2 = 0.0625;
        let mut b = TripletBuilder::new(3, 3);
        for i in 0..3 {
            b.push(i, i, 2.0 / h2);
            if i > 0 {
                b.push(i, i - 1, -1.0 / h2);
            }
            if i < 2 {
                b.push(i, i + 1, -1.0 / h2);
            }
        }
        let fs = factorize(&b.build()).unwrap();
        let x = fs.solve(&[1.0; 3]).unwrap();
        for (a, e) in x.iter().zip([0.09375, 0.125, 0.09375]) {
            assert!((a - e).abs() < 1e-14, "{a} vs {e}");
        }
    }

    #[test]
    fn singular_operator_rejected() {
        let mut b = TripletBuilder::new(2, 2);
        b.push(0, 0, 1.0);
        b.push(0, 1, 1.0);
        b.push(1, 0, 1.0);
        b.push(1, 1, 1.0);
        assert!(matches!(factorize(&b.build()), Err(Error::SingularOperator(_))));
        let mut b = TripletBuilder::new(2, 2);
        b.push(0, 0, 1.0);
        assert!(matches!(factorize(&b.build()), Err(Error::SingularOperator(_))));
    }

    #[test]
    fn solve_multi_cases() {
        let fs = factorize(&SparseOperator::identity(3)).unwrap();
        let b = Mat::from_fn(3, 2, |i, j| (i * 2 + j) as f64 - 1.5);
        assert_eq!(max_abs_diff(&fs.solve_multi(&b, false).unwrap(), &b), 0.0);

        let fs = factorize(&SparseOperator::from_diagonal(&[2.0])).unwrap();
        let x = solve_multi(&fs, &dense(&[&[4.0]]), false).unwrap();
        assert_eq!(x[(0, 0)], 2.0);

        // L = [[2,1],[0,3]]; Lᵀ = [[2,0],[1,3]], (Lᵀ)⁻¹ = [[1/2,0],[-1/6,1/3]].
        let l = SparseOperator::from_dense(&dense(&[&[2.0, 1.0], &[0.0, 3.0]]));
        let fs = factorize(&l).unwrap();
        let x = fs.solve_multi(&Mat::identity(2, 2), true).unwrap();
        let expected = dense(&[&[0.5, 0.0], &[-1.0 / 6.0, 1.0 / 3.0]]);
        assert!(max_abs_diff(&x, &expected) < 1e-15);

        assert!(matches!(
            fs.solve_multi(&Mat::zeros(3, 1), false),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn qr_of_orthonormal_is_signed_copy() {
        let a = dense(&[&[1.0, 0.0], &[0.0, 1.0], &[0.0, 0.0]]);
        let qr = qr_thin(&a).unwrap();
        assert!(qr.is_full_rank());
        for j in 0..2 {
            for i in 0..3 {
                assert!((qr.q[(i, j)].abs() - a[(i, j)]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn qr_span_of_e1_e1_plus_e2() {
        let a = dense(&[&[1.0, 1.0], &[0.0, 1.0], &[0.0, 0.0]]);
        let q = qr_thin(&a).unwrap().q;
        let proj = &q * q.transpose();
        // Projector fixes e1 and e2 and kills e3.
        let expected = dense(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 0.0]]);
        assert!(max_abs_diff(&proj, &expected) < 1e-14);
    }

    #[test]
    fn qr_duplicated_column_drops_one() {
        let a = dense(&[&[1.0, 1.0], &[2.0, 2.0], &[3.0, 3.0]]);
        let qr = qr_thin(&a).unwrap();
        assert_eq!(qr.q.ncols(), 1);
        assert_eq!(qr.dropped, 1);
        assert!(matches!(qr.rank_deficiency(), Some(Error::RankDeficient { requested: 2, achieved: 1 })));
        let g = qr.q.transpose() * &qr.q;
        assert!((g[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn svd_simple_cases() {
        let (_, s, _) = svd_dense(&dense(&[&[1.0, 0.0], &[0.0, 3.0]])).unwrap();
        assert!((s[0] - 3.0).abs() < 1e-14 && (s[1] - 1.0).abs() < 1e-14);

        // u = (2,0,0), v = (3,4): ‖u‖‖v‖ = 10.
        let a = Mat::from_fn(3, 2, |i, j| [2.0, 0.0, 0.0][i] * [3.0, 4.0][j]);
        let (_, s, _) = svd_dense(&a).unwrap();
        assert!((s[0] - 10.0).abs() < 1e-13);
        assert!(s[1].abs() < 1e-13);
    }

    #[test]
    fn svd_matches_gram_eigenvalues() {
        let a = Mat::from_fn(4, 6, |i, j| ((i * 7 + j * 3) as f64 * 0.37).sin() + 0.1 * j as f64);
        let (u, s, v) = svd_dense(&a).unwrap();
        let gram = &a * a.transpose();
        let mut evals = gram.self_adjoint_eigenvalues(faer::Side::Lower).unwrap();
        evals.sort_by(|x, y| y.partial_cmp(x).unwrap());
        for (si, ei) in s.iter().zip(&evals) {
            assert!((si * si - ei).abs() < 1e-12 * evals[0]);
        }
        let recon = &u * Mat::from_fn(s.len(), s.len(), |i, j| if i == j { s[i] } else { 0.0 }) * v.transpose();
        assert!(max_abs_diff(&recon, &a) < 1e-12 * s[0]);
        assert!(s.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn transpose_solve_matches_refactorized_transpose() {
        let mut b = TripletBuilder::new(4, 4);
        for i in 0..4 {
            b.push(i, i, 4.0 + i as f64);
            if i + 1 < 4 {
                b.push(i, i + 1, -1.0);
            }
            if i >= 2 {
                b.push(i, i - 2, 0.5);
            }
        }
        let l = b.build();
        let rhs = [1.0, -2.0, 0.5, 3.0];
        let x1 = factorize(&l).unwrap().solve_transpose(&rhs).unwrap();
        let x2 = factorize(&l.transpose()).unwrap().solve(&rhs).unwrap();
        for (a, c) in x1.iter().zip(&x2) {
            assert!((a - c).abs() < 1e-12);
        }
    }

    #[test]
    fn kron_and_matmul() {
        let a = SparseOperator::from_dense(&dense(&[&[1.0, 2.0], &[0.0, 1.0]]));
        let i2 = SparseOperator::identity(2);
        let k = a.kron(&i2);
        assert_eq!(k.n_rows(), 4);
        assert_eq!(k.get(0, 2), 2.0);
        assert_eq!(k.get(1, 3), 2.0);
        let p = a.matmul(&a).unwrap();
        assert_eq!(p.get(0, 1), 4.0);
        let d = a.transpose().matmul(&a).unwrap().to_dense();
        let expect = a.to_dense().transpose() * a.to_dense();
        assert!(max_abs_diff(&d, &expect) < 1e-15);
    }
}
