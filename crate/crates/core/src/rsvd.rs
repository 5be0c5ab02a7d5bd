//! Optimal basis of a discrete solution operator `G = L⁻¹` under weighted
//! norms: singular triplets of `A = F_Y G F_X⁻¹` mapped back through the
//! weight factors.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{qr_thin, svd_dense, DenseMatrix, FactorizedSolver};
use crate::sobolev::WeightFactor;

/// Singular values below this fraction of `λ₁` count as zero.
const RANK_TOL: f64 = 1e-14;

/// Largest system the dense oracle will materialize.
pub const DENSE_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RsvdParams {
    pub rank: usize,
    pub oversample: usize,
    pub power: usize,
    pub seed: u64,
}

impl Default for RsvdParams {
    fn default() -> Self {
        Self {
            rank: 10,
            oversample: 5,
            power: 2,
            seed: 0,
        }
    }
}

/// Provenance carried alongside a basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BasisMeta {
    /// Problem family tag as stored in basis files.
    pub tag: u8,
    /// Sobolev order of the source weight.
    pub order: usize,
    pub rsvd: Option<RsvdParams>,
}

/// `{λ̂_i, û_i, v̂_i}` with `ÛᵀΠ_YÛ = I`, `V̂ᵀΠ_XV̂ = I`, `G v̂_i = λ̂_i û_i`.
#[derive(Debug, Clone)]
pub struct SVDBasis {
    pub lambdas: Vec<f64>,
    pub u_hat: DenseMatrix,
    pub v_hat: DenseMatrix,
    pub meta: BasisMeta,
}

impl SVDBasis {
    pub fn dim(&self) -> usize {
        self.u_hat.nrows()
    }

    pub fn rank(&self) -> usize {
        self.lambdas.len()
    }

    /// Keep the leading `n` triplets.
    pub fn truncated(&self, n: usize) -> Result<SVDBasis> {
        if n > self.rank() {
            return Err(Error::RankExhausted {
                n,
                available: self.rank(),
            });
        }
        Ok(SVDBasis {
            lambdas: self.lambdas[..n].to_vec(),
            u_hat: self.u_hat.subcols(0, n).to_owned(),
            v_hat: self.v_hat.subcols(0, n).to_owned(),
            meta: self.meta,
        })
    }

    /// `λ̂_i / λ̂₁`.
    pub fn relative_lambdas(&self) -> Vec<f64> {
        match self.lambdas.first() {
            Some(&l1) if l1 > 0.0 => self.lambdas.iter().map(|l| l / l1).collect(),
            _ => self.lambdas.clone(),
        }
    }
}

/// Seeded `N × k` standard normal sketch, filled column by column.
pub fn gaussian_matrix(n: usize, k: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut p = DenseMatrix::zeros(n, k);
    for j in 0..k {
        for v in p.col_as_slice_mut(j) {
            *v = StandardNormal.sample(&mut rng);
        }
    }
    p
}

/// Implicit `A = F_Y L⁻¹ F_X⁻¹` and its transpose.
struct WeightedGreen<'a> {
    fs: &'a FactorizedSolver,
    fx: &'a WeightFactor,
    fy: &'a WeightFactor,
}

impl WeightedGreen<'_> {
    /// Returns `(A X, L⁻¹ F_X⁻¹ X)`.
    fn apply(&self, x: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
        let raw = self.fs.solve_multi(&self.fx.inverse_mat(x)?, false)?;
        Ok((self.fy.factor_mat(&raw)?, raw))
    }

    fn apply_transpose(&self, y: &DenseMatrix) -> Result<DenseMatrix> {
        let e = self.fs.solve_multi(&self.fy.factor_transpose_mat(y)?, true)?;
        self.fx.inverse_transpose_mat(&e)
    }
}

/// Randomized range finder with `q` power steps, followed by a
/// Rayleigh–Ritz pass on the recovered right subspace so that the returned
/// triplets satisfy the defining relations to working precision.
pub fn compute_basis(
    fs: &FactorizedSolver,
    fx: &WeightFactor,
    fy: &WeightFactor,
    params: &RsvdParams,
) -> Result<SVDBasis> {
    let n = fs.dim();
    check_dim(n, fx.dim())?;
    check_dim(n, fy.dim())?;
    let k = params.rank + params.oversample;
    if k > n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: k,
        });
    }
    let op = WeightedGreen { fs, fx, fy };

    let sketch = gaussian_matrix(n, k, params.seed);
    let (mut c, _) = op.apply(&sketch)?;
    for _ in 0..params.power {
        let q = qr_thin(&c)?.q;
        let w = qr_thin(&op.apply_transpose(&q)?)?.q;
        c = op.apply(&w)?.0;
    }
    let q = qr_thin(&c)?.q;
    let bt = op.apply_transpose(&q)?;
    let (v_tilde, _, _) = svd_dense(&bt)?;

    // Rayleigh–Ritz: exact SVD of A restricted to span(Ṽ).
    let (y, raw) = op.apply(&v_tilde)?;
    let (_, s, w) = svd_dense(&y)?;
    finish(
        n,
        params.rank,
        &s,
        &(&v_tilde * &w),
        &(&raw * &w),
        fx,
        BasisMeta {
            rsvd: Some(*params),
            ..BasisMeta::default()
        },
    )
}

/// Build triplets from right vectors `ṽ` (Euclidean), singular values `s`
/// and `L⁻¹F_X⁻¹ṽ`, keeping the leading `rank`.
fn finish(
    n: usize,
    rank: usize,
    s: &[f64],
    v_tilde: &DenseMatrix,
    g_v: &DenseMatrix,
    fx: &WeightFactor,
    meta: BasisMeta,
) -> Result<SVDBasis> {
    let l1 = s.first().copied().unwrap_or(0.0);
    let achieved = s
        .iter()
        .take(rank)
        .filter(|&&v| l1 > 0.0 && v > RANK_TOL * l1)
        .count();
    if achieved < rank {
        return Err(Error::RankDeficient {
            requested: rank,
            achieved,
        });
    }
    let v_hat = fx.inverse_mat(&v_tilde.subcols(0, rank).to_owned())?;
    let u_hat = DenseMatrix::from_fn(n, rank, |i, j| g_v[(i, j)] / s[j]);
    Ok(SVDBasis {
        lambdas: s[..rank].to_vec(),
        u_hat,
        v_hat,
        meta,
    })
}

/// Full weighted SVD by materializing `F_Y G F_X⁻¹`. Returns all `N` triplets.
pub fn dense_svd_oracle(
    fs: &FactorizedSolver,
    fx: &WeightFactor,
    fy: &WeightFactor,
) -> Result<SVDBasis> {
    let n = fs.dim();
    if n > DENSE_LIMIT {
        return Err(Error::ProblemTooLarge {
            size: n,
            limit: DENSE_LIMIT,
        });
    }
    check_dim(n, fx.dim())?;
    check_dim(n, fy.dim())?;
    let op = WeightedGreen { fs, fx, fy };
    let (a, _) = op.apply(&DenseMatrix::identity(n, n))?;
    let (_, s, v) = svd_dense(&a)?;
    let (_, raw) = op.apply(&v)?;
    finish(n, n, &s, &v, &raw, fx, BasisMeta::default())
}

/// Worst deviations from the defining relations of a weighted SVD.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelationReport {
    /// `max |ÛᵀΠ_YÛ − I|`.
    pub orth_u: f64,
    /// `max |V̂ᵀΠ_XV̂ − I|`.
    pub orth_v: f64,
    /// `max_i ‖G v̂_i − λ̂_i û_i‖ / ‖λ̂_i û_i‖`.
    pub forward: f64,
    /// `max_i ‖Gᵀ Π_Y û_i − λ̂_i Π_X v̂_i‖ / ‖λ̂_i Π_X v̂_i‖`. Zero only for
    /// exact singular pairs, so it measures convergence of the vectors.
    pub adjoint: f64,
}

impl RelationReport {
    /// Worst of the two orthonormality checks and `G v̂ = λ̂ û`.
    pub fn defining(&self) -> f64 {
        self.orth_u.max(self.orth_v).max(self.forward)
    }
}

fn gram_deviation(f: &WeightFactor, x: &DenseMatrix) -> Result<f64> {
    let fx = f.factor_mat(x)?;
    let g = fx.transpose() * &fx;
    let mut worst = 0.0f64;
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    Ok(worst)
}

fn rel_col_diff(a: &DenseMatrix, b: &DenseMatrix, j: usize) -> f64 {
    let (ca, cb) = (a.col_as_slice(j), b.col_as_slice(j));
    let diff: f64 = ca.iter().zip(cb).map(|(x, y)| (x - y) * (x - y)).sum();
    let scale: f64 = cb.iter().map(|y| y * y).sum();
    (diff / scale).sqrt()
}

/// Check orthonormality and `G v̂ = λ̂ û`, `G* û = λ̂ v̂` for every triplet.
pub fn verify_relations(
    basis: &SVDBasis,
    fs: &FactorizedSolver,
    fx: &WeightFactor,
    fy: &WeightFactor,
) -> Result<RelationReport> {
    let r = basis.rank();
    let gv = fs.solve_multi(&basis.v_hat, false)?;
    let lu = DenseMatrix::from_fn(basis.dim(), r, |i, j| basis.lambdas[j] * basis.u_hat[(i, j)]);
    let pi_y_u = fy.factor_transpose_mat(&fy.factor_mat(&basis.u_hat)?)?;
    let gt = fs.solve_multi(&pi_y_u, true)?;
    let pi_x_v = fx.factor_transpose_mat(&fx.factor_mat(&basis.v_hat)?)?;
    let lv = DenseMatrix::from_fn(basis.dim(), r, |i, j| basis.lambdas[j] * pi_x_v[(i, j)]);
    let forward = (0..r).map(|j| rel_col_diff(&gv, &lu, j)).fold(0.0, f64::max);
    let adjoint = (0..r).map(|j| rel_col_diff(&gt, &lv, j)).fold(0.0, f64::max);
    Ok(RelationReport {
        orth_u: gram_deviation(fy, &basis.u_hat)?,
        orth_v: gram_deviation(fx, &basis.v_hat)?,
        forward,
        adjoint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptic::{assemble_elliptic, EllipticMedium};
    use crate::grid::Grid2D;
    use crate::linalg::{factorize, SparseOperator};
    use crate::sobolev::{build_sobolev_weight, Space};

    fn ident(n: usize) -> (WeightFactor, WeightFactor) {
        (
            WeightFactor::identity(n, Space::Source),
            WeightFactor::identity(n, Space::Solution),
        )
    }

    #[test]
    fn identity_operator_has_unit_values() {
        let fs = factorize(&SparseOperator::identity(20)).unwrap();
        let (fx, fy) = ident(20);
        let params = RsvdParams { rank: 5, oversample: 3, power: 1, seed: 4 };
        let b = compute_basis(&fs, &fx, &fy, &params).unwrap();
        assert_eq!(b.rank(), 5);
        assert!(b.lambdas.iter().all(|l| (l - 1.0).abs() < 1e-12));
        let rep = verify_relations(&b, &fs, &fx, &fy).unwrap();
        assert!(rep.defining() < 1e-12 && rep.adjoint < 1e-12);
    }

    #[test]
    fn diagonal_operator() {
        let diag: Vec<f64> = (1..=30).map(|k| k as f64).collect();
        let fs = factorize(&SparseOperator::from_diagonal(&diag)).unwrap();
        let (fx, fy) = ident(30);
        let worst = |power| {
            let params = RsvdParams { rank: 6, oversample: 4, power, seed: 1 };
            let b = compute_basis(&fs, &fx, &fy, &params).unwrap();
            b.lambdas
                .iter()
                .enumerate()
                .map(|(i, l)| (l * (i + 1) as f64 - 1.0).abs())
                .fold(0.0, f64::max)
        };
        // λ₁₁/λ₆ ≈ 0.55 caps two power steps near (0.55)¹² ≈ 7e-4
        assert!(worst(2) < 1e-3);
        assert!(worst(4) < worst(2));
        assert!(worst(8) < 1e-6);
    }

    #[test]
    fn oracle_on_small_diagonal() {
        let fs = factorize(&SparseOperator::from_diagonal(&[1.0, 2.0, 4.0])).unwrap();
        let (fx, fy) = ident(3);
        let b = dense_svd_oracle(&fs, &fx, &fy).unwrap();
        assert_eq!(b.lambdas.len(), 3);
        for (i, want) in [1.0, 0.5, 0.25].iter().enumerate() {
            assert!((b.lambdas[i] - want).abs() < 1e-14);
            assert!((b.u_hat[(i, i)].abs() - 1.0).abs() < 1e-14);
            assert!((b.v_hat[(i, i)].abs() - 1.0).abs() < 1e-14);
            assert_eq!(b.u_hat[(i, i)].signum(), b.v_hat[(i, i)].signum());
        }
    }

    #[test]
    fn oracle_with_random_spd_weights() {
        use rand::{Rng, SeedableRng};
        let n = 12;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut spd = |shift: f64| {
            let b = DenseMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let mut g = b.transpose() * &b;
            for i in 0..n {
                g[(i, i)] += shift;
            }
            SparseOperator::from_dense(&g)
        };
        let fx = WeightFactor::from_gram(&spd(0.5), Space::Source, 0).unwrap();
        let fy = WeightFactor::from_gram(&spd(1.0), Space::Solution, 0).unwrap();
        let l = spd(2.0);
        let fs = factorize(&l).unwrap();
        let b = dense_svd_oracle(&fs, &fx, &fy).unwrap();

        // verify against an explicitly assembled G and Π
        let g = fs.solve_multi(&DenseMatrix::identity(n, n), false).unwrap();
        let pi_x = fx.gram_matrix().to_dense();
        let pi_y = fy.gram_matrix().to_dense();
        let uu = b.u_hat.transpose() * &pi_y * &b.u_hat;
        let vv = b.v_hat.transpose() * &pi_x * &b.v_hat;
        let gv = &g * &b.v_hat;
        for i in 0..n {
            for j in 0..n {
                let t = if i == j { 1.0 } else { 0.0 };
                assert!((uu[(i, j)] - t).abs() < 1e-10);
                assert!((vv[(i, j)] - t).abs() < 1e-10);
            }
            for r in 0..n {
                assert!((gv[(r, i)] - b.lambdas[i] * b.u_hat[(r, i)]).abs() < 1e-10);
            }
        }
        assert!(b.lambdas.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn rsvd_matches_oracle_on_elliptic() {
        let grid = Grid2D::new(0.5, 12);
        let l = assemble_elliptic(&grid, &EllipticMedium::new(1.0));
        let fs = factorize(&l).unwrap();
        for p in 0..=2 {
            let fx = build_sobolev_weight(p, &grid).unwrap();
            let fy = WeightFactor::identity(grid.n_nodes(), Space::Solution);
            let oracle = dense_svd_oracle(&fs, &fx, &fy).unwrap();
            let params = RsvdParams { rank: 10, oversample: 5, power: 2, seed: 7 };
            let b = compute_basis(&fs, &fx, &fy, &params).unwrap();
            let tol = if p == 0 { 1e-4 } else { 1e-6 };
            for i in 0..5 {
                let rel = (b.lambdas[i] - oracle.lambdas[i]).abs() / oracle.lambdas[i];
                assert!(rel < tol, "p={p} i={i} rel={rel}");
            }
            let rep = verify_relations(&b, &fs, &fx, &fy).unwrap();
            assert!(rep.defining() < 1e-8, "p={p} {rep:?}");
            let top = verify_relations(&b.truncated(3).unwrap(), &fs, &fx, &fy).unwrap();
            assert!(top.adjoint < if p == 0 { 1e-2 } else { 1e-4 }, "p={p} {top:?}");
            let rep = verify_relations(&oracle, &fs, &fx, &fy).unwrap();
            assert!(rep.defining() < 1e-8 && rep.adjoint < 1e-8, "oracle p={p} {rep:?}");
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let grid = Grid2D::new(0.5, 8);
        let fs = factorize(&assemble_elliptic(&grid, &EllipticMedium::new(0.25))).unwrap();
        let fx = build_sobolev_weight(1, &grid).unwrap();
        let fy = WeightFactor::identity(grid.n_nodes(), Space::Solution);
        let params = RsvdParams { rank: 6, oversample: 4, power: 1, seed: 42 };
        let a = compute_basis(&fs, &fx, &fy, &params).unwrap();
        let b = compute_basis(&fs, &fx, &fy, &params).unwrap();
        assert_eq!(a.lambdas, b.lambdas);
        assert_eq!(a.u_hat, b.u_hat);
    }

    #[test]
    fn errors() {
        let fs = factorize(&SparseOperator::identity(5)).unwrap();
        let (fx, fy) = ident(5);
        let params = RsvdParams { rank: 4, oversample: 2, power: 0, seed: 0 };
        assert!(matches!(
            compute_basis(&fs, &fx, &fy, &params),
            Err(Error::DimensionMismatch { .. })
        ));
        let (fx6, _) = ident(6);
        let params = RsvdParams { rank: 2, oversample: 1, power: 0, seed: 0 };
        assert!(compute_basis(&fs, &fx6, &fy, &params).is_err());
        let big = factorize(&SparseOperator::identity(DENSE_LIMIT + 1)).unwrap();
        let (bx, by) = ident(DENSE_LIMIT + 1);
        assert!(matches!(
            dense_svd_oracle(&big, &bx, &by),
            Err(Error::ProblemTooLarge { .. })
        ));
        let b = dense_svd_oracle(&fs, &fx, &fy).unwrap();
        assert!(matches!(b.truncated(6), Err(Error::RankExhausted { n: 6, available: 5 })));
    }
}
