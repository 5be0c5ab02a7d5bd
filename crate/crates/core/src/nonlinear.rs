//! Semilinear problems `L u + N(u) = f` solved in a precomputed basis by
//! fixed-point iteration on the coefficients, plus a damped Newton solver on
//! the full system for reference solutions.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::grid::PhaseGrid;
use crate::linalg::{factorize, norm2, SparseOperator, TripletBuilder};
use crate::projection::Projector;
use crate::rsvd::SVDBasis;
use crate::rte::sigma_b;
use crate::sobolev::WeightFactor;

/// Coefficient norm beyond which the iteration is declared divergent.
const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub enum NonlinearTerm {
    /// `N ≡ 0`.
    Zero,
    /// `N(u)_k = u_k³`.
    Cubic,
    /// `N(u)_{s,l} = σ_b(s) ⟨u⟩_s u_{s,l}`, `⟨u⟩_s` the angular mean at node `s`.
    TwoPhoton { sigma_b: Vec<f64>, n_v: usize },
}

impl NonlinearTerm {
    pub fn two_photon(pg: &PhaseGrid, eps1: f64) -> Self {
        NonlinearTerm::TwoPhoton {
            sigma_b: pg.spatial().sample(|x, y| sigma_b(x, y, eps1)),
            n_v: pg.n_v(),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            NonlinearTerm::Zero => "zero",
            NonlinearTerm::Cubic => "cubic",
            NonlinearTerm::TwoPhoton { .. } => "two_photon",
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, NonlinearTerm::Zero)
    }

    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        match self {
            NonlinearTerm::Zero => Ok(vec![0.0; u.len()]),
            NonlinearTerm::Cubic => Ok(u.iter().map(|v| v * v * v).collect()),
            NonlinearTerm::TwoPhoton { sigma_b, n_v } => {
                check_dim(sigma_b.len() * n_v, u.len())?;
                let mut out = vec![0.0; u.len()];
                for (s, (chunk, dst)) in u.chunks(*n_v).zip(out.chunks_mut(*n_v)).enumerate() {
                    let mean = chunk.iter().sum::<f64>() / *n_v as f64;
                    for (o, v) in dst.iter_mut().zip(chunk) {
                        *o = sigma_b[s] * mean * v;
                    }
                }
                Ok(out)
            }
        }
    }

    /// Jacobian `∂N/∂u` at `u`.
    pub fn jacobian(&self, u: &[f64]) -> Result<SparseOperator> {
        let n = u.len();
        match self {
            NonlinearTerm::Zero => Ok(SparseOperator::from_diagonal(&vec![0.0; n])),
            NonlinearTerm::Cubic => Ok(SparseOperator::from_diagonal(
                &u.iter().map(|v| 3.0 * v * v).collect::<Vec<_>>(),
            )),
            NonlinearTerm::TwoPhoton { sigma_b, n_v } => {
                check_dim(sigma_b.len() * n_v, n)?;
                let nv = *n_v;
                let w = 1.0 / nv as f64;
                let mut b = TripletBuilder::with_capacity(n, n, n * (nv + 1));
                for (s, chunk) in u.chunks(nv).enumerate() {
                    let mean = chunk.iter().sum::<f64>() * w;
                    for l in 0..nv {
                        let row = s * nv + l;
                        b.push(row, row, sigma_b[s] * mean);
                        for lp in 0..nv {
                            b.push(row, s * nv + lp, sigma_b[s] * w * chunk[l]);
                        }
                    }
                }
                Ok(b.build())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Relaxation `ω ∈ (0, 1]`.
    pub relax: f64,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 500,
            relax: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FixedPointResult {
    pub coefficients: Vec<f64>,
    pub solution: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `Σ λ̂_i² |c_i^{k+1} − c_i^k|²` of the last update.
    pub final_step: f64,
    pub history: Vec<f64>,
}

/// Iterate `c ← (1−ω)c + ω ⟨f − N(Σ λ̂_j c_j û_j), v̂_i⟩_X` from `c⁰ = ⟨f, v̂⟩_X`.
pub fn fixed_point_solve(
    basis: &SVDBasis,
    fx: &WeightFactor,
    f: &[f64],
    term: &NonlinearTerm,
    n: usize,
    opts: &FixedPointOptions,
) -> Result<FixedPointResult> {
    if !(opts.tol > 0.0) {
        return Err(Error::config("nonlinear.tol", "must be positive"));
    }
    if !(opts.relax > 0.0 && opts.relax <= 1.0) {
        return Err(Error::config("nonlinear.relax", "must lie in (0, 1]"));
    }
    let proj = Projector::new(basis, fx, n)?;
    let lambdas = proj.lambdas();
    let mut c = proj.coefficients(f)?;
    let mut history = Vec::new();
    let mut step = f64::INFINITY;

    for k in 1..=opts.max_iter {
        let u = proj.reconstruct(&c)?;
        let nu = term.apply(&u)?;
        let rhs: Vec<f64> = f.iter().zip(&nu).map(|(a, b)| a - b).collect();
        let target = proj.coefficients(&rhs)?;
        let next: Vec<f64> = if opts.relax == 1.0 {
            target
        } else {
            c.iter()
                .zip(&target)
                .map(|(old, new)| (1.0 - opts.relax) * old + opts.relax * new)
                .collect()
        };
        step = next
            .iter()
            .zip(&c)
            .zip(lambdas)
            .map(|((a, b), l)| l * l * (a - b) * (a - b))
            .sum();
        history.push(step);
        c = next;
        if !step.is_finite() || norm2(&c) > DIVERGENCE_LIMIT || c.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { iteration: k });
        }
        if step < opts.tol {
            return Ok(FixedPointResult {
                solution: proj.reconstruct(&c)?,
                coefficients: c,
                iterations: k,
                converged: true,
                final_step: step,
                history,
            });
        }
    }
    Ok(FixedPointResult {
        solution: proj.reconstruct(&c)?,
        coefficients: c,
        iterations: opts.max_iter,
        converged: false,
        final_step: step,
        history,
    })
}

/// `(E1, E2)`: `‖P_n^⊥(f − N(u))‖_X` at the candidate and at the fixed point.
pub fn error_indicators(
    basis: &SVDBasis,
    fx: &WeightFactor,
    f: &[f64],
    term: &NonlinearTerm,
    u_candidate: &[f64],
    u_fixed: &[f64],
    n: usize,
) -> Result<(f64, f64)> {
    let proj = Projector::new(basis, fx, n)?;
    let indicator = |u: &[f64]| -> Result<f64> {
        let nu = term.apply(u)?;
        let g: Vec<f64> = f.iter().zip(&nu).map(|(a, b)| a - b).collect();
        let (_, perp) = proj.split(&g)?;
        fx.norm(&perp)
    };
    Ok((indicator(u_candidate)?, indicator(u_fixed)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepresentationBound {
    /// `‖u − Σ λ̂_i ĉ_i û_i‖_Y` with `ĉ_i = ⟨f − N(u), v̂_i⟩_X`.
    pub lhs: f64,
    /// `λ̂_{n+1} (‖f‖_X + ‖N(u)‖_X)`.
    pub rhs: f64,
}

impl RepresentationBound {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs * (1.0 + 1e-8)
    }
}

/// Both sides of the representation bound at a reference solution `u_ref`.
pub fn check_linear_representation_bound(
    basis: &SVDBasis,
    fx: &WeightFactor,
    fy: &WeightFactor,
    f: &[f64],
    term: &NonlinearTerm,
    u_ref: &[f64],
    n: usize,
) -> Result<RepresentationBound> {
    if n >= basis.rank() {
        return Err(Error::RankExhausted {
            n: n + 1,
            available: basis.rank(),
        });
    }
    let proj = Projector::new(basis, fx, n)?;
    let nu = term.apply(u_ref)?;
    let g: Vec<f64> = f.iter().zip(&nu).map(|(a, b)| a - b).collect();
    let approx = proj.reconstruct(&proj.coefficients(&g)?)?;
    let diff: Vec<f64> = u_ref.iter().zip(&approx).map(|(a, b)| a - b).collect();
    Ok(RepresentationBound {
        lhs: fy.norm(&diff)?,
        rhs: basis.lambdas[n] * (fx.norm(f)? + fx.norm(&nu)?),
    })
}

#[derive(Debug, Clone)]
pub struct NewtonResult {
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// `‖L u + N(u) − f‖₂ / ‖f‖₂` at exit.
    pub residual: f64,
}

/// Damped Newton on the full system, started from the linear solution.
/// Stops when the Newton step is below `tol` relative to the iterate.
pub fn newton_reference(
    op: &SparseOperator,
    term: &NonlinearTerm,
    f: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<NewtonResult> {
    check_dim(op.n_rows(), f.len())?;
    let fnorm = norm2(f).max(f64::MIN_POSITIVE);
    let residual = |u: &[f64]| -> Result<Vec<f64>> {
        let lu = op.matvec(u)?;
        let nu = term.apply(u)?;
        Ok(lu.iter().zip(&nu).zip(f).map(|((a, b), c)| a + b - c).collect())
    };
    let mut u = factorize(op)?.solve(f)?;
    let mut r = residual(&u)?;
    for k in 1..=max_iter {
        let jac = op.add(&term.jacobian(&u)?)?;
        let delta = factorize(&jac)?.solve(&r)?;
        let rn = norm2(&r);
        let mut t = 1.0;
        let (next, next_r) = loop {
            let cand: Vec<f64> = u.iter().zip(&delta).map(|(a, d)| a - t * d).collect();
            let cr = residual(&cand)?;
            if norm2(&cr) < rn || t < 1e-6 {
                break (cand, cr);
            }
            t *= 0.5;
        };
        let step = t * norm2(&delta);
        u = next;
        r = next_r;
        if step <= tol * norm2(&u).max(1.0) {
            return Ok(NewtonResult {
                residual: norm2(&r) / fnorm,
                solution: u,
                iterations: k,
            });
        }
    }
    Err(Error::Diverged { iteration: max_iter })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptic::{assemble_elliptic, assemble_elliptic_1d, eval_source_elliptic, EllipticMedium};
    use crate::grid::Grid2D;
    use crate::linalg::{column, DenseMatrix};
    use crate::projection::solve_linear_projection;
    use crate::rsvd::dense_svd_oracle;
    use crate::sobolev::{build_sobolev_weight, Space};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy(n: usize) -> (SparseOperator, WeightFactor, WeightFactor, SVDBasis) {
        let op = assemble_elliptic_1d(n, 0.5, 0.25);
        let fs = factorize(&op).unwrap();
        let fx = WeightFactor::identity(n, Space::Source);
        let fy = WeightFactor::identity(n, Space::Solution);
        let basis = dense_svd_oracle(&fs, &fx, &fy).unwrap();
        (op, fx, fy, basis)
    }

    #[test]
    fn term_symmetries() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pg = PhaseGrid::new(Grid2D::new(0.5, 5), 4);
        let tp = NonlinearTerm::two_photon(&pg, 0.5);
        for _ in 0..20 {
            let u: Vec<f64> = (0..pg.n_total()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let neg: Vec<f64> = u.iter().map(|v| -v).collect();
            let a = NonlinearTerm::Cubic.apply(&u).unwrap();
            let b = NonlinearTerm::Cubic.apply(&neg).unwrap();
            assert!(a.iter().zip(&b).all(|(x, y)| *x == -*y));
            for (k, v) in u.iter().enumerate() {
                assert_eq!(a[k], v * v * v);
            }
            let alpha = 1.7;
            let scaled: Vec<f64> = u.iter().map(|v| alpha * v).collect();
            let t1 = tp.apply(&u).unwrap();
            let t2 = tp.apply(&scaled).unwrap();
            for (x, y) in t1.iter().zip(&t2) {
                assert!((alpha * alpha * x - y).abs() < 1e-12 * (1.0 + y.abs()));
            }
        }
    }

    #[test]
    fn two_photon_pointwise() {
        let pg = PhaseGrid::new(Grid2D::new(0.5, 3), 2);
        let tp = NonlinearTerm::two_photon(&pg, 1.0);
        let u: Vec<f64> = (0..pg.n_total()).map(|k| k as f64).collect();
        let out = tp.apply(&u).unwrap();
        for (s, (_, x, y)) in pg.spatial().nodes().enumerate() {
            let mean = (u[2 * s] + u[2 * s + 1]) / 2.0;
            for l in 0..2 {
                let want = sigma_b(x, y, 1.0) * mean * u[2 * s + l];
                assert!((out[2 * s + l] - want).abs() < 1e-14 * (1.0 + want.abs()));
            }
        }
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pg = PhaseGrid::new(Grid2D::new(0.5, 4), 3);
        for term in [NonlinearTerm::Cubic, NonlinearTerm::two_photon(&pg, 0.7)] {
            let n = pg.n_total();
            let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let jac = term.jacobian(&u).unwrap().to_dense();
            let h = 1e-6;
            for j in 0..n {
                let mut up = u.clone();
                let mut dn = u.clone();
                up[j] += h;
                dn[j] -= h;
                let (a, b) = (term.apply(&up).unwrap(), term.apply(&dn).unwrap());
                for i in 0..n {
                    let fd = (a[i] - b[i]) / (2.0 * h);
                    assert!((fd - jac[(i, j)]).abs() < 1e-7, "{} ({i},{j})", term.tag());
                }
            }
        }
    }

    #[test]
    fn linear_limit_is_one_step_and_exact() {
        let (_, fx, _, basis) = toy(16);
        let f: Vec<f64> = (0..16).map(|k| (0.3 * k as f64).sin()).collect();
        for n in [1, 5, 16] {
            let res = fixed_point_solve(&basis, &fx, &f, &NonlinearTerm::Zero, n, &FixedPointOptions::default()).unwrap();
            assert!(res.converged);
            assert_eq!(res.iterations, 1);
            assert_eq!(res.final_step, 0.0);
            let lin = solve_linear_projection(&basis, &fx, &f, n).unwrap();
            assert_eq!(res.solution, lin);
        }
    }

    #[test]
    fn cubic_fixed_point_matches_newton_on_toy() {
        let n = 16;
        let (op, fx, _, basis) = toy(n);
        let f: Vec<f64> = (0..n).map(|k| 50.0 * (0.4 * k as f64).sin()).collect();
        let newton = newton_reference(&op, &NonlinearTerm::Cubic, &f, 1e-12, 50).unwrap();
        assert!(newton.residual < 1e-12);
        let res = fixed_point_solve(&basis, &fx, &f, &NonlinearTerm::Cubic, n, &FixedPointOptions::default()).unwrap();
        assert!(res.converged);
        let scale = crate::linalg::norm_inf(&newton.solution);
        for (a, b) in res.solution.iter().zip(&newton.solution) {
            assert!((a - b).abs() < 1e-8 * scale.max(1.0));
        }
        assert!(res.final_step < 1e-12);
        assert!(res.history.last() == Some(&res.final_step));
    }

    #[test]
    fn indicators() {
        let (_, fx, _, basis) = toy(12);
        let z = NonlinearTerm::Zero;
        let mut f = vec![0.0; 12];
        for i in 0..3 {
            for (k, v) in basis.v_hat.col_as_slice(i).iter().enumerate() {
                f[k] += (i + 1) as f64 * v;
            }
        }
        let u = vec![0.0; 12];
        let (e1, e2) = error_indicators(&basis, &fx, &f, &z, &u, &u, 3).unwrap();
        assert!(e1 < 1e-12 && e2 < 1e-12);
        let v4 = column(&basis.v_hat, 3);
        let (e1, _) = error_indicators(&basis, &fx, &v4, &z, &u, &u, 3).unwrap();
        assert!((e1 - 1.0).abs() < 1e-12);

        // cubic: compare against an explicit projector (identity weights)
        let f: Vec<f64> = (0..12).map(|k| 30.0 * (0.5 * k as f64).cos()).collect();
        let res = fixed_point_solve(&basis, &fx, &f, &NonlinearTerm::Cubic, 4, &FixedPointOptions::default()).unwrap();
        let (_, e2) = error_indicators(&basis, &fx, &f, &NonlinearTerm::Cubic, &res.solution, &res.solution, 4).unwrap();
        let v = basis.v_hat.subcols(0, 4).to_owned();
        let p = &v * v.transpose();
        let g = DenseMatrix::from_fn(12, 1, |k, _| f[k] - res.solution[k].powi(3));
        let perp = &g - &p * &g;
        assert!((e2 - perp.norm_l2()).abs() < 1e-10 * perp.norm_l2().max(1.0));
    }

    #[test]
    fn representation_bound_cases() {
        let (_, fx, fy, basis) = toy(10);
        let v1 = column(&basis.v_hat, 0);
        let u_ref: Vec<f64> = basis.u_hat.col_as_slice(0).iter().map(|u| basis.lambdas[0] * u).collect();
        let b = check_linear_representation_bound(&basis, &fx, &fy, &v1, &NonlinearTerm::Zero, &u_ref, 1).unwrap();
        assert!(b.lhs < 1e-14 && b.holds());
        assert!(matches!(
            check_linear_representation_bound(&basis, &fx, &fy, &v1, &NonlinearTerm::Zero, &u_ref, 10),
            Err(Error::RankExhausted { .. })
        ));
    }

    #[test]
    fn semilinear_elliptic_desk_converges() {
        let grid = Grid2D::new(0.5, 16);
        let op = assemble_elliptic(&grid, &EllipticMedium::new(0.0625));
        let fs = factorize(&op).unwrap();
        let fx = build_sobolev_weight(1, &grid).unwrap();
        let fy = WeightFactor::identity(grid.n_nodes(), Space::Solution);
        let basis = dense_svd_oracle(&fs, &fx, &fy).unwrap();
        let f = eval_source_elliptic(&grid, 100.0);
        let res = fixed_point_solve(&basis, &fx, &f, &NonlinearTerm::Cubic, 40, &FixedPointOptions::default()).unwrap();
        assert!(res.converged && res.iterations <= 500);
        let newton = newton_reference(&op, &NonlinearTerm::Cubic, &f, 1e-12, 50).unwrap();
        let mut last = f64::INFINITY;
        for n in [5, 10, 20, 40] {
            let b = check_linear_representation_bound(&basis, &fx, &fy, &f, &NonlinearTerm::Cubic, &newton.solution, n).unwrap();
            assert!(b.holds(), "n={n} {b:?}");
            assert!(b.rhs <= last);
            last = b.rhs;
        }
    }

    #[test]
    fn divergence_and_option_errors() {
        let (_, fx, _, basis) = toy(8);
        let f = vec![1e6; 8];
        let r = fixed_point_solve(&basis, &fx, &f, &NonlinearTerm::Cubic, 8, &FixedPointOptions::default());
        assert!(matches!(r, Err(Error::Diverged { .. })));
        let bad = FixedPointOptions { relax: 1.5, ..Default::default() };
        assert!(matches!(
            fixed_point_solve(&basis, &fx, &f, &NonlinearTerm::Cubic, 8, &bad),
            Err(Error::ConfigInvalid { .. })
        ));
        let few = FixedPointOptions { max_iter: 2, tol: 1e-300, relax: 0.5 };
        let r = fixed_point_solve(&basis, &fx, &vec![1.0; 8], &NonlinearTerm::Cubic, 8, &few).unwrap();
        assert!(!r.converged && r.final_step >= few.tol && r.iterations == 2);
    }
}
