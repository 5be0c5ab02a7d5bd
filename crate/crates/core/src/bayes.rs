//! Gaussian conditioning on linear observations of `u = G f` and brute-force
//! n-width evaluation. Dense verification machinery for small operators.
//!
//! With `f ~ N(0, I)` the prior on `u` is `N(0, C)`, `C = G Gᵀ`. Observing
//! `Ψ = Mᵀu` (optionally with noise variance `δ`) gives the posterior below.

use faer::linalg::solvers::Solve;
use faer::Side;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{norm2, qr_thin, svd_dense, DenseMatrix};
use crate::sobolev::WeightFactor;

/// Largest `N` for which `C = G Gᵀ` is materialized.
pub const BAYES_LIMIT: usize = 2048;

fn guard(n: usize) -> Result<()> {
    if n > BAYES_LIMIT {
        return Err(Error::ProblemTooLarge {
            size: n,
            limit: BAYES_LIMIT,
        });
    }
    Ok(())
}

fn trace(a: &DenseMatrix) -> f64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).sum()
}

/// Orthonormal basis of `span(GᵀM)` and the triangular `R` with `GᵀM = QR`.
/// A dropped column means `Θ = MᵀGGᵀM` is numerically singular.
fn observed_range(g: &DenseMatrix, m: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    if m.ncols() > m.nrows() {
        return Err(Error::SingularTheta);
    }
    let b = g.transpose() * m;
    let qr = qr_thin(&b)?;
    if !qr.is_full_rank() {
        return Err(Error::SingularTheta);
    }
    let r = qr.q.transpose() * &b;
    Ok((qr.q, r))
}

#[derive(Debug, Clone)]
pub struct Posterior {
    pub mean: Vec<f64>,
    pub covariance: DenseMatrix,
    pub observations: DenseMatrix,
    pub psi: Vec<f64>,
    pub delta: f64,
    /// Reconstruction map `W = KᵀΘ⁻¹` (noise-free case only).
    pub w: Option<DenseMatrix>,
}

pub fn posterior(g: &DenseMatrix, m: &DenseMatrix, psi: &[f64], delta: f64) -> Result<Posterior> {
    let n = g.nrows();
    guard(n)?;
    check_dim(n, m.nrows())?;
    check_dim(m.ncols(), psi.len())?;
    assert!(delta >= 0.0, "noise variance must be nonnegative");
    let c = g * g.transpose();
    let k_obs = m.ncols();
    let psi_m = DenseMatrix::from_fn(k_obs, 1, |i, _| psi[i]);

    if k_obs == 0 {
        return Ok(Posterior {
            mean: vec![0.0; n],
            covariance: c,
            observations: m.clone(),
            psi: Vec::new(),
            delta,
            w: (delta == 0.0).then(|| DenseMatrix::zeros(n, 0)),
        });
    }

    if delta > 0.0 {
        let k = m.transpose() * &c;
        let mut s = &k * m;
        for i in 0..k_obs {
            s[(i, i)] += delta;
        }
        let llt = s.llt(Side::Lower).map_err(|_| Error::SingularTheta)?;
        let mean = k.transpose() * llt.solve(&psi_m);
        let covariance = &c - k.transpose() * llt.solve(&k);
        return Ok(Posterior {
            mean: mean.col_as_slice(0).to_vec(),
            covariance,
            observations: m.clone(),
            psi: psi.to_vec(),
            delta,
            w: None,
        });
    }

    // Noise free: with GᵀM = QR, W = G Q R⁻ᵀ and Σ = G (I − QQᵀ) Gᵀ.
    let (q, r) = observed_range(g, m)?;
    let gq = g * &q;
    let w = solve_upper_right(&gq, &r);
    let mean = &w * &psi_m;
    let covariance = &c - &gq * gq.transpose();
    Ok(Posterior {
        mean: mean.col_as_slice(0).to_vec(),
        covariance,
        observations: m.clone(),
        psi: psi.to_vec(),
        delta,
        w: Some(w),
    })
}

/// `X` with `X Rᵀ = B` for upper-triangular `R`.
fn solve_upper_right(b: &DenseMatrix, r: &DenseMatrix) -> DenseMatrix {
    let k = r.nrows();
    let mut x = b.clone();
    // X Rᵀ = B  ⇔  R Xᵀ = Bᵀ; back-substitute each row of X.
    for row in 0..x.nrows() {
        for i in (0..k).rev() {
            let mut s = b[(row, i)];
            for j in i + 1..k {
                s -= r[(i, j)] * x[(row, j)];
            }
            x[(row, i)] = s / r[(i, i)];
        }
    }
    x
}

#[derive(Debug, Clone)]
pub struct TraceReport {
    /// `Tr(KᵀΘ⁻¹K)`.
    pub objective: f64,
    /// `Tr(Σ)` of the noise-free posterior.
    pub residual: f64,
    /// `Tr(G Gᵀ)`.
    pub prior: f64,
    pub k: DenseMatrix,
    pub theta: DenseMatrix,
}

impl TraceReport {
    /// `|objective + residual − prior| / prior`.
    pub fn conservation_error(&self) -> f64 {
        (self.objective + self.residual - self.prior).abs() / self.prior.max(f64::MIN_POSITIVE)
    }
}

pub fn trace_objective(g: &DenseMatrix, m: &DenseMatrix) -> Result<TraceReport> {
    guard(g.nrows())?;
    check_dim(g.nrows(), m.nrows())?;
    let c = g * g.transpose();
    let k = m.transpose() * &c;
    let theta = &k * m;
    let (q, _) = observed_range(g, m)?;
    // KᵀΘ⁻¹K = G QQᵀ Gᵀ
    let gq = g * &q;
    let objective = gq.norm_l2().powi(2);
    let psi = vec![0.0; m.ncols()];
    let residual = trace(&posterior(g, m, &psi, 0.0)?.covariance);
    Ok(TraceReport {
        objective,
        residual,
        prior: trace(&c),
        k,
        theta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    /// `‖u − WΨ‖₂`.
    pub error: f64,
    /// `√Tr(Σ) ‖f‖₂`.
    pub bound: f64,
    /// `‖u‖₂`, sets the rounding floor of `error`.
    pub scale: f64,
}

impl BoundCheck {
    pub fn holds(&self) -> bool {
        self.error <= self.bound * (1.0 + 1e-10) + 1e-12 * self.scale
    }
}

/// Reconstruct `u = G f` from `Ψ = Mᵀu` and compare with the posterior bound.
pub fn check_reconstruction_bound(g: &DenseMatrix, m: &DenseMatrix, f: &[f64]) -> Result<BoundCheck> {
    check_dim(g.ncols(), f.len())?;
    let f_m = DenseMatrix::from_fn(f.len(), 1, |i, _| f[i]);
    let u = g * &f_m;
    let psi = m.transpose() * &u;
    let post = posterior(g, m, psi.col_as_slice(0), 0.0)?;
    let w = post.w.expect("noise-free posterior carries W");
    let rec = &w * &psi;
    let err: Vec<f64> = (0..u.nrows()).map(|i| u[(i, 0)] - rec[(i, 0)]).collect();
    Ok(BoundCheck {
        error: norm2(&err),
        bound: trace(&post.covariance).max(0.0).sqrt() * norm2(f),
        scale: norm2(u.col_as_slice(0)),
    })
}

/// Dense `F_Y G F_X⁻¹`.
pub fn weighted_operator(g: &DenseMatrix, fx: &WeightFactor, fy: &WeightFactor) -> Result<DenseMatrix> {
    let fyg = fy.factor_mat(g)?;
    Ok(fx.inverse_transpose_mat(&fyg.transpose().to_owned())?.transpose().to_owned())
}

/// `max_f min_c ‖G f − G V c‖_Y / ‖f‖_X` for a fixed candidate `V`.
pub fn nwidth_eval(g: &DenseMatrix, fx: &WeightFactor, fy: &WeightFactor, v: &DenseMatrix) -> Result<f64> {
    guard(g.nrows())?;
    check_dim(g.ncols(), v.nrows())?;
    let a = weighted_operator(g, fx, fy)?;
    if v.ncols() == 0 {
        return Ok(svd_dense(&a)?.1.first().copied().unwrap_or(0.0));
    }
    let img = fy.factor_mat(&(g * v))?;
    let qr = qr_thin(&img)?;
    if let Some(e) = qr.rank_deficiency() {
        return Err(e);
    }
    let resid = &a - &qr.q * (qr.q.transpose() * &a);
    Ok(svd_dense(&resid)?.1.first().copied().unwrap_or(0.0))
}

/// Principal angles between `span(a)` and `span(b)`, ascending.
pub fn principal_angles(a: &DenseMatrix, b: &DenseMatrix) -> Result<Vec<f64>> {
    let qa = qr_thin(a)?.q;
    let qb = qr_thin(b)?.q;
    let (_, s, _) = svd_dense(&(qa.transpose() * &qb))?;
    Ok(s.iter().map(|c| c.clamp(-1.0, 1.0).acos()).collect())
}

/// Sine of the largest principal angle, accurate for small angles.
pub fn max_angle_sine(a: &DenseMatrix, b: &DenseMatrix) -> Result<f64> {
    let qa = qr_thin(a)?.q;
    let qb = qr_thin(b)?.q;
    let resid = &qb - &qa * (qa.transpose() * &qb);
    Ok(svd_dense(&resid)?.1.first().copied().unwrap_or(0.0).min(1.0))
}

#[derive(Debug, Clone, Copy)]
pub struct EquivalenceOptions {
    pub trials: usize,
    pub seed: u64,
    pub tol: f64,
}

impl Default for EquivalenceOptions {
    fn default() -> Self {
        Self {
            trials: 200,
            seed: 0,
            tol: 1e-9,
        }
    }
}

/// One point on the path `M_t = Û_n + t R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPoint {
    pub t: f64,
    /// `Σ_{j≤n} λ̂_j² − objective(M_t)`.
    pub gap: f64,
    pub angle_sine: f64,
}

#[derive(Debug, Clone)]
pub struct EquivalenceReport {
    pub n: usize,
    /// `Σ_{j≤n} λ̂_j²` with `λ̂` the unweighted singular values of `G`.
    pub optimum: f64,
    pub objective_at_u: f64,
    pub best_random_objective: f64,
    pub best_random_angle_sine: f64,
    pub lambda_next: f64,
    pub nwidth_at_v: f64,
    pub best_random_nwidth: f64,
    pub path: Vec<PathPoint>,
    pub clause_a: bool,
    pub clause_b: bool,
    pub clause_c: bool,
}

impl EquivalenceReport {
    pub fn passed(&self) -> bool {
        self.clause_a && self.clause_b && self.clause_c
    }
}

fn gaussian(rng: &mut ChaCha20Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Compare the analytic optima of the trace objective (at `M = Û_n`, identity
/// weights) and of the n-width (at `V = V̂_n`, weights `fx`, `fy`) against
/// seeded random candidates, and follow a path into `Û_n`.
pub fn check_equivalence(
    g: &DenseMatrix,
    fx: &WeightFactor,
    fy: &WeightFactor,
    n: usize,
    opts: &EquivalenceOptions,
) -> Result<EquivalenceReport> {
    let dim = g.nrows();
    guard(dim)?;
    if n > dim {
        return Err(Error::RankExhausted { n, available: dim });
    }
    let scale = |v: f64| opts.tol * v.abs().max(1.0);
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);

    // Bayesian side, identity weights.
    let (u, s, _) = svd_dense(g)?;
    let optimum: f64 = s[..n].iter().map(|l| l * l).sum();
    let u_n = u.subcols(0, n).to_owned();
    let prior = trace(&(g * g.transpose()));
    let objective_at_u = if n == 0 { 0.0 } else { trace_objective(g, &u_n)?.objective };
    let mut best_obj = f64::NEG_INFINITY;
    let mut best_m = None;
    if n > 0 {
        for _ in 0..opts.trials {
            let m = gaussian(&mut rng, dim, n);
            let obj = trace_objective(g, &m)?.objective;
            if obj > best_obj {
                best_obj = obj;
                best_m = Some(m);
            }
        }
    } else {
        best_obj = 0.0;
    }
    let best_random_angle_sine = match &best_m {
        Some(m) => max_angle_sine(&u_n, m)?,
        None => 0.0,
    };
    let clause_a_exact = (objective_at_u - optimum).abs() <= scale(optimum);
    let clause_a = clause_a_exact && best_obj <= objective_at_u + scale(optimum);

    // n-width side with the supplied weights.
    let a = weighted_operator(g, fx, fy)?;
    let (_, sw, vw) = svd_dense(&a)?;
    let lambda_next = sw.get(n).copied().unwrap_or(0.0);
    let v_n = fx.inverse_mat(&vw.subcols(0, n).to_owned())?;
    let nwidth_at_v = nwidth_eval(g, fx, fy, &v_n)?;
    let mut best_nw = f64::INFINITY;
    for _ in 0..opts.trials {
        let cand = gaussian(&mut rng, dim, n);
        best_nw = best_nw.min(nwidth_eval(g, fx, fy, &cand)?);
    }
    let clause_b = (nwidth_at_v - lambda_next).abs() <= scale(lambda_next)
        && best_nw >= lambda_next - scale(lambda_next);

    // Path into the optimum: the gap and the angle both shrink.
    let mut path = Vec::new();
    if n > 0 && n < dim {
        let dir = gaussian(&mut rng, dim, n);
        for t in [1.0, 1e-1, 1e-2, 1e-3, 1e-4] {
            let m = DenseMatrix::from_fn(dim, n, |i, j| u_n[(i, j)] + t * dir[(i, j)]);
            let obj = trace_objective(g, &m)?.objective;
            path.push(PathPoint {
                t,
                gap: optimum - obj,
                angle_sine: max_angle_sine(&u_n, &m)?,
            });
        }
    }
    let clause_c = path.windows(2).all(|w| {
        w[1].gap <= w[0].gap + scale(optimum) && w[1].angle_sine <= w[0].angle_sine + 1e-12
    }) && path.last().is_none_or(|p| p.angle_sine < 1e-3 && p.gap <= 1e-6 * prior.max(1.0));

    Ok(EquivalenceReport {
        n,
        optimum,
        objective_at_u,
        best_random_objective: best_obj,
        best_random_angle_sine,
        lambda_next,
        nwidth_at_v,
        best_random_nwidth: best_nw,
        path,
        clause_a,
        clause_b,
        clause_c,
    })
}
