//! Experiment orchestration: assemble, build a basis, solve and report.
//! Every subcommand returns a [`Report`] of `key=value` lines; check
//! subcommands mark each assertion PASS or FAIL.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bayes::{check_equivalence, check_reconstruction_bound, nwidth_eval, EquivalenceOptions, BAYES_LIMIT};
use crate::config::{ExperimentConfig, ProblemKind, SourceKind};
use crate::elliptic::{assemble_elliptic, assemble_elliptic_1d, eval_source_elliptic, EllipticMedium};
use crate::error::{Error, Result};
use crate::grid::{Grid2D, PhaseGrid};
use crate::linalg::{factorize, norm2, DenseMatrix, FactorizedSolver, SparseOperator};
use crate::nonlinear::{fixed_point_solve, newton_reference, FixedPointOptions, NonlinearTerm};
use crate::obf::write_basis;
use crate::projection::{error_curve, relative_errors, ErrorCurve, ErrorRow};
use crate::rsvd::{compute_basis, dense_svd_oracle, verify_relations, BasisMeta, SVDBasis};
use crate::rte::{assemble_rte, eval_source_rte, RteCoefficients};
use crate::sobolev::{build_rte_weight, build_sobolev_weight, Space, WeightFactor};

/// Tolerance on the defining relations of a produced basis.
pub const RELATION_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    AssembleCheck,
    Basis,
    SvDecay,
    SolveLinear,
    SolveNonlinear,
    OracleSvd,
    NwidthCheck,
    BayesCheck,
    Sweep,
}

impl Command {
    pub const ALL: [Command; 9] = [
        Command::AssembleCheck,
        Command::Basis,
        Command::SvDecay,
        Command::SolveLinear,
        Command::SolveNonlinear,
        Command::OracleSvd,
        Command::NwidthCheck,
        Command::BayesCheck,
        Command::Sweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::AssembleCheck => "assemble-check",
            Command::Basis => "basis",
            Command::SvDecay => "sv-decay",
            Command::SolveLinear => "solve-linear",
            Command::SolveNonlinear => "solve-nonlinear",
            Command::OracleSvd => "oracle-svd",
            Command::NwidthCheck => "nwidth-check",
            Command::BayesCheck => "bayes-check",
            Command::Sweep => "sweep",
        }
    }
}

impl std::str::FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::config("subcommand", format!("unknown subcommand `{s}`")))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub lines: Vec<String>,
    pub failures: usize,
    pub written: Vec<PathBuf>,
}

impl Report {
    pub fn info(&mut self, line: impl Into<String>) {
        self.lines.push(line.into());
    }

    pub fn check(&mut self, name: &str, ok: bool, detail: impl fmt::Display) {
        if !ok {
            self.failures += 1;
        }
        let status = if ok { "PASS" } else { "FAIL" };
        self.lines.push(format!("check={name} status={status} {detail}"));
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    fn wrote(&mut self, path: PathBuf) {
        self.lines.push(format!("wrote={}", path.display()));
        self.written.push(path);
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.lines {
            writeln!(f, "{l}")?;
        }
        write!(f, "result={}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

/// Cap the linear algebra worker pool from `OPTBASIS_THREADS`.
pub fn configure_threads() -> Result<Option<usize>> {
    let Ok(raw) = std::env::var("OPTBASIS_THREADS") else {
        return Ok(None);
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::config("OPTBASIS_THREADS", "must be a positive integer"))?;
    faer::set_global_parallelism(if n == 1 { faer::Par::Seq } else { faer::Par::rayon(n) });
    Ok(Some(n))
}

/// Assembled discrete problem with its weights, source and nonlinearity.
#[derive(Debug, Clone)]
pub struct Problem {
    pub config: ExperimentConfig,
    pub op: SparseOperator,
    pub fx: WeightFactor,
    pub fy: WeightFactor,
    pub source: Vec<f64>,
    pub term: NonlinearTerm,
    /// Spatial grid of elliptic problems, enables the energy norm.
    pub grid: Option<Grid2D>,
    pub phase: Option<PhaseGrid>,
}

pub fn build_problem(cfg: &ExperimentConfig) -> Result<Problem> {
    cfg.validate()?;
    let kind = cfg.problem.kind;
    let m = cfg.m_intervals();
    let length = cfg.grid.length;
    let spec = cfg.source();
    let p = cfg.order();
    let (op, fx, source, term, grid, phase) = match kind {
        ProblemKind::Identity | ProblemKind::Toy1d => {
            let n = m - 1;
            let op = if kind == ProblemKind::Identity {
                SparseOperator::identity(n)
            } else {
                assemble_elliptic_1d(n, length, cfg.problem.epsilon.unwrap_or(1.0))
            };
            let h = length / m as f64;
            let source = match spec.kind {
                SourceKind::Standard => (0..n)
                    .map(|i| spec.amplitude * (4.0 * PI * (i + 1) as f64 * h).sin())
                    .collect(),
                SourceKind::Constant => vec![spec.amplitude; n],
            };
            let fx = WeightFactor::identity(n, Space::Source);
            (op, fx, source, NonlinearTerm::Zero, None, None)
        }
        ProblemKind::Elliptic | ProblemKind::SemilinearElliptic => {
            let grid = Grid2D::new(length, m);
            let medium = EllipticMedium::new(cfg.problem.epsilon.expect("validated"));
            let op = assemble_elliptic(&grid, &medium);
            let source = match spec.kind {
                SourceKind::Standard => eval_source_elliptic(&grid, spec.amplitude),
                SourceKind::Constant => vec![spec.amplitude; grid.n_nodes()],
            };
            let term = if kind == ProblemKind::SemilinearElliptic {
                NonlinearTerm::Cubic
            } else {
                NonlinearTerm::Zero
            };
            let fx = build_sobolev_weight(p, &grid)?;
            (op, fx, source, term, Some(grid), None)
        }
        ProblemKind::Rte | ProblemKind::SemilinearRte => {
            let pg = PhaseGrid::new(Grid2D::new(length, m), cfg.n_v());
            let (eps1, eps2) = (cfg.problem.eps1.expect("validated"), cfg.problem.eps2.expect("validated"));
            let op = assemble_rte(&pg, &RteCoefficients::new(eps1, eps2, cfg.problem.g.expect("validated")));
            let source = match spec.kind {
                SourceKind::Standard => eval_source_rte(&pg, spec.amplitude),
                SourceKind::Constant => vec![spec.amplitude; pg.n_total()],
            };
            let term = if kind == ProblemKind::SemilinearRte {
                NonlinearTerm::two_photon(&pg, eps1)
            } else {
                NonlinearTerm::Zero
            };
            let fx = build_rte_weight(p, &pg)?;
            (op, fx, source, term, None, Some(pg))
        }
    };
    let fy = WeightFactor::identity(op.n_rows(), Space::Solution);
    Ok(Problem {
        config: cfg.clone(),
        op,
        fx,
        fy,
        source,
        term,
        grid,
        phase,
    })
}

impl Problem {
    pub fn factorize(&self) -> Result<FactorizedSolver> {
        factorize(&self.op)
    }

    /// Basis per the `rsvd` section: randomized by default, dense oracle
    /// truncated to `rank` when `rsvd.dense` is set.
    pub fn basis(&self, fs: &FactorizedSolver) -> Result<SVDBasis> {
        let rs = &self.config.rsvd;
        let mut basis = if rs.dense {
            dense_svd_oracle(fs, &self.fx, &self.fy)?.truncated(rs.rank)?
        } else {
            compute_basis(fs, &self.fx, &self.fy, &rs.params())?
        };
        basis.meta = BasisMeta {
            tag: self.config.problem.kind.tag(),
            order: self.config.order(),
            rsvd: (!rs.dense).then(|| rs.params()),
        };
        Ok(basis)
    }

    fn energy_grid(&self) -> Option<&Grid2D> {
        self.grid.as_ref()
    }
}

/// `i,lambda_rel` with 1-based `i`.
pub fn sv_decay_csv(basis: &SVDBasis) -> String {
    let mut out = String::from("i,lambda_rel\n");
    for (i, l) in basis.relative_lambdas().iter().enumerate() {
        out.push_str(&format!("{},{:e}\n", i + 1, l));
    }
    out
}

fn write_file(report: &mut Report, path: PathBuf, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&path, contents)?;
    report.wrote(path);
    Ok(())
}

fn problem_line(p: &Problem) -> String {
    let c = &p.config;
    format!(
        "problem={} unknowns={} m={} p={}",
        c.problem.kind.name(),
        p.op.n_rows(),
        c.m_intervals(),
        c.order()
    )
}

fn relations_check(report: &mut Report, basis: &SVDBasis, fs: &FactorizedSolver, p: &Problem) -> Result<()> {
    let rel = verify_relations(basis, fs, &p.fx, &p.fy)?;
    report.check(
        "defining_relations",
        rel.defining() <= RELATION_TOL,
        format!(
            "orth_u={:e} orth_v={:e} forward={:e} adjoint={:e}",
            rel.orth_u, rel.orth_v, rel.forward, rel.adjoint
        ),
    );
    Ok(())
}

/// Run one subcommand, writing products under `out`.
pub fn run(cfg: &ExperimentConfig, command: Command, out: &Path) -> Result<Report> {
    let mut report = Report::default();
    report.info(format!("command={}", command.name()));
    match command {
        Command::AssembleCheck => assemble_check(cfg, &mut report)?,
        Command::Basis => {
            let p = build_problem(cfg)?;
            report.info(problem_line(&p));
            let fs = p.factorize()?;
            let basis = p.basis(&fs)?;
            report.info(format!("rank={} lambda_1={:e}", basis.rank(), basis.lambdas[0]));
            relations_check(&mut report, &basis, &fs, &p)?;
            std::fs::create_dir_all(out)?;
            let path = out.join("basis.obf");
            write_basis(&path, &basis, Some(&cfg.to_json()))?;
            report.wrote(path);
        }
        Command::SvDecay => {
            let p = build_problem(cfg)?;
            report.info(problem_line(&p));
            let basis = p.basis(&p.factorize()?)?;
            write_file(&mut report, out.join("sv_decay.csv"), sv_decay_csv(&basis))?;
        }
        Command::SolveLinear => solve_linear(cfg, out, &mut report)?,
        Command::SolveNonlinear => solve_nonlinear(cfg, out, &mut report)?,
        Command::OracleSvd => oracle_svd(cfg, &mut report)?,
        Command::NwidthCheck => nwidth_check(cfg, &mut report)?,
        Command::BayesCheck => bayes_check(cfg, &mut report)?,
        Command::Sweep => sweep(cfg, out, &mut report)?,
    }
    Ok(report)
}

fn assemble_check(cfg: &ExperimentConfig, report: &mut Report) -> Result<()> {
    let p = build_problem(cfg)?;
    report.info(problem_line(&p));
    let n = p.op.n_rows();
    report.info(format!("nnz={}", p.op.nnz()));
    report.check("square", p.op.is_square(), format!("rows={} cols={}", n, p.op.n_cols()));
    let fs = p.factorize()?;
    let u = fs.solve(&p.source)?;
    let res: Vec<f64> = p.op.matvec(&u)?.iter().zip(&p.source).map(|(a, b)| a - b).collect();
    let rel = norm2(&res) / norm2(&p.source).max(f64::MIN_POSITIVE);
    report.check("direct_solve_residual", rel < 1e-10, format!("rel_residual={rel:e}"));

    // F reproduces the Gram matrix: ‖F x‖² = xᵀΠx.
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.rsvd.seed);
    let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let fx_x = p.fx.apply_factor(&x)?;
    let quad = crate::linalg::dot(&x, &p.fx.gram_matrix().matvec(&x)?);
    let gap = (crate::linalg::dot(&fx_x, &fx_x) - quad).abs() / quad.abs().max(f64::MIN_POSITIVE);
    report.check("weight_factor", gap < 1e-10, format!("rel_gap={gap:e}"));

    if p.grid.is_some() || cfg.problem.kind == ProblemKind::Toy1d {
        let asym = p.op.add(&p.op.transpose().scaled(-1.0))?.max_abs();
        report.check("symmetric", asym == 0.0, format!("max_asym={asym:e}"));
    }
    if p.phase.is_some() {
        let zero = fs.solve(&vec![0.0; n])?;
        report.check("zero_source_zero_solution", zero.iter().all(|&v| v == 0.0), "");
        let pos: Vec<f64> = p.source.iter().map(|v| v.abs()).collect();
        let up = fs.solve(&pos)?;
        let min = up.iter().copied().fold(f64::INFINITY, f64::min);
        let scale = crate::linalg::norm_inf(&up);
        report.check("nonnegative_solution", min >= -1e-12 * scale, format!("min={min:e}"));
    }
    Ok(())
}

fn solve_linear(cfg: &ExperimentConfig, out: &Path, report: &mut Report) -> Result<()> {
    let p = build_problem(cfg)?;
    report.info(problem_line(&p));
    let fs = p.factorize()?;
    let u_ref = fs.solve(&p.source)?;
    let basis = p.basis(&fs)?;
    let curve = error_curve(&u_ref, &basis, &p.fx, &p.source, &cfg.n_list(), p.energy_grid())?;
    let f_norm = p.fx.norm(&p.source)?;
    let u_norm = p.fy.norm(&u_ref)?;
    for row in &curve.rows {
        let mut line = format!("n={} rel_l2={:e}", row.n, row.rel_l2);
        if let Some(e) = row.rel_energy {
            line.push_str(&format!(" rel_energy={e:e}"));
        }
        if row.n < basis.rank() {
            // ‖u_ref − u_n‖_Y ≤ λ̂_{n+1}‖f‖_X, exact for an exact basis
            let bound = basis.lambdas[row.n] * f_norm / u_norm;
            line.push_str(&format!(" rel_bound={bound:e}"));
        }
        report.info(line);
    }
    write_file(report, out.join("errors.csv"), curve.to_csv())?;
    Ok(())
}

fn solve_nonlinear(cfg: &ExperimentConfig, out: &Path, report: &mut Report) -> Result<()> {
    let p = build_problem(cfg)?;
    report.info(format!("{} nonlinearity={}", problem_line(&p), p.term.tag()));
    let fs = p.factorize()?;
    let basis = p.basis(&fs)?;
    let reference = newton_reference(&p.op, &p.term, &p.source, 1e-12, 100)?;
    report.info(format!(
        "newton_iterations={} newton_residual={:e}",
        reference.iterations, reference.residual
    ));
    let nl = &cfg.nonlinear;
    let opts = FixedPointOptions {
        tol: nl.tol,
        max_iter: nl.max_iter,
        relax: nl.relax,
    };
    let mut rows = Vec::new();
    for n in cfg.n_list() {
        match fixed_point_solve(&basis, &p.fx, &p.source, &p.term, n, &opts) {
            Ok(fp) => {
                let (rel_l2, rel_energy) = relative_errors(&reference.solution, &fp.solution, p.energy_grid())?;
                report.info(format!(
                    "n={n} iterations={} converged={} final_step={:e} rel_l2={rel_l2:e}",
                    fp.iterations, fp.converged, fp.final_step
                ));
                rows.push(ErrorRow { n, rel_l2, rel_energy });
            }
            Err(Error::Diverged { iteration }) => {
                report.info(format!("n={n} diverged_at={iteration}"));
            }
            Err(e) => return Err(e),
        }
    }
    write_file(report, out.join("nonlinear_errors.csv"), ErrorCurve { rows }.to_csv())?;
    Ok(())
}

fn oracle_svd(cfg: &ExperimentConfig, report: &mut Report) -> Result<()> {
    let p = build_problem(cfg)?;
    report.info(problem_line(&p));
    let fs = p.factorize()?;
    let oracle = dense_svd_oracle(&fs, &p.fx, &p.fy)?;
    let mut rs = cfg.clone();
    rs.rsvd.dense = false;
    let approx = Problem { config: rs, ..p.clone() }.basis(&fs)?;
    let top = approx.rank().div_ceil(2);
    let worst = (0..top)
        .map(|i| (approx.lambdas[i] - oracle.lambdas[i]).abs() / oracle.lambdas[i])
        .fold(0.0, f64::max);
    let tol = if cfg.rsvd.power >= 2 { 1e-6 } else { 1e-2 };
    for i in 0..top {
        report.info(format!(
            "i={} oracle={:e} rsvd={:e}",
            i + 1,
            oracle.lambdas[i],
            approx.lambdas[i]
        ));
    }
    report.check(
        "top_values_match",
        worst <= tol,
        format!("top={top} power={} worst_rel={worst:e} tol={tol:e}", cfg.rsvd.power),
    );
    relations_check(report, &approx, &fs, &p)?;
    Ok(())
}

/// Dense `G = L⁻¹`.
fn dense_green(fs: &FactorizedSolver) -> Result<DenseMatrix> {
    let n = fs.dim();
    if n > BAYES_LIMIT {
        return Err(Error::ProblemTooLarge { size: n, limit: BAYES_LIMIT });
    }
    fs.solve_multi(&DenseMatrix::identity(n, n), false)
}

fn nwidth_check(cfg: &ExperimentConfig, report: &mut Report) -> Result<()> {
    let p = build_problem(cfg)?;
    report.info(problem_line(&p));
    let fs = p.factorize()?;
    let g = dense_green(&fs)?;
    let basis = dense_svd_oracle(&fs, &p.fx, &p.fy)?;
    let tol = 1e-9 * basis.lambdas[0].max(1.0);
    let n_max = 5.min(basis.rank() - 1);
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.rsvd.seed);
    for n in 1..=n_max {
        let v_n = basis.v_hat.subcols(0, n).to_owned();
        let width = nwidth_eval(&g, &p.fx, &p.fy, &v_n)?;
        let next = basis.lambdas[n];
        report.check(
            &format!("attained_n{n}"),
            (width - next).abs() <= tol,
            format!("width={width:e} lambda_next={next:e}"),
        );
        let mut worst = f64::INFINITY;
        for _ in 0..100 {
            let cand = DenseMatrix::from_fn(g.nrows(), n, |_, _| StandardNormal.sample(&mut rng));
            worst = worst.min(nwidth_eval(&g, &p.fx, &p.fy, &cand)?);
        }
        report.check(
            &format!("optimal_n{n}"),
            worst >= next - tol,
            format!("min_random_width={worst:e} lambda_next={next:e}"),
        );
    }
    Ok(())
}

/// Bayesian checks with identity weights on both sides.
fn bayes_check(cfg: &ExperimentConfig, report: &mut Report) -> Result<()> {
    let p = build_problem(cfg)?;
    report.info(problem_line(&p));
    let fs = p.factorize()?;
    let g = dense_green(&fs)?;
    let dim = g.nrows();
    let n = 4.min(dim.saturating_sub(1)).max(1);
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.rsvd.seed);
    let mut violations = 0;
    let mut worst_ratio = 0.0f64;
    for _ in 0..100 {
        let f: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let m = DenseMatrix::from_fn(dim, n, |_, _| StandardNormal.sample(&mut rng));
        let b = check_reconstruction_bound(&g, &m, &f)?;
        if !b.holds() {
            violations += 1;
        }
        if b.bound > 0.0 {
            worst_ratio = worst_ratio.max(b.error / b.bound);
        }
    }
    report.check(
        "reconstruction_bound",
        violations == 0,
        format!("draws=100 n={n} violations={violations} worst_ratio={worst_ratio:e}"),
    );
    let eye_x = WeightFactor::identity(dim, Space::Source);
    let eye_y = WeightFactor::identity(dim, Space::Solution);
    let eq = check_equivalence(
        &g,
        &eye_x,
        &eye_y,
        n,
        &EquivalenceOptions {
            seed: cfg.rsvd.seed,
            ..EquivalenceOptions::default()
        },
    )?;
    report.check(
        "trace_optimum",
        eq.clause_a,
        format!(
            "objective={:e} optimum={:e} best_random={:e}",
            eq.objective_at_u, eq.optimum, eq.best_random_objective
        ),
    );
    report.check(
        "nwidth_optimum",
        eq.clause_b,
        format!(
            "width={:e} lambda_next={:e} best_random={:e}",
            eq.nwidth_at_v, eq.lambda_next, eq.best_random_nwidth
        ),
    );
    let last = eq.path.last().map(|pt| pt.angle_sine).unwrap_or(0.0);
    report.check("optimizer_path", eq.clause_c, format!("final_angle_sine={last:e}"));
    let u_n = crate::linalg::svd_dense(&g)?.0.subcols(0, n).to_owned();
    let tr = crate::bayes::trace_objective(&g, &u_n)?;
    let cons = tr.conservation_error();
    report.check("trace_conservation", cons <= 1e-8, format!("rel_error={cons:e}"));
    Ok(())
}

/// Basis counts identical across the sweep, so every CSV has the same rows.
fn sweep(cfg: &ExperimentConfig, out: &Path, report: &mut Report) -> Result<()> {
    let values = cfg.output.sweep.clone().unwrap_or_else(|| vec![1.0, 0.25, 0.0625]);
    let mut counts = Vec::new();
    for (k, &v) in values.iter().enumerate() {
        let c = cfg.with_medium(v);
        c.validate()?;
        let p = build_problem(&c)?;
        let basis = p.basis(&p.factorize()?)?;
        report.info(format!("sweep_index={k} medium={v} rank={} lambda_1={:e}", basis.rank(), basis.lambdas[0]));
        counts.push(basis.rank());
        write_file(report, out.join(format!("sv_decay_{k}.csv")), sv_decay_csv(&basis))?;
    }
    report.check(
        "equal_row_counts",
        counts.windows(2).all(|w| w[0] == w[1]),
        format!("rows={counts:?}"),
    );
    Ok(())
}
