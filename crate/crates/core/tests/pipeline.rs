use optbasis::config::{ExperimentConfig, ProblemKind, SourceKind, SourceSpec};
use optbasis::obf::{read_basis, sidecar_path};
use optbasis::pipeline::{build_problem, run, Command};
use optbasis::Error;

fn small_elliptic() -> ExperimentConfig {
    let mut c = ExperimentConfig::for_kind(ProblemKind::Elliptic);
    c.grid.m_intervals = Some(10);
    c.problem.epsilon = Some(0.25);
    c.rsvd.rank = 12;
    c
}

#[test]
fn basis_file_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_elliptic();
    let report = run(&cfg, Command::Basis, dir.path()).unwrap();
    assert!(report.passed(), "{report}");
    let path = dir.path().join("basis.obf");
    let basis = read_basis(&path).unwrap();
    assert_eq!(basis.rank(), 12);
    assert_eq!(basis.dim(), 81);
    assert_eq!(basis.meta.tag, ProblemKind::Elliptic.tag());

    let p = build_problem(&cfg).unwrap();
    let fresh = p.basis(&p.factorize().unwrap()).unwrap();
    for (a, b) in fresh.lambdas.iter().zip(&basis.lambdas) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    let meta = std::fs::read_to_string(sidecar_path(&path)).unwrap();
    assert_eq!(ExperimentConfig::from_json(&meta).unwrap(), cfg);
}

#[test]
fn identity_problem_has_unit_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::for_kind(ProblemKind::Identity);
    assert!(run(&cfg, Command::Basis, dir.path()).unwrap().passed());
    let basis = read_basis(&dir.path().join("basis.obf")).unwrap();
    assert!(basis.lambdas.iter().all(|&l| (l - 1.0).abs() < 1e-12));
}

#[test]
fn outputs_are_deterministic() {
    let cfg = small_elliptic();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        run(&cfg, Command::SvDecay, dir.path()).unwrap();
        run(&cfg, Command::SolveLinear, dir.path()).unwrap();
    }
    for name in ["sv_decay.csv", "errors.csv"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
}

#[test]
fn error_csv_schema_and_monotonicity() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_elliptic();
    cfg.rsvd.dense = true;
    cfg.rsvd.rank = 40;
    cfg.output.n_list = Some(vec![1, 5, 10, 20, 39]);
    run(&cfg, Command::SolveLinear, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("errors.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,rel_l2,rel_energy"));
    let rows: Vec<(usize, f64)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            assert_eq!(f.len(), 3);
            (f[0].parse().unwrap(), f[1].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), vec![1, 5, 10, 20, 39]);
    assert!(rows.windows(2).all(|w| w[1].1 <= w[0].1));
    assert!(!text.contains('\r'));

    let mut rte = ExperimentConfig::for_kind(ProblemKind::Rte);
    rte.grid.m_intervals = Some(6);
    rte.grid.n_v = Some(4);
    run(&rte, Command::SolveLinear, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("errors.csv")).unwrap();
    assert!(text.starts_with("n,rel_l2\n"));
}

#[test]
fn source_in_span_is_reproduced() {
    // f = Π_X⁻¹-free choice: f = v̂_1 gives u = λ̂_1 û_1 exactly at n = 1
    let cfg = small_elliptic();
    let p = build_problem(&cfg).unwrap();
    let fs = p.factorize().unwrap();
    let basis = p.basis(&fs).unwrap();
    let f = basis.v_hat.col_as_slice(0).to_vec();
    let u_ref = fs.solve(&f).unwrap();
    let curve = optbasis::projection::error_curve(&u_ref, &basis, &p.fx, &f, &[1, 3], None).unwrap();
    assert!(curve.rows.iter().all(|r| r.rel_l2 <= 1e-10), "{curve:?}");
}

#[test]
fn sweep_rows_match() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_elliptic();
    cfg.output.sweep = Some(vec![1.0, 0.25, 0.0625]);
    let report = run(&cfg, Command::Sweep, dir.path()).unwrap();
    assert!(report.passed());
    let counts: Vec<usize> = (0..3)
        .map(|k| std::fs::read_to_string(dir.path().join(format!("sv_decay_{k}.csv"))).unwrap().lines().count())
        .collect();
    assert_eq!(counts, vec![13, 13, 13]);
}

#[test]
fn semilinear_run_reports_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::for_kind(ProblemKind::SemilinearElliptic);
    cfg.grid.m_intervals = Some(12);
    cfg.rsvd.rank = 30;
    cfg.output.n_list = Some(vec![5, 10, 29]);
    let report = run(&cfg, Command::SolveNonlinear, dir.path()).unwrap();
    let text = report.to_string();
    assert_eq!(text.matches("converged=true").count(), 3, "{text}");
    let csv = std::fs::read_to_string(dir.path().join("nonlinear_errors.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn constant_source_and_bad_config() {
    let mut cfg = small_elliptic();
    cfg.problem.source = Some(SourceSpec {
        kind: SourceKind::Constant,
        amplitude: 2.0,
    });
    assert!(build_problem(&cfg).unwrap().source.iter().all(|&v| v == 2.0));
    cfg.rsvd.rank = 0;
    assert!(matches!(build_problem(&cfg), Err(Error::ConfigInvalid { key, .. }) if key == "rsvd.rank"));
}

#[test]
fn oversized_dense_checks_refused() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::for_kind(ProblemKind::Elliptic);
    cfg.grid.m_intervals = Some(50);
    assert!(matches!(
        run(&cfg, Command::BayesCheck, dir.path()),
        Err(Error::ProblemTooLarge { .. })
    ));
}
