use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use optbasis::config::ExperimentConfig;
use optbasis::pipeline::{configure_threads, run, Command};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Subcommand {
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

impl From<Subcommand> for Command {
    fn from(s: Subcommand) -> Self {
        match s {
            Subcommand::AssembleCheck => Command::AssembleCheck,
            Subcommand::Basis => Command::Basis,
            Subcommand::SvDecay => Command::SvDecay,
            Subcommand::SolveLinear => Command::SolveLinear,
            Subcommand::SolveNonlinear => Command::SolveNonlinear,
            Subcommand::OracleSvd => Command::OracleSvd,
            Subcommand::NwidthCheck => Command::NwidthCheck,
            Subcommand::BayesCheck => Command::BayesCheck,
            Subcommand::Sweep => Command::Sweep,
        }
    }
}

/// Optimal reduced bases for multiscale PDE solution operators.
#[derive(Debug, Parser)]
#[command(name = "optbasis", version)]
struct Cli {
    #[arg(value_enum)]
    command: Subcommand,
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    oversample: Option<usize>,
    /// Power iterations.
    #[arg(long)]
    power: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Largest basis count in error curves.
    #[arg(long)]
    nmax: Option<usize>,
    /// Fixed-point stopping tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Fixed-point relaxation in (0, 1].
    #[arg(long)]
    relax: Option<f64>,
    /// Full-resolution grids (m=64, N_v=40) instead of the desk-scale defaults.
    #[arg(long = "paper-scale")]
    full_scale: bool,
}

impl Cli {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(v) = self.rank {
            cfg.rsvd.rank = v;
        }
        if let Some(v) = self.oversample {
            cfg.rsvd.oversample = v;
        }
        if let Some(v) = self.power {
            cfg.rsvd.power = v;
        }
        if let Some(v) = self.seed {
            cfg.rsvd.seed = v;
        }
        if let Some(v) = self.nmax {
            cfg.output.nmax = Some(v);
        }
        if let Some(v) = self.tol {
            cfg.nonlinear.tol = v;
        }
        if let Some(v) = self.max_iter {
            cfg.nonlinear.max_iter = v;
        }
        if let Some(v) = self.relax {
            cfg.nonlinear.relax = v;
        }
        if self.full_scale {
            cfg.full_scale();
        }
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = (|| {
        configure_threads()?;
        let mut cfg = ExperimentConfig::load(&cli.config)?;
        cli.apply(&mut cfg);
        cfg.validate()?;
        let out = cfg.output.dir.clone();
        run(&cfg, cli.command.into(), &out)
    })();
    match outcome {
        Ok(report) => {
            println!("{report}");
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
