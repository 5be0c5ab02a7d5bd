//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rsvd::RsvdParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Elliptic,
    Rte,
    SemilinearElliptic,
    SemilinearRte,
    /// `L = I` on `m_intervals − 1` unknowns.
    Identity,
    /// One-dimensional multiscale operator on `m_intervals − 1` unknowns.
    Toy1d,
}

impl ProblemKind {
    pub fn is_rte(self) -> bool {
        matches!(self, ProblemKind::Rte | ProblemKind::SemilinearRte)
    }

    pub fn is_semilinear(self) -> bool {
        matches!(self, ProblemKind::SemilinearElliptic | ProblemKind::SemilinearRte)
    }

    pub fn is_toy(self) -> bool {
        matches!(self, ProblemKind::Identity | ProblemKind::Toy1d)
    }

    /// Byte stored in basis files.
    pub fn tag(self) -> u8 {
        match self {
            ProblemKind::Elliptic => 1,
            ProblemKind::Rte => 2,
            ProblemKind::SemilinearElliptic => 3,
            ProblemKind::SemilinearRte => 4,
            ProblemKind::Identity => 5,
            ProblemKind::Toy1d => 6,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Elliptic => "elliptic",
            ProblemKind::Rte => "rte",
            ProblemKind::SemilinearElliptic => "semilinear_elliptic",
            ProblemKind::SemilinearRte => "semilinear_rte",
            ProblemKind::Identity => "identity",
            ProblemKind::Toy1d => "toy1d",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    /// `sin(4πx) sin(4πy)` for elliptic kinds, a centred beam for transport.
    Standard,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub kind: SourceKind,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub kind: ProblemKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<SourceSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "default_length")]
    pub length: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_intervals: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_v: Option<usize>,
}

fn default_length() -> f64 {
    0.5
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            length: default_length(),
            m_intervals: None,
            n_v: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsSection {
    /// Sobolev order of the source norm; 1 when absent (0 for toy problems).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RsvdSection {
    pub rank: usize,
    pub oversample: usize,
    pub power: usize,
    pub seed: u64,
    /// Use the dense oracle instead of the randomized solver.
    pub dense: bool,
}

impl Default for RsvdSection {
    fn default() -> Self {
        let d = RsvdParams::default();
        Self {
            rank: d.rank,
            oversample: d.oversample,
            power: d.power,
            seed: d.seed,
            dense: false,
        }
    }
}

impl RsvdSection {
    pub fn params(&self) -> RsvdParams {
        RsvdParams {
            rank: self.rank,
            oversample: self.oversample,
            power: self.power,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NonlinearSection {
    pub tol: f64,
    pub max_iter: usize,
    pub relax: f64,
}

impl Default for NonlinearSection {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 500,
            relax: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    /// Largest basis count in error curves; `rsvd.rank − 1` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nmax: Option<usize>,
    /// Explicit basis counts for error curves.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
    /// Medium parameters visited by `sweep`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<f64>>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_out_dir(),
            nmax: None,
            n_list: None,
            sweep: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub weights: WeightsSection,
    #[serde(default)]
    pub rsvd: RsvdSection,
    #[serde(default)]
    pub nonlinear: NonlinearSection,
    #[serde(default)]
    pub output: OutputSection,
}

pub const FULL_SCALE_M: usize = 64;
pub const FULL_SCALE_NV: usize = 40;

impl ExperimentConfig {
    /// Parse and validate. Unknown keys are rejected.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
            let key = unknown_field(&e.to_string()).unwrap_or_else(|| "<document>".into());
            Error::config(key, e.to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Minimal valid configuration for a problem kind.
    pub fn for_kind(kind: ProblemKind) -> Self {
        let mut problem = ProblemSection {
            kind,
            epsilon: None,
            eps1: None,
            eps2: None,
            g: None,
            source: None,
        };
        match kind {
            ProblemKind::Elliptic | ProblemKind::SemilinearElliptic | ProblemKind::Toy1d => {
                problem.epsilon = Some(0.0625)
            }
            ProblemKind::Rte | ProblemKind::SemilinearRte => {
                problem.eps1 = Some(1.0);
                problem.eps2 = Some(1.0);
                problem.g = Some(0.5);
            }
            ProblemKind::Identity => {}
        }
        let weights = WeightsSection::default();
        let mut grid = GridSection::default();
        if kind.is_toy() {
            grid.m_intervals = Some(13);
        }
        let rsvd = RsvdSection {
            rank: if kind.is_toy() { 10 } else { RsvdParams::default().rank },
            oversample: if kind.is_toy() { 2 } else { RsvdParams::default().oversample },
            ..RsvdSection::default()
        };
        ExperimentConfig {
            problem,
            grid,
            weights,
            rsvd,
            nonlinear: NonlinearSection::default(),
            output: OutputSection::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.problem;
        let kind = p.kind;
        let positive = |key: &str, v: Option<f64>| -> Result<()> {
            match v {
                None => Err(Error::config(key, format!("required for problem `{}`", kind.name()))),
                Some(x) if !(x.is_finite() && x > 0.0) => Err(Error::config(key, "must be positive")),
                Some(_) => Ok(()),
            }
        };
        match kind {
            ProblemKind::Elliptic | ProblemKind::SemilinearElliptic | ProblemKind::Toy1d => {
                positive("problem.epsilon", p.epsilon)?
            }
            ProblemKind::Rte | ProblemKind::SemilinearRte => {
                positive("problem.eps1", p.eps1)?;
                positive("problem.eps2", p.eps2)?;
                match p.g {
                    None => return Err(Error::config("problem.g", "required for transport problems")),
                    Some(g) if !(g.abs() < 1.0) => return Err(Error::config("problem.g", "must lie in (-1, 1)")),
                    Some(_) => {}
                }
            }
            ProblemKind::Identity => {}
        }
        if let Some(s) = p.source {
            if !s.amplitude.is_finite() {
                return Err(Error::config("problem.source.amplitude", "must be finite"));
            }
        }
        if !(self.grid.length.is_finite() && self.grid.length > 0.0) {
            return Err(Error::config("grid.length", "must be positive"));
        }
        if let Some(m) = self.grid.m_intervals {
            let min = if kind.is_toy() { 2 } else { 3 };
            if m < min {
                return Err(Error::config("grid.m_intervals", format!("must be at least {min}")));
            }
        }
        match self.grid.n_v {
            Some(0) => return Err(Error::config("grid.n_v", "must be positive")),
            Some(_) if !kind.is_rte() => {
                return Err(Error::config("grid.n_v", "only meaningful for transport problems"))
            }
            _ => {}
        }
        if self.order() > 2 {
            return Err(Error::config("weights.p", "must be 0, 1 or 2"));
        }
        if kind.is_toy() && self.order() != 0 {
            return Err(Error::config("weights.p", "toy problems use Euclidean weights; must be 0"));
        }
        if self.rsvd.rank == 0 {
            return Err(Error::config("rsvd.rank", "must be positive"));
        }
        let n = self.unknowns();
        if !self.rsvd.dense && self.rsvd.rank + self.rsvd.oversample > n {
            return Err(Error::config(
                "rsvd.oversample",
                format!("rank + oversample exceeds the {n} unknowns"),
            ));
        }
        if self.rsvd.rank > n {
            return Err(Error::config("rsvd.rank", format!("exceeds the {n} unknowns")));
        }
        let nl = &self.nonlinear;
        if !(nl.tol.is_finite() && nl.tol > 0.0) {
            return Err(Error::config("nonlinear.tol", "must be positive"));
        }
        if nl.max_iter == 0 {
            return Err(Error::config("nonlinear.max_iter", "must be positive"));
        }
        if !(nl.relax > 0.0 && nl.relax <= 1.0) {
            return Err(Error::config("nonlinear.relax", "must lie in (0, 1]"));
        }
        if let Some(nmax) = self.output.nmax {
            if nmax > self.rsvd.rank {
                return Err(Error::config("output.nmax", "exceeds rsvd.rank"));
            }
        }
        if let Some(list) = &self.output.n_list {
            if list.iter().any(|&n| n > self.rsvd.rank) {
                return Err(Error::config("output.n_list", "entry exceeds rsvd.rank"));
            }
        }
        if let Some(sweep) = &self.output.sweep {
            if sweep.is_empty() || sweep.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
                return Err(Error::config("output.sweep", "needs positive medium parameters"));
            }
            if kind == ProblemKind::Identity {
                return Err(Error::config("output.sweep", "identity problem has no medium"));
            }
        }
        Ok(())
    }

    /// Sobolev order of the source weight.
    pub fn order(&self) -> usize {
        self.weights.p.unwrap_or(if self.problem.kind.is_toy() { 0 } else { 1 })
    }

    pub fn m_intervals(&self) -> usize {
        self.grid.m_intervals.unwrap_or(match self.problem.kind {
            ProblemKind::Elliptic | ProblemKind::SemilinearElliptic => 32,
            ProblemKind::Rte | ProblemKind::SemilinearRte => 16,
            ProblemKind::Identity | ProblemKind::Toy1d => 16,
        })
    }

    pub fn n_v(&self) -> usize {
        self.grid.n_v.unwrap_or(16)
    }

    /// Number of discrete unknowns.
    pub fn unknowns(&self) -> usize {
        let m = self.m_intervals();
        if self.problem.kind.is_toy() {
            m - 1
        } else if self.problem.kind.is_rte() {
            (m - 1) * (m - 1) * self.n_v()
        } else {
            (m - 1) * (m - 1)
        }
    }

    pub fn source(&self) -> SourceSpec {
        self.problem.source.unwrap_or(SourceSpec {
            kind: SourceKind::Standard,
            amplitude: if self.problem.kind == ProblemKind::SemilinearElliptic {
                100.0
            } else {
                1.0
            },
        })
    }

    /// Largest basis count used by error curves.
    pub fn nmax(&self) -> usize {
        self.output.nmax.unwrap_or(self.rsvd.rank.saturating_sub(1))
    }

    /// Basis counts for error curves, ascending without duplicates.
    pub fn n_list(&self) -> Vec<usize> {
        let mut ns = match &self.output.n_list {
            Some(list) => list.clone(),
            None => {
                let nmax = self.nmax();
                let step = (nmax / 10).max(1);
                let mut v: Vec<usize> = (1..=nmax).step_by(step).collect();
                v.push(nmax);
                v
            }
        };
        ns.retain(|&n| n > 0);
        ns.sort_unstable();
        ns.dedup();
        ns
    }

    /// Switch to full-resolution grids.
    pub fn full_scale(&mut self) {
        self.grid.m_intervals = Some(FULL_SCALE_M);
        if self.problem.kind.is_rte() {
            self.grid.n_v = Some(FULL_SCALE_NV);
        }
    }

    /// Copy with the medium parameter replaced (`epsilon` or `eps2`).
    pub fn with_medium(&self, value: f64) -> Self {
        let mut c = self.clone();
        if c.problem.kind.is_rte() {
            c.problem.eps2 = Some(value);
        } else {
            c.problem.epsilon = Some(value);
        }
        c
    }
}

/// Pull the offending key out of a serde "unknown field" message.
fn unknown_field(msg: &str) -> Option<String> {
    let rest = msg.strip_prefix("unknown field `")?;
    Some(rest[..rest.find('`')?].to_string())
}
