//! Experiment config: one JSON file with `workers`, `arrival`, `code`,
//! `split`, `sim`, `gamma` and `seed`.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use coded_stream::codeopt::{CandidateSpec, CodeParams};
use coded_stream::gradcode::{task_complexity, GradientCodeParams};
use coded_stream::loadsplit::DEFAULT_GAMMA;
use coded_stream::stochastic::{ArrivalModel, WorkerProfile};

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum WorkerSpec {
    Moments {
        id: usize,
        mean_unit_time: f64,
        second_moment_unit_time: f64,
        #[serde(default)]
        comm_delay: f64,
    },
    Exponential {
        id: usize,
        mu: f64,
        #[serde(default)]
        comm_delay: f64,
    },
}

impl WorkerSpec {
    fn id(&self) -> usize {
        match *self {
            Self::Moments { id, .. } | Self::Exponential { id, .. } => id,
        }
    }

    fn build(&self) -> coded_stream::Result<WorkerProfile> {
        match *self {
            Self::Moments { id, mean_unit_time, second_moment_unit_time, comm_delay } => {
                WorkerProfile::from_moments(id, mean_unit_time, second_moment_unit_time, comm_delay)
            }
            Self::Exponential { id, mu, comm_delay } => {
                WorkerProfile::exponential(id, mu, comm_delay)
            }
        }
    }
}

/// Workload description from which the task complexity is derived.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workload {
    pub samples: f64,
    pub chunks: f64,
    pub chunks_per_task: f64,
    pub ops_per_sample: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeSection {
    pub k: Option<usize>,
    pub complexity: Option<f64>,
    pub product: Option<f64>,
    pub omega: Option<f64>,
    pub workload: Option<Workload>,
    pub candidates: Option<CandidateSpec>,
    /// Encoding matrix rows, inline.
    pub matrix: Option<Vec<Vec<f64>>>,
    /// Encoding matrix as headerless CSV, relative to the config file.
    pub matrix_file: Option<PathBuf>,
    /// Build a replication code with this many chunks...
    pub chunks: Option<usize>,
    /// ...each task covering this many of them.
    pub chunks_per_task: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SplitChoice {
    Named(SplitKind),
    Explicit(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    Optimal,
    Uniform,
}

impl Default for SplitChoice {
    fn default() -> Self {
        Self::Named(SplitKind::Optimal)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default = "one")]
    pub iterations: usize,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default = "yes")]
    pub purging: bool,
    #[serde(default = "yes")]
    pub trace: bool,
    pub omega_grid: Option<Vec<f64>>,
}

impl Default for SimSection {
    fn default() -> Self {
        Self { iterations: 1, jobs: default_jobs(), purging: true, trace: true, omega_grid: None }
    }
}

fn one() -> usize {
    1
}

fn default_jobs() -> usize {
    1000
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    workers: Vec<WorkerSpec>,
    arrival: Option<ArrivalModel>,
    #[serde(default)]
    code: CodeSection,
    #[serde(default)]
    split: SplitChoice,
    #[serde(default)]
    sim: SimSection,
    #[serde(default = "default_gamma")]
    gamma: f64,
    #[serde(default)]
    seed: u64,
}

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}

/// Parsed and checked experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub workers: Vec<WorkerProfile>,
    pub arrival: Option<ArrivalModel>,
    pub code: CodeSection,
    pub split: SplitChoice,
    pub sim: SimSection,
    pub gamma: f64,
    pub seed: u64,
    pub base_dir: PathBuf,
}

/// Command-line overrides.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub purging: Option<bool>,
}

fn malformed(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

/// Library errors raised while building the experiment are input errors,
/// except for degenerate workers.
fn input_error(e: coded_stream::Error) -> CliError {
    match e {
        coded_stream::Error::DegenerateWorker { .. } => CliError::Library(e),
        other => malformed(other),
    }
}

pub fn load(path: &Path, overrides: Overrides) -> Result<Experiment, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let raw: RawConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    build(raw, overrides, base_dir)
}

fn build(raw: RawConfig, overrides: Overrides, base_dir: PathBuf) -> Result<Experiment, CliError> {
    let mut seen = HashSet::new();
    for w in &raw.workers {
        if !seen.insert(w.id()) {
            return Err(malformed(format!("duplicate worker id {}", w.id())));
        }
    }
    let workers = raw
        .workers
        .iter()
        .map(WorkerSpec::build)
        .collect::<coded_stream::Result<Vec<_>>>()
        .map_err(input_error)?;
    if let Some(a) = &raw.arrival {
        a.validate().map_err(malformed)?;
    }
    if !(raw.gamma > 0.0) || !raw.gamma.is_finite() {
        return Err(malformed(format!("gamma must be > 0, got {}", raw.gamma)));
    }
    let mut sim = raw.sim;
    if let Some(j) = overrides.jobs {
        sim.jobs = j;
    }
    if let Some(p) = overrides.purging {
        sim.purging = p;
    }
    if sim.jobs == 0 || sim.iterations == 0 {
        return Err(malformed("sim.jobs and sim.iterations must be >= 1"));
    }
    if let SplitChoice::Explicit(kappa) = &raw.split {
        if !workers.is_empty() && kappa.len() != workers.len() {
            return Err(malformed(format!(
                "explicit split has {} entries for {} workers",
                kappa.len(),
                workers.len()
            )));
        }
    }
    Ok(Experiment {
        workers,
        arrival: raw.arrival,
        code: raw.code,
        split: raw.split,
        sim,
        gamma: raw.gamma,
        seed: overrides.seed.unwrap_or(raw.seed),
        base_dir,
    })
}

impl Experiment {
    pub fn require_workers(&self) -> Result<&[WorkerProfile], CliError> {
        if self.workers.is_empty() {
            Err(malformed("config lists no workers"))
        } else {
            Ok(&self.workers)
        }
    }

    pub fn require_arrival(&self) -> Result<ArrivalModel, CliError> {
        self.arrival.ok_or_else(|| malformed("config has no arrival model"))
    }

    pub fn complexity(&self) -> Result<f64, CliError> {
        match (self.code.complexity, self.code.workload, self.code.product, self.code.k) {
            (Some(c), None, _, _) => Ok(c),
            (None, Some(w), _, _) => task_complexity(&GradientCodeParams {
                n: w.samples,
                m: w.chunks,
                d: w.chunks_per_task,
                alpha: w.ops_per_sample,
            })
            .map_err(malformed),
            (None, None, Some(z), Some(k)) if k > 0 => Ok(z / k as f64),
            (Some(_), Some(_), _, _) => Err(malformed("give code.complexity or code.workload, not both")),
            _ => Err(malformed("code needs complexity, workload, or product with k")),
        }
    }

    pub fn omega(&self) -> f64 {
        self.code.omega.unwrap_or(1.0)
    }

    pub fn code_params(&self) -> Result<CodeParams, CliError> {
        self.code_params_at(self.omega())
    }

    pub fn code_params_at(&self, omega: f64) -> Result<CodeParams, CliError> {
        let k = self.code.k.ok_or_else(|| malformed("code.k is required"))?;
        CodeParams::new(k, self.complexity()?, omega).map_err(malformed)
    }

    pub fn matrix_path(&self) -> Option<PathBuf> {
        self.code.matrix_file.as_ref().map(|p| self.base_dir.join(p))
    }
}
