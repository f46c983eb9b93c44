//! Experiment harness: configuration, replicate orchestration, and offline
//! replay of finished runs.
//!
//! A run directory is the single source of truth for analysis: every metrics
//! table is recomputed from the stored artifacts by [`replay_metrics`], which
//! also cross-checks the event log against the per-robot records and the
//! recorded pool snapshots, so silent corruption surfaces as an error.

pub mod coordinator;
pub mod persist;

use crate::archive::ArchiveError;
use crate::bodyplan::GRID;
use crate::evo::{EvoError, EvoParams, Synchronicity, Variant, VariantParseError};
use crate::metrics::{
    behavioural_variance, morph_scalar, render_behavioural_variance, render_fitness_by_index,
    render_morph_variance, render_top_summary, resample_trajectory, top_k, MetricsError,
    PoolSnapshot,
};
use crate::nipes::{LearnerError, LearnerParams};
use crate::rngutil::derive_seed;
use crate::sched::SchedError;
use crate::sim::{Arena, ArenaError, BehaviourMap, SimError};
use coordinator::{run_replicate, ReplicateArgs, ReplicateStats};
use persist::{Manifest, RunEvent, RunReader, RunWriter, ARENA_FILE};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Robots ranked in the end-of-run summary.
pub const TOP_K: usize = 20;

pub const FITNESS_FILE: &str = "fitness_by_index.csv";
pub const MORPH_VARIANCE_FILE: &str = "morph_variance.csv";
pub const TOP_SUMMARY_FILE: &str = "top20_summary.csv";
pub const BEHAVIOUR_VARIANCE_FILE: &str = "behavioural_variance.csv";

#[derive(Debug, Error)]
pub enum ExpError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Arena(#[from] ArenaError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Evo(#[from] EvoError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Sched(#[from] SchedError),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("corrupt run: {0}")]
    Corrupt(String),
    #[error("internal: {0}")]
    Internal(String),
}

impl ExpError {
    /// Process exit code: 1 for configuration problems, 2 for runtime ones.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExpError::Config(_) | ExpError::Arena(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExperimentConfig {
    /// Three-letter variant code, e.g. "AGW".
    pub variant: String,
    pub replicates: usize,
    /// Total robots created per replicate.
    pub robot_budget: usize,
    /// Capacity P of the parents' and learning pools.
    pub pool_size: usize,
    /// Per-robot controller evaluation budget.
    pub learner_budget: usize,
    pub cores: usize,
    pub master_seed: u64,
    /// Arena layout file; the built-in arena when absent.
    pub arena_path: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    fn validate(&self) -> Result<Variant, ExpError> {
        let variant: Variant = self
            .variant
            .parse()
            .map_err(|e: VariantParseError| ExpError::Config(e.to_string()))?;
        if self.replicates == 0 {
            return Err(ExpError::Config("need at least one replicate".into()));
        }
        if self.pool_size < 4 {
            return Err(ExpError::Config(format!(
                "pool size {} is below the tournament size 4",
                self.pool_size
            )));
        }
        if self.robot_budget < self.pool_size {
            return Err(ExpError::Config(format!(
                "robot budget {} cannot cover the bootstrap pool of {}",
                self.robot_budget, self.pool_size
            )));
        }
        if self.learner_budget == 0 {
            return Err(ExpError::Config("learner budget must be positive".into()));
        }
        if self.cores == 0 {
            return Err(ExpError::Config("need at least one core".into()));
        }
        Ok(variant)
    }
}

/// The four analysis tables of one replicate, as rendered CSV text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetricsTables {
    pub fitness_by_index: String,
    pub morph_variance: String,
    pub top_summary: String,
    pub behavioural_variance: String,
}

impl MetricsTables {
    pub fn entries(&self) -> [(&'static str, &str); 4] {
        [
            (FITNESS_FILE, self.fitness_by_index.as_str()),
            (MORPH_VARIANCE_FILE, self.morph_variance.as_str()),
            (TOP_SUMMARY_FILE, self.top_summary.as_str()),
            (BEHAVIOUR_VARIANCE_FILE, self.behavioural_variance.as_str()),
        ]
    }
}

/// Summary of one produced replicate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplicateReport {
    pub dir: PathBuf,
    pub stats: ReplicateStats,
}

/// Runs every replicate of the configured experiment and writes its run
/// directory, then replays each directory from disk to produce the metrics
/// tables.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ReplicateReport>, ExpError> {
    let variant = config.validate()?;
    let arena = match &config.arena_path {
        Some(path) => Arena::from_text(&fs::read_to_string(path)?)?,
        None => Arena::default(),
    };
    let evo_params = EvoParams {
        pool_size: config.pool_size,
        robot_budget: config.robot_budget,
        ..EvoParams::default()
    };
    let learner_params = LearnerParams { budget: config.learner_budget, ..LearnerParams::default() };

    let mut reports = Vec::with_capacity(config.replicates);
    for replicate in 0..config.replicates {
        let dir = config.out_dir.join(format!("replicate_{replicate:02}"));
        if dir.join(persist::MANIFEST_FILE).exists() {
            return Err(ExpError::Config(format!(
                "{} already holds a run; refusing to overwrite",
                dir.display()
            )));
        }
        let replicate_seed = derive_seed(config.master_seed, &[replicate as u64]);
        let manifest = Manifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            variant,
            pool_size: config.pool_size,
            robot_budget: config.robot_budget,
            learner_budget: learner_params.budget,
            initial_lambda: learner_params.initial_lambda,
            novelty_k: learner_params.novelty_k,
            cores: config.cores,
            master_seed: config.master_seed,
            replicate_index: replicate,
            replicate_seed,
            arena_file: ARENA_FILE.to_string(),
            bootstrap_robots: (0..config.pool_size).collect(),
        };
        let mut writer = RunWriter::create(&dir, &manifest, &arena.to_text())?;
        let stats = run_replicate(
            ReplicateArgs {
                variant,
                evo: evo_params,
                learner: learner_params,
                arena: &arena,
                cores: config.cores,
                replicate_seed,
            },
            &mut writer,
        )?;
        writer.finish()?;
        let tables = replay_metrics(&dir)?;
        write_tables(&dir, &tables)?;
        reports.push(ReplicateReport { dir, stats });
    }
    Ok(reports)
}

fn write_tables(dir: &Path, tables: &MetricsTables) -> Result<(), ExpError> {
    for (name, content) in tables.entries() {
        fs::write(dir.join(persist::METRICS_DIR).join(name), content)?;
    }
    Ok(())
}

/// Recomputes every metrics table of a finished replicate purely from its
/// files, verifying the event log against the robot records and the recorded
/// pool snapshots along the way. Read-only.
pub fn replay_metrics(dir: &Path) -> Result<MetricsTables, ExpError> {
    let reader = RunReader::open(dir)?;
    let manifest = reader.manifest()?;
    let p = manifest.pool_size;
    let period = match manifest.variant.sync {
        Synchronicity::Asynchronous => 1u64,
        Synchronicity::Synchronous => p as u64,
    };

    let indices = reader.robot_indices()?;
    let expected: Vec<usize> = (0..indices.len()).collect();
    if indices != expected {
        return Err(ExpError::Corrupt(format!(
            "robot files are not a gapless 0..{} range",
            indices.len()
        )));
    }
    let mut fitness = Vec::with_capacity(indices.len());
    let mut scalars = Vec::with_capacity(indices.len());
    for &index in &indices {
        let record = reader.robot(index)?;
        let visited = BehaviourMap(record.behaviour).visited_count();
        if record.fitness * 64.0 != visited as f64 {
            return Err(ExpError::Corrupt(format!(
                "robot {index}: fitness {} disagrees with {visited} visited tiles",
                record.fitness
            )));
        }
        if record.plan.voxels.len() != GRID * GRID * GRID {
            return Err(ExpError::Corrupt(format!("robot {index}: malformed body plan")));
        }
        fitness.push(record.fitness);
        scalars.push(morph_scalar(&record.plan));
    }

    let mut parents: BTreeMap<usize, f64> = BTreeMap::new();
    let mut robot_clock = 0u64;
    let mut mated = 0usize;
    let mut snapshots: Vec<PoolSnapshot> = Vec::new();
    for event in reader.events()? {
        match event {
            RunEvent::Added { robot_index, performance } => {
                if fitness.get(robot_index).copied() != Some(performance) {
                    return Err(ExpError::Corrupt(format!(
                        "added event for robot {robot_index} disagrees with its record"
                    )));
                }
                if parents.insert(robot_index, performance).is_some() {
                    return Err(ExpError::Corrupt(format!(
                        "robot {robot_index} added to the pool twice"
                    )));
                }
                robot_clock += 1;
            }
            RunEvent::Removed { robot_index, performance } => {
                match parents.remove(&robot_index) {
                    Some(perf) if perf == performance => {}
                    _ => {
                        return Err(ExpError::Corrupt(format!(
                            "removal of robot {robot_index} does not match the pool"
                        )))
                    }
                }
            }
            RunEvent::Mated { child_index, parent_a, parent_b } => {
                if child_index != p + mated {
                    return Err(ExpError::Corrupt(format!(
                        "mating produced robot {child_index}, expected {}",
                        p + mated
                    )));
                }
                if !parents.contains_key(&parent_a) || !parents.contains_key(&parent_b) {
                    return Err(ExpError::Corrupt(format!(
                        "robot {child_index} mated from parents outside the pool"
                    )));
                }
                mated += 1;
            }
            RunEvent::Pool { clock, members } => {
                if clock != robot_clock {
                    return Err(ExpError::Corrupt(format!(
                        "pool snapshot stamped {clock} at robot clock {robot_clock}"
                    )));
                }
                if clock < p as u64 || (clock - p as u64) % period != 0 {
                    return Err(ExpError::Corrupt(format!(
                        "pool snapshot at {clock} is not an update boundary"
                    )));
                }
                if members.len() != parents.len() {
                    return Err(ExpError::Corrupt(format!(
                        "pool snapshot at {clock} has {} members, pool has {}",
                        members.len(),
                        parents.len()
                    )));
                }
                for m in &members {
                    if parents.get(&m.robot_index).copied() != Some(m.performance)
                        || scalars.get(m.robot_index).copied() != Some(m.morph_scalar)
                    {
                        return Err(ExpError::Corrupt(format!(
                            "pool snapshot at {clock} disagrees about robot {}",
                            m.robot_index
                        )));
                    }
                }
                snapshots.push(PoolSnapshot { clock, members });
            }
        }
    }
    if robot_clock as usize != indices.len() {
        return Err(ExpError::Corrupt(format!(
            "{} robots on disk but {robot_clock} pool additions logged",
            indices.len()
        )));
    }
    if p + mated != indices.len() {
        return Err(ExpError::Corrupt(format!(
            "{} bootstrap + {mated} matings cannot produce {} robots",
            p,
            indices.len()
        )));
    }

    let history: Vec<(usize, f64)> = fitness.iter().copied().enumerate().collect();
    let top = top_k(&history, TOP_K.min(history.len()))?;
    let mut top_trajectories = Vec::with_capacity(top.len());
    for &(robot, _) in &top {
        top_trajectories.push(resample_trajectory(&reader.trajectory(robot)?)?);
    }
    let behaviour_spread = behavioural_variance(&top_trajectories)?;

    Ok(MetricsTables {
        fitness_by_index: render_fitness_by_index(&snapshots),
        morph_variance: render_morph_variance(&snapshots),
        top_summary: render_top_summary(&top),
        behavioural_variance: render_behavioural_variance(top.len(), behaviour_spread),
    })
}

/// The replicate directories under an experiment root (or the root itself
/// when it already is one), sorted.
pub fn replicate_dirs(root: &Path) -> Result<Vec<PathBuf>, ExpError> {
    if root.join(persist::MANIFEST_FILE).is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root)? {
        let path = entry?.path();
        if path.is_dir() && path.join(persist::MANIFEST_FILE).is_file() {
            dirs.push(path);
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        return Err(ExpError::Corrupt(format!(
            "{} contains no run directories",
            root.display()
        )));
    }
    Ok(dirs)
}

/// Mean parents'-pool performance at the final update boundary, read from a
/// replicate's stored table.
pub fn endpoint_mean_fitness(dir: &Path) -> Result<f64, ExpError> {
    let reader = RunReader::open(dir)?;
    let table = reader.metric(FITNESS_FILE)?;
    let last = table
        .lines()
        .last()
        .filter(|l| !l.starts_with("robot_index"))
        .ok_or_else(|| ExpError::Corrupt(format!("{}: empty fitness table", dir.display())))?;
    last.split(',')
        .nth(1)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| ExpError::Corrupt(format!("{}: malformed fitness table", dir.display())))
}
