//! Run-directory reading and writing.
//!
//! A replicate leaves behind plain files only:
//! `manifest.json`, `arena.map`, `events.log` (one JSON event per line),
//! `robots/robot_%05d.json` + `robots/robot_%05d.traj.csv`,
//! `learners/learner_%05d.csv`, `archive/`, and `metrics/`.

use super::ExpError;
use crate::archive::ControllerArchive;
use crate::bodyplan::{BodyPlan, MorphDescriptor};
use crate::cppn::CppnGenome;
use crate::evo::{EvoEvent, Variant};
use crate::metrics::PoolMember;
use crate::nipes::IterationRecord;
use crate::sim::Trajectory;
use serde::{Deserialize, Serialize};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const EVENTS_FILE: &str = "events.log";
pub const ARENA_FILE: &str = "arena.map";
pub const ROBOTS_DIR: &str = "robots";
pub const LEARNERS_DIR: &str = "learners";
pub const ARCHIVE_DIR: &str = "archive";
pub const METRICS_DIR: &str = "metrics";

/// Everything needed to reproduce or replay one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub variant: Variant,
    pub pool_size: usize,
    pub robot_budget: usize,
    pub learner_budget: usize,
    pub initial_lambda: usize,
    pub novelty_k: usize,
    pub cores: usize,
    pub master_seed: u64,
    pub replicate_index: usize,
    pub replicate_seed: u64,
    pub arena_file: String,
    pub bootstrap_robots: Vec<usize>,
}

/// One line of `events.log`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum RunEvent {
    Added { robot_index: usize, performance: f64 },
    Removed { robot_index: usize, performance: f64 },
    Mated { child_index: usize, parent_a: usize, parent_b: usize },
    /// Parents'-pool contents at an update boundary, cross-checked on replay.
    Pool { clock: u64, members: Vec<PoolMember> },
}

impl From<EvoEvent> for RunEvent {
    fn from(e: EvoEvent) -> Self {
        match e {
            EvoEvent::Added { robot_index, performance } => {
                RunEvent::Added { robot_index, performance }
            }
            EvoEvent::Removed { robot_index, performance } => {
                RunEvent::Removed { robot_index, performance }
            }
            EvoEvent::Mated { child_index, parent_a, parent_b } => {
                RunEvent::Mated { child_index, parent_a, parent_b }
            }
        }
    }
}

/// Final state of one robot: its genome and body, and the best controller
/// its learner found, with that controller's episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotRecord {
    pub robot_index: usize,
    pub genome: CppnGenome,
    pub plan: BodyPlan,
    pub fitness: f64,
    /// Visited-tile bitmap of the best episode.
    pub behaviour: u64,
    pub moved: bool,
    pub sim_seconds: f64,
    pub best_weights: Vec<f64>,
}

fn robot_json(index: usize) -> String {
    format!("robot_{index:05}.json")
}

fn robot_traj(index: usize) -> String {
    format!("robot_{index:05}.traj.csv")
}

fn learner_csv(index: usize) -> String {
    format!("learner_{index:05}.csv")
}

pub struct RunWriter {
    dir: PathBuf,
    events: BufWriter<File>,
}

impl RunWriter {
    /// Creates the directory skeleton and writes the manifest and arena.
    pub fn create(dir: &Path, manifest: &Manifest, arena_text: &str) -> Result<Self, ExpError> {
        fs::create_dir_all(dir)?;
        for sub in [ROBOTS_DIR, LEARNERS_DIR, ARCHIVE_DIR, METRICS_DIR] {
            fs::create_dir_all(dir.join(sub))?;
        }
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(manifest)?)?;
        fs::write(dir.join(&manifest.arena_file), arena_text)?;
        let events = BufWriter::new(File::create(dir.join(EVENTS_FILE))?);
        Ok(RunWriter { dir: dir.to_path_buf(), events })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn append_event(&mut self, event: &RunEvent) -> Result<(), ExpError> {
        serde_json::to_writer(&mut self.events, event)?;
        self.events.write_all(b"\n")?;
        Ok(())
    }

    pub fn write_robot(&self, record: &RobotRecord, traj: &Trajectory) -> Result<(), ExpError> {
        let robots = self.dir.join(ROBOTS_DIR);
        fs::write(
            robots.join(robot_json(record.robot_index)),
            serde_json::to_string(record)?,
        )?;
        let mut csv = String::from("t,x,y\n");
        for p in &traj.points {
            csv.push_str(&format!("{},{},{}\n", p[0], p[1], p[2]));
        }
        fs::write(robots.join(robot_traj(record.robot_index)), csv)?;
        Ok(())
    }

    pub fn write_learner(&self, robot: usize, records: &[IterationRecord]) -> Result<(), ExpError> {
        let mut csv =
            String::from("iteration,lambda,novelty_ratio,best_performance,evaluations_used,restarts\n");
        for r in records {
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.iteration, r.lambda, r.novelty_ratio, r.best_performance, r.evaluations_used,
                r.restarts
            ));
        }
        fs::write(self.dir.join(LEARNERS_DIR).join(learner_csv(robot)), csv)?;
        Ok(())
    }

    pub fn write_archives(
        &self,
        controllers: &ControllerArchive,
        morphologies: &[MorphDescriptor],
    ) -> Result<(), ExpError> {
        let dir = self.dir.join(ARCHIVE_DIR);
        fs::write(dir.join("controllers.json"), serde_json::to_string(controllers)?)?;
        fs::write(dir.join("morphologies.json"), serde_json::to_string(morphologies)?)?;
        Ok(())
    }

    pub fn write_metric(&self, file_name: &str, content: &str) -> Result<(), ExpError> {
        fs::write(self.dir.join(METRICS_DIR).join(file_name), content)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), ExpError> {
        self.events.flush()?;
        Ok(())
    }
}

pub struct RunReader {
    dir: PathBuf,
}

impl RunReader {
    pub fn open(dir: &Path) -> Result<Self, ExpError> {
        if !dir.join(MANIFEST_FILE).is_file() {
            return Err(ExpError::Corrupt(format!(
                "{} has no {MANIFEST_FILE}; not a run directory",
                dir.display()
            )));
        }
        Ok(RunReader { dir: dir.to_path_buf() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> Result<Manifest, ExpError> {
        Ok(serde_json::from_str(&fs::read_to_string(self.dir.join(MANIFEST_FILE))?)?)
    }

    /// All events in log order; any unparseable line is a corrupt run.
    pub fn events(&self) -> Result<Vec<RunEvent>, ExpError> {
        let file = File::open(self.dir.join(EVENTS_FILE))?;
        let mut events = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let event: RunEvent = serde_json::from_str(&line).map_err(|e| {
                ExpError::Corrupt(format!("events.log line {}: {e}", lineno + 1))
            })?;
            events.push(event);
        }
        Ok(events)
    }

    /// Robot indices present on disk, sorted.
    pub fn robot_indices(&self) -> Result<Vec<usize>, ExpError> {
        let mut indices = Vec::new();
        for entry in fs::read_dir(self.dir.join(ROBOTS_DIR))? {
            let name = entry?.file_name();
            let name = name.to_string_lossy();
            if let Some(rest) = name.strip_prefix("robot_") {
                if let Some(num) = rest.strip_suffix(".json") {
                    let index = num.parse::<usize>().map_err(|_| {
                        ExpError::Corrupt(format!("unexpected robot file name {name}"))
                    })?;
                    indices.push(index);
                }
            }
        }
        indices.sort_unstable();
        Ok(indices)
    }

    pub fn robot(&self, index: usize) -> Result<RobotRecord, ExpError> {
        let path = self.dir.join(ROBOTS_DIR).join(robot_json(index));
        let record: RobotRecord = serde_json::from_str(&fs::read_to_string(&path)?)
            .map_err(|e| ExpError::Corrupt(format!("{}: {e}", path.display())))?;
        if record.robot_index != index {
            return Err(ExpError::Corrupt(format!(
                "{} holds robot {} instead",
                path.display(),
                record.robot_index
            )));
        }
        Ok(record)
    }

    pub fn trajectory(&self, index: usize) -> Result<Trajectory, ExpError> {
        let path = self.dir.join(ROBOTS_DIR).join(robot_traj(index));
        let text = fs::read_to_string(&path)?;
        let mut points = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if lineno == 0 {
                if line != "t,x,y" {
                    return Err(ExpError::Corrupt(format!("{}: bad header", path.display())));
                }
                continue;
            }
            let mut fields = line.split(',');
            let mut next = || -> Result<f64, ExpError> {
                fields
                    .next()
                    .and_then(|f| f.parse().ok())
                    .ok_or_else(|| {
                        ExpError::Corrupt(format!("{} line {}", path.display(), lineno + 1))
                    })
            };
            points.push([next()?, next()?, next()?]);
        }
        Ok(Trajectory { points })
    }

    pub fn metric(&self, file_name: &str) -> Result<String, ExpError> {
        Ok(fs::read_to_string(self.dir.join(METRICS_DIR).join(file_name))?)
    }
}
