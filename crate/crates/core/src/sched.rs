//! Evaluation scheduling over M workers.
//!
//! The coordinator owns a [`TaskQueue`] of (robot, controller) evaluations
//! and drives a simple discrete loop: while a worker is free and tasks are
//! pending, assign one — a uniformly random pick among the tasks that have
//! waited longest — otherwise process the oldest outstanding assignment.
//! Completion *processing* follows assignment order regardless of which
//! worker finishes first (early results are buffered), and the logical clock
//! stamped onto newly enqueued tasks counts processed completions. Together
//! these make every assignment decision, and hence the entire run, identical
//! for any worker count.
//!
//! [`IterationBarrier`] re-assembles each learner iteration: results may be
//! computed in any order, but `tell` always sees them in candidate order.

use crate::nipes::CandidateEval;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Identity of one controller evaluation. Unique within a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TaskId {
    pub robot: usize,
    /// Learner iteration the candidate belongs to.
    pub iteration: usize,
    /// Candidate index within that iteration (0..lambda).
    pub candidate: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalTask {
    pub id: TaskId,
    pub weights: Vec<f64>,
    /// Episode noise seed.
    pub seed: u64,
    /// Logical enqueue timestamp: the coordinator's completion count.
    pub available_at: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SchedError {
    #[error("task {0:?} was already enqueued")]
    DuplicateTask(TaskId),
    #[error("task {0:?} is not in flight")]
    UnknownTask(TaskId),
    #[error("robot {robot} iteration {iteration} was not registered with the barrier")]
    UnknownIteration { robot: usize, iteration: usize },
    #[error("robot {robot} iteration {iteration} registered twice")]
    DuplicateIteration { robot: usize, iteration: usize },
    #[error("candidate {candidate} out of range for robot {robot} iteration {iteration} (lambda {lambda})")]
    CandidateOutOfRange { robot: usize, iteration: usize, candidate: usize, lambda: usize },
    #[error("duplicate result for task {0:?}")]
    DuplicateResult(TaskId),
}

/// Assignment/completion audit trail, dumped on request for determinism
/// checks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SchedEvent {
    Assigned { task: TaskId, available_at: u64 },
    Completed { task: TaskId },
}

#[derive(Debug, Clone)]
pub struct TaskQueue {
    workers: usize,
    pending: Vec<EvalTask>,
    /// Assignment order; the front is the next completion to process.
    in_flight: Vec<TaskId>,
    seen: std::collections::BTreeSet<TaskId>,
    trace: Option<Vec<SchedEvent>>,
}

impl TaskQueue {
    pub fn new(workers: usize) -> Self {
        assert!(workers > 0, "need at least one worker");
        TaskQueue {
            workers,
            pending: Vec::new(),
            in_flight: Vec::new(),
            seen: std::collections::BTreeSet::new(),
            trace: None,
        }
    }

    /// Starts recording an audit trail of assignments and completions.
    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn in_flight_len(&self) -> usize {
        self.in_flight.len()
    }

    pub fn is_idle(&self) -> bool {
        self.pending.is_empty() && self.in_flight.is_empty()
    }

    /// The task whose completion must be processed next (assignment order).
    pub fn oldest_in_flight(&self) -> Option<TaskId> {
        self.in_flight.first().copied()
    }

    pub fn trace(&self) -> Option<&[SchedEvent]> {
        self.trace.as_deref()
    }

    /// Appends tasks stamped with the current logical time. Task identities
    /// must never repeat within a run.
    pub fn enqueue(&mut self, tasks: impl IntoIterator<Item = EvalTask>) -> Result<(), SchedError> {
        for task in tasks {
            if !self.seen.insert(task.id) {
                return Err(SchedError::DuplicateTask(task.id));
            }
            self.pending.push(task);
        }
        Ok(())
    }

    /// Picks a task uniformly among those sharing the minimal `available_at`
    /// and moves it in flight. `None` when nothing is pending or all workers
    /// are busy.
    pub fn next_assignment<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<EvalTask> {
        if self.in_flight.len() >= self.workers || self.pending.is_empty() {
            return None;
        }
        let min_t = self.pending.iter().map(|t| t.available_at).min().unwrap();
        let group: Vec<usize> = self
            .pending
            .iter()
            .enumerate()
            .filter(|(_, t)| t.available_at == min_t)
            .map(|(i, _)| i)
            .collect();
        let pick = group[rng.random_range(0..group.len())];
        let task = self.pending.remove(pick);
        self.in_flight.push(task.id);
        if let Some(trace) = &mut self.trace {
            trace.push(SchedEvent::Assigned { task: task.id, available_at: task.available_at });
        }
        Some(task)
    }

    /// Marks an in-flight task complete. Callers wanting worker-count
    /// independence must complete in assignment order ([`Self::oldest_in_flight`]).
    pub fn complete(&mut self, id: TaskId) -> Result<(), SchedError> {
        let pos = self
            .in_flight
            .iter()
            .position(|&t| t == id)
            .ok_or(SchedError::UnknownTask(id))?;
        self.in_flight.remove(pos);
        if let Some(trace) = &mut self.trace {
            trace.push(SchedEvent::Completed { task: id });
        }
        Ok(())
    }
}

/// Collects the lambda evaluation results of each learner iteration and
/// releases them as one batch in candidate order, so the learning update
/// never sees scheduling order.
#[derive(Debug, Clone, Default)]
pub struct IterationBarrier {
    slots: BTreeMap<(usize, usize), Vec<Option<CandidateEval>>>,
}

impl IterationBarrier {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares that `lambda` results are expected for this iteration.
    pub fn expect(&mut self, robot: usize, iteration: usize, lambda: usize) -> Result<(), SchedError> {
        if self.slots.contains_key(&(robot, iteration)) {
            return Err(SchedError::DuplicateIteration { robot, iteration });
        }
        self.slots.insert((robot, iteration), vec![None; lambda]);
        Ok(())
    }

    /// Files one result; returns the full batch, ordered by candidate, when
    /// this was the last one.
    pub fn submit(
        &mut self,
        id: TaskId,
        eval: CandidateEval,
    ) -> Result<Option<Vec<CandidateEval>>, SchedError> {
        let key = (id.robot, id.iteration);
        let slots = self.slots.get_mut(&key).ok_or(SchedError::UnknownIteration {
            robot: id.robot,
            iteration: id.iteration,
        })?;
        if id.candidate >= slots.len() {
            return Err(SchedError::CandidateOutOfRange {
                robot: id.robot,
                iteration: id.iteration,
                candidate: id.candidate,
                lambda: slots.len(),
            });
        }
        if slots[id.candidate].is_some() {
            return Err(SchedError::DuplicateResult(id));
        }
        slots[id.candidate] = Some(eval);
        if slots.iter().all(|s| s.is_some()) {
            let full = self.slots.remove(&key).unwrap();
            Ok(Some(full.into_iter().map(|s| s.unwrap()).collect()))
        } else {
            Ok(None)
        }
    }

    /// Iterations still waiting for results.
    pub fn open_len(&self) -> usize {
        self.slots.len()
    }
}
