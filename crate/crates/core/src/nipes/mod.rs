//! Novelty-driven increasing-population learner for one robot's controller.
//!
//! Wraps the CMA-ES core with: a behavioural-novelty term blended into the
//! objective (weight decaying 1 -> 0 over iterations), a per-learner archive
//! of behaviour descriptors feeding that novelty, restarts with doubled
//! population on stagnation, and two termination rules (evaluation budget,
//! 50 consecutive motionless evaluations).

pub mod cma;

use crate::sim::{behaviour_distance, BehaviourMap};
use cma::CmaEs;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeSet, VecDeque};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerParams {
    pub initial_lambda: usize,
    pub sigma0: f64,
    /// Evaluation budget; the iteration in flight always completes, so the
    /// total may overrun by at most one population.
    pub budget: usize,
    /// Neighbours used for behavioural novelty.
    pub novelty_k: usize,
    /// Probability of archiving each evaluated descriptor.
    pub archive_add_prob: f64,
    /// Subtracted from the novelty ratio after every iteration.
    pub novelty_decay: f64,
    /// Iterations of best-performance history consulted for stagnation.
    pub stagnation_window: usize,
    pub performance_var_threshold: f64,
    pub descriptor_var_threshold: f64,
    /// Consecutive motionless evaluations that end the learner.
    pub no_move_limit: usize,
}

impl Default for LearnerParams {
    fn default() -> Self {
        LearnerParams {
            initial_lambda: 10,
            sigma0: 0.5,
            budget: 200,
            novelty_k: 15,
            archive_add_prob: 0.05,
            novelty_decay: 0.05,
            stagnation_window: 20,
            performance_var_threshold: 0.05,
            descriptor_var_threshold: 0.05,
            no_move_limit: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum LearnerStatus {
    Running,
    DoneBudget,
    DoneNoMove,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LearnerError {
    #[error("weight dimension must be at least 1")]
    ZeroDim,
    #[error("warm-start controller has {got} weights, learner needs {expected}")]
    WarmStartDim { expected: usize, got: usize },
    #[error("learner already terminated")]
    Terminated,
    #[error("ask called again before tell")]
    AskPending,
    #[error("tell called with no outstanding ask")]
    NoAskPending,
    #[error("expected {expected} evaluations, got {got}")]
    WrongEvalCount { expected: usize, got: usize },
    #[error("no evaluations seen yet")]
    NoEvaluationsYet,
    #[error("learner is still running")]
    StillRunning,
}

/// Result of evaluating one candidate controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateEval {
    /// Task performance (visited tiles / 64).
    pub performance: f64,
    pub behaviour: BehaviourMap,
    pub moved: bool,
}

/// One line of the per-learner log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub lambda: usize,
    /// Novelty ratio used for this iteration's ranking.
    pub novelty_ratio: f64,
    pub best_performance: f64,
    pub evaluations_used: usize,
    pub restarts: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TellOutcome {
    /// Candidate index that became the best-of-run, if any did.
    pub new_best: Option<usize>,
    pub restarted: bool,
    pub status: LearnerStatus,
    pub record: IterationRecord,
}

/// Mean distance from `subject` to its `k` nearest among `refs`; `None` when
/// there are no references at all.
pub fn behavioural_novelty(
    subject: BehaviourMap,
    refs: impl IntoIterator<Item = BehaviourMap>,
    k: usize,
) -> Option<f64> {
    let mut dists: Vec<f64> = refs
        .into_iter()
        .map(|r| behaviour_distance(subject, r))
        .collect();
    if dists.is_empty() || k == 0 {
        return None;
    }
    let k = k.min(dists.len());
    dists.select_nth_unstable_by(k - 1, f64::total_cmp);
    Some(dists[..k].iter().sum::<f64>() / k as f64)
}

#[derive(Debug, Clone)]
pub struct Learner {
    params: LearnerParams,
    dim: usize,
    rng: ChaCha8Rng,
    cma: CmaEs,
    lambda: usize,
    novelty_ratio: f64,
    iteration: usize,
    restarts: usize,
    evaluations_used: usize,
    best_window: VecDeque<f64>,
    no_move_streak: usize,
    behaviour_archive: BTreeSet<u64>,
    status: LearnerStatus,
    pending: Option<Vec<Vec<f64>>>,
    best: Option<(Vec<f64>, f64)>,
}

impl Learner {
    /// Starts a learner for `dim` weights. The search mean is the warm-start
    /// vector when given (an archived controller), otherwise uniform random
    /// in [-1, 1]^dim from the seed.
    pub fn new(
        dim: usize,
        seed: u64,
        warm_start: Option<&[f64]>,
        params: LearnerParams,
    ) -> Result<Self, LearnerError> {
        if dim == 0 {
            return Err(LearnerError::ZeroDim);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mean = match warm_start {
            Some(v) if v.len() == dim => v.to_vec(),
            Some(v) => {
                return Err(LearnerError::WarmStartDim { expected: dim, got: v.len() })
            }
            None => (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
        };
        let cma = CmaEs::new(mean, params.sigma0, params.initial_lambda);
        Ok(Learner {
            params,
            dim,
            rng,
            cma,
            lambda: params.initial_lambda,
            novelty_ratio: 1.0,
            iteration: 0,
            restarts: 0,
            evaluations_used: 0,
            best_window: VecDeque::new(),
            no_move_streak: 0,
            behaviour_archive: BTreeSet::new(),
            status: LearnerStatus::Running,
            pending: None,
            best: None,
        })
    }

    pub fn status(&self) -> LearnerStatus {
        self.status
    }

    pub fn lambda(&self) -> usize {
        self.lambda
    }

    pub fn novelty_ratio(&self) -> f64 {
        self.novelty_ratio
    }

    pub fn restarts(&self) -> usize {
        self.restarts
    }

    pub fn evaluations_used(&self) -> usize {
        self.evaluations_used
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn search_mean(&self) -> &[f64] {
        self.cma.mean()
    }

    /// Best controller evaluated so far (highest task performance, earliest
    /// on ties), available while still running.
    pub fn best_so_far(&self) -> Option<(&[f64], f64)> {
        self.best.as_ref().map(|(w, t)| (w.as_slice(), *t))
    }

    /// Final result; the learner must have terminated.
    pub fn best_of_run(&self) -> Result<(&[f64], f64), LearnerError> {
        if self.best.is_none() {
            return Err(LearnerError::NoEvaluationsYet);
        }
        if self.status == LearnerStatus::Running {
            return Err(LearnerError::StillRunning);
        }
        Ok(self.best_so_far().expect("checked above"))
    }

    /// Draws the next population of candidate weight vectors.
    pub fn ask(&mut self) -> Result<Vec<Vec<f64>>, LearnerError> {
        if self.status != LearnerStatus::Running {
            return Err(LearnerError::Terminated);
        }
        if self.pending.is_some() {
            return Err(LearnerError::AskPending);
        }
        let candidates = self.cma.ask(&mut self.rng);
        self.pending = Some(candidates.clone());
        Ok(candidates)
    }

    /// Consumes one iteration's evaluations (in candidate order) and applies
    /// the full update: novelty blending, ranking, CMA step, ratio decay,
    /// archive adds, then termination checks and — only if the learner goes
    /// on — the stagnation restart.
    pub fn tell(&mut self, evals: &[CandidateEval]) -> Result<TellOutcome, LearnerError> {
        let candidates = self.pending.take().ok_or(LearnerError::NoAskPending)?;
        if evals.len() != candidates.len() {
            let expected = candidates.len();
            self.pending = Some(candidates);
            return Err(LearnerError::WrongEvalCount { expected, got: evals.len() });
        }
        self.iteration += 1;

        let descriptors: Vec<BehaviourMap> = evals.iter().map(|e| e.behaviour).collect();
        let ratio = self.novelty_ratio;
        let costs: Vec<f64> = evals
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let refs = descriptors
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, &d)| d)
                    .chain(self.behaviour_archive.iter().map(|&bits| BehaviourMap(bits)));
                let novelty =
                    behavioural_novelty(e.behaviour, refs, self.params.novelty_k).unwrap_or(0.0);
                -(ratio * novelty + (1.0 - ratio) * e.performance)
            })
            .collect();
        self.cma.tell(&candidates, &costs);

        let mut new_best = None;
        for (i, e) in evals.iter().enumerate() {
            if self.best.as_ref().is_none_or(|&(_, t)| e.performance > t) {
                self.best = Some((candidates[i].clone(), e.performance));
                new_best = Some(i);
            }
        }
        let best_performance = evals
            .iter()
            .map(|e| e.performance)
            .fold(f64::NEG_INFINITY, f64::max);
        self.best_window.push_back(best_performance);
        while self.best_window.len() > self.params.stagnation_window {
            self.best_window.pop_front();
        }

        self.novelty_ratio = (self.novelty_ratio - self.params.novelty_decay).max(0.0);
        for d in &descriptors {
            if self.rng.random::<f64>() < self.params.archive_add_prob {
                self.behaviour_archive.insert(d.0);
            }
        }

        self.evaluations_used += evals.len();
        for e in evals {
            if e.moved {
                self.no_move_streak = 0;
            } else {
                self.no_move_streak += 1;
            }
        }

        let mut restarted = false;
        if self.no_move_streak >= self.params.no_move_limit {
            self.status = LearnerStatus::DoneNoMove;
        } else if self.evaluations_used >= self.params.budget {
            self.status = LearnerStatus::DoneBudget;
        } else if self.is_stagnating(&descriptors) {
            self.restart();
            restarted = true;
        }

        let record = IterationRecord {
            iteration: self.iteration,
            lambda: candidates.len(),
            novelty_ratio: ratio,
            best_performance,
            evaluations_used: self.evaluations_used,
            restarts: self.restarts,
        };
        Ok(TellOutcome { new_best, restarted, status: self.status, record })
    }

    /// Stagnation = flat best performance over the full window AND a nearly
    /// uniform population behaviour (mean per-tile variance of the binary
    /// descriptors below threshold).
    fn is_stagnating(&self, descriptors: &[BehaviourMap]) -> bool {
        if self.best_window.len() < self.params.stagnation_window {
            return false;
        }
        let n = self.best_window.len() as f64;
        let mean = self.best_window.iter().sum::<f64>() / n;
        let var = self.best_window.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        if var >= self.params.performance_var_threshold {
            return false;
        }
        let pop = descriptors.len() as f64;
        let mean_cell_var = (0..64)
            .map(|bit| {
                let ones = descriptors.iter().filter(|d| d.0 >> bit & 1 != 0).count() as f64;
                let p = ones / pop;
                p * (1.0 - p)
            })
            .sum::<f64>()
            / 64.0;
        mean_cell_var < self.params.descriptor_var_threshold
    }

    /// Doubled population, fresh search distribution (mean uniform in
    /// [-1, 1]^dim), novelty ratio back to 1; the descriptor archive, streaks
    /// and best-of-run carry over.
    fn restart(&mut self) {
        self.restarts += 1;
        self.lambda *= 2;
        self.novelty_ratio = 1.0;
        self.best_window.clear();
        let mean: Vec<f64> = (0..self.dim).map(|_| self.rng.random_range(-1.0..1.0)).collect();
        self.cma = CmaEs::new(mean, self.params.sigma0, self.lambda);
    }
}
