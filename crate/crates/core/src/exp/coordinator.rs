//! One replicate's thread of control.
//!
//! The coordinator owns every piece of mutable state — evolution pools,
//! learners, the task queue, the controller archive — and runs a discrete
//! loop: greedily assign evaluation tasks to the worker pool, otherwise
//! process the oldest outstanding assignment. Physical workers finish in
//! arbitrary order; their results are buffered and consumed in assignment
//! order, which (together with the task-completion clock stamped on new
//! tasks) makes the whole run independent of the worker count.

use super::persist::{RobotRecord, RunEvent, RunWriter};
use super::ExpError;
use crate::archive::{archive_key, ControllerArchive};
use crate::bodyplan::BodyPlan;
use crate::cppn::CppnGenome;
use crate::evo::{EvoParams, EvoState, Individual, Synchronicity, Variant};
use crate::metrics::{morph_scalar, PoolMember};
use crate::nipes::{CandidateEval, IterationRecord, Learner, LearnerParams, LearnerStatus};
use crate::rngutil::{derive_seed, rng_from};
use crate::sched::{EvalTask, IterationBarrier, TaskId, TaskQueue};
use crate::sim::{controller_spec, run_episode, Arena, EvalResult};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::sync::Arc;

/// Seed-stream tags under a replicate seed.
const STREAM_EVO: u64 = 0;
const STREAM_SCHED: u64 = 1;
const STREAM_LEARNER: u64 = 2;
const STREAM_EPISODE: u64 = 3;

pub struct ReplicateArgs<'a> {
    pub variant: Variant,
    pub evo: EvoParams,
    pub learner: LearnerParams,
    pub arena: &'a Arena,
    pub cores: usize,
    pub replicate_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplicateStats {
    pub robots: usize,
    pub episodes: u64,
}

struct Job {
    id: TaskId,
    plan: Arc<BodyPlan>,
    weights: Vec<f64>,
    seed: u64,
}

/// Per-robot bookkeeping while its learner runs.
struct RobotState {
    plan: Arc<BodyPlan>,
    genome: CppnGenome,
    records: Vec<IterationRecord>,
    best_episode: Option<EvalResult>,
}

struct Coordinator<'a> {
    args: ReplicateArgs<'a>,
    evo: EvoState,
    archive: ControllerArchive,
    queue: TaskQueue,
    barrier: IterationBarrier,
    sched_rng: ChaCha8Rng,
    learners: BTreeMap<usize, Learner>,
    robots: BTreeMap<usize, RobotState>,
    /// Per-iteration episode results, kept until the best can be identified.
    episode_stash: BTreeMap<(usize, usize), Vec<Option<EvalResult>>>,
    /// Processed task completions; stamps newly enqueued tasks.
    task_clock: u64,
    /// Robots whose learning has finished; the metrics x-axis.
    robot_clock: u64,
}

pub fn run_replicate(args: ReplicateArgs<'_>, writer: &mut RunWriter) -> Result<ReplicateStats, ExpError> {
    let evo = EvoState::bootstrap(args.evo, args.variant, derive_seed(args.replicate_seed, &[STREAM_EVO]))?;
    let cores = args.cores;
    let sched_rng = rng_from(args.replicate_seed, &[STREAM_SCHED]);
    let mut coord = Coordinator {
        args,
        evo,
        archive: ControllerArchive::new(),
        queue: TaskQueue::new(cores),
        barrier: IterationBarrier::new(),
        sched_rng,
        learners: BTreeMap::new(),
        robots: BTreeMap::new(),
        episode_stash: BTreeMap::new(),
        task_clock: 0,
        robot_clock: 0,
    };
    for individual in coord.evo.learning().to_vec() {
        coord.start_robot(&individual)?;
    }
    coord.drive(writer)?;
    let stats = ReplicateStats { robots: coord.robot_clock as usize, episodes: coord.task_clock };
    writer.write_archives(&coord.archive, coord.evo.morph_archive())?;
    if !coord.evo.is_drained() {
        return Err(ExpError::Internal(format!(
            "{} robots still learning after the queue drained",
            coord.evo.learning().len()
        )));
    }
    Ok(stats)
}

impl Coordinator<'_> {
    /// Creates the learner for a robot (warm-started from the archive when a
    /// matching controller exists) and enqueues its first population.
    fn start_robot(&mut self, individual: &Individual) -> Result<(), ExpError> {
        let robot = individual.robot_index;
        let plan = Arc::new(individual.plan.clone());
        let spec = controller_spec(&plan)?;
        let warm = self
            .archive
            .lookup(archive_key(&plan))
            .map(|entry| entry.weights.clone());
        let learner = Learner::new(
            spec.weights_dim(),
            derive_seed(self.args.replicate_seed, &[STREAM_LEARNER, robot as u64]),
            warm.as_deref(),
            self.args.learner,
        )?;
        self.robots.insert(
            robot,
            RobotState {
                plan,
                genome: individual.genome.clone(),
                records: Vec::new(),
                best_episode: None,
            },
        );
        self.learners.insert(robot, learner);
        self.enqueue_population(robot)
    }

    /// Asks the robot's learner for its next population and schedules it.
    fn enqueue_population(&mut self, robot: usize) -> Result<(), ExpError> {
        let learner = self.learners.get_mut(&robot).expect("learner exists");
        let candidates = learner.ask()?;
        let iteration = learner.iteration();
        self.barrier.expect(robot, iteration, candidates.len())?;
        self.episode_stash.insert((robot, iteration), vec![None; candidates.len()]);
        let clock = self.task_clock;
        let seed_base = self.args.replicate_seed;
        self.queue.enqueue(candidates.into_iter().enumerate().map(|(c, weights)| EvalTask {
            id: TaskId { robot, iteration, candidate: c },
            weights,
            seed: derive_seed(
                seed_base,
                &[STREAM_EPISODE, robot as u64, iteration as u64, c as u64],
            ),
            available_at: clock,
        }))?;
        Ok(())
    }

    /// The discrete-event loop over a physical worker pool.
    fn drive(&mut self, writer: &mut RunWriter) -> Result<(), ExpError> {
        let (job_tx, job_rx) = crossbeam::channel::unbounded::<Job>();
        let (result_tx, result_rx) =
            crossbeam::channel::unbounded::<(TaskId, Result<EvalResult, crate::sim::SimError>)>();
        let arena = self.args.arena;
        let outcome = std::thread::scope(|scope| {
            for _ in 0..self.args.cores {
                let job_rx = job_rx.clone();
                let result_tx = result_tx.clone();
                scope.spawn(move || {
                    for job in job_rx.iter() {
                        let result = run_episode(&job.plan, &job.weights, arena, job.seed);
                        if result_tx.send((job.id, result)).is_err() {
                            break;
                        }
                    }
                });
            }
            drop(result_tx);

            let mut buffered: BTreeMap<TaskId, EvalResult> = BTreeMap::new();
            loop {
                if let Some(task) = self.queue.next_assignment(&mut self.sched_rng) {
                    let plan = self.robots[&task.id.robot].plan.clone();
                    job_tx
                        .send(Job { id: task.id, plan, weights: task.weights, seed: task.seed })
                        .map_err(|_| ExpError::Internal("worker pool hung up".into()))?;
                    continue;
                }
                let Some(oldest) = self.queue.oldest_in_flight() else { break };
                let result = loop {
                    if let Some(r) = buffered.remove(&oldest) {
                        break r;
                    }
                    let (id, res) = result_rx
                        .recv()
                        .map_err(|_| ExpError::Internal("worker pool died".into()))?;
                    buffered.insert(id, res?);
                };
                self.queue.complete(oldest)?;
                self.task_clock += 1;
                self.process_completion(oldest, result, writer)?;
            }
            drop(job_tx);
            Ok(())
        });
        outcome
    }

    fn process_completion(
        &mut self,
        id: TaskId,
        result: EvalResult,
        writer: &mut RunWriter,
    ) -> Result<(), ExpError> {
        let visited = result.behaviour.visited_count();
        if result.fitness * 64.0 != visited as f64 {
            return Err(ExpError::Internal(format!(
                "task {id:?}: fitness {} disagrees with {visited} visited tiles",
                result.fitness
            )));
        }
        let eval = CandidateEval {
            performance: result.fitness,
            behaviour: result.behaviour,
            moved: result.moved,
        };
        let stash = self
            .episode_stash
            .get_mut(&(id.robot, id.iteration))
            .expect("stash exists for open iterations");
        stash[id.candidate] = Some(result);
        let Some(batch) = self.barrier.submit(id, eval)? else {
            return Ok(());
        };

        let learner = self.learners.get_mut(&id.robot).expect("learner exists");
        let outcome = learner.tell(&batch)?;
        let mut stash = self
            .episode_stash
            .remove(&(id.robot, id.iteration))
            .expect("stash exists for open iterations");
        let state = self.robots.get_mut(&id.robot).expect("robot exists");
        state.records.push(outcome.record);
        if let Some(best) = outcome.new_best {
            state.best_episode = Some(stash[best].take().expect("all results present"));
        }
        match outcome.status {
            LearnerStatus::Running => self.enqueue_population(id.robot)?,
            LearnerStatus::DoneBudget | LearnerStatus::DoneNoMove => {
                self.finish_robot(id.robot, writer)?;
            }
        }
        Ok(())
    }

    /// Learner terminated: persist the robot, feed the archive, and apply
    /// the evolutionary update.
    fn finish_robot(&mut self, robot: usize, writer: &mut RunWriter) -> Result<(), ExpError> {
        let learner = self.learners.remove(&robot).expect("learner exists");
        let state = self.robots.remove(&robot).expect("robot exists");
        let (weights, performance) = learner.best_of_run()?;
        let best = state.best_episode.expect("at least one iteration ran");

        writer.write_learner(robot, &state.records)?;
        writer.write_robot(
            &RobotRecord {
                robot_index: robot,
                genome: state.genome,
                plan: (*state.plan).clone(),
                fitness: performance,
                behaviour: best.behaviour.0,
                moved: best.moved,
                sim_seconds: best.sim_seconds,
                best_weights: weights.to_vec(),
            },
            &best.trajectory,
        )?;
        self.archive.update(archive_key(&state.plan), weights, performance)?;

        let update = self.evo.on_learning_complete(robot, performance, weights.to_vec())?;
        self.robot_clock += 1;
        for event in &update.events {
            writer.append_event(&event.clone().into())?;
        }
        if self.at_update_boundary() {
            writer.append_event(&RunEvent::Pool {
                clock: self.robot_clock,
                members: self
                    .evo
                    .parents()
                    .iter()
                    .map(|ind| PoolMember {
                        robot_index: ind.robot_index,
                        performance: ind.performance.expect("parents are evaluated"),
                        morph_scalar: morph_scalar(&ind.plan),
                    })
                    .collect(),
            })?;
        }
        for child in &update.spawned {
            self.start_robot(child)?;
        }
        Ok(())
    }

    /// True when the completion just processed closed a pool update (the
    /// bootstrap refill or a steady-state step), i.e. the parents' pool is
    /// back at capacity.
    fn at_update_boundary(&self) -> bool {
        let p = self.args.evo.pool_size as u64;
        let n = match self.args.variant.sync {
            Synchronicity::Asynchronous => 1,
            Synchronicity::Synchronous => p,
        };
        self.robot_clock >= p && (self.robot_clock - p) % n == 0
    }
}
