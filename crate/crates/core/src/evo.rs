//! Two-pool evolutionary engine over body-plan genomes.
//!
//! A parents' pool of evaluated robots and a learning pool of robots still
//! optimizing their controllers, both capacity P. Completions move robots
//! from the learning pool to the parents' pool; every N completions the pool
//! is trimmed back to P (removing the oldest or the worst) and N offspring
//! are mated in. N = 1 gives the fully asynchronous steady-state algorithm,
//! N = P the synchronous generational one. Parent selection runs a
//! four-way tournament scored by task performance or by morphological
//! novelty against the pool and a descriptor archive.

use crate::bodyplan::{
    bodyplan_novelty, decode, is_viable, morph_descriptor, repair, BodyPlan, DecodeParams,
    MorphDescriptor,
};
use crate::cppn::{crossover, mutate, CppnGenome, IdGen, MutationParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Synchronicity {
    Synchronous,
    Asynchronous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    Goal,
    Novelty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Removal {
    Oldest,
    Worst,
}

/// Algorithm variant, written as three letters: S/A (synchronous or
/// asynchronous update), G/N (goal or novelty objective), O/W (remove oldest
/// or worst).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Variant {
    pub sync: Synchronicity,
    pub objective: Objective,
    pub removal: Removal,
}

/// The five variants studied: SGO, AGO, SGW, AGW, ANW.
pub const STUDIED_VARIANTS: [&str; 5] = ["SGO", "AGO", "SGW", "AGW", "ANW"];

#[derive(Debug, Error, PartialEq, Eq)]
#[error("variant must be three letters [SA][GN][OW], got {0:?}")]
pub struct VariantParseError(pub String);

impl FromStr for Variant {
    type Err = VariantParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || VariantParseError(s.to_string());
        let mut chars = s.chars();
        let (a, b, c) = match (chars.next(), chars.next(), chars.next(), chars.next()) {
            (Some(a), Some(b), Some(c), None) => (a, b, c),
            _ => return Err(err()),
        };
        Ok(Variant {
            sync: match a {
                'S' => Synchronicity::Synchronous,
                'A' => Synchronicity::Asynchronous,
                _ => return Err(err()),
            },
            objective: match b {
                'G' => Objective::Goal,
                'N' => Objective::Novelty,
                _ => return Err(err()),
            },
            removal: match c {
                'O' => Removal::Oldest,
                'W' => Removal::Worst,
                _ => return Err(err()),
            },
        })
    }
}

impl TryFrom<String> for Variant {
    type Error = VariantParseError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Variant> for String {
    fn from(v: Variant) -> String {
        v.to_string()
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = match self.sync {
            Synchronicity::Synchronous => 'S',
            Synchronicity::Asynchronous => 'A',
        };
        let b = match self.objective {
            Objective::Goal => 'G',
            Objective::Novelty => 'N',
        };
        let c = match self.removal {
            Removal::Oldest => 'O',
            Removal::Worst => 'W',
        };
        write!(f, "{a}{b}{c}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvoParams {
    /// Capacity P of each pool.
    pub pool_size: usize,
    /// Total robots ever created (bootstrap included); mating stops here.
    pub robot_budget: usize,
    pub tournament_size: usize,
    /// Neighbours for morphological novelty.
    pub novelty_k: usize,
    /// Probability that a tournament participant's descriptor is archived.
    pub archive_add_prob: f64,
    /// Genome retries per bootstrap slot / mutation retries per mating.
    pub viability_retries: usize,
    pub mutation: MutationParams,
    pub decode: DecodeParams,
}

impl Default for EvoParams {
    fn default() -> Self {
        EvoParams {
            pool_size: 25,
            robot_budget: 500,
            tournament_size: 4,
            novelty_k: 15,
            archive_add_prob: 0.05,
            viability_retries: 100,
            mutation: MutationParams::default(),
            decode: DecodeParams::default(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EvoError {
    #[error("pool size must be at least the tournament size, got {0}")]
    PoolTooSmall(usize),
    #[error("no viable body plan in {attempts} attempts for bootstrap slot {slot}")]
    InitFailure { slot: usize, attempts: usize },
    #[error("no viable offspring after {attempts} attempts in one mating step")]
    GenerationFailure { attempts: usize },
    #[error("robot {0} is not in the learning pool")]
    UnknownRobot(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    /// Creation-order id; doubles as age (smaller = older).
    pub robot_index: usize,
    pub genome: CppnGenome,
    pub plan: BodyPlan,
    pub descriptor: MorphDescriptor,
    pub performance: Option<f64>,
    pub best_weights: Option<Vec<f64>>,
}

/// Pool-change event, in the order it happened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum EvoEvent {
    /// A completion entered the parents' pool.
    Added { robot_index: usize, performance: f64 },
    Removed { robot_index: usize, performance: f64 },
    Mated { child_index: usize, parent_a: usize, parent_b: usize },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateOutcome {
    pub events: Vec<EvoEvent>,
    /// Fresh offspring (already in the learning pool) the caller must start
    /// learners for.
    pub spawned: Vec<Individual>,
}

#[derive(Debug, Clone)]
pub struct EvoState {
    params: EvoParams,
    variant: Variant,
    rng: ChaCha8Rng,
    ids: IdGen,
    parents: Vec<Individual>,
    learning: Vec<Individual>,
    morph_archive: Vec<MorphDescriptor>,
    completions_since_update: usize,
    created: usize,
    steady: bool,
}

/// Picks which parents to remove: `Oldest` takes the smallest robot indices,
/// `Worst` the lowest performances (ties to the older robot). Returns
/// positions into `parents`, in removal order.
fn select_removals(parents: &[Individual], policy: Removal, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..parents.len()).collect();
    match policy {
        Removal::Oldest => order.sort_by_key(|&i| parents[i].robot_index),
        Removal::Worst => order.sort_by(|&a, &b| {
            let pa = parents[a].performance.expect("parents are evaluated");
            let pb = parents[b].performance.expect("parents are evaluated");
            pa.total_cmp(&pb).then(parents[a].robot_index.cmp(&parents[b].robot_index))
        }),
    }
    order.truncate(n);
    order
}

impl EvoState {
    /// Fills the learning pool with P random viable individuals (indices
    /// 0..P-1). The parents' pool starts empty; the first P completions fill
    /// it without any removal, after which the learning pool is refilled by
    /// mating and the steady update cadence begins.
    pub fn bootstrap(params: EvoParams, variant: Variant, seed: u64) -> Result<Self, EvoError> {
        if params.pool_size < params.tournament_size {
            return Err(EvoError::PoolTooSmall(params.pool_size));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ids = IdGen::new();
        let mut learning = Vec::with_capacity(params.pool_size);
        for slot in 0..params.pool_size {
            let mut found = None;
            for _ in 0..params.viability_retries {
                let genome = CppnGenome::random(&mut rng);
                let plan = repair(&decode(&genome, &params.decode).expect("random genomes are valid"));
                if is_viable(&plan) {
                    found = Some((genome, plan));
                    break;
                }
            }
            let (genome, plan) = found.ok_or(EvoError::InitFailure {
                slot,
                attempts: params.viability_retries,
            })?;
            let descriptor = morph_descriptor(&plan);
            learning.push(Individual {
                robot_index: slot,
                genome,
                plan,
                descriptor,
                performance: None,
                best_weights: None,
            });
        }
        let created = learning.len();
        Ok(EvoState {
            params,
            variant,
            rng,
            ids,
            parents: Vec::with_capacity(params.pool_size),
            learning,
            morph_archive: Vec::new(),
            completions_since_update: 0,
            created,
            steady: false,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn params(&self) -> &EvoParams {
        &self.params
    }

    /// Completions per pool update: 1 when asynchronous, P when synchronous.
    pub fn update_period(&self) -> usize {
        match self.variant.sync {
            Synchronicity::Asynchronous => 1,
            Synchronicity::Synchronous => self.params.pool_size,
        }
    }

    pub fn parents(&self) -> &[Individual] {
        &self.parents
    }

    pub fn learning(&self) -> &[Individual] {
        &self.learning
    }

    /// Robots created so far; also the next robot index.
    pub fn created(&self) -> usize {
        self.created
    }

    pub fn morph_archive(&self) -> &[MorphDescriptor] {
        &self.morph_archive
    }

    /// True once the learning pool has drained with the budget spent: the
    /// run is over.
    pub fn is_drained(&self) -> bool {
        self.learning.is_empty()
    }

    /// Applies one learning completion: the robot moves to the parents'
    /// pool, and if this completion closes an update window, removal and
    /// mating run. Returns everything that happened, in order.
    pub fn on_learning_complete(
        &mut self,
        robot_index: usize,
        performance: f64,
        best_weights: Vec<f64>,
    ) -> Result<UpdateOutcome, EvoError> {
        let pos = self
            .learning
            .iter()
            .position(|ind| ind.robot_index == robot_index)
            .ok_or(EvoError::UnknownRobot(robot_index))?;
        let mut individual = self.learning.remove(pos);
        individual.performance = Some(performance);
        individual.best_weights = Some(best_weights);
        self.parents.push(individual);

        let mut outcome = UpdateOutcome {
            events: vec![EvoEvent::Added { robot_index, performance }],
            spawned: Vec::new(),
        };

        if !self.steady {
            if self.parents.len() == self.params.pool_size {
                // Bootstrap generation fully evaluated: refill the learning
                // pool in one burst, then switch to the update cadence.
                self.steady = true;
                self.completions_since_update = 0;
                self.mate(self.params.pool_size, &mut outcome)?;
            }
            return Ok(outcome);
        }

        self.completions_since_update += 1;
        if self.completions_since_update == self.update_period() {
            self.completions_since_update = 0;
            let n = self.update_period();
            self.remove(n, &mut outcome);
            self.mate(n, &mut outcome)?;
            debug_assert_eq!(self.parents.len(), self.params.pool_size);
        }
        Ok(outcome)
    }

    fn remove(&mut self, n: usize, outcome: &mut UpdateOutcome) {
        let victims = select_removals(&self.parents, self.variant.removal, n);
        let mut flags = vec![false; self.parents.len()];
        for &pos in &victims {
            flags[pos] = true;
            let ind = &self.parents[pos];
            outcome.events.push(EvoEvent::Removed {
                robot_index: ind.robot_index,
                performance: ind.performance.expect("parents are evaluated"),
            });
        }
        let mut keep = flags.iter();
        self.parents.retain(|_| !keep.next().unwrap());
    }

    /// Runs up to `n` matings, capped by the remaining robot budget.
    fn mate(&mut self, n: usize, outcome: &mut UpdateOutcome) -> Result<(), EvoError> {
        let quota = n.min(self.params.robot_budget.saturating_sub(self.created));
        let attempt_cap = self.params.viability_retries * self.params.pool_size;
        let mut attempts = 0usize;
        for _ in 0..quota {
            let child = loop {
                let (a, b) = self.tournament()?;
                let cross = crossover(&self.parents[a].genome, &self.parents[b].genome, &mut self.rng);
                let mut accepted = None;
                for _ in 0..self.params.viability_retries {
                    attempts += 1;
                    if attempts > attempt_cap {
                        return Err(EvoError::GenerationFailure { attempts });
                    }
                    let genome =
                        mutate(&cross, &self.params.mutation, &mut self.ids, &mut self.rng);
                    let plan = repair(
                        &decode(&genome, &self.params.decode).expect("mutation preserves validity"),
                    );
                    if is_viable(&plan) {
                        accepted = Some((genome, plan));
                        break;
                    }
                }
                if let Some((genome, plan)) = accepted {
                    let descriptor = morph_descriptor(&plan);
                    let child = Individual {
                        robot_index: self.created,
                        genome,
                        plan,
                        descriptor,
                        performance: None,
                        best_weights: None,
                    };
                    outcome.events.push(EvoEvent::Mated {
                        child_index: child.robot_index,
                        parent_a: self.parents[a].robot_index,
                        parent_b: self.parents[b].robot_index,
                    });
                    break child;
                }
                // 100 mutations of this cross all inviable: re-run the
                // tournament for a fresh pair.
            };
            self.created += 1;
            self.learning.push(child.clone());
            outcome.spawned.push(child);
        }
        Ok(())
    }

    /// Four-way tournament: distinct uniform picks, scored by the variant
    /// objective, ties to the lower robot index. Returns positions of the
    /// two best (best first). Every participant's descriptor has a chance to
    /// enter the morphological archive.
    fn tournament(&mut self) -> Result<(usize, usize), EvoError> {
        let pool = self.parents.len();
        if pool < self.params.tournament_size {
            return Err(EvoError::PoolTooSmall(pool));
        }
        let mut picks: Vec<usize> = Vec::with_capacity(self.params.tournament_size);
        while picks.len() < self.params.tournament_size {
            let i = self.rng.random_range(0..pool);
            if !picks.contains(&i) {
                picks.push(i);
            }
        }
        for &i in &picks {
            if self.rng.random::<f64>() < self.params.archive_add_prob {
                let d = &self.parents[i].descriptor;
                if !self.morph_archive.contains(d) {
                    self.morph_archive.push(d.clone());
                }
            }
        }
        let mut scored: Vec<(usize, f64)> = picks
            .into_iter()
            .map(|i| (i, self.objective_score(i)))
            .collect();
        scored.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then(self.parents[a.0].robot_index.cmp(&self.parents[b.0].robot_index))
        });
        Ok((scored[0].0, scored[1].0))
    }

    fn objective_score(&self, pos: usize) -> f64 {
        match self.variant.objective {
            Objective::Goal => self.parents[pos].performance.expect("parents are evaluated"),
            Objective::Novelty => {
                let subject = &self.parents[pos];
                let others: Vec<MorphDescriptor> = self
                    .parents
                    .iter()
                    .filter(|ind| ind.robot_index != subject.robot_index)
                    .map(|ind| ind.descriptor.clone())
                    .collect();
                bodyplan_novelty(
                    &subject.descriptor,
                    &others,
                    &self.morph_archive,
                    self.params.novelty_k,
                )
                .expect("pool has other members")
            }
        }
    }
}
