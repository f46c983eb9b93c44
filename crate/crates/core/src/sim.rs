//! Deterministic 2D kinematic arena simulator for the tile-exploration task.
//!
//! One episode drops a robot (disc approximation of its body plan) into a
//! 2 m x 2 m arena split into 8x8 tiles, 16 of which are blocked, and runs
//! its controller for 60 simulated seconds at 10 Hz. Sensors raycast against
//! blocked tiles and walls; wheels drive and steer; legs drive at half
//! strength but jitter the heading. Fitness is the fraction of the 64 tiles
//! visited. Everything is a pure function of (plan, weights, arena, seed).

use crate::bodyplan::{BodyPlan, ComponentKind};
use crate::controller::{Controller, ControllerError, ElmanSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ARENA_SIDE: f64 = 2.0;
pub const TILE: f64 = 0.25;
pub const TILES_PER_SIDE: usize = 8;
pub const TILE_COUNT: usize = TILES_PER_SIDE * TILES_PER_SIDE;
pub const BLOCKED_TILES: usize = 16;
pub const SENSOR_RANGE: f64 = 1.0;
pub const DT: f64 = 0.1;
pub const EPISODE_STEPS: usize = 600;
/// Steps after which a robot that has not yet moved is written off.
pub const ABORT_STEP: usize = 100;
/// Displacement (m) from the start below which the robot "has not moved";
/// one fifth of a tile.
pub const MOVE_EPS: f64 = 0.05;

const WHEEL_DRIVE: f64 = 0.15; // m/s per unit wheel command
const LEG_DRIVE: f64 = 0.075; // legs drive at half a wheel's strength
const TURN_GAIN: f64 = 0.15; // rad/s per unit command per voxel of lateral offset
const LEG_NOISE_SIGMA: f64 = 0.05; // rad of heading noise per leg per step
const MAX_SPEED: f64 = 0.4;
const MAX_TURN: f64 = 2.0;

#[derive(Debug, Error, PartialEq)]
pub enum ArenaError {
    #[error("arena text needs 8 mask rows and a start-pose line")]
    Truncated,
    #[error("mask row {0} must be 8 characters of '.' or '#', got {1:?}")]
    BadRow(usize, String),
    #[error("start-pose line must be three numbers (x y heading), got {0:?}")]
    BadPose(String),
    #[error("expected exactly {BLOCKED_TILES} blocked tiles, found {0}")]
    WrongBlockedCount(usize),
    #[error("start position ({0}, {1}) is outside the arena")]
    StartOutside(f64, f64),
    #[error("start position sits on a blocked tile")]
    StartBlocked,
}

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("body plan is not viable (needs a sensor and a wheel or leg)")]
    NonViablePlan,
    #[error(transparent)]
    Controller(#[from] ControllerError),
}

/// Square arena: 8x8 tile mask (16 tiles blocked) plus the start pose.
/// Tiles are indexed `row * 8 + col` with row 0 at the bottom (y = 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arena {
    blocked: Vec<bool>,
    pub start: [f64; 2],
    pub heading: f64,
}

/// Default mask: a two-tile-thick dividing wall with a central gap, plus
/// corner baffles; text rows run top (row 7) to bottom (row 0). The start
/// pose sits in an open 3x3 pocket so a robot of any size begins collision
/// free.
const DEFAULT_ARENA: &str = "\
.#.##.#.
...##...
........
...##...
...##...
...##...
...##...
.#....#.
0.375 1.375 0.0
";

impl Default for Arena {
    fn default() -> Self {
        Arena::from_text(DEFAULT_ARENA).expect("built-in arena layout is valid")
    }
}

impl Arena {
    /// Parses 8 mask rows (top to bottom, `#` blocked, `.` open) followed by
    /// one `x y heading` line, and checks the arena invariants.
    pub fn from_text(text: &str) -> Result<Self, ArenaError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let mut blocked = vec![false; TILE_COUNT];
        for visual_row in 0..TILES_PER_SIDE {
            let line = lines.next().ok_or(ArenaError::Truncated)?.trim();
            if line.len() != TILES_PER_SIDE || line.chars().any(|c| c != '.' && c != '#') {
                return Err(ArenaError::BadRow(visual_row, line.to_string()));
            }
            let row = TILES_PER_SIDE - 1 - visual_row;
            for (col, c) in line.chars().enumerate() {
                blocked[row * TILES_PER_SIDE + col] = c == '#';
            }
        }
        let pose_line = lines.next().ok_or(ArenaError::Truncated)?.trim();
        let nums: Vec<f64> = pose_line
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| ArenaError::BadPose(pose_line.to_string()))?;
        let [x, y, heading] = nums[..] else {
            return Err(ArenaError::BadPose(pose_line.to_string()));
        };
        let arena = Arena { blocked, start: [x, y], heading };
        arena.validate()?;
        Ok(arena)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for visual_row in 0..TILES_PER_SIDE {
            let row = TILES_PER_SIDE - 1 - visual_row;
            for col in 0..TILES_PER_SIDE {
                out.push(if self.blocked[row * TILES_PER_SIDE + col] { '#' } else { '.' });
            }
            out.push('\n');
        }
        out.push_str(&format!("{} {} {}\n", self.start[0], self.start[1], self.heading));
        out
    }

    pub fn validate(&self) -> Result<(), ArenaError> {
        let count = self.blocked.iter().filter(|&&b| b).count();
        if count != BLOCKED_TILES {
            return Err(ArenaError::WrongBlockedCount(count));
        }
        let [x, y] = self.start;
        if !(0.0..ARENA_SIDE).contains(&x) || !(0.0..ARENA_SIDE).contains(&y) {
            return Err(ArenaError::StartOutside(x, y));
        }
        let (row, col) = tile_of(x, y);
        if self.is_blocked(row, col) {
            return Err(ArenaError::StartBlocked);
        }
        Ok(())
    }

    pub fn is_blocked(&self, row: usize, col: usize) -> bool {
        self.blocked[row * TILES_PER_SIDE + col]
    }

    /// Distance from `origin` along `angle` to the first blocked tile or
    /// arena wall, capped at [`SENSOR_RANGE`]. Grid walk over tile
    /// boundaries.
    pub fn raycast(&self, origin: [f64; 2], angle: f64) -> f64 {
        let (dx, dy) = (angle.cos(), angle.sin());
        let (mut row, mut col) = tile_of(origin[0], origin[1]);
        let step_col: isize = if dx > 0.0 { 1 } else { -1 };
        let step_row: isize = if dy > 0.0 { 1 } else { -1 };
        let t_delta_x = if dx != 0.0 { TILE / dx.abs() } else { f64::INFINITY };
        let t_delta_y = if dy != 0.0 { TILE / dy.abs() } else { f64::INFINITY };
        let mut t_max_x = if dx > 0.0 {
            ((col as f64 + 1.0) * TILE - origin[0]) / dx
        } else if dx < 0.0 {
            (origin[0] - col as f64 * TILE) / -dx
        } else {
            f64::INFINITY
        };
        let mut t_max_y = if dy > 0.0 {
            ((row as f64 + 1.0) * TILE - origin[1]) / dy
        } else if dy < 0.0 {
            (origin[1] - row as f64 * TILE) / -dy
        } else {
            f64::INFINITY
        };
        loop {
            let t;
            if t_max_x < t_max_y {
                t = t_max_x;
                t_max_x += t_delta_x;
                let next = col as isize + step_col;
                if !(0..TILES_PER_SIDE as isize).contains(&next) {
                    return t.min(SENSOR_RANGE);
                }
                col = next as usize;
            } else {
                t = t_max_y;
                t_max_y += t_delta_y;
                let next = row as isize + step_row;
                if !(0..TILES_PER_SIDE as isize).contains(&next) {
                    return t.min(SENSOR_RANGE);
                }
                row = next as usize;
            }
            if t > SENSOR_RANGE {
                return SENSOR_RANGE;
            }
            if self.is_blocked(row, col) {
                return t;
            }
        }
    }

    /// Pushes a disc of radius `r` out of walls and blocked tiles. Returns
    /// the resolved centre; if no overlap-free position is found nearby (a
    /// gap narrower than the robot), the move is cancelled and `prev` — known
    /// free — is kept.
    fn resolve_collisions(&self, prev: [f64; 2], target: [f64; 2], r: f64) -> [f64; 2] {
        const MARGIN: f64 = 1e-9;
        let mut p = target;
        for _ in 0..16 {
            let mut pushed = false;
            let clamped = [
                p[0].clamp(r, ARENA_SIDE - r),
                p[1].clamp(r, ARENA_SIDE - r),
            ];
            if clamped != p {
                p = clamped;
                pushed = true;
            }
            let (prow, pcol) = tile_of(p[0], p[1]);
            for row in prow.saturating_sub(2)..(prow + 3).min(TILES_PER_SIDE) {
                for col in pcol.saturating_sub(2)..(pcol + 3).min(TILES_PER_SIDE) {
                    if !self.is_blocked(row, col) {
                        continue;
                    }
                    let x0 = col as f64 * TILE;
                    let y0 = row as f64 * TILE;
                    let cx = p[0].clamp(x0, x0 + TILE);
                    let cy = p[1].clamp(y0, y0 + TILE);
                    let (ox, oy) = (p[0] - cx, p[1] - cy);
                    let d2 = ox * ox + oy * oy;
                    if d2 == 0.0 {
                        // Centre inside the tile: push out along the
                        // shallowest face.
                        let exits = [
                            (x0 - r - MARGIN - p[0], 0.0, p[0] - x0),
                            (x0 + TILE + r + MARGIN - p[0], 0.0, x0 + TILE - p[0]),
                            (0.0, y0 - r - MARGIN - p[1], p[1] - y0),
                            (0.0, y0 + TILE + r + MARGIN - p[1], y0 + TILE - p[1]),
                        ];
                        let &(ex, ey, _) = exits
                            .iter()
                            .min_by(|a, b| a.2.total_cmp(&b.2))
                            .expect("four candidate faces");
                        p = [p[0] + ex, p[1] + ey];
                        pushed = true;
                    } else if d2 < r * r {
                        let d = d2.sqrt();
                        let scale = (r + MARGIN) / d;
                        p = [cx + ox * scale, cy + oy * scale];
                        pushed = true;
                    }
                }
            }
            if !pushed {
                return p;
            }
        }
        prev
    }
}

/// Tile (row, col) containing a point; positions on the far edge clamp in.
pub fn tile_of(x: f64, y: f64) -> (usize, usize) {
    let col = ((x / TILE) as usize).min(TILES_PER_SIDE - 1);
    let row = ((y / TILE) as usize).min(TILES_PER_SIDE - 1);
    (row, col)
}

/// Visited-tile matrix packed into a u64, bit `row * 8 + col`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BehaviourMap(pub u64);

impl BehaviourMap {
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.0 >> (row * TILES_PER_SIDE + col) & 1 != 0
    }

    pub fn set(&mut self, row: usize, col: usize) {
        self.0 |= 1 << (row * TILES_PER_SIDE + col);
    }

    pub fn visited_count(&self) -> u32 {
        self.0.count_ones()
    }
}

/// Squared-difference distance between two visit matrices; for binary cells
/// this is exactly the number of differing tiles.
pub fn behaviour_distance(a: BehaviourMap, b: BehaviourMap) -> f64 {
    (a.0 ^ b.0).count_ones() as f64
}

/// Timestamped positions, one per control step plus the start: `[t, x, y]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<[f64; 3]>,
}

/// Marks the tile under every trajectory point.
pub fn behaviour_descriptor(traj: &Trajectory, _arena: &Arena) -> BehaviourMap {
    let mut map = BehaviourMap(0);
    for p in &traj.points {
        let (row, col) = tile_of(p[1], p[2]);
        map.set(row, col);
    }
    map
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Visited tiles / 64; in [1/64, 48/64].
    pub fitness: f64,
    pub trajectory: Trajectory,
    pub behaviour: BehaviourMap,
    pub moved: bool,
    /// Simulated seconds the episode ran (60, or 10 on an early abort).
    pub sim_seconds: f64,
}

/// Controller shape implied by a plan: sensors are inputs, wheels and legs
/// are outputs (position order on both sides).
pub fn controller_spec(plan: &BodyPlan) -> Result<ElmanSpec, SimError> {
    let n_in = plan
        .components
        .iter()
        .filter(|c| c.kind == ComponentKind::Sensor)
        .count();
    let n_out = plan.components.iter().filter(|c| c.kind.is_actuator()).count();
    ElmanSpec::new(n_in, n_out).map_err(|_| SimError::NonViablePlan)
}

/// Disc radius standing in for the chassis footprint.
pub fn robot_radius(plan: &BodyPlan) -> f64 {
    0.05 + 0.01 * plan.horizontal_extent() as f64
}

struct Actuator {
    kind: ComponentKind,
    /// Signed lateral offset in voxels (body y minus the head's).
    lateral: f64,
}

/// Runs one 60-second episode (10 Hz control) and scores visited tiles.
///
/// Per step: sensors raycast (reading = 1 - distance/range, floor 0), one
/// controller step, wheel/leg kinematics with per-leg heading noise, then
/// collision resolution against walls and blocked tiles. If the robot has
/// not strayed more than [`MOVE_EPS`] from the start by t = 10 s the episode
/// aborts. Deterministic in (plan, weights, arena, seed).
pub fn run_episode(
    plan: &BodyPlan,
    weights: &[f64],
    arena: &Arena,
    seed: u64,
) -> Result<EvalResult, SimError> {
    if !crate::bodyplan::is_viable(plan) {
        return Err(SimError::NonViablePlan);
    }
    let spec = controller_spec(plan)?;
    let mut controller = Controller::new(spec, weights.to_vec())?;

    // Body-frame sensor bearings and actuator offsets, in component
    // (= position) order: axis i is forward, j is lateral, k is up.
    let bearings: Vec<f64> = plan
        .components
        .iter()
        .filter(|c| c.kind == ComponentKind::Sensor)
        .map(|c| (c.pos[1] as f64 - 5.0).atan2(c.pos[0] as f64 - 5.0))
        .collect();
    let actuators: Vec<Actuator> = plan
        .components
        .iter()
        .filter(|c| c.kind.is_actuator())
        .map(|c| Actuator { kind: c.kind, lateral: c.pos[1] as f64 - 5.0 })
        .collect();
    let leg_count = actuators.iter().filter(|a| a.kind == ComponentKind::Leg).count();
    let radius = robot_radius(plan);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, LEG_NOISE_SIGMA).expect("constant sigma is valid");

    let [sx, sy] = arena.start;
    let (mut x, mut y, mut heading) = (sx, sy, arena.heading);
    let mut points = Vec::with_capacity(EPISODE_STEPS + 1);
    points.push([0.0, x, y]);
    let mut moved = false;
    let mut sim_seconds = EPISODE_STEPS as f64 * DT;

    for step in 1..=EPISODE_STEPS {
        let inputs: Vec<f64> = bearings
            .iter()
            .map(|b| (1.0 - arena.raycast([x, y], heading + b) / SENSOR_RANGE).max(0.0))
            .collect();
        let outputs = controller.step(&inputs)?;

        let mut speed = 0.0;
        let mut turn = 0.0;
        for (a, w) in actuators.iter().zip(&outputs) {
            match a.kind {
                ComponentKind::Wheel => {
                    speed += WHEEL_DRIVE * w;
                    turn += TURN_GAIN * w * a.lateral;
                }
                ComponentKind::Leg => speed += LEG_DRIVE * w,
                _ => unreachable!("actuators are wheels and legs only"),
            }
        }
        speed = speed.clamp(-MAX_SPEED, MAX_SPEED);
        turn = turn.clamp(-MAX_TURN, MAX_TURN);

        heading += turn * DT;
        for _ in 0..leg_count {
            heading += noise.sample(&mut rng);
        }
        let target = [x + speed * DT * heading.cos(), y + speed * DT * heading.sin()];
        [x, y] = arena.resolve_collisions([x, y], target, radius);
        points.push([step as f64 * DT, x, y]);

        if !moved && (x - sx).hypot(y - sy) > MOVE_EPS {
            moved = true;
        }
        if step == ABORT_STEP && !moved {
            sim_seconds = step as f64 * DT;
            break;
        }
    }

    let trajectory = Trajectory { points };
    let behaviour = behaviour_descriptor(&trajectory, arena);
    Ok(EvalResult {
        fitness: behaviour.visited_count() as f64 / TILE_COUNT as f64,
        trajectory,
        behaviour,
        moved,
        sim_seconds,
    })
}
