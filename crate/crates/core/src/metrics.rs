//! Offline analysis of finished runs: pool fitness and morphology curves,
//! top-robot selection, trajectory comparison, and a rank-sum test. Every
//! function here is pure, so all tables can be recomputed from the files a
//! run leaves behind.

use crate::bodyplan::BodyPlan;
use crate::sim::{Trajectory, DT, EPISODE_STEPS};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of time-uniform samples a trajectory is reduced to for comparison.
pub const RESAMPLE_POINTS: usize = 180;

/// Component-count normalizer for the morphology scalar; counts above the
/// cap clamp to 1.
pub const COMPONENT_NORM: f64 = 8.0;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("trajectory has {0} points; need at least 2 to interpolate")]
    TrajectoryTooShort(usize),
    #[error("resampled trajectories differ in length: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("need at least 2 trajectories, got {0}")]
    NotEnoughTrajectories(usize),
    #[error("asked for the top {want} robots but the run only has {have}")]
    NotEnoughRobots { have: usize, want: usize },
}

/// One parents'-pool member at a snapshot instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolMember {
    pub robot_index: usize,
    pub performance: f64,
    pub morph_scalar: f64,
}

/// Parents'-pool contents at one update boundary, stamped with the
/// robot-index clock (completed learners so far).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolSnapshot {
    pub clock: u64,
    pub members: Vec<PoolMember>,
}

impl PoolSnapshot {
    pub fn mean_performance(&self) -> f64 {
        if self.members.is_empty() {
            return 0.0;
        }
        self.members.iter().map(|m| m.performance).sum::<f64>() / self.members.len() as f64
    }
}

/// Scalar summary of a morphology: the four component counts, each
/// normalized by 8 and clamped to 1, plus the three chassis bounding-box
/// extents normalized by the grid side. Ranges over [3/11, 7].
pub fn morph_scalar(plan: &BodyPlan) -> f64 {
    let counts = plan.component_counts();
    let components: f64 = counts
        .iter()
        .map(|&c| (c as f64 / COMPONENT_NORM).min(1.0))
        .sum();
    let extents: f64 = (0..3)
        .map(|axis| plan.extent(axis) as f64 / crate::bodyplan::GRID as f64)
        .sum();
    components + extents
}

/// Population variance (divide by member count) of the pool's morphology
/// scalars.
pub fn morphological_variance(snapshot: &PoolSnapshot) -> f64 {
    let n = snapshot.members.len();
    if n == 0 {
        return 0.0;
    }
    let mean = snapshot.members.iter().map(|m| m.morph_scalar).sum::<f64>() / n as f64;
    snapshot
        .members
        .iter()
        .map(|m| (m.morph_scalar - mean).powi(2))
        .sum::<f64>()
        / n as f64
}

/// A trajectory reduced to [`RESAMPLE_POINTS`] positions uniform in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampledTrajectory {
    pub points: Vec<[f64; 2]>,
}

/// Linearly interpolates the recorded path at uniform timestamps spanning
/// the full episode; aborted episodes hold their final position for the
/// remaining samples.
pub fn resample_trajectory(traj: &Trajectory) -> Result<ResampledTrajectory, MetricsError> {
    let pts = &traj.points;
    if pts.len() < 2 {
        return Err(MetricsError::TrajectoryTooShort(pts.len()));
    }
    let horizon = EPISODE_STEPS as f64 * DT;
    let mut points = Vec::with_capacity(RESAMPLE_POINTS);
    let mut seg = 0usize;
    for i in 0..RESAMPLE_POINTS {
        let t = i as f64 * horizon / (RESAMPLE_POINTS - 1) as f64;
        while seg + 1 < pts.len() && pts[seg + 1][0] < t {
            seg += 1;
        }
        let p = if seg + 1 == pts.len() || pts[seg + 1][0] < t {
            // Past the end of a shorter episode: hold the last position.
            let last = pts.last().unwrap();
            [last[1], last[2]]
        } else {
            let (a, b) = (&pts[seg], &pts[seg + 1]);
            let span = b[0] - a[0];
            let w = if span > 0.0 { ((t - a[0]) / span).clamp(0.0, 1.0) } else { 0.0 };
            [a[1] + w * (b[1] - a[1]), a[2] + w * (b[2] - a[2])]
        };
        points.push(p);
    }
    Ok(ResampledTrajectory { points })
}

/// Mean pointwise Euclidean distance between two resampled trajectories.
pub fn trajectory_distance(
    a: &ResampledTrajectory,
    b: &ResampledTrajectory,
) -> Result<f64, MetricsError> {
    if a.points.len() != b.points.len() {
        return Err(MetricsError::LengthMismatch { a: a.points.len(), b: b.points.len() });
    }
    let n = a.points.len();
    let sum: f64 = a
        .points
        .iter()
        .zip(&b.points)
        .map(|(p, q)| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt())
        .sum();
    Ok(sum / n as f64)
}

/// Mean [`trajectory_distance`] over all unordered pairs.
pub fn behavioural_variance(trajs: &[ResampledTrajectory]) -> Result<f64, MetricsError> {
    if trajs.len() < 2 {
        return Err(MetricsError::NotEnoughTrajectories(trajs.len()));
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..trajs.len() {
        for j in (i + 1)..trajs.len() {
            sum += trajectory_distance(&trajs[i], &trajs[j])?;
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}

/// The `k` best (robot_index, performance) entries of a whole run,
/// descending by performance with ties to the lower index.
pub fn top_k(robots: &[(usize, f64)], k: usize) -> Result<Vec<(usize, f64)>, MetricsError> {
    if robots.len() < k {
        return Err(MetricsError::NotEnoughRobots { have: robots.len(), want: k });
    }
    let mut sorted = robots.to_vec();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    sorted.truncate(k);
    Ok(sorted)
}

/// Two-sided Mann-Whitney rank-sum result (normal approximation with tie
/// correction).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankSum {
    /// U statistic of the first sample.
    pub u: f64,
    pub z: f64,
    pub p_two_sided: f64,
}

/// Rank-sum test between two samples; `None` when either sample is empty.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Option<RankSum> {
    if a.is_empty() || b.is_empty() {
        return None;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let n = na + nb;
    let mut all: Vec<(f64, bool)> = a
        .iter()
        .map(|&v| (v, true))
        .chain(b.iter().map(|&v| (v, false)))
        .collect();
    all.sort_by(|x, y| x.0.total_cmp(&y.0));
    // Midranks over tie groups, plus the tie-correction accumulator.
    let mut rank_sum_a = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0usize;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let t = (j - i) as f64;
        let midrank = (i + 1 + j) as f64 / 2.0;
        for item in &all[i..j] {
            if item.1 {
                rank_sum_a += midrank;
            }
        }
        tie_term += t * t * t - t;
        i = j;
    }
    let u = rank_sum_a - na * (na + 1.0) / 2.0;
    let mean = na * nb / 2.0;
    let var = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    let (z, p) = if var > 0.0 {
        let z = (u - mean) / var.sqrt();
        (z, 2.0 * (1.0 - phi(z.abs())))
    } else {
        (0.0, 1.0)
    };
    Some(RankSum { u, z, p_two_sided: p.min(1.0) })
}

/// Standard normal CDF.
fn phi(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// Polynomial approximation of the error function, |error| < 1.5e-7.
fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}

/// `fitness_by_index.csv`: mean pool performance at every update boundary.
pub fn render_fitness_by_index(snapshots: &[PoolSnapshot]) -> String {
    let mut out = String::from("robot_index,mean_pool_fitness\n");
    for s in snapshots {
        out.push_str(&format!("{},{}\n", s.clock, s.mean_performance()));
    }
    out
}

/// `morph_variance.csv`: pool morphology-scalar variance at every boundary.
pub fn render_morph_variance(snapshots: &[PoolSnapshot]) -> String {
    let mut out = String::from("robot_index,morphological_variance\n");
    for s in snapshots {
        out.push_str(&format!("{},{}\n", s.clock, morphological_variance(s)));
    }
    out
}

/// `top20_summary.csv`: the run's best robots, descending.
pub fn render_top_summary(top: &[(usize, f64)]) -> String {
    let mut out = String::from("rank,robot_index,fitness\n");
    for (rank, (robot, fitness)) in top.iter().enumerate() {
        out.push_str(&format!("{},{},{}\n", rank + 1, robot, fitness));
    }
    out
}

/// `behavioural_variance.csv`: one row — the mean pairwise trajectory
/// distance over the robots considered.
pub fn render_behavioural_variance(robots: usize, value: f64) -> String {
    format!("robots,behavioural_variance\n{robots},{value}\n")
}
