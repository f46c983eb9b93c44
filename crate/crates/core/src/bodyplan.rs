//! Voxel body plans decoded from pattern genomes.
//!
//! Bodies live on an 11x11x11 grid with a fixed head voxel at the centre.
//! Decoding queries the genome once per voxel; repair then keeps only the
//! 26-connected chassis blob around the head and prunes components whose
//! support voxel vanished. Morphological comparison happens on a sparse
//! descriptor (type code per component position) with a greedy paired
//! Manhattan metric, and novelty is the mean distance to the k nearest
//! reference descriptors.

use crate::cppn::{CompiledCppn, CppnGenome, GenomeError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Side length of the body grid.
pub const GRID: usize = 11;
/// Voxel count of the full grid.
pub const VOXELS: usize = GRID * GRID * GRID;
/// The head computer sits at the grid centre and is always part of the chassis.
pub const HEAD: [u8; 3] = [5, 5, 5];
/// Penalty charged per mismatched or unpaired component in [`morph_distance`];
/// equal to the grid dimension.
pub const MISMATCH_PENALTY: f64 = GRID as f64;

#[inline]
pub fn voxel_index(p: [u8; 3]) -> usize {
    (p[0] as usize * GRID + p[1] as usize) * GRID + p[2] as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ComponentKind {
    Wheel,
    Leg,
    Sensor,
    Caster,
}

impl ComponentKind {
    /// Descriptor type code (1-4).
    pub fn code(self) -> u8 {
        match self {
            ComponentKind::Wheel => 1,
            ComponentKind::Leg => 2,
            ComponentKind::Sensor => 3,
            ComponentKind::Caster => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(ComponentKind::Wheel),
            2 => Some(ComponentKind::Leg),
            3 => Some(ComponentKind::Sensor),
            4 => Some(ComponentKind::Caster),
            _ => None,
        }
    }

    pub fn is_actuator(self) -> bool {
        matches!(self, ComponentKind::Wheel | ComponentKind::Leg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    pub pos: [u8; 3],
    pub kind: ComponentKind,
}

/// Chassis occupancy (dense 0/1 array, x-major) plus the mounted components,
/// kept sorted by grid position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BodyPlan {
    pub voxels: Vec<u8>,
    pub components: Vec<Component>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    /// Maximum number of components kept per kind, strongest presence first.
    ///
    /// Uncapped decoding can mount components on hundreds of surface voxels,
    /// which makes the per-robot weight space (and its full covariance
    /// matrix) unworkably large; real builds carry a handful of parts. The
    /// cap is applied per kind rather than in total so that the mix of part
    /// types — what the morphology metrics measure — survives capping: a
    /// single total cap makes every saturated body look alike. 8 per kind
    /// matches the saturation point of [`crate::metrics::morph_scalar`],
    /// beyond which extra parts of a kind are invisible to the metrics
    /// anyway. Set to `usize::MAX` to disable the cap.
    pub per_kind_cap: usize,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams { per_kind_cap: 8 }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DescriptorError {
    #[error("descriptor has {0} cells, expected {VOXELS}")]
    ShapeMismatch(usize),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NoveltyError {
    #[error("novelty is undefined against an empty reference set")]
    EmptyReferenceSet,
    #[error("k must be at least 1")]
    ZeroK,
}

const FACE_NEIGHBOURS: [[i8; 3]; 6] = [
    [1, 0, 0],
    [-1, 0, 0],
    [0, 1, 0],
    [0, -1, 0],
    [0, 0, 1],
    [0, 0, -1],
];

fn offset(p: [u8; 3], d: [i8; 3]) -> Option<[u8; 3]> {
    let mut q = [0u8; 3];
    for a in 0..3 {
        let v = p[a] as i16 + d[a] as i16;
        if !(0..GRID as i16).contains(&v) {
            return None;
        }
        q[a] = v as u8;
    }
    Some(q)
}

/// A voxel is on the surface when occupied with at least one empty face
/// neighbour; grid boundaries count as empty (open air).
fn is_surface(voxels: &[u8], p: [u8; 3]) -> bool {
    if voxels[voxel_index(p)] == 0 {
        return false;
    }
    FACE_NEIGHBOURS.iter().any(|&d| match offset(p, d) {
        Some(q) => voxels[voxel_index(q)] == 0,
        None => true,
    })
}

/// Maps the component-type output to a kind: the value is clamped to [-1, 1]
/// and split into four equal bins, low to high = wheel, leg, sensor, caster.
pub fn quantize_kind(t: f64) -> ComponentKind {
    let t = t.clamp(-1.0, 1.0);
    if t < -0.5 {
        ComponentKind::Wheel
    } else if t < 0.0 {
        ComponentKind::Leg
    } else if t < 0.5 {
        ComponentKind::Sensor
    } else {
        ComponentKind::Caster
    }
}

/// Decodes a genome into a raw (unrepaired) body plan.
///
/// A voxel is occupied when the material output is positive; a component sits
/// on each surface voxel whose presence output is positive, typed by
/// [`quantize_kind`]. When more surface voxels of one kind qualify than the
/// per-kind cap allows, the strongest presence values win (ties to the
/// lexicographically smaller position).
pub fn decode(genome: &CppnGenome, params: &DecodeParams) -> Result<BodyPlan, GenomeError> {
    let net = CompiledCppn::new(genome)?;
    let mut voxels = vec![0u8; VOXELS];
    let mut presence = vec![0.0f64; VOXELS];
    let mut type_out = vec![0.0f64; VOXELS];
    for x in 0..GRID as u8 {
        for y in 0..GRID as u8 {
            for z in 0..GRID as u8 {
                let coord = [
                    (x as f64 - 5.0) / 5.0,
                    (y as f64 - 5.0) / 5.0,
                    (z as f64 - 5.0) / 5.0,
                ];
                let out = net.eval(coord);
                let i = voxel_index([x, y, z]);
                voxels[i] = (out[0] > 0.0) as u8;
                presence[i] = out[1];
                type_out[i] = out[2];
            }
        }
    }

    let mut candidates: Vec<([u8; 3], f64, ComponentKind)> = Vec::new();
    for x in 0..GRID as u8 {
        for y in 0..GRID as u8 {
            for z in 0..GRID as u8 {
                let p = [x, y, z];
                let i = voxel_index(p);
                if is_surface(&voxels, p) && presence[i] > 0.0 {
                    candidates.push((p, presence[i], quantize_kind(type_out[i])));
                }
            }
        }
    }
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut kept_of_kind = [0usize; 4];
    let mut components: Vec<Component> = Vec::new();
    for (pos, _, kind) in candidates {
        let slot = &mut kept_of_kind[kind.code() as usize - 1];
        if *slot < params.per_kind_cap {
            *slot += 1;
            components.push(Component { pos, kind });
        }
    }
    components.sort_by_key(|c| c.pos);

    Ok(BodyPlan { voxels, components })
}

/// Keeps only the 26-connected occupied blob containing the head (which is
/// forced occupied) and drops components whose support voxel was removed or
/// is no longer on the surface.
pub fn repair(raw: &BodyPlan) -> BodyPlan {
    let mut voxels = vec![0u8; VOXELS];
    let mut stack = vec![HEAD];
    voxels[voxel_index(HEAD)] = 1;
    while let Some(p) = stack.pop() {
        for dx in -1i8..=1 {
            for dy in -1i8..=1 {
                for dz in -1i8..=1 {
                    if dx == 0 && dy == 0 && dz == 0 {
                        continue;
                    }
                    if let Some(q) = offset(p, [dx, dy, dz]) {
                        let i = voxel_index(q);
                        if raw.voxels[i] != 0 && voxels[i] == 0 {
                            voxels[i] = 1;
                            stack.push(q);
                        }
                    }
                }
            }
        }
    }
    let components = raw
        .components
        .iter()
        .copied()
        .filter(|c| is_surface(&voxels, c.pos))
        .collect();
    BodyPlan { voxels, components }
}

/// A repaired plan is viable when it can both sense and move: at least one
/// sensor and at least one wheel or leg. Casters are passive supports.
pub fn is_viable(plan: &BodyPlan) -> bool {
    let [wheels, legs, sensors, _] = plan.component_counts();
    sensors >= 1 && wheels + legs >= 1
}

impl BodyPlan {
    pub fn occupied(&self, p: [u8; 3]) -> bool {
        self.voxels[voxel_index(p)] != 0
    }

    /// (wheels, legs, sensors, casters)
    pub fn component_counts(&self) -> [usize; 4] {
        let mut counts = [0usize; 4];
        for c in &self.components {
            counts[c.kind.code() as usize - 1] += 1;
        }
        counts
    }

    /// Bounding-box span of the chassis along one axis, in voxels.
    pub fn extent(&self, axis: usize) -> usize {
        let mut min = GRID;
        let mut max = 0usize;
        for x in 0..GRID {
            for y in 0..GRID {
                for z in 0..GRID {
                    if self.voxels[(x * GRID + y) * GRID + z] != 0 {
                        let v = [x, y, z][axis];
                        min = min.min(v);
                        max = max.max(v);
                    }
                }
            }
        }
        if min > max {
            0
        } else {
            max - min + 1
        }
    }

    /// Larger of the two horizontal (x, y) chassis extents; z is vertical.
    pub fn horizontal_extent(&self) -> usize {
        self.extent(0).max(self.extent(1))
    }

    /// Structural checks used by tests: head occupied, chassis 26-connected,
    /// components on surface voxels at unique positions.
    pub fn validate(&self) -> Result<(), String> {
        if self.voxels.len() != VOXELS {
            return Err(format!("expected {VOXELS} voxels, got {}", self.voxels.len()));
        }
        if !self.occupied(HEAD) {
            return Err("head voxel must be occupied".into());
        }
        // Connectivity: everything occupied must be reachable from the head.
        let repaired = repair(self);
        if repaired.voxels != self.voxels {
            return Err("chassis is not a single 26-connected blob around the head".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.components {
            if !seen.insert(c.pos) {
                return Err(format!("duplicate component position {:?}", c.pos));
            }
            if !is_surface(&self.voxels, c.pos) {
                return Err(format!("component at {:?} is not on a surface voxel", c.pos));
            }
        }
        Ok(())
    }
}

/// Dense component-type matrix: 0 where empty, else the component's type code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MorphDescriptor {
    pub cells: Vec<u8>,
}

pub fn morph_descriptor(plan: &BodyPlan) -> MorphDescriptor {
    let mut cells = vec![0u8; VOXELS];
    for c in &plan.components {
        cells[voxel_index(c.pos)] = c.kind.code();
    }
    MorphDescriptor { cells }
}

impl MorphDescriptor {
    pub fn empty() -> Self {
        MorphDescriptor {
            cells: vec![0u8; VOXELS],
        }
    }

    pub fn from_components(components: &[Component]) -> Self {
        let mut cells = vec![0u8; VOXELS];
        for c in components {
            cells[voxel_index(c.pos)] = c.kind.code();
        }
        MorphDescriptor { cells }
    }

    /// Nonzero cells in position order.
    fn entries(&self) -> Vec<([u8; 3], u8)> {
        let mut out = Vec::new();
        for x in 0..GRID as u8 {
            for y in 0..GRID as u8 {
                for z in 0..GRID as u8 {
                    let code = self.cells[voxel_index([x, y, z])];
                    if code != 0 {
                        out.push(([x, y, z], code));
                    }
                }
            }
        }
        out
    }
}

fn manhattan(a: [u8; 3], b: [u8; 3]) -> u32 {
    (0..3)
        .map(|i| (a[i] as i16 - b[i] as i16).unsigned_abs() as u32)
        .sum()
}

/// One direction of the greedy component matching; see [`morph_distance`].
fn directed_distance(a: &[([u8; 3], u8)], b: &[([u8; 3], u8)]) -> f64 {
    let mut b_used = vec![false; b.len()];
    let mut d = 0.0;
    let mut a_rest: Vec<([u8; 3], u8)> = Vec::new();

    // Same position in both: free if the types agree, one penalty otherwise.
    for &(pos, code) in a {
        match b.iter().position(|&(bp, _)| bp == pos) {
            Some(j) => {
                if b[j].1 != code {
                    d += MISMATCH_PENALTY;
                }
                b_used[j] = true;
            }
            None => a_rest.push((pos, code)),
        }
    }

    // Greedy same-type pairing: a's leftovers in position order, each taking
    // the nearest unused same-type partner (ties to the smaller position).
    let mut a_unpaired = 0usize;
    for (pos, code) in a_rest {
        let best = b
            .iter()
            .enumerate()
            .filter(|&(j, &(_, bc))| !b_used[j] && bc == code)
            .min_by_key(|&(_, &(bp, _))| (manhattan(pos, bp), bp));
        match best {
            Some((j, &(bp, _))) => {
                d += manhattan(pos, bp) as f64;
                b_used[j] = true;
            }
            None => a_unpaired += 1,
        }
        let _ = (pos, code);
    }

    let b_unpaired = b_used.iter().filter(|&&u| !u).count();
    d + MISMATCH_PENALTY * (a_unpaired + b_unpaired) as f64
}

/// Distance between two morphological descriptors.
///
/// Components at the same position with different types cost 11 (the grid
/// dimension); position-unique components pair greedily with the nearest
/// same-type partner, adding the Manhattan distance; anything left unpaired
/// costs 11. The greedy pass is order-dependent, so the result is the max of
/// both directions, which forces symmetry.
pub fn morph_distance(a: &MorphDescriptor, b: &MorphDescriptor) -> Result<f64, DescriptorError> {
    if a.cells.len() != VOXELS {
        return Err(DescriptorError::ShapeMismatch(a.cells.len()));
    }
    if b.cells.len() != VOXELS {
        return Err(DescriptorError::ShapeMismatch(b.cells.len()));
    }
    let ea = a.entries();
    let eb = b.entries();
    Ok(directed_distance(&ea, &eb).max(directed_distance(&eb, &ea)))
}

/// Mean [`morph_distance`] from `descriptor` to its `k` nearest neighbours in
/// the pool and archive combined (all of them when fewer than `k` exist).
pub fn bodyplan_novelty(
    descriptor: &MorphDescriptor,
    pool: &[MorphDescriptor],
    archive: &[MorphDescriptor],
    k: usize,
) -> Result<f64, NoveltyError> {
    if k == 0 {
        return Err(NoveltyError::ZeroK);
    }
    let mut dists: Vec<f64> = pool
        .iter()
        .chain(archive.iter())
        .map(|r| morph_distance(descriptor, r).expect("descriptors share the fixed shape"))
        .collect();
    if dists.is_empty() {
        return Err(NoveltyError::EmptyReferenceSet);
    }
    let k = k.min(dists.len());
    dists.select_nth_unstable_by(k - 1, f64::total_cmp);
    Ok(dists[..k].iter().sum::<f64>() / k as f64)
}
