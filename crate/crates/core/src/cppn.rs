//! Pattern-producing genomes that paint body plans over a voxel grid.
//!
//! A genome is a small feed-forward network queried once per voxel. It reads
//! four inputs — the normalized voxel coordinate `(x, y, z)` plus a radial
//! distance from the grid centre — and emits three outputs: chassis material,
//! component presence, and component type. Structure evolves NEAT-style:
//! links carry globally monotone innovation ids so crossover can align common
//! ancestry, and structural mutations only ever grow the id space.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Network inputs: x, y, z, radial distance.
pub const INPUT_COUNT: usize = 4;
/// Network outputs: material, component presence, component type.
pub const OUTPUT_COUNT: usize = 3;
/// Node ids 0..4 are inputs, 4..7 outputs; hidden nodes start here.
pub const FIRST_HIDDEN_ID: u32 = (INPUT_COUNT + OUTPUT_COUNT) as u32;
/// The fully connected input->output seed topology uses innovations 0..12,
/// shared by every initial genome so their link genes align under crossover.
pub const SEED_INNOVATIONS: u64 = (INPUT_COUNT * OUTPUT_COUNT) as u64;

/// How many times a structural mutation is re-drawn before giving up when the
/// drawn edit would create a cycle or a duplicate enabled link.
const STRUCTURAL_RETRIES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Sigmoid,
    Gaussian,
    Sine,
    Linear,
    Abs,
}

impl Activation {
    pub const ALL: [Activation; 5] = [
        Activation::Sigmoid,
        Activation::Gaussian,
        Activation::Sine,
        Activation::Linear,
        Activation::Abs,
    ];

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Gaussian => (-(x * x)).exp(),
            // Full period across the nominal [-1, 1] input range.
            Activation::Sine => (std::f64::consts::PI * x).sin(),
            Activation::Linear => x,
            Activation::Abs => x.abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeRole {
    Input,
    Hidden,
    Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeGene {
    pub id: u32,
    pub role: NodeRole,
    pub activation: Activation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkGene {
    pub innovation: u64,
    pub from: u32,
    pub to: u32,
    pub weight: f64,
    pub enabled: bool,
}

/// Allocates node and innovation ids for one run. Owned by the coordinator;
/// ids are handed out sequentially, so they are unique and strictly increase
/// across all structural mutations of a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdGen {
    next_node: u32,
    next_innovation: u64,
}

impl IdGen {
    pub fn new() -> Self {
        IdGen {
            next_node: FIRST_HIDDEN_ID,
            next_innovation: SEED_INNOVATIONS,
        }
    }

    pub fn node_id(&mut self) -> u32 {
        let id = self.next_node;
        self.next_node += 1;
        id
    }

    pub fn innovation(&mut self) -> u64 {
        let id = self.next_innovation;
        self.next_innovation += 1;
        id
    }
}

impl Default for IdGen {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenomeError {
    #[error("duplicate node id {0}")]
    DuplicateNode(u32),
    #[error("duplicate innovation id {0}")]
    DuplicateInnovation(u64),
    #[error("link {0} references a missing node")]
    DanglingLink(u64),
    #[error("link {0} has an invalid direction (into an input or out of an output)")]
    BadDirection(u64),
    #[error("duplicate enabled link {from}->{to}")]
    DuplicateLink { from: u32, to: u32 },
    #[error("enabled links form a cycle")]
    Cycle,
    #[error("genome is missing its fixed input/output nodes")]
    BadIoLayout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CppnGenome {
    pub nodes: Vec<NodeGene>,
    pub links: Vec<LinkGene>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MutationParams {
    /// Per-link probability of Gaussian weight perturbation.
    pub weight_rate: f64,
    pub weight_sigma: f64,
    /// Per-genome probability of inserting a fresh link.
    pub add_link_rate: f64,
    /// Per-genome probability of splitting an enabled link with a new node.
    pub add_node_rate: f64,
    /// Per-genome probability of flipping one link's enabled flag.
    pub toggle_rate: f64,
}

impl Default for MutationParams {
    fn default() -> Self {
        MutationParams {
            weight_rate: 0.8,
            weight_sigma: 0.1,
            add_link_rate: 0.05,
            add_node_rate: 0.03,
            toggle_rate: 0.01,
        }
    }
}

impl CppnGenome {
    /// Fully connected input->output genome with uniform [-1, 1] weights, no
    /// hidden nodes. Output activations are drawn from the whole palette; the
    /// seed links reuse the same innovation ids in every genome.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut nodes = Vec::with_capacity(INPUT_COUNT + OUTPUT_COUNT);
        for id in 0..INPUT_COUNT as u32 {
            nodes.push(NodeGene {
                id,
                role: NodeRole::Input,
                activation: Activation::Linear,
            });
        }
        for o in 0..OUTPUT_COUNT as u32 {
            nodes.push(NodeGene {
                id: INPUT_COUNT as u32 + o,
                role: NodeRole::Output,
                activation: Activation::ALL[rng.random_range(0..Activation::ALL.len())],
            });
        }
        let mut links = Vec::with_capacity(INPUT_COUNT * OUTPUT_COUNT);
        for o in 0..OUTPUT_COUNT as u32 {
            for i in 0..INPUT_COUNT as u32 {
                links.push(LinkGene {
                    innovation: (o * INPUT_COUNT as u32 + i) as u64,
                    from: i,
                    to: INPUT_COUNT as u32 + o,
                    weight: rng.random_range(-1.0..=1.0),
                    enabled: true,
                });
            }
        }
        CppnGenome { nodes, links }
    }

    pub fn node(&self, id: u32) -> Option<&NodeGene> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Checks every structural invariant: unique node and innovation ids, the
    /// fixed I/O layout, link endpoints present and correctly directed, no
    /// duplicate enabled link, and an acyclic enabled subgraph.
    pub fn validate(&self) -> Result<(), GenomeError> {
        let mut ids = BTreeSet::new();
        for n in &self.nodes {
            if !ids.insert(n.id) {
                return Err(GenomeError::DuplicateNode(n.id));
            }
        }
        for id in 0..INPUT_COUNT as u32 {
            match self.node(id) {
                Some(n) if n.role == NodeRole::Input => {}
                _ => return Err(GenomeError::BadIoLayout),
            }
        }
        for id in INPUT_COUNT as u32..FIRST_HIDDEN_ID {
            match self.node(id) {
                Some(n) if n.role == NodeRole::Output => {}
                _ => return Err(GenomeError::BadIoLayout),
            }
        }

        let mut innovations = BTreeSet::new();
        let mut enabled_pairs = BTreeSet::new();
        for l in &self.links {
            if !innovations.insert(l.innovation) {
                return Err(GenomeError::DuplicateInnovation(l.innovation));
            }
            let (from, to) = (self.node(l.from), self.node(l.to));
            let (from, to) = match (from, to) {
                (Some(f), Some(t)) => (f, t),
                _ => return Err(GenomeError::DanglingLink(l.innovation)),
            };
            if from.role == NodeRole::Output || to.role == NodeRole::Input {
                return Err(GenomeError::BadDirection(l.innovation));
            }
            if l.enabled && !enabled_pairs.insert((l.from, l.to)) {
                return Err(GenomeError::DuplicateLink {
                    from: l.from,
                    to: l.to,
                });
            }
        }

        if has_cycle(&self.nodes, self.links.iter().filter(|l| l.enabled)) {
            return Err(GenomeError::Cycle);
        }
        Ok(())
    }
}

/// Cycle test over an edge subset; nodes not mentioned by edges are trivially fine.
fn has_cycle<'a>(
    nodes: &[NodeGene],
    links: impl Iterator<Item = &'a LinkGene>,
) -> bool {
    let mut out_edges: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    let mut indegree: BTreeMap<u32, usize> = nodes.iter().map(|n| (n.id, 0)).collect();
    let mut edge_count = 0usize;
    for l in links {
        out_edges.entry(l.from).or_default().push(l.to);
        *indegree.entry(l.to).or_default() += 1;
        edge_count += 1;
    }
    if edge_count == 0 {
        return false;
    }
    let mut ready: BTreeSet<u32> = indegree
        .iter()
        .filter(|(_, &d)| d == 0)
        .map(|(&id, _)| id)
        .collect();
    let mut seen = 0usize;
    while let Some(&id) = ready.iter().next() {
        ready.remove(&id);
        seen += 1;
        if let Some(outs) = out_edges.get(&id) {
            for &to in outs {
                let d = indegree.get_mut(&to).expect("edge endpoints were registered");
                *d -= 1;
                if *d == 0 {
                    ready.insert(to);
                }
            }
        }
    }
    seen < indegree.len()
}

/// A genome fixed into evaluation order: one validation + topological sort,
/// then as many queries as you like (a body decode runs 11^3 of them).
pub struct CompiledCppn {
    /// Node evaluation order; each entry is (activation, incoming (slot, weight) list).
    schedule: Vec<(Activation, Vec<(usize, f64)>)>,
    /// Value-slot index of each input node, in input order.
    input_slots: Vec<usize>,
    /// Value-slot index of each output node.
    output_slots: [usize; OUTPUT_COUNT],
}

impl CompiledCppn {
    pub fn new(genome: &CppnGenome) -> Result<Self, GenomeError> {
        genome.validate()?;

        // Kahn's algorithm over enabled links, smallest node id first so the
        // schedule (and therefore float summation order) is reproducible.
        let mut indegree: BTreeMap<u32, usize> =
            genome.nodes.iter().map(|n| (n.id, 0)).collect();
        let mut incoming: BTreeMap<u32, Vec<(u32, f64)>> = BTreeMap::new();
        for l in genome.links.iter().filter(|l| l.enabled) {
            *indegree.get_mut(&l.to).expect("validated") += 1;
            incoming.entry(l.to).or_default().push((l.from, l.weight));
        }
        let mut ready: BTreeSet<u32> = indegree
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&id, _)| id)
            .collect();
        let mut order = Vec::with_capacity(genome.nodes.len());
        while let Some(&id) = ready.iter().next() {
            ready.remove(&id);
            order.push(id);
            for l in genome.links.iter().filter(|l| l.enabled && l.from == id) {
                let d = indegree.get_mut(&l.to).expect("validated");
                *d -= 1;
                if *d == 0 {
                    ready.insert(l.to);
                }
            }
        }
        debug_assert_eq!(order.len(), genome.nodes.len(), "validated graphs are acyclic");

        let slot_of: BTreeMap<u32, usize> =
            order.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let schedule = order
            .iter()
            .map(|&id| {
                let node = genome.node(id).expect("validated");
                let ins = incoming
                    .get(&id)
                    .map(|v| {
                        v.iter()
                            .map(|&(from, w)| (slot_of[&from], w))
                            .collect::<Vec<_>>()
                    })
                    .unwrap_or_default();
                (node.activation, ins)
            })
            .collect();
        let mut output_slots = [0usize; OUTPUT_COUNT];
        for (o, slot) in output_slots.iter_mut().enumerate() {
            *slot = slot_of[&(INPUT_COUNT as u32 + o as u32)];
        }
        let input_slots: Vec<usize> = (0..INPUT_COUNT as u32).map(|id| slot_of[&id]).collect();
        Ok(CompiledCppn {
            schedule,
            input_slots,
            output_slots,
        })
    }

    /// Evaluates the network at a normalized coordinate in [-1, 1]^3.
    ///
    /// The fourth input is the radial distance from the grid centre, rescaled
    /// to [-1, 1] (centre -> -1, corner -> +1).
    pub fn eval(&self, coord: [f64; 3]) -> [f64; OUTPUT_COUNT] {
        let radius = (coord[0] * coord[0] + coord[1] * coord[1] + coord[2] * coord[2]).sqrt();
        let radial = 2.0 * (radius / 3f64.sqrt()) - 1.0;
        let inputs = [coord[0], coord[1], coord[2], radial];

        let mut values = vec![0.0f64; self.schedule.len()];
        for (slot, &v) in self.input_slots.iter().zip(inputs.iter()) {
            values[*slot] = v;
        }
        for (slot, (act, ins)) in self.schedule.iter().enumerate() {
            if self.input_slots.contains(&slot) {
                continue; // inputs carry their raw value
            }
            let mut sum = 0.0;
            for &(from, w) in ins {
                sum += w * values[from];
            }
            values[slot] = act.apply(sum);
        }
        let mut out = [0.0; OUTPUT_COUNT];
        for (o, &slot) in self.output_slots.iter().enumerate() {
            out[o] = values[slot];
        }
        out
    }
}

/// Single-shot query; compile once via [`CompiledCppn`] when querying many coords.
pub fn query(genome: &CppnGenome, coord: [f64; 3]) -> Result<[f64; OUTPUT_COUNT], GenomeError> {
    Ok(CompiledCppn::new(genome)?.eval(coord))
}

/// Returns a mutated copy. Weight perturbation runs per link; structural edits
/// (add-link, add-node split, enable toggle) run per genome and re-draw up to
/// 20 times when the drawn edit would break feed-forwardness or duplicate an
/// enabled link, then skip.
pub fn mutate<R: Rng + ?Sized>(
    genome: &CppnGenome,
    params: &MutationParams,
    ids: &mut IdGen,
    rng: &mut R,
) -> CppnGenome {
    let mut g = genome.clone();
    let noise = Normal::new(0.0, params.weight_sigma).expect("sigma is finite");

    for l in &mut g.links {
        if rng.random::<f64>() < params.weight_rate {
            l.weight += noise.sample(rng);
        }
    }

    if rng.random::<f64>() < params.add_link_rate {
        try_add_link(&mut g, ids, rng);
    }
    if rng.random::<f64>() < params.add_node_rate {
        try_add_node(&mut g, ids, rng);
    }
    if rng.random::<f64>() < params.toggle_rate {
        try_toggle(&mut g, rng);
    }
    debug_assert!(g.validate().is_ok());
    g
}

fn enabled_pair_exists(g: &CppnGenome, from: u32, to: u32) -> bool {
    g.links
        .iter()
        .any(|l| l.enabled && l.from == from && l.to == to)
}

/// Would adding enabled edge from->to close a cycle through enabled links?
fn closes_cycle(g: &CppnGenome, from: u32, to: u32) -> bool {
    if from == to {
        return true;
    }
    // DFS from `to`: a path back to `from` means the new edge closes a loop.
    let mut stack = vec![to];
    let mut seen = BTreeSet::new();
    while let Some(id) = stack.pop() {
        if id == from {
            return true;
        }
        if !seen.insert(id) {
            continue;
        }
        for l in g.links.iter().filter(|l| l.enabled && l.from == id) {
            stack.push(l.to);
        }
    }
    false
}

pub(crate) fn try_add_link<R: Rng + ?Sized>(g: &mut CppnGenome, ids: &mut IdGen, rng: &mut R) {
    let sources: Vec<u32> = g
        .nodes
        .iter()
        .filter(|n| n.role != NodeRole::Output)
        .map(|n| n.id)
        .collect();
    let sinks: Vec<u32> = g
        .nodes
        .iter()
        .filter(|n| n.role != NodeRole::Input)
        .map(|n| n.id)
        .collect();
    for _ in 0..STRUCTURAL_RETRIES {
        let from = sources[rng.random_range(0..sources.len())];
        let to = sinks[rng.random_range(0..sinks.len())];
        if enabled_pair_exists(g, from, to) || closes_cycle(g, from, to) {
            continue;
        }
        g.links.push(LinkGene {
            innovation: ids.innovation(),
            from,
            to,
            weight: rng.random_range(-1.0..=1.0),
            enabled: true,
        });
        return;
    }
}

pub(crate) fn try_add_node<R: Rng + ?Sized>(g: &mut CppnGenome, ids: &mut IdGen, rng: &mut R) {
    let enabled: Vec<usize> = g
        .links
        .iter()
        .enumerate()
        .filter(|(_, l)| l.enabled)
        .map(|(i, _)| i)
        .collect();
    if enabled.is_empty() {
        return;
    }
    let idx = enabled[rng.random_range(0..enabled.len())];
    let (from, to, weight) = {
        let l = &mut g.links[idx];
        l.enabled = false;
        (l.from, l.to, l.weight)
    };
    let node = NodeGene {
        id: ids.node_id(),
        role: NodeRole::Hidden,
        activation: Activation::ALL[rng.random_range(0..Activation::ALL.len())],
    };
    g.nodes.push(node);
    // The classic split: unit weight in, original weight out.
    g.links.push(LinkGene {
        innovation: ids.innovation(),
        from,
        to: node.id,
        weight: 1.0,
        enabled: true,
    });
    g.links.push(LinkGene {
        innovation: ids.innovation(),
        from: node.id,
        to,
        weight,
        enabled: true,
    });
}

pub(crate) fn try_toggle<R: Rng + ?Sized>(g: &mut CppnGenome, rng: &mut R) {
    if g.links.is_empty() {
        return;
    }
    for _ in 0..STRUCTURAL_RETRIES {
        let idx = rng.random_range(0..g.links.len());
        let l = g.links[idx];
        if l.enabled {
            g.links[idx].enabled = false;
            return;
        }
        // Re-enabling must not duplicate a live pair or close a cycle.
        if enabled_pair_exists(g, l.from, l.to) || closes_cycle(g, l.from, l.to) {
            continue;
        }
        g.links[idx].enabled = true;
        return;
    }
}

/// Recombines two genomes. `a` must be the fitter parent (the caller resolves
/// ties in favour of `a`): the child inherits `a`'s full topology, and every
/// link whose innovation id also occurs in `b` takes its weight from a fair
/// coin between the two parents.
pub fn crossover<R: Rng + ?Sized>(a: &CppnGenome, b: &CppnGenome, rng: &mut R) -> CppnGenome {
    let b_weights: BTreeMap<u64, f64> =
        b.links.iter().map(|l| (l.innovation, l.weight)).collect();
    let mut child = a.clone();
    for l in &mut child.links {
        if let Some(&bw) = b_weights.get(&l.innovation) {
            if rng.random::<bool>() {
                l.weight = bw;
            }
        }
    }
    debug_assert!(child.validate().is_ok());
    child
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn io_nodes(out_act: Activation) -> Vec<NodeGene> {
        let mut nodes = Vec::new();
        for id in 0..INPUT_COUNT as u32 {
            nodes.push(NodeGene {
                id,
                role: NodeRole::Input,
                activation: Activation::Linear,
            });
        }
        for o in 0..OUTPUT_COUNT as u32 {
            nodes.push(NodeGene {
                id: INPUT_COUNT as u32 + o,
                role: NodeRole::Output,
                activation: out_act,
            });
        }
        nodes
    }

    #[test]
    fn zero_weight_sigmoid_outputs_half_everywhere() {
        let mut g = CppnGenome {
            nodes: io_nodes(Activation::Sigmoid),
            links: Vec::new(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let coord = [
                rng.random_range(-1.0..=1.0),
                rng.random_range(-1.0..=1.0),
                rng.random_range(-1.0..=1.0),
            ];
            let out = query(&g, coord).unwrap();
            assert_eq!(out, [0.5, 0.5, 0.5]);
        }
        // Links with zero weight change nothing.
        g.links.push(LinkGene {
            innovation: 0,
            from: 0,
            to: 4,
            weight: 0.0,
            enabled: true,
        });
        assert_eq!(query(&g, [0.3, -0.7, 0.2]).unwrap(), [0.5, 0.5, 0.5]);
    }

    #[test]
    fn single_linear_link_passes_input_through() {
        let mut g = CppnGenome {
            nodes: io_nodes(Activation::Linear),
            links: Vec::new(),
        };
        g.links.push(LinkGene {
            innovation: 0,
            from: 0,
            to: 4,
            weight: 1.0,
            enabled: true,
        });
        let out = query(&g, [0.3, 0.9, -0.4]).unwrap();
        assert_eq!(out[0], 0.3, "output 0 should equal input x");
        assert_eq!(out[1], 0.0);
        assert_eq!(out[2], 0.0);
    }

    /// Independent oracle: memoized recursive evaluation straight off the gene
    /// lists, sharing no code with the iterative schedule in `CompiledCppn`.
    fn oracle_eval(g: &CppnGenome, coord: [f64; 3]) -> [f64; OUTPUT_COUNT] {
        fn value(
            g: &CppnGenome,
            id: u32,
            inputs: &[f64; INPUT_COUNT],
            memo: &mut BTreeMap<u32, f64>,
        ) -> f64 {
            if let Some(&v) = memo.get(&id) {
                return v;
            }
            let node = g.node(id).unwrap();
            let v = if node.role == NodeRole::Input {
                inputs[id as usize]
            } else {
                let mut sum = 0.0;
                for l in g.links.iter().filter(|l| l.enabled && l.to == id) {
                    sum += l.weight * value(g, l.from, inputs, memo);
                }
                node.activation.apply(sum)
            };
            memo.insert(id, v);
            v
        }
        let radius = coord.iter().map(|c| c * c).sum::<f64>().sqrt();
        let inputs = [coord[0], coord[1], coord[2], 2.0 * radius / 3f64.sqrt() - 1.0];
        let mut memo = BTreeMap::new();
        let mut out = [0.0; OUTPUT_COUNT];
        for o in 0..OUTPUT_COUNT {
            out[o] = value(g, INPUT_COUNT as u32 + o as u32, &inputs, &mut memo);
        }
        out
    }

    #[test]
    fn hidden_node_genome_matches_recursive_oracle() {
        // Two hidden nodes, mixed activations, one disabled link.
        let mut nodes = io_nodes(Activation::Sigmoid);
        nodes.push(NodeGene {
            id: 7,
            role: NodeRole::Hidden,
            activation: Activation::Gaussian,
        });
        nodes.push(NodeGene {
            id: 8,
            role: NodeRole::Hidden,
            activation: Activation::Sine,
        });
        let links = vec![
            LinkGene { innovation: 0, from: 0, to: 7, weight: 0.8, enabled: true },
            LinkGene { innovation: 1, from: 1, to: 7, weight: -1.3, enabled: true },
            LinkGene { innovation: 2, from: 3, to: 8, weight: 0.5, enabled: true },
            LinkGene { innovation: 3, from: 7, to: 8, weight: 1.1, enabled: true },
            LinkGene { innovation: 4, from: 7, to: 4, weight: -0.6, enabled: true },
            LinkGene { innovation: 5, from: 8, to: 5, weight: 0.9, enabled: true },
            LinkGene { innovation: 6, from: 2, to: 6, weight: 2.0, enabled: true },
            LinkGene { innovation: 7, from: 8, to: 6, weight: 7.0, enabled: false },
        ];
        let g = CppnGenome { nodes, links };
        g.validate().unwrap();

        let compiled = CompiledCppn::new(&g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let coord = [
                rng.random_range(-1.0..=1.0),
                rng.random_range(-1.0..=1.0),
                rng.random_range(-1.0..=1.0),
            ];
            let got = compiled.eval(coord);
            let want = oracle_eval(&g, coord);
            for o in 0..OUTPUT_COUNT {
                assert!(
                    (got[o] - want[o]).abs() < 1e-12,
                    "output {o} diverged from oracle at {coord:?}: {got:?} vs {want:?}"
                );
            }
        }
    }

    #[test]
    fn random_genomes_match_oracle_after_mutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut ids = IdGen::new();
        let params = MutationParams {
            add_link_rate: 0.6,
            add_node_rate: 0.5,
            toggle_rate: 0.3,
            ..MutationParams::default()
        };
        for _ in 0..50 {
            let mut g = CppnGenome::random(&mut rng);
            for _ in 0..10 {
                g = mutate(&g, &params, &mut ids, &mut rng);
            }
            let compiled = CompiledCppn::new(&g).unwrap();
            for _ in 0..5 {
                let coord = [
                    rng.random_range(-1.0..=1.0),
                    rng.random_range(-1.0..=1.0),
                    rng.random_range(-1.0..=1.0),
                ];
                let got = compiled.eval(coord);
                let want = oracle_eval(&g, coord);
                for o in 0..OUTPUT_COUNT {
                    assert!((got[o] - want[o]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn cycle_is_rejected_by_validate() {
        let mut nodes = io_nodes(Activation::Linear);
        nodes.push(NodeGene { id: 7, role: NodeRole::Hidden, activation: Activation::Linear });
        nodes.push(NodeGene { id: 8, role: NodeRole::Hidden, activation: Activation::Linear });
        let links = vec![
            LinkGene { innovation: 0, from: 7, to: 8, weight: 1.0, enabled: true },
            LinkGene { innovation: 1, from: 8, to: 7, weight: 1.0, enabled: true },
        ];
        let g = CppnGenome { nodes, links };
        assert_eq!(g.validate(), Err(GenomeError::Cycle));
        assert!(query(&g, [0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn disabled_cycle_is_allowed_and_toggle_respects_it() {
        let mut nodes = io_nodes(Activation::Linear);
        nodes.push(NodeGene { id: 7, role: NodeRole::Hidden, activation: Activation::Linear });
        nodes.push(NodeGene { id: 8, role: NodeRole::Hidden, activation: Activation::Linear });
        let links = vec![
            LinkGene { innovation: 0, from: 7, to: 8, weight: 1.0, enabled: true },
            LinkGene { innovation: 1, from: 8, to: 7, weight: 1.0, enabled: false },
        ];
        let mut g = CppnGenome { nodes, links };
        g.validate().unwrap();
        // However the toggle lands, the genome must stay valid.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            try_toggle(&mut g, &mut rng);
            g.validate().unwrap();
        }
    }

    #[test]
    fn operators_preserve_validity_in_bulk() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut ids = IdGen::new();
        let params = MutationParams {
            add_link_rate: 0.4,
            add_node_rate: 0.3,
            toggle_rate: 0.2,
            ..MutationParams::default()
        };
        let mut pool: Vec<CppnGenome> = (0..16).map(|_| CppnGenome::random(&mut rng)).collect();
        for step in 0..2000 {
            let i = rng.random_range(0..pool.len());
            let j = rng.random_range(0..pool.len());
            let child = if rng.random::<bool>() {
                mutate(&pool[i], &params, &mut ids, &mut rng)
            } else {
                crossover(&pool[i], &pool[j], &mut rng)
            };
            child
                .validate()
                .unwrap_or_else(|e| panic!("invalid child at step {step}: {e}"));
            let slot = rng.random_range(0..pool.len());
            pool[slot] = child;
        }
    }

    #[test]
    fn innovation_ids_strictly_increase() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut ids = IdGen::new();
        let params = MutationParams {
            add_link_rate: 1.0,
            add_node_rate: 1.0,
            toggle_rate: 0.0,
            ..MutationParams::default()
        };
        let mut g = CppnGenome::random(&mut rng);
        let mut last_max = g.links.iter().map(|l| l.innovation).max().unwrap();
        for _ in 0..50 {
            g = mutate(&g, &params, &mut ids, &mut rng);
            let max = g.links.iter().map(|l| l.innovation).max().unwrap();
            assert!(max >= last_max, "innovation ids must never regress");
            last_max = max;
        }
    }

    #[test]
    fn crossover_with_self_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = CppnGenome::random(&mut rng);
        let child = crossover(&g, &g, &mut rng);
        assert_eq!(child, g);
    }

    #[test]
    fn crossover_keeps_fitter_topology_on_disjoint_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut ids = IdGen::new();
        let params = MutationParams {
            add_link_rate: 1.0,
            add_node_rate: 1.0,
            weight_rate: 0.0,
            toggle_rate: 0.0,
            ..MutationParams::default()
        };
        let mut a = CppnGenome::random(&mut rng);
        let mut b = CppnGenome::random(&mut rng);
        for _ in 0..5 {
            a = mutate(&a, &params, &mut ids, &mut rng);
            b = mutate(&b, &params, &mut ids, &mut rng);
        }
        let child = crossover(&a, &b, &mut rng);
        let child_innov: BTreeSet<u64> = child.links.iter().map(|l| l.innovation).collect();
        let a_innov: BTreeSet<u64> = a.links.iter().map(|l| l.innovation).collect();
        assert_eq!(child_innov, a_innov, "child link set must equal parent a's");
        // Weights at seed innovations (shared by both parents) come from either
        // parent; everything else keeps a's weight.
        for l in &child.links {
            let aw = a.links.iter().find(|x| x.innovation == l.innovation).unwrap().weight;
            if l.innovation >= SEED_INNOVATIONS {
                let in_b = b.links.iter().any(|x| x.innovation == l.innovation);
                if !in_b {
                    assert_eq!(l.weight, aw);
                }
            }
        }
    }

    #[test]
    fn serde_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut ids = IdGen::new();
        let params = MutationParams {
            add_link_rate: 0.8,
            add_node_rate: 0.8,
            ..MutationParams::default()
        };
        let mut g = CppnGenome::random(&mut rng);
        for _ in 0..6 {
            g = mutate(&g, &params, &mut ids, &mut rng);
        }
        let json = serde_json::to_string(&g).unwrap();
        let back: CppnGenome = serde_json::from_str(&json).unwrap();
        assert_eq!(back, g);
    }
}
