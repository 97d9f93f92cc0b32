//! Five-dimensional training parallelism: process groups, rank placement and
//! per-iteration communication demands.
//!
//! Ranks are numbered with tensor parallelism innermost, in the order
//! `[tp, cp, ep, dp_expert, pp]`.

use serde::{Deserialize, Serialize};

use super::{Demand, TrafficError, TrafficPattern};
use crate::topo::{ChipCoord, LocalCoord, LogicalTopology};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub layers: u64,
    pub micro_batch: u64,
    /// Micro-batches per data-parallel replica.
    pub micro_batches: u64,
    pub seq_len: u64,
    pub hidden: u64,
    pub vocab: u64,
    pub heads_attn: u64,
    pub heads_kv: u64,
    pub ffn: u64,
    /// Experts per token; zero for a dense model.
    pub top_k: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParallelismSpec {
    pub tp: usize,
    pub cp: usize,
    pub ep: usize,
    pub dp_expert: usize,
    pub pp: usize,
    pub model: ModelSpec,
    #[serde(default = "default_element_bytes")]
    pub bytes_per_element: u64,
}

fn default_element_bytes() -> u64 {
    2
}

impl ParallelismSpec {
    pub fn ranks(&self) -> usize {
        self.tp * self.cp * self.ep * self.dp_expert * self.pp
    }

    /// Attention-layer data parallelism, `ep * dp_expert`.
    pub fn dp(&self) -> usize {
        self.ep * self.dp_expert
    }

    fn shape(&self) -> [usize; 5] {
        [self.tp, self.cp, self.ep, self.dp_expert, self.pp]
    }

    pub fn validate(&self) -> Result<(), TrafficError> {
        if self.shape().contains(&0) {
            return Err(TrafficError::InvalidSpec(
                "parallel degrees must be positive".into(),
            ));
        }
        let m = &self.model;
        if !m.layers.is_multiple_of(self.pp as u64) {
            return Err(TrafficError::InvalidSpec(format!(
                "{} layers do not split into {} pipeline stages",
                m.layers, self.pp
            )));
        }
        if m.heads_attn == 0 {
            return Err(TrafficError::InvalidSpec(
                "attention head count must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Elements moved per rank per event, and events per iteration.
    pub fn volume_and_frequency(&self, kind: Parallelism) -> (f64, f64) {
        let m = &self.model;
        let (t, c, p) = (self.tp as f64, self.cp as f64, self.pp as f64);
        let bsh = (m.micro_batch * m.seq_len * m.hidden) as f64;
        let kv_ratio = m.heads_kv as f64 / m.heads_attn as f64;
        let layer_events = (m.micro_batches * m.layers) as f64 / p;
        let h = m.hidden as f64;
        match kind {
            Parallelism::TensorAttention => (bsh, 4.0 * layer_events),
            Parallelism::TensorExpert => (bsh * m.top_k as f64, 4.0 * layer_events),
            Parallelism::Context => (bsh * 2.0 * kv_ratio / t, 2.0 * layer_events),
            Parallelism::Expert => (bsh * m.top_k as f64 / (t * c), 4.0 * layer_events),
            Parallelism::DataVocab => (2.0 * h * m.vocab as f64 / (t * c), 1.0),
            Parallelism::DataQkv => ((2.0 + 2.0 * kv_ratio) * h * h / t, m.layers as f64 / p),
            Parallelism::DataFfn => (3.0 * h * m.ffn as f64 / t, m.layers as f64 / p),
            Parallelism::Pipeline => (bsh / (t * c), 2.0 * m.micro_batches as f64),
            Parallelism::Synthetic => (0.0, 0.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Parallelism {
    TensorAttention,
    TensorExpert,
    Context,
    Expert,
    DataVocab,
    DataQkv,
    DataFfn,
    Pipeline,
    Synthetic,
}

impl Parallelism {
    pub const FAMILIES: [Parallelism; 8] = [
        Parallelism::TensorAttention,
        Parallelism::TensorExpert,
        Parallelism::Context,
        Parallelism::Expert,
        Parallelism::DataVocab,
        Parallelism::DataQkv,
        Parallelism::DataFfn,
        Parallelism::Pipeline,
    ];

    /// Rank-shape axes a group of this family varies over.
    fn axes(self) -> &'static [usize] {
        match self {
            Parallelism::TensorAttention | Parallelism::TensorExpert => &[0],
            Parallelism::Context => &[1],
            Parallelism::Expert => &[2],
            Parallelism::DataVocab => &[2, 3],
            Parallelism::DataQkv => &[1, 2, 3],
            Parallelism::DataFfn => &[1, 3],
            Parallelism::Pipeline => &[4],
            Parallelism::Synthetic => &[],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessGroupSet {
    pub ranks: usize,
    pub tensor: Vec<Vec<usize>>,
    pub context: Vec<Vec<usize>>,
    pub expert: Vec<Vec<usize>>,
    pub data_vocab: Vec<Vec<usize>>,
    pub data_qkv: Vec<Vec<usize>>,
    pub data_ffn: Vec<Vec<usize>>,
    pub pipeline: Vec<Vec<usize>>,
}

impl ProcessGroupSet {
    pub fn family(&self, kind: Parallelism) -> &[Vec<usize>] {
        match kind {
            Parallelism::TensorAttention | Parallelism::TensorExpert => &self.tensor,
            Parallelism::Context => &self.context,
            Parallelism::Expert => &self.expert,
            Parallelism::DataVocab => &self.data_vocab,
            Parallelism::DataQkv => &self.data_qkv,
            Parallelism::DataFfn => &self.data_ffn,
            Parallelism::Pipeline => &self.pipeline,
            Parallelism::Synthetic => &[],
        }
    }
}

/// Groups varying over `axes` of the mixed-radix rank shape. Each group is
/// listed in rank order, groups ordered by their smallest rank.
fn groups_over(shape: [usize; 5], axes: &[usize]) -> Vec<Vec<usize>> {
    let mut stride = [1usize; 5];
    for i in 1..5 {
        stride[i] = stride[i - 1] * shape[i - 1];
    }
    let total: usize = shape.iter().product();
    let digit = |rank: usize, axis: usize| (rank / stride[axis]) % shape[axis];
    let size: usize = axes.iter().map(|&a| shape[a]).product();
    let mut groups = Vec::new();
    for base in (0..total).filter(|&r| axes.iter().all(|&a| digit(r, a) == 0)) {
        let mut members = Vec::with_capacity(size);
        for j in 0..size {
            let mut rem = j;
            let mut rank = base;
            for &a in axes {
                rank += (rem % shape[a]) * stride[a];
                rem /= shape[a];
            }
            members.push(rank);
        }
        members.sort_unstable();
        groups.push(members);
    }
    groups
}

pub fn build_groups(spec: &ParallelismSpec) -> Result<ProcessGroupSet, TrafficError> {
    spec.validate()?;
    let shape = spec.shape();
    let of = |kind: Parallelism| groups_over(shape, kind.axes());
    Ok(ProcessGroupSet {
        ranks: spec.ranks(),
        tensor: of(Parallelism::TensorAttention),
        context: of(Parallelism::Context),
        expert: of(Parallelism::Expert),
        data_vocab: of(Parallelism::DataVocab),
        data_qkv: of(Parallelism::DataQkv),
        data_ffn: of(Parallelism::DataFfn),
        pipeline: of(Parallelism::Pipeline),
    })
}

/// Rank to chip assignment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub chips: Vec<ChipCoord>,
}

impl Placement {
    /// Linear placement with whole tensor groups packed into node meshes.
    ///
    /// When `tp` fits a mesh, each node holds `floor(m^2 / tp)` tensor groups
    /// and any leftover chips stay idle; otherwise ranks fill chips in order.
    pub fn linear(spec: &ParallelismSpec, topo: &LogicalTopology) -> Result<Self, TrafficError> {
        let ranks = spec.ranks();
        let per_node = (topo.mesh * topo.mesh) as usize;
        let m = topo.mesh as usize;
        let fits = spec.tp <= per_node;
        let groups_per_node = if fits { per_node / spec.tp } else { 0 };
        let needed = if fits {
            ranks.div_ceil(groups_per_node * spec.tp) * per_node
        } else {
            ranks
        };
        if needed > topo.chip_count() {
            return Err(TrafficError::TooManyRanks {
                ranks,
                chips: topo.chip_count(),
            });
        }
        let chips = (0..ranks)
            .map(|r| {
                if !fits {
                    return topo.chip_at(r);
                }
                let (group, j) = (r / spec.tp, r % spec.tp);
                let node = topo.node_at(group / groups_per_node);
                let l = (group % groups_per_node) * spec.tp + j;
                ChipCoord {
                    node,
                    local: LocalCoord::new((l % m) as u16, (l / m) as u16),
                }
            })
            .collect();
        Ok(Placement { chips })
    }

    pub fn chip(&self, rank: usize) -> Result<ChipCoord, TrafficError> {
        self.chips
            .get(rank)
            .copied()
            .ok_or(TrafficError::UnmappedRank(rank))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Forward,
    Backward,
    GradSync,
}

/// Event timing of the synthetic iteration.
///
/// Each pass is a sequence of `micro_batches * layers / pp` slots. Inside a
/// slot, tensor and context traffic start at the slot base and expert traffic
/// (dispatch and combine) starts `cp_ep_gap_ms` later. With `slot_ms` at least
/// twice the gap, expert traffic also ends a full gap before the next slot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Timeline {
    pub slot_ms: f64,
    pub cp_ep_gap_ms: f64,
}

impl Default for Timeline {
    fn default() -> Self {
        Timeline {
            slot_ms: 12.0,
            cp_ep_gap_ms: 6.0,
        }
    }
}

/// Emits the demands of one phase of a training iteration.
///
/// Per event, every member of a group sends the row volume: ring patterns to
/// the group successor, all-to-all split evenly over the other members,
/// pipeline transfers to the next (forward) or previous (backward) stage.
pub fn synthesize_traffic(
    spec: &ParallelismSpec,
    groups: &ProcessGroupSet,
    placement: &Placement,
    phase: Phase,
    timeline: &Timeline,
) -> Result<TrafficPattern, TrafficError> {
    spec.validate()?;
    for rank in 0..groups.ranks {
        placement.chip(rank)?;
    }
    let m = &spec.model;
    let slots = (m.micro_batches * m.layers / spec.pp as u64) as usize;
    let stage_slots = (m.layers / spec.pp as u64) as usize;
    let bytes = |kind: Parallelism| {
        (spec.volume_and_frequency(kind).0 * spec.bytes_per_element as f64).round() as u64
    };
    let mut out = TrafficPattern::default();
    let mut emit = |kind: Parallelism, time_ms: f64, reverse: bool| -> Result<(), TrafficError> {
        let volume = bytes(kind);
        if volume == 0 {
            return Ok(());
        }
        for group in groups.family(kind) {
            let g = group.len();
            if g < 2 {
                continue;
            }
            let mut push = |s: usize, d: usize, b: u64| -> Result<(), TrafficError> {
                out.demands.push(Demand {
                    time_ms,
                    src: placement.chip(s)?,
                    dst: placement.chip(d)?,
                    bytes: b,
                    kind,
                });
                Ok(())
            };
            match kind {
                Parallelism::Expert => {
                    let share = volume / (g as u64 - 1);
                    for &s in group {
                        for &d in group.iter().filter(|&&d| d != s) {
                            push(s, d, share)?;
                        }
                    }
                }
                Parallelism::Pipeline => {
                    for w in group.windows(2) {
                        let (s, d) = if reverse { (w[1], w[0]) } else { (w[0], w[1]) };
                        push(s, d, volume)?;
                    }
                }
                _ => {
                    for (i, &s) in group.iter().enumerate() {
                        push(s, group[(i + 1) % g], volume)?;
                    }
                }
            }
        }
        Ok(())
    };

    let gap = timeline.cp_ep_gap_ms;
    match phase {
        Phase::Forward | Phase::Backward => {
            let reverse = phase == Phase::Backward;
            let offset = if reverse { slots } else { 0 };
            for s in 0..slots {
                let base = (offset + s) as f64 * timeline.slot_ms;
                emit(Parallelism::TensorAttention, base, false)?;
                emit(Parallelism::TensorAttention, base, false)?;
                emit(Parallelism::Context, base, false)?;
                for _ in 0..2 {
                    emit(Parallelism::Expert, base + gap, false)?;
                    emit(Parallelism::TensorExpert, base + gap, false)?;
                }
                if (s + 1) % stage_slots == 0 {
                    emit(Parallelism::Pipeline, base + timeline.slot_ms, reverse)?;
                }
            }
        }
        Phase::GradSync => {
            let t = 2.0 * slots as f64 * timeline.slot_ms;
            emit(Parallelism::DataVocab, t, false)?;
            for _ in 0..stage_slots {
                emit(Parallelism::DataQkv, t, false)?;
                emit(Parallelism::DataFfn, t, false)?;
            }
        }
    }
    out.sort_by_time();
    Ok(out)
}
