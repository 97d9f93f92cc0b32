//! Traffic synthesis: synthetic destination patterns for the simulator and
//! timed demand lists derived from training parallelism.

mod parallel;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topo::{ChipCoord, LocalCoord, LogicalTopology, NodeCoord};

pub use parallel::{
    build_groups, synthesize_traffic, ModelSpec, Parallelism, ParallelismSpec, Phase, Placement,
    ProcessGroupSet, Timeline,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrafficError {
    #[error("invalid parallelism: {0}")]
    InvalidSpec(String),
    #[error("{ranks} ranks do not fit on {chips} chips")]
    TooManyRanks { ranks: usize, chips: usize },
    #[error("rank {0} has no chip")]
    UnmappedRank(usize),
    #[error("pattern {0} needs {1}")]
    Unsupported(&'static str, &'static str),
}

/// Destination distribution for synthetic injection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SyntheticPattern {
    /// Every other chip equally likely.
    Uniform,
    /// Chip at global position `(i, j)` sends to `(j, i)`; needs a square chip grid.
    Transpose,
    /// Bit reversal of the chip index, folded into range when N is not a power of two.
    BitReverse,
    /// `fraction` of packets go to a uniformly chosen chip of node `node`.
    Hotspot { fraction: f64, node: NodeCoord },
}

impl SyntheticPattern {
    pub fn name(&self) -> &'static str {
        match self {
            SyntheticPattern::Uniform => "uniform",
            SyntheticPattern::Transpose => "transpose",
            SyntheticPattern::BitReverse => "bit-reverse",
            SyntheticPattern::Hotspot { .. } => "hotspot",
        }
    }

    pub fn validate(&self, topo: &LogicalTopology) -> Result<(), TrafficError> {
        match self {
            SyntheticPattern::Transpose if topo.width != topo.height => {
                Err(TrafficError::Unsupported("transpose", "a square node grid"))
            }
            SyntheticPattern::Hotspot { fraction, node } => {
                if !(0.0..=1.0).contains(fraction) {
                    return Err(TrafficError::InvalidSpec(
                        "hotspot fraction outside [0, 1]".into(),
                    ));
                }
                if node.x as u32 >= topo.width || node.y as u32 >= topo.height {
                    return Err(TrafficError::InvalidSpec(format!(
                        "hotspot node {node:?} outside the grid"
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Destination chip index for a packet from `src`, or `None` when the
    /// pattern maps `src` onto itself.
    pub fn destination<R: Rng>(
        &self,
        topo: &LogicalTopology,
        src: usize,
        rng: &mut R,
    ) -> Option<usize> {
        let chips = topo.chip_count();
        if chips < 2 {
            return None;
        }
        let uniform = |rng: &mut R| {
            let d = rng.gen_range(0..chips - 1);
            if d >= src {
                d + 1
            } else {
                d
            }
        };
        let dst = match self {
            SyntheticPattern::Uniform => uniform(rng),
            SyntheticPattern::Transpose => {
                let (gx, gy) = global_position(topo, src);
                from_global(topo, gy, gx)
            }
            SyntheticPattern::BitReverse => {
                let bits = usize::BITS - (chips - 1).leading_zeros();
                
                (src.reverse_bits() >> (usize::BITS - bits)) % chips
            }
            SyntheticPattern::Hotspot { fraction, node } => {
                if rng.gen_bool(*fraction) {
                    let m = topo.mesh as usize;
                    let l = rng.gen_range(0..m * m);
                    let local = LocalCoord::new((l % m) as u16, (l / m) as u16);
                    topo.chip_index(ChipCoord { node: *node, local })
                } else {
                    uniform(rng)
                }
            }
        };
        (dst != src).then_some(dst)
    }
}

/// Chip position in the global `(width*m) x (height*m)` chip grid.
pub fn global_position(topo: &LogicalTopology, chip: usize) -> (u32, u32) {
    let c = topo.chip_at(chip);
    let m = topo.mesh;
    (
        c.node.x as u32 * m + c.local.x as u32,
        c.node.y as u32 * m + c.local.y as u32,
    )
}

fn from_global(topo: &LogicalTopology, gx: u32, gy: u32) -> usize {
    let m = topo.mesh;
    topo.chip_index(ChipCoord::new(
        (gx / m) as u16,
        (gy / m) as u16,
        (gx % m) as u16,
        (gy % m) as u16,
    ))
}

/// One timed point-to-point transfer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Demand {
    pub time_ms: f64,
    pub src: ChipCoord,
    pub dst: ChipCoord,
    pub bytes: u64,
    pub kind: Parallelism,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrafficPattern {
    pub demands: Vec<Demand>,
}

impl TrafficPattern {
    pub fn total_bytes(&self) -> u64 {
        self.demands.iter().map(|d| d.bytes).sum()
    }

    pub fn bytes_of(&self, kind: Parallelism) -> u64 {
        self.demands
            .iter()
            .filter(|d| d.kind == kind)
            .map(|d| d.bytes)
            .sum()
    }

    /// Demand start times converted to simulator cycles.
    pub fn cycle_of(&self, demand: &Demand, cycles_per_ms: f64) -> u64 {
        (demand.time_ms * cycles_per_ms).round() as u64
    }

    pub fn sort_by_time(&mut self) {
        self.demands.sort_by(|a, b| a.time_ms.total_cmp(&b.time_ms));
    }
}

/// Every chip sends `bytes` to every other chip at time zero.
pub fn uniform_all_to_all(topo: &LogicalTopology, bytes: u64) -> TrafficPattern {
    let chips = topo.chip_count();
    let mut demands = Vec::with_capacity(chips * chips.saturating_sub(1));
    for s in 0..chips {
        for d in (0..chips).filter(|&d| d != s) {
            demands.push(Demand {
                time_ms: 0.0,
                src: topo.chip_at(s),
                dst: topo.chip_at(d),
                bytes,
                kind: Parallelism::Synthetic,
            });
        }
    }
    TrafficPattern { demands }
}

/// The permutation (or, for hotspot, expected-rate) demand set of a pattern:
/// one demand of `bytes` per chip, hotspot demands drawn with `rng`.
pub fn adversarial_pattern<R: Rng>(
    topo: &LogicalTopology,
    kind: &SyntheticPattern,
    bytes: u64,
    rng: &mut R,
) -> Result<TrafficPattern, TrafficError> {
    kind.validate(topo)?;
    let demands = (0..topo.chip_count())
        .filter_map(|s| {
            kind.destination(topo, s, rng).map(|d| Demand {
                time_ms: 0.0,
                src: topo.chip_at(s),
                dst: topo.chip_at(d),
                bytes,
                kind: Parallelism::Synthetic,
            })
        })
        .collect();
    Ok(TrafficPattern { demands })
}
