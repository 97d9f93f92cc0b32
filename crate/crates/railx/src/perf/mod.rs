//! Closed-form performance models: all-to-all throughput bounds, ring and
//! all-to-all collective times, and bandwidth allocation across dimensions.
//!
//! Times are in seconds, volumes in bytes, bandwidths in bytes/second. Each
//! composite collective has an exact form built from the ring primitives and
//! the leading-order approximation that drops `o(p)` terms and mesh latency.

mod alloc;
mod plan;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topo::{FabricSpec, TopologyKind};

pub use alloc::{
    allocate_bandwidth, dynamic_allocation_eval, enumerate_allocations, Allocation, AllocationProblem,
    DynamicReport, DynamicScenario, Objective,
};
pub use plan::{plan_sequence_sweep, PlanRow, SequencePlan, PLAN_CSV_HEADER};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerfError {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("unknown collective model {0:?}")]
    UnknownModel(String),
    #[error("infeasible port budget: {budget} ports for {dims} dimensions")]
    InfeasibleBudget { budget: u32, dims: usize },
    #[error("no throughput bound for {0:?}")]
    NoBound(TopologyKind),
}

/// All-to-all throughput bound in flits/cycle/chip.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThroughputBound {
    pub exact: f64,
    pub approx: f64,
}

/// Bisection bound of uniform all-to-all traffic on the fabric, normalized to
/// one flit/cycle per inter-node port.
pub fn throughput_bound(kind: TopologyKind, spec: &FabricSpec) -> Result<ThroughputBound, PerfError> {
    let (m, n) = (spec.mesh as f64, spec.ports_per_edge as f64);
    let r = spec.rails() as f64;
    let g = spec.grid as f64;
    match kind {
        TopologyKind::Torus => {
            // 2 B_c / N on a g x g node torus; with g = R/2 this is 16n/(Rm)
            let v = 8.0 * n / (g * m);
            Ok(ThroughputBound { exact: v, approx: v })
        }
        TopologyKind::HyperX => {
            // rows of g nodes, 2a links per pair, a = r / (g - 1)
            let a = r / (g - 1.0);
            Ok(ThroughputBound { exact: 2.0 * a * g / (m * m), approx: 2.0 * n / m })
        }
        TopologyKind::Dragonfly => Ok(ThroughputBound { exact: 2.0 * r / (m * m), approx: 2.0 * n / m }),
        other => Err(PerfError::NoBound(other)),
    }
}

/// Whether the node mesh keeps up with its edge ports: `2kmn / 4mn > 1`.
pub fn mesh_non_bottleneck(k: f64) -> bool {
    2.0 * k / 4.0 > 1.0
}

/// Link and fabric parameters shared by the collective models.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    /// Per-step latency of an inter-node hop.
    pub alpha: f64,
    /// Per-step latency of an intra-node hop.
    pub alpha_local: f64,
    /// Per-port inter-node bandwidth.
    pub port_bw: f64,
    /// Ports per chip edge.
    pub ports_per_edge: u32,
    /// Intra-node bandwidth multiple.
    pub bandwidth_multiple: f64,
    /// Mesh side.
    pub mesh: u32,
}

impl LinkModel {
    pub fn validate(&self) -> Result<(), PerfError> {
        let ok = self.alpha >= 0.0
            && self.alpha_local >= 0.0
            && self.port_bw > 0.0
            && self.ports_per_edge > 0
            && self.bandwidth_multiple > 0.0
            && self.mesh > 0
            && self.port_bw.is_finite()
            && self.alpha.is_finite();
        if ok {
            Ok(())
        } else {
            Err(PerfError::InvalidParams(format!("{self:?}")))
        }
    }

    fn edge_bw(&self) -> f64 {
        self.ports_per_edge as f64 * self.port_bw
    }
}

/// Bidirectional ring reduce-scatter (or all-gather) over `p` ranks.
pub fn t_ring(p: u64, volume: f64, bw: f64, alpha: f64) -> f64 {
    if p <= 1 {
        return 0.0;
    }
    let p = p as f64;
    (p - 1.0) * alpha + (p - 1.0) / p * volume / (2.0 * bw)
}

/// Direct all-to-all reduce-scatter (or all-gather) over `p` ranks.
pub fn t_direct(p: u64, volume: f64, bw: f64, alpha: f64) -> f64 {
    if p <= 1 {
        return 0.0;
    }
    let p = p as f64;
    alpha + (p - 1.0) / p * volume / (2.0 * bw)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AllReduceModel {
    /// One ring through every chip, both directions on two ports per edge.
    Ring1d,
    /// Two data halves reduced along X and Y rings of `m p` chips.
    Ring2d,
    /// Mesh-local reduction, then a 2D ring among nodes sharing rails.
    Hierarchical,
    /// Mesh-local reduction, then direct exchange over HyperX rows and columns.
    A2aHyperx,
    /// Ring among `p` nodes, bandwidth shared by `m` chips per rail.
    Node1d,
    /// 2D ring among `p x p` nodes, bandwidth shared by `m` chips per rail.
    Node2d,
}

impl AllReduceModel {
    pub const ALL: [AllReduceModel; 6] = [
        AllReduceModel::Ring1d,
        AllReduceModel::Ring2d,
        AllReduceModel::Hierarchical,
        AllReduceModel::A2aHyperx,
        AllReduceModel::Node1d,
        AllReduceModel::Node2d,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AllReduceModel::Ring1d => "1d-ring",
            AllReduceModel::Ring2d => "2d-ring",
            AllReduceModel::Hierarchical => "hierarchical",
            AllReduceModel::A2aHyperx => "a2a-hyperx",
            AllReduceModel::Node1d => "node-1d",
            AllReduceModel::Node2d => "node-2d",
        }
    }
}

impl std::str::FromStr for AllReduceModel {
    type Err = PerfError;

    fn from_str(s: &str) -> Result<Self, PerfError> {
        AllReduceModel::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| PerfError::UnknownModel(s.to_string()))
    }
}

/// All-Reduce time on an `m^2 x p x p` fabric (`p` nodes for the 1D models).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllReduceTime {
    pub exact: f64,
    pub approx: f64,
}

pub fn t_allreduce(model: AllReduceModel, link: &LinkModel, p: u64, volume: f64) -> Result<AllReduceTime, PerfError> {
    link.validate()?;
    if p == 0 || !(volume >= 0.0) {
        return Err(PerfError::InvalidParams(format!("scale {p}, volume {volume}")));
    }
    let m = link.mesh as u64;
    let (mf, pf) = (m as f64, p as f64);
    let a = link.alpha;
    let nb = link.edge_bw();
    let k = link.bandwidth_multiple;
    let v = volume;
    let shared = nb / mf;
    let t = match model {
        AllReduceModel::Ring1d => {
            let chips = m * m * p * p;
            AllReduceTime {
                exact: 2.0 * t_ring(chips, v, 2.0 * nb, a),
                approx: 2.0 * chips as f64 * a + v / (2.0 * nb),
            }
        }
        AllReduceModel::Ring2d => {
            let ranks = m * p;
            AllReduceTime {
                exact: 2.0 * (t_ring(ranks, v / 2.0, nb, a) + t_ring(ranks, v / (2.0 * ranks as f64), nb, a)),
                approx: 4.0 * mf * pf * a + v / (2.0 * nb),
            }
        }
        AllReduceModel::Hierarchical => {
            let local = 2.0 * v / (2.0 * k * nb);
            let vloc = v / (mf * mf);
            let global = 2.0 * (t_ring(p, vloc / 2.0, shared, a) + t_ring(p, vloc / (2.0 * pf), shared, a));
            AllReduceTime { exact: local + global, approx: 4.0 * pf * a + (2.0 / k + 1.0 / mf) * v / (2.0 * nb) }
        }
        AllReduceModel::A2aHyperx => {
            let local = (mf * mf - 1.0) / (mf * mf) * v / (k * nb);
            let global = 2.0
                * (t_direct(p, v / (2.0 * mf * mf), shared, a) + t_direct(m * p, v / (2.0 * mf * mf * pf), shared, a));
            AllReduceTime { exact: local + global, approx: 4.0 * a + (2.0 / k + 1.0 / mf) * v / (2.0 * nb) }
        }
        AllReduceModel::Node1d => {
            AllReduceTime { exact: 2.0 * t_ring(p, v, shared, a), approx: 2.0 * pf * a + v / shared }
        }
        AllReduceModel::Node2d => AllReduceTime {
            exact: 2.0 * (t_ring(p, v / 2.0, shared, a) + t_ring(p, v / (2.0 * pf), shared, a)),
            approx: 4.0 * pf * a + v / (2.0 * shared),
        },
    };
    Ok(t)
}

/// Multi-dimensional node-level All-Reduce: reduce-scatter through the
/// dimensions in order, all-gather back. Dimension `i` spans `scale` nodes
/// with `ports` ports per chip edge, shared by `m` chips per rail.
pub fn t_allreduce_hd(link: &LinkModel, dims: &[(u64, u32)], volume: f64) -> Result<f64, PerfError> {
    link.validate()?;
    if dims.iter().any(|&(s, n)| s == 0 || n == 0) {
        return Err(PerfError::InvalidParams("dimension scale and ports must be positive".into()));
    }
    let m = link.mesh as f64;
    let mut chunk = volume;
    let mut total = 0.0;
    for &(scale, ports) in dims {
        let bw = ports as f64 * link.port_bw / m;
        total += 2.0 * t_ring(scale, chunk, bw, link.alpha);
        chunk /= scale as f64;
    }
    Ok(total)
}

/// Bandwidth coefficients of the hierarchical and 2D-ring approximations, in
/// units of `V / 2nB`.
pub fn bandwidth_terms(k: f64, m: u32) -> (f64, f64) {
    (2.0 / k + 1.0 / m as f64, 1.0)
}

/// Crossover between the hierarchical and 2D-ring approximate times.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crossover {
    /// Volume where the approximations meet, if one exists at positive V.
    pub volume: Option<f64>,
    /// Whether the hierarchical algorithm wins above the crossover (or
    /// everywhere when there is none).
    pub hierarchical_wins_large: bool,
    pub hierarchical_wins_small: bool,
}

pub fn crossover(link: &LinkModel, p: u64) -> Result<Crossover, PerfError> {
    link.validate()?;
    let (c_h, c_r) = bandwidth_terms(link.bandwidth_multiple, link.mesh);
    let nb = link.edge_bw();
    let (mf, pf) = (link.mesh as f64, p as f64);
    let lat_h = 4.0 * pf * link.alpha;
    let lat_r = 4.0 * mf * pf * link.alpha;
    let (slope_h, slope_r) = (c_h / (2.0 * nb), c_r / (2.0 * nb));
    let volume = if slope_h != slope_r {
        let v = (lat_r - lat_h) / (slope_h - slope_r);
        (v > 0.0).then_some(v)
    } else {
        None
    };
    Ok(Crossover {
        volume,
        hierarchical_wins_large: slope_h < slope_r || (slope_h == slope_r && lat_h < lat_r),
        hierarchical_wins_small: lat_h < lat_r || (lat_h == lat_r && slope_h < slope_r),
    })
}
