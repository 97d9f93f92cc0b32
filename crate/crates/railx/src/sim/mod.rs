//! Cycle-based flit-level simulator with virtual cut-through switching and
//! credit-based flow control.
//!
//! Timing model: a flit that reaches a router at cycle `t` may leave it at
//! `t + pipeline_depth`. Links add `intra_latency` (mesh) or `inter_latency`
//! (rail) cycles and carry a fixed number of flits per cycle ("lanes"). A
//! packet claims an output VC only when the VC is free and all of its flits
//! fit in the downstream buffer; it keeps the VC until its tail leaves.

mod engine;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::Exec;
use crate::route::{Network, RouteError, Router, RoutingPolicy};
use crate::topo::LogicalTopology;
use crate::traffic::{SyntheticPattern, TrafficError, TrafficPattern};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation parameters: {0}")]
    InvalidParams(String),
    #[error("routing policy needs {needed} VCs, only {available} configured")]
    VcShortfall { needed: usize, available: usize },
    #[error(transparent)]
    Route(#[from] RouteError),
    #[error(transparent)]
    Traffic(#[from] TrafficError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    /// Flits per packet.
    pub packet_length: u32,
    /// Flits of buffering per input VC.
    pub buffer_per_vc: u32,
    /// Flits per cycle on an inter-node link.
    pub base_link_bw: u32,
    /// Intra-node bandwidth multiple `k`; a mesh link carries
    /// `round(k * ports_per_edge) * base_link_bw` flits per cycle.
    pub intra_bw_multiple: f64,
    pub intra_latency: u32,
    pub inter_latency: u32,
    pub pipeline_depth: u32,
    pub warmup: u64,
    pub measure: u64,
    /// Physical VCs per routing level.
    pub vcs_per_level: u32,
    /// Total VCs per channel; `None` means levels times `vcs_per_level`.
    pub total_vcs: Option<u32>,
    /// A packet in the network longer than this multiple of the worst
    /// zero-load latency trips the watchdog.
    pub watchdog_factor: f64,
    /// Bytes per flit, used to packetize traces.
    pub flit_bytes: u64,
    /// Simulator cycles per trace millisecond.
    pub cycles_per_ms: f64,
    /// Hard stop for trace runs.
    pub max_cycles: u64,
    pub seed: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            packet_length: 4,
            buffer_per_vc: 16,
            base_link_bw: 1,
            intra_bw_multiple: 2.0,
            intra_latency: 1,
            inter_latency: 10,
            pipeline_depth: 2,
            warmup: 5000,
            measure: 10000,
            vcs_per_level: 2,
            total_vcs: None,
            watchdog_factor: 50.0,
            flit_bytes: 64,
            cycles_per_ms: 1000.0,
            max_cycles: 5_000_000,
            seed: 1,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: &str| Err(SimError::InvalidParams(msg.into()));
        if self.packet_length == 0 || self.buffer_per_vc == 0 || self.base_link_bw == 0 {
            return bad("packet length, buffers and link bandwidth must be positive");
        }
        if self.buffer_per_vc < self.packet_length {
            return bad("virtual cut-through needs buffer_per_vc >= packet_length");
        }
        if !(self.intra_bw_multiple > 0.0) || self.intra_bw_multiple.is_infinite() {
            return bad("intra_bw_multiple must be positive");
        }
        if self.intra_latency == 0 || self.inter_latency == 0 || self.pipeline_depth == 0 {
            return bad("latencies and pipeline depth must be positive");
        }
        if self.measure == 0 {
            return bad("measurement window must be positive");
        }
        if self.vcs_per_level == 0 {
            return bad("vcs_per_level must be positive");
        }
        if !(self.watchdog_factor >= 1.0) {
            return bad("watchdog_factor must be at least 1");
        }
        if self.flit_bytes == 0 || !(self.cycles_per_ms > 0.0) {
            return bad("flit_bytes and cycles_per_ms must be positive");
        }
        Ok(())
    }

    pub fn mesh_lanes(&self, ports_per_edge: u32) -> u32 {
        ((self.intra_bw_multiple * ports_per_edge as f64).round() as u32).max(1) * self.base_link_bw
    }

    /// Injection and ejection flits per cycle per chip: one lane per edge port.
    pub fn endpoint_lanes(&self, ports_per_edge: u32) -> u32 {
        4 * ports_per_edge * self.base_link_bw
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Workload {
    /// Bernoulli injection at `load` flits/cycle/chip.
    Synthetic {
        pattern: SyntheticPattern,
        load: f64,
    },
    /// Timed demands, run until every flit is delivered.
    Trace(TrafficPattern),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Utilization {
    pub mesh_mean: f64,
    pub rail_mean: f64,
    pub rail_max: f64,
    /// Busy fraction of each channel's lanes, indexed like `Network::channels`.
    pub per_channel: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub pattern: String,
    /// Requested load, flits/cycle/chip.
    pub offered: f64,
    /// Flits generated during the window per chip per cycle.
    pub measured_offered: f64,
    /// Flits ejected during the window per chip per cycle.
    pub accepted: f64,
    pub latency_mean: f64,
    pub latency_p50: f64,
    pub latency_p99: f64,
    pub latency_max: f64,
    /// Packets contributing to the latency statistics.
    pub packets: u64,
    pub deadlock: bool,
    /// Cycles simulated.
    pub cycles: u64,
    /// Trace runs: cycle at which the last flit was delivered.
    pub completion_cycle: Option<u64>,
    pub flits_injected: u64,
    pub flits_delivered: u64,
    pub flits_in_flight: u64,
    pub utilization: Utilization,
    pub seed: u64,
}

impl SimReport {
    pub const CSV_HEADER: [&'static str; 11] = [
        "pattern",
        "offered",
        "measured_offered",
        "accepted",
        "latency_mean",
        "latency_p50",
        "latency_p99",
        "latency_max",
        "packets",
        "deadlock",
        "seed",
    ];

    pub fn csv_record(&self) -> Vec<String> {
        vec![
            self.pattern.clone(),
            format!("{:.4}", self.offered),
            format!("{:.6}", self.measured_offered),
            format!("{:.6}", self.accepted),
            format!("{:.3}", self.latency_mean),
            format!("{:.1}", self.latency_p50),
            format!("{:.1}", self.latency_p99),
            format!("{:.1}", self.latency_max),
            self.packets.to_string(),
            self.deadlock.to_string(),
            self.seed.to_string(),
        ]
    }
}

/// Writes reports as CSV, one row per report.
pub fn write_csv<W: std::io::Write>(reports: &[SimReport], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SimReport::CSV_HEADER)?;
    for r in reports {
        w.write_record(r.csv_record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn run_simulation(
    topology: &LogicalTopology,
    policy: &RoutingPolicy,
    workload: &Workload,
    params: &SimParams,
) -> Result<SimReport, SimError> {
    let net = Network::new(topology);
    let router = Router::new(&net, *policy)?;
    run_on(&router, workload, params)
}

/// Runs on an already-built router, so sweeps can share the network.
pub fn run_on(
    router: &Router<'_>,
    workload: &Workload,
    params: &SimParams,
) -> Result<SimReport, SimError> {
    params.validate()?;
    let levels = router.vc_levels();
    let total = params
        .total_vcs
        .map_or(levels * params.vcs_per_level as usize, |v| v as usize);
    if total < levels {
        return Err(SimError::VcShortfall {
            needed: levels,
            available: total,
        });
    }
    if let Workload::Synthetic { pattern, load } = workload {
        pattern.validate(&router.network().topology)?;
        if !(0.0..=params.packet_length as f64).contains(load) {
            return Err(SimError::InvalidParams(format!(
                "offered load {load} outside [0, packet_length]"
            )));
        }
    }
    engine::Engine::new(router, params, total / levels, workload)?.run()
}

/// Closed-form latency of one packet on an idle network over `route`:
/// per-hop pipeline plus link latency, the injection pipeline, and the tail
/// trailing the head by the serialization of the narrowest lane.
pub fn zero_load_latency(
    params: &SimParams,
    ports_per_edge: u32,
    inter_hops: u32,
    mesh_hops: u32,
) -> u64 {
    let p = params.pipeline_depth as u64;
    let mut width = params.endpoint_lanes(ports_per_edge);
    if mesh_hops > 0 {
        width = width.min(params.mesh_lanes(ports_per_edge));
    }
    if inter_hops > 0 {
        width = width.min(params.base_link_bw);
    }
    let l = params.packet_length as u64;
    inter_hops as u64 * (p + params.inter_latency as u64)
        + mesh_hops as u64 * (p + params.intra_latency as u64)
        + p
        + l.div_ceil(width as u64)
        - 1
}

/// One report per offered load of a synthetic pattern. `on_report` sees each
/// report as soon as it is available, in load order when sequential.
pub fn sweep_load<F>(
    topology: &LogicalTopology,
    policy: &RoutingPolicy,
    pattern: &SyntheticPattern,
    loads: &[f64],
    params: &SimParams,
    exec: Exec,
    on_report: F,
) -> Result<Vec<SimReport>, SimError>
where
    F: Fn(&SimReport) + Sync + Send,
{
    if loads.windows(2).any(|w| w[1] < w[0]) {
        return Err(SimError::InvalidParams(
            "loads must be nondecreasing".into(),
        ));
    }
    let net = Network::new(topology);
    let router = Router::new(&net, *policy)?;
    let results = exec.map(loads, |&load| {
        let workload = Workload::Synthetic {
            pattern: pattern.clone(),
            load,
        };
        let r = run_on(&router, &workload, params);
        if let Ok(rep) = &r {
            on_report(rep);
        }
        r
    });
    results.into_iter().collect()
}
