//! Port split between context and data parallelism across sequence lengths.

use serde::{Deserialize, Serialize};

use super::{allocate_bandwidth, AllocationProblem, Objective, PerfError};
use crate::traffic::{Parallelism, ParallelismSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequencePlan {
    pub parallelism: ParallelismSpec,
    /// Ports per edge shared by the CP and DP dimensions.
    pub budget: u32,
    pub port_bw: f64,
    /// Backward compute that DP gradient traffic may overlap with (seconds).
    #[serde(default)]
    pub dp_overlap: f64,
    pub seq_lens: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanRow {
    pub seq_len: u64,
    pub cp_bytes: f64,
    pub dp_bytes: f64,
    pub cp_ports: u32,
    pub dp_ports: u32,
    pub objective: f64,
}

pub const PLAN_CSV_HEADER: [&str; 6] = ["seq_len", "cp_bytes", "dp_bytes", "cp_ports", "dp_ports", "objective_s"];

impl PlanRow {
    pub fn csv_record(&self) -> [String; 6] {
        [
            self.seq_len.to_string(),
            format!("{:.6e}", self.cp_bytes),
            format!("{:.6e}", self.dp_bytes),
            self.cp_ports.to_string(),
            self.dp_ports.to_string(),
            format!("{:.6e}", self.objective),
        ]
    }
}

fn iteration_bytes(spec: &ParallelismSpec, kinds: &[Parallelism]) -> f64 {
    kinds
        .iter()
        .map(|&k| {
            let (elems, events) = spec.volume_and_frequency(k);
            elems * events * spec.bytes_per_element as f64
        })
        .sum()
}

/// Optimal CP/DP split for each sequence length, minimizing the
/// overlap-aware total time.
pub fn plan_sequence_sweep(plan: &SequencePlan) -> Result<Vec<PlanRow>, PerfError> {
    plan.parallelism
        .validate()
        .map_err(|e| PerfError::InvalidParams(e.to_string()))?;
    plan.seq_lens
        .iter()
        .map(|&seq_len| {
            let mut spec = plan.parallelism.clone();
            spec.model.seq_len = seq_len;
            let cp_bytes = iteration_bytes(&spec, &[Parallelism::Context]);
            let dp_bytes =
                iteration_bytes(&spec, &[Parallelism::DataVocab, Parallelism::DataQkv, Parallelism::DataFfn]);
            let alloc = allocate_bandwidth(&AllocationProblem {
                volumes: vec![cp_bytes, dp_bytes],
                overlap: vec![0.0, plan.dp_overlap],
                budget: plan.budget,
                port_bw: plan.port_bw,
                objective: Objective::OverlapAware,
            })?;
            Ok(PlanRow {
                seq_len,
                cp_bytes,
                dp_bytes,
                cp_ports: alloc.ports[0],
                dp_ports: alloc.ports[1],
                objective: alloc.objective,
            })
        })
        .collect()
}
