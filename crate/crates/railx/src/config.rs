//! Declarative experiment files (TOML) and the bundled presets.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::avail::FaultSet;
use crate::cost::{CostParams, Family, PriceBook};
use crate::perf::{AllReduceModel, AllocationProblem, DynamicScenario, LinkModel, SequencePlan};
use crate::route::RoutingPolicy;
use crate::sim::SimParams;
use crate::topo::{
    build_dragonfly, build_hyperx, build_torus, split_dimensions, AxisSplit, DimensionSplitSpec, FabricSpec,
    LogicalTopology, TopoError,
};
use crate::traffic::{ModelSpec, ParallelismSpec, Phase, SyntheticPattern, Timeline};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("{0}")]
    Invalid(String),
    #[error("missing [{0}] section")]
    Missing(&'static str),
}

/// Logical topology to build on the fabric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TopologySpec {
    Torus,
    Hyperx,
    Dragonfly { local_radix: u32, global_radix: u32 },
    Split { x: AxisSplit, y: AxisSplit },
    SingleNode,
}

pub fn build_topology(fabric: &FabricSpec, spec: &TopologySpec) -> Result<LogicalTopology, TopoError> {
    match spec {
        TopologySpec::Torus => build_torus(fabric),
        TopologySpec::Hyperx => build_hyperx(fabric),
        TopologySpec::Dragonfly { local_radix, global_radix } => build_dragonfly(fabric, *local_radix, *global_radix),
        TopologySpec::Split { x, y } => {
            split_dimensions(fabric, &DimensionSplitSpec { x: x.clone(), y: y.clone() })
        }
        TopologySpec::SingleNode => {
            fabric.validate()?;
            Ok(LogicalTopology::single_node(fabric.mesh, fabric.ports_per_edge, fabric.bandwidth_multiple))
        }
    }
}

/// What to inject in `simulate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum TrafficSpec {
    /// Offered-load sweep; `bandwidth_multiples` repeats it per mesh multiple.
    Synthetic {
        pattern: SyntheticPattern,
        loads: Vec<f64>,
        #[serde(default)]
        bandwidth_multiples: Vec<f64>,
    },
    /// One training phase placed linearly on the topology.
    Training {
        parallelism: ParallelismSpec,
        phase: Phase,
        #[serde(default)]
        timeline: Timeline,
    },
}

/// All-Reduce time sweep for `model`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollectiveSweep {
    pub link: LinkModel,
    pub models: Vec<AllReduceModel>,
    /// Nodes per ring dimension.
    pub scales: Vec<u64>,
    /// All-Reduce sizes in bytes.
    pub sizes: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub label: String,
    #[serde(flatten)]
    pub family: Family,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    #[serde(default)]
    pub prices: PriceBook,
    #[serde(default)]
    pub params: CostParams,
    /// Defaults to the standard comparison rows.
    #[serde(default)]
    pub rows: Vec<CostRow>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AllocationSpec {
    #[serde(rename = "static")]
    pub fixed: Option<AllocationProblem>,
    pub dynamic: Option<DynamicScenario>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AvailabilitySweep {
    pub grids: Vec<u32>,
    pub rates: Vec<f64>,
    pub samples: usize,
    /// Explicit fault set evaluated (and packed) on its own.
    #[serde(default)]
    pub faults: Option<FaultSet>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub fabric: Option<FabricSpec>,
    pub topology: Option<TopologySpec>,
    /// Topology JSON written by `build`, used instead of `fabric` + `topology`.
    pub topology_file: Option<PathBuf>,
    #[serde(default)]
    pub routing: RoutingPolicy,
    #[serde(default)]
    pub sim: SimParams,
    pub traffic: Option<TrafficSpec>,
    pub collective: Option<CollectiveSweep>,
    pub cost: Option<CostSpec>,
    pub allocation: Option<AllocationSpec>,
    pub plan: Option<SequencePlan>,
    pub availability: Option<AvailabilitySweep>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|source| ConfigError::Parse { path: path.to_path_buf(), source })?;
        config.check_paths(path.parent().unwrap_or(Path::new(".")))?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let mut config = Self::from_toml(&text, path)?;
        if let (Some(file), Some(dir)) = (&config.topology_file, path.parent()) {
            config.topology_file = Some(dir.join(file));
        }
        Ok(config)
    }

    fn check_paths(&self, base: &Path) -> Result<(), ConfigError> {
        if let Some(file) = &self.topology_file {
            let resolved = base.join(file);
            if !resolved.exists() {
                return Err(ConfigError::Invalid(format!("topology_file {} does not exist", resolved.display())));
            }
        }
        Ok(())
    }

    /// The fabric as a full spec, or an error naming the missing section.
    pub fn fabric(&self) -> Result<&FabricSpec, ConfigError> {
        self.fabric.as_ref().ok_or(ConfigError::Missing("fabric"))
    }

    pub fn topology(&self) -> Result<LogicalTopology, ConfigError> {
        if let Some(file) = &self.topology_file {
            let text = std::fs::read_to_string(file).map_err(|source| ConfigError::Io { path: file.clone(), source })?;
            let topo: LogicalTopology =
                serde_json::from_str(&text).map_err(|e| ConfigError::Invalid(format!("{}: {e}", file.display())))?;
            topo.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
            return Ok(topo);
        }
        let spec = self.topology.as_ref().ok_or(ConfigError::Missing("topology"))?;
        build_topology(self.fabric()?, spec).map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Uniform all-to-all load sweep on the 1296-chip HyperX.
    Fig11a,
    /// The same sweep at mesh bandwidth multiples 1, 2 and 4.
    Fig11b,
    /// All-Reduce times by algorithm, scale and size.
    Fig12,
    /// CP/DP port split across sequence lengths.
    Fig13,
    /// Cost comparison rows.
    Table5,
    /// Single-job availability under random node faults.
    Availability,
}

impl Preset {
    pub const ALL: [Preset; 6] =
        [Preset::Fig11a, Preset::Fig11b, Preset::Fig12, Preset::Fig13, Preset::Table5, Preset::Availability];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig11a => "fig11a",
            Preset::Fig11b => "fig11b",
            Preset::Fig12 => "fig12",
            Preset::Fig13 => "fig13",
            Preset::Table5 => "table5",
            Preset::Availability => "availability",
        }
    }

    pub fn config(self) -> ExperimentConfig {
        let base = ExperimentConfig { seed: Some(1), ..ExperimentConfig::default() };
        match self {
            Preset::Fig11a | Preset::Fig11b => ExperimentConfig {
                fabric: Some(FabricSpec { mesh: 4, ports_per_edge: 2, bandwidth_multiple: 2.0, ocs_radix: 128, grid: 9 }),
                topology: Some(TopologySpec::Hyperx),
                traffic: Some(TrafficSpec::Synthetic {
                    pattern: SyntheticPattern::Uniform,
                    loads: (1..=10).map(|i| i as f64 / 10.0).collect(),
                    bandwidth_multiples: if self == Preset::Fig11b { vec![1.0, 2.0, 4.0] } else { Vec::new() },
                }),
                ..base
            },
            Preset::Fig12 => ExperimentConfig { collective: Some(fig12_sweep()), ..base },
            Preset::Fig13 => ExperimentConfig { plan: Some(fig13_plan()), ..base },
            Preset::Table5 => ExperimentConfig { cost: Some(CostSpec::default()), ..base },
            Preset::Availability => ExperimentConfig {
                availability: Some(AvailabilitySweep {
                    grids: vec![16, 32, 64],
                    rates: (0..=8).map(|i| i as f64 * 0.0025).collect(),
                    samples: 100,
                    faults: None,
                }),
                ..base
            },
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| ConfigError::Invalid(format!("unknown preset {s:?}")))
    }
}

/// 4 ports per chip, 100 GB/s external and 400 GB/s internal per port,
/// 300 ns per external hop and 10 ns per internal hop.
pub fn fig12_link() -> LinkModel {
    LinkModel {
        alpha: 300e-9,
        alpha_local: 10e-9,
        port_bw: 100e9,
        ports_per_edge: 1,
        bandwidth_multiple: 4.0,
        mesh: 4,
    }
}

pub fn fig12_sweep() -> CollectiveSweep {
    CollectiveSweep {
        link: fig12_link(),
        models: vec![AllReduceModel::Ring1d, AllReduceModel::Ring2d, AllReduceModel::Hierarchical],
        scales: vec![2, 4, 8, 16],
        sizes: (0..=14).map(|i| 1e6 * 2f64.powi(i)).chain((0..=4).map(|i| 1e9 * 2f64.powi(i))).collect(),
    }
}

/// A 405B-class dense model: H = 16384, 126 layers, 128 query and 8 KV
/// heads, FFN width 53248, TP 8 and 16 micro-batches; 10 ports per edge.
pub fn fig13_plan() -> SequencePlan {
    let model = ModelSpec {
        layers: 126,
        micro_batch: 1,
        micro_batches: 16,
        seq_len: 8192,
        hidden: 16384,
        vocab: 128_256,
        heads_attn: 128,
        heads_kv: 8,
        ffn: 53248,
        top_k: 0,
    };
    SequencePlan {
        parallelism: ParallelismSpec { tp: 8, cp: 4, ep: 1, dp_expert: 8, pp: 9, model, bytes_per_element: 2 },
        budget: 10,
        port_bw: 100e9,
        dp_overlap: 0.0,
        seq_lens: (13..=17).map(|e| 1u64 << e).collect(),
    }
}
