//! Component counts and dollar cost of datacenter fabrics at a fixed
//! per-chip off-package bandwidth, plus maximum-scale formulas.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("invalid {family} parameters: {reason}")]
    InvalidParams { family: &'static str, reason: String },
}

fn invalid(family: &'static str, reason: impl Into<String>) -> CostError {
    CostError::InvalidParams { family, reason: reason.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriceBook {
    /// Passive copper cable.
    pub pcc_usd: f64,
    /// Active optical transceiver, one per optical port.
    pub aot_usd: f64,
    pub pkt_switch_usd: f64,
    pub ocs_usd: f64,
}

impl Default for PriceBook {
    fn default() -> Self {
        PriceBook { pcc_usd: 250.0, aot_usd: 1000.0, pkt_switch_usd: 35_000.0, ocs_usd: 35_000.0 }
    }
}

impl PriceBook {
    pub fn zero() -> Self {
        PriceBook { pcc_usd: 0.0, aot_usd: 0.0, pkt_switch_usd: 0.0, ocs_usd: 0.0 }
    }

    pub fn scaled(&self, c: f64) -> Self {
        PriceBook {
            pcc_usd: self.pcc_usd * c,
            aot_usd: self.aot_usd * c,
            pkt_switch_usd: self.pkt_switch_usd * c,
            ocs_usd: self.ocs_usd * c,
        }
    }

    pub fn validate(&self) -> Result<(), CostError> {
        let all = [self.pcc_usd, self.aot_usd, self.pkt_switch_usd, self.ocs_usd];
        if all.iter().all(|p| p.is_finite() && *p >= 0.0) {
            Ok(())
        } else {
            Err(invalid("price book", format!("{self:?}")))
        }
    }
}

/// Shared assumptions: every chip exposes `chip_ports` off-package ports.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostParams {
    pub chip_ports: u32,
    pub switch_radix: u32,
    pub ocs_radix: u32,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams { chip_ports: 36, switch_radix: 64, ocs_radix: 128 }
    }
}

/// Per-tier `up:down` port ratio of a tapered switch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Taper {
    pub up: u32,
    pub down: u32,
}

impl Taper {
    pub const NONBLOCKING: Taper = Taper { up: 1, down: 1 };
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    /// One fat-tree plane per chip port. `tapers` covers every tier below the
    /// top; missing entries are non-blocking.
    FatTree { chips: u64, tiers: u32, #[serde(default)] tapers: Vec<Taper> },
    /// `board x board` chip meshes on a `grid x grid` board array; every
    /// chip row and column line of boards is joined by a non-blocking
    /// fat tree of `tiers` levels per plane.
    HammingMesh { board: u32, grid: u32, tiers: u32 },
    /// 3D torus of `cube^3` chip cubes built from 2x2 boards, `cubes` per
    /// dimension. Cube faces are optical, optionally through circuit switches.
    Torus3d { cube: u32, cubes: u32, ocs: bool },
    /// Chips on a `side x side` grid, each row and column joined by one
    /// fat-tree plane per rail.
    RailOnly { side: u32, tiers: u32 },
    /// `mesh x mesh` chip nodes on a `grid x grid` node array, rails through
    /// circuit switches.
    RailX { mesh: u32, ports_per_edge: u32, grid: u32 },
}

impl Family {
    pub fn tag(&self) -> &'static str {
        match self {
            Family::FatTree { .. } => "fat-tree",
            Family::HammingMesh { .. } => "hamming-mesh",
            Family::Torus3d { .. } => "torus3d",
            Family::RailOnly { .. } => "rail-only",
            Family::RailX { .. } => "railx",
        }
    }
}

/// Raw component counts of one fabric.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Components {
    pub chips: u64,
    pub packet_switches: u64,
    pub circuit_switches: u64,
    pub pcc: u64,
    pub aot: u64,
    /// Bisection bandwidth divided by half the total injection bandwidth.
    pub global_bw: f64,
}

impl Components {
    pub fn switches(&self) -> u64 {
        self.packet_switches + self.circuit_switches
    }

    pub fn total_usd(&self, prices: &PriceBook) -> f64 {
        self.packet_switches as f64 * prices.pkt_switch_usd
            + self.circuit_switches as f64 * prices.ocs_usd
            + self.pcc as f64 * prices.pcc_usd
            + self.aot as f64 * prices.aot_usd
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub label: String,
    pub scale: u64,
    pub switches: u64,
    pub pcc: u64,
    pub aot: u64,
    pub total_usd: f64,
    /// Cost per chip relative to the baseline; `None` when the baseline is free.
    pub cost_per_injection: Option<f64>,
    /// Global bandwidth as a percentage of injection bandwidth.
    pub global_bw_pct: f64,
    pub cost_per_gbw: Option<f64>,
}

pub const COST_CSV_HEADER: [&str; 9] = [
    "topology",
    "scale",
    "switches",
    "pcc",
    "aot",
    "cost_musd",
    "cost_per_inject",
    "global_bw_pct",
    "cost_per_gbw",
];

impl CostReport {
    pub fn csv_record(&self) -> [String; 9] {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
        [
            self.label.clone(),
            self.scale.to_string(),
            self.switches.to_string(),
            self.pcc.to_string(),
            self.aot.to_string(),
            format!("{:.1}", self.total_usd / 1e6),
            opt(self.cost_per_injection),
            format!("{:.2}", self.global_bw_pct),
            opt(self.cost_per_gbw),
        ]
    }
}

/// Switches and links of one fat-tree plane over `endpoints` hosts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct TreeCounts {
    switches: u64,
    links: u64,
}

fn fat_tree_plane(
    family: &'static str,
    endpoints: u64,
    tiers: u32,
    tapers: &[Taper],
    radix: u32,
) -> Result<(TreeCounts, f64), CostError> {
    if tiers == 0 || endpoints == 0 {
        return Err(invalid(family, "need at least one tier and one endpoint"));
    }
    if tapers.len() >= tiers as usize {
        return Err(invalid(family, format!("{} tapers for {tiers} tiers", tapers.len())));
    }
    let radix = radix as u64;
    let mut below = endpoints;
    let mut counts = TreeCounts { switches: 0, links: endpoints };
    let mut global_bw = 1.0;
    for t in 0..tiers - 1 {
        let taper = tapers.get(t as usize).copied().unwrap_or(Taper::NONBLOCKING);
        let parts = (taper.up + taper.down) as u64;
        if taper.up == 0 || taper.down == 0 || !radix.is_multiple_of(parts) {
            return Err(invalid(family, format!("taper {}:{} does not divide radix {radix}", taper.up, taper.down)));
        }
        let (down, up) = (radix / parts * taper.down as u64, radix / parts * taper.up as u64);
        let switches = below.div_ceil(down);
        counts.switches += switches;
        below = switches * up;
        counts.links += below;
        global_bw *= taper.up as f64 / taper.down as f64;
    }
    counts.switches += below.div_ceil(radix);
    Ok((counts, global_bw.min(1.0)))
}

/// Component counts under the cabling convention: AOTs at every optical
/// port (both ends of a cable, chip side only for circuit switch links),
/// PCCs for copper links between 2x2 boards, free short-reach mesh links.
pub fn components(family: &Family, params: &CostParams) -> Result<Components, CostError> {
    let ports = params.chip_ports as u64;
    match *family {
        Family::FatTree { chips, tiers, ref tapers } => {
            let (plane, global_bw) = fat_tree_plane("fat-tree", chips, tiers, tapers, params.switch_radix)?;
            Ok(Components {
                chips,
                packet_switches: plane.switches * ports,
                aot: 2 * plane.links * ports,
                global_bw,
                ..Components::default()
            })
        }
        Family::HammingMesh { board, grid, tiers } => {
            if board == 0 || grid < 2 || !ports.is_multiple_of(4) {
                return Err(invalid("hamming-mesh", "board >= 1, grid >= 2 and four port directions needed"));
            }
            let planes = ports / 4;
            let (line, _) = fat_tree_plane("hamming-mesh", 2 * grid as u64, tiers, &[], params.switch_radix)?;
            let lines = 2 * grid as u64 * board as u64 * planes;
            let (b, g) = (board as u64, grid as u64);
            Ok(Components {
                chips: (b * g).pow(2),
                packet_switches: lines * line.switches,
                aot: 2 * lines * line.links,
                global_bw: 1.0 / (2.0 * board as f64),
                ..Components::default()
            })
        }
        Family::Torus3d { cube, cubes, ocs } => {
            if cube < 2 || cube % 2 != 0 || cubes == 0 || !ports.is_multiple_of(6) {
                return Err(invalid("torus3d", "even cube side >= 2, cubes >= 1, six port directions needed"));
            }
            let per_dir = ports / 6;
            let (c, q) = (cube as u64, cubes as u64);
            let cube_count = q.pow(3);
            let neighbours = 3 * c * c * (c - 1);
            // 2x2 boards in the first two dimensions: 4 internal pairs each
            let on_board = c.pow(3) / 4 * 4;
            let optical = cube_count * 6 * c * c * per_dir;
            let side = (c * q) as f64;
            Ok(Components {
                chips: cube_count * c.pow(3),
                circuit_switches: if ocs { optical.div_ceil(params.ocs_radix as u64) } else { 0 },
                pcc: cube_count * (neighbours - on_board) * per_dir,
                aot: optical,
                global_bw: 2.0 / (3.0 * side),
                ..Components::default()
            })
        }
        Family::RailOnly { side, tiers } => {
            if side < 2 || !ports.is_multiple_of(2) {
                return Err(invalid("rail-only", "side >= 2 and an even port count needed"));
            }
            let rails = ports / 2;
            let (line, _) = fat_tree_plane("rail-only", side as u64, tiers, &[], params.switch_radix)?;
            let lines = 2 * side as u64 * rails;
            Ok(Components {
                chips: (side as u64).pow(2),
                packet_switches: lines * line.switches,
                aot: 2 * lines * line.links,
                global_bw: 0.5,
                ..Components::default()
            })
        }
        Family::RailX { mesh, ports_per_edge, grid } => {
            if mesh == 0 || ports_per_edge == 0 || grid < 2 {
                return Err(invalid("railx", "mesh, ports per edge >= 1 and grid >= 2 needed"));
            }
            if grid * 2 > params.ocs_radix {
                return Err(invalid("railx", format!("grid {grid} exceeds half the OCS radix")));
            }
            if 4 * ports_per_edge > params.chip_ports {
                return Err(invalid("railx", format!("{} edge ports exceed {} chip ports", 4 * ports_per_edge, ports)));
            }
            let rails = (mesh * ports_per_edge) as u64;
            let (m, g) = (mesh as u64, grid as u64);
            Ok(Components {
                chips: (g * m).pow(2),
                circuit_switches: 2 * g * rails,
                aot: g * g * 4 * rails,
                global_bw: 1.0 / (2.0 * mesh as f64),
                ..Components::default()
            })
        }
    }
}

/// The normalization baseline: a two-tier non-blocking fat tree at full scale.
pub fn baseline_family(params: &CostParams) -> Family {
    let r = params.switch_radix as u64;
    Family::FatTree { chips: r * r / 2, tiers: 2, tapers: Vec::new() }
}

pub fn cost_model(label: &str, family: &Family, params: &CostParams, prices: &PriceBook) -> Result<CostReport, CostError> {
    prices.validate()?;
    let parts = components(family, params)?;
    let base = components(&baseline_family(params), params)?;
    let total_usd = parts.total_usd(prices);
    let base_per_chip = base.total_usd(prices) / base.chips as f64;
    let cost_per_injection = (base_per_chip > 0.0).then(|| total_usd / parts.chips as f64 / base_per_chip);
    Ok(CostReport {
        label: label.to_string(),
        scale: parts.chips,
        switches: parts.switches(),
        pcc: parts.pcc,
        aot: parts.aot,
        total_usd,
        cost_per_injection,
        global_bw_pct: 100.0 * parts.global_bw,
        cost_per_gbw: cost_per_injection.map(|c| c / parts.global_bw),
    })
}

/// The comparison rows: original-scale systems, RailX, and the ~200K-chip
/// alternatives.
pub fn comparison_rows() -> Vec<(&'static str, Family)> {
    let nb = Taper::NONBLOCKING;
    vec![
        ("2-Tier Nonbl. FT", Family::FatTree { chips: 2048, tiers: 2, tapers: vec![] }),
        ("1:3 Tap. 2-Tier FT", Family::FatTree { chips: 3072, tiers: 2, tapers: vec![Taper { up: 1, down: 3 }] }),
        ("Hx4Mesh (1-Tier FT)", Family::HammingMesh { board: 4, grid: 32, tiers: 1 }),
        ("Hx7Mesh (1-Tier FT)", Family::HammingMesh { board: 7, grid: 32, tiers: 1 }),
        ("3D-Torus w/ OCS", Family::Torus3d { cube: 4, cubes: 4, ocs: true }),
        ("3D-Torus w/o OCS", Family::Torus3d { cube: 4, cubes: 4, ocs: false }),
        ("Rail-Only (2D FT)", Family::RailOnly { side: 64, tiers: 1 }),
        ("RailX4Mesh", Family::RailX { mesh: 4, ports_per_edge: 9, grid: 64 }),
        ("RailX7Mesh", Family::RailX { mesh: 7, ports_per_edge: 9, grid: 64 }),
        ("4-Tier Nonbl. FT", Family::FatTree { chips: 196_608, tiers: 4, tapers: vec![nb; 3] }),
        (
            "1:7:49 Tap. 3-Tier FT",
            Family::FatTree { chips: 200_704, tiers: 3, tapers: vec![Taper { up: 1, down: 7 }; 2] },
        ),
        ("Hx7Mesh (2-Tier FT)", Family::HammingMesh { board: 7, grid: 64, tiers: 2 }),
    ]
}

pub fn comparison_table(params: &CostParams, prices: &PriceBook) -> Result<Vec<CostReport>, CostError> {
    comparison_rows().iter().map(|(label, family)| cost_model(label, family, params, prices)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ScaleFamily {
    /// Full `R/2 x R/2` node grid.
    RailX { ocs_radix: u32, mesh: u32 },
    /// All-to-all rows and columns of `r + 1` nodes.
    HyperX { rails: u32, mesh: u32 },
    /// `r + 1` nodes per group, `R/2` groups.
    Dragonfly { rails: u32, ocs_radix: u32, mesh: u32 },
    /// One all-to-all group of `r + 1` nodes per `r^2 + r + 1` groups.
    SingleDragonfly { rails: u32, mesh: u32 },
    /// OCS-joined `m^3` cubes.
    Tpuv4 { ocs_radix: u32, mesh: u32 },
    /// One rail-optimized segment: `R` leaves of `V` GPUs each.
    RailOptimized { radix: u32, gpus_per_server: u32 },
}

pub fn scale_bound(family: ScaleFamily) -> u64 {
    match family {
        ScaleFamily::RailX { ocs_radix, mesh } => (ocs_radix as u64 / 2).pow(2) * (mesh as u64).pow(2),
        ScaleFamily::HyperX { rails, mesh } => (rails as u64 + 1).pow(2) * (mesh as u64).pow(2),
        ScaleFamily::Dragonfly { rails, ocs_radix, mesh } => {
            (rails as u64 + 1) * (ocs_radix as u64 / 2) * (mesh as u64).pow(2)
        }
        ScaleFamily::SingleDragonfly { rails, mesh } => {
            let r = rails as u64;
            (r + 1) * (r * r + r + 1) * (mesh as u64).pow(2)
        }
        ScaleFamily::Tpuv4 { ocs_radix, mesh } => ocs_radix as u64 / 2 * (mesh as u64).pow(3),
        ScaleFamily::RailOptimized { radix, gpus_per_server } => radix as u64 * gpus_per_server as u64,
    }
}
