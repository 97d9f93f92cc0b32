//! Fabric description, rail-ring constructions and OCS compilation.
//!
//! Wiring conventions used throughout the crate:
//!
//! * Node `(x, y)` sits in row `y` and column `x` of the node grid. X-rails
//!   change `x` and all of row `y` shares the X-switch group `(y, rail)`;
//!   Y-rails change `y` within column `x`.
//! * X-rail `a` leaves the mesh on the east edge (plus port) and the west
//!   edge (minus port) of chip row `a / n`; Y-rail `b` uses the north (plus)
//!   and south (minus) edges of chip column `b / n`.
//! * A link built from a directed arc `A -> B` joins the plus port of `A`
//!   to the minus port of `B`.

mod build;
mod hamilton;
mod ocs;

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use build::{
    build_all_to_all, build_dragonfly, build_hyperx, build_torus, split_dimensions, AxisSplit,
    DimensionSplitSpec, SplitGroup,
};
pub use hamilton::{hamiltonian_decompose, is_arc_partition, zigzag_path, Cycle};
pub use ocs::{compile_ocs, decompile, OcsConfiguration, OcsMatching};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopoError {
    #[error("invalid fabric spec: {0}")]
    InvalidSpec(String),
    #[error("no Hamiltonian decomposition exists for {0} vertices")]
    NoDecomposition(usize),
    #[error("all-to-all over {size} nodes with {per_pair} links per pair needs {needed} rails, only {available} available")]
    InsufficientRails {
        size: usize,
        per_pair: usize,
        needed: usize,
        available: usize,
    },
    #[error("links per pair must be a positive even number, got {0}")]
    OddLinksPerPair(usize),
    #[error("rail budget exceeded on axis {axis}: split uses {used} rails, node has {available}")]
    RailBudget {
        axis: Axis,
        used: u32,
        available: u32,
    },
    #[error("split scales on axis {axis} multiply to {product}, beyond the switch limit {limit}")]
    ScaleProduct {
        axis: Axis,
        product: u32,
        limit: u32,
    },
    #[error("unrealizable topology: {0}")]
    Unrealizable(String),
}

/// Physical parameters of an installation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FabricSpec {
    /// Chips per side of a node mesh.
    #[serde(alias = "m")]
    pub mesh: u32,
    /// Off-package ports on each chip edge.
    #[serde(alias = "n")]
    pub ports_per_edge: u32,
    /// Intra-mesh link bandwidth as a multiple of the chip edge's external
    /// bandwidth.
    #[serde(alias = "k")]
    pub bandwidth_multiple: f64,
    /// OCS port count.
    #[serde(alias = "R")]
    pub ocs_radix: u32,
    /// Nodes per side of the node grid in use.
    pub grid: u32,
}

impl FabricSpec {
    pub fn new(
        mesh: u32,
        ports_per_edge: u32,
        bandwidth_multiple: f64,
        ocs_radix: u32,
        grid: u32,
    ) -> Result<Self, TopoError> {
        let spec = FabricSpec {
            mesh,
            ports_per_edge,
            bandwidth_multiple,
            ocs_radix,
            grid,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// A fully populated grid of `R/2 x R/2` nodes.
    pub fn full(
        mesh: u32,
        ports_per_edge: u32,
        bandwidth_multiple: f64,
        ocs_radix: u32,
    ) -> Result<Self, TopoError> {
        Self::new(
            mesh,
            ports_per_edge,
            bandwidth_multiple,
            ocs_radix,
            ocs_radix / 2,
        )
    }

    pub fn validate(&self) -> Result<(), TopoError> {
        let bad = |msg: &str| Err(TopoError::InvalidSpec(msg.to_string()));
        if self.mesh == 0 || self.ports_per_edge == 0 || self.grid == 0 {
            return bad("m, n and grid must be positive");
        }
        if self.ocs_radix < 2 || !self.ocs_radix.is_multiple_of(2) {
            return bad("OCS radix must be a positive even number");
        }
        if !(self.bandwidth_multiple.is_finite() && self.bandwidth_multiple >= 1.0) {
            return bad("bandwidth multiple k must be at least 1");
        }
        if self.grid > self.ocs_radix / 2 {
            return Err(TopoError::InvalidSpec(format!(
                "grid {} exceeds R/2 = {}",
                self.grid,
                self.ocs_radix / 2
            )));
        }
        if self.rails() > u16::MAX as u32 {
            return bad("rail count out of range");
        }
        Ok(())
    }

    /// Rails per physical dimension, `m * n`.
    pub fn rails(&self) -> u32 {
        self.mesh * self.ports_per_edge
    }

    pub fn chips_per_node(&self) -> u64 {
        (self.mesh as u64).pow(2)
    }

    /// Chips in the populated grid.
    pub fn chips(&self) -> u64 {
        (self.grid as u64).pow(2) * self.chips_per_node()
    }

    /// Chip count of a fully populated grid, `(R/2)^2 m^2`.
    pub fn max_chips(&self) -> u64 {
        ((self.ocs_radix / 2) as u64).pow(2) * self.chips_per_node()
    }

    /// Switches needed for a fully populated grid, `r * R`.
    pub fn switch_count(&self) -> u64 {
        self.rails() as u64 * self.ocs_radix as u64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Axis::X => write!(f, "X"),
            Axis::Y => write!(f, "Y"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeCoord {
    pub x: u16,
    pub y: u16,
}

impl NodeCoord {
    pub fn new(x: u16, y: u16) -> Self {
        NodeCoord { x, y }
    }
}

/// Chip position inside a node mesh.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LocalCoord {
    pub x: u16,
    pub y: u16,
}

impl LocalCoord {
    pub fn new(x: u16, y: u16) -> Self {
        LocalCoord { x, y }
    }

    pub fn manhattan(self, other: LocalCoord) -> u32 {
        (self.x as i32 - other.x as i32).unsigned_abs()
            + (self.y as i32 - other.y as i32).unsigned_abs()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChipCoord {
    pub node: NodeCoord,
    pub local: LocalCoord,
}

impl ChipCoord {
    pub fn new(node_x: u16, node_y: u16, x: u16, y: u16) -> Self {
        ChipCoord {
            node: NodeCoord::new(node_x, node_y),
            local: LocalCoord::new(x, y),
        }
    }
}

/// One side of a rail on one node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RailPort {
    pub node: NodeCoord,
    pub axis: Axis,
    pub rail: u16,
    pub sign: Sign,
}

/// Chip of an `mesh x mesh` node that hosts the given rail port.
pub fn port_chip(mesh: u32, ports_per_edge: u32, axis: Axis, rail: u16, sign: Sign) -> LocalCoord {
    let line = (rail as u32 / ports_per_edge) as u16;
    let far = (mesh - 1) as u16;
    match (axis, sign) {
        (Axis::X, Sign::Plus) => LocalCoord::new(far, line),
        (Axis::X, Sign::Minus) => LocalCoord::new(0, line),
        (Axis::Y, Sign::Plus) => LocalCoord::new(line, far),
        (Axis::Y, Sign::Minus) => LocalCoord::new(line, 0),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DimKind {
    /// Parallel rings over the dimension.
    TorusRing,
    /// Rail-ring all-to-all.
    AllToAll,
    /// Dragonfly global links between groups.
    Global,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogicalDim {
    pub name: String,
    pub axis: Axis,
    pub kind: DimKind,
    pub scale: u32,
    pub first_rail: u16,
    pub rail_count: u16,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyKind {
    Torus,
    HyperX,
    Dragonfly,
    Split,
    SingleNode,
}

/// A cable-level link: plus port of `plus` to minus port of `minus`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InterLink {
    pub axis: Axis,
    pub rail: u16,
    pub plus: NodeCoord,
    pub minus: NodeCoord,
    /// Index into [`LogicalTopology::dims`].
    pub dim: u16,
}

impl InterLink {
    pub fn plus_port(&self) -> RailPort {
        RailPort {
            node: self.plus,
            axis: self.axis,
            rail: self.rail,
            sign: Sign::Plus,
        }
    }

    pub fn minus_port(&self) -> RailPort {
        RailPort {
            node: self.minus,
            axis: self.axis,
            rail: self.rail,
            sign: Sign::Minus,
        }
    }
}

/// Node-level multigraph plus the intra-node mesh description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogicalTopology {
    pub kind: TopologyKind,
    pub mesh: u32,
    pub ports_per_edge: u32,
    pub bandwidth_multiple: f64,
    /// Node grid extent along X.
    pub width: u32,
    /// Node grid extent along Y.
    pub height: u32,
    pub dims: Vec<LogicalDim>,
    pub links: Vec<InterLink>,
}

impl LogicalTopology {
    /// A lone node: just the chip mesh, no rails in use.
    pub fn single_node(mesh: u32, ports_per_edge: u32, bandwidth_multiple: f64) -> Self {
        LogicalTopology {
            kind: TopologyKind::SingleNode,
            mesh,
            ports_per_edge,
            bandwidth_multiple,
            width: 1,
            height: 1,
            dims: Vec::new(),
            links: Vec::new(),
        }
    }

    pub fn rails(&self) -> u32 {
        self.mesh * self.ports_per_edge
    }

    pub fn node_count(&self) -> usize {
        (self.width * self.height) as usize
    }

    pub fn chip_count(&self) -> usize {
        self.node_count() * (self.mesh * self.mesh) as usize
    }

    pub fn node_index(&self, node: NodeCoord) -> usize {
        node.y as usize * self.width as usize + node.x as usize
    }

    pub fn node_at(&self, index: usize) -> NodeCoord {
        NodeCoord::new(
            (index % self.width as usize) as u16,
            (index / self.width as usize) as u16,
        )
    }

    pub fn chip_index(&self, chip: ChipCoord) -> usize {
        let m = self.mesh as usize;
        self.node_index(chip.node) * m * m + chip.local.y as usize * m + chip.local.x as usize
    }

    pub fn chip_at(&self, index: usize) -> ChipCoord {
        let m = self.mesh as usize;
        let node = self.node_at(index / (m * m));
        let local = index % (m * m);
        ChipCoord {
            node,
            local: LocalCoord::new((local % m) as u16, (local / m) as u16),
        }
    }

    pub fn contains(&self, chip: ChipCoord) -> bool {
        (chip.node.x as u32) < self.width
            && (chip.node.y as u32) < self.height
            && (chip.local.x as u32) < self.mesh
            && (chip.local.y as u32) < self.mesh
    }

    /// Logical shape: chips per mesh followed by every logical dimension's scale.
    pub fn logical_shape(&self) -> Vec<u32> {
        std::iter::once(self.mesh * self.mesh)
            .chain(self.dims.iter().map(|d| d.scale))
            .collect()
    }

    /// Chip hosting the given port.
    pub fn port_chip(&self, axis: Axis, rail: u16, sign: Sign) -> LocalCoord {
        port_chip(self.mesh, self.ports_per_edge, axis, rail, sign)
    }

    /// Per-node neighbour lists (with multiplicity) over inter-node links.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.node_count()];
        for link in &self.links {
            let a = self.node_index(link.plus);
            let b = self.node_index(link.minus);
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    /// All-pairs node hop distances; `u32::MAX` marks unreachable pairs.
    pub fn node_distances(&self) -> Vec<Vec<u32>> {
        let adj = self.adjacency();
        (0..self.node_count()).map(|s| bfs(&adj, s)).collect()
    }

    /// Largest node-to-node hop distance, or `None` if disconnected.
    pub fn node_diameter(&self) -> Option<u32> {
        let mut diameter = 0;
        for row in self.node_distances() {
            for d in row {
                if d == u32::MAX {
                    return None;
                }
                diameter = diameter.max(d);
            }
        }
        Some(diameter)
    }

    /// Number of links joining two nodes.
    pub fn links_between(&self, a: NodeCoord, b: NodeCoord) -> usize {
        self.links
            .iter()
            .filter(|l| (l.plus == a && l.minus == b) || (l.plus == b && l.minus == a))
            .count()
    }

    /// Checks rail discipline and port exclusivity.
    pub fn validate(&self) -> Result<(), TopoError> {
        let rails = self.rails() as u16;
        let mut used = std::collections::HashSet::new();
        for link in &self.links {
            if link.rail >= rails {
                return Err(TopoError::Unrealizable(format!(
                    "rail {} beyond node rail count {}",
                    link.rail, rails
                )));
            }
            for node in [link.plus, link.minus] {
                if node.x as u32 >= self.width || node.y as u32 >= self.height {
                    return Err(TopoError::Unrealizable(format!(
                        "node {:?} outside the grid",
                        node
                    )));
                }
            }
            if link.plus == link.minus {
                return Err(TopoError::Unrealizable(format!(
                    "self loop at {:?}",
                    link.plus
                )));
            }
            for port in [link.plus_port(), link.minus_port()] {
                if !used.insert(port) {
                    return Err(TopoError::Unrealizable(format!(
                        "port {:?} used twice",
                        port
                    )));
                }
            }
        }
        Ok(())
    }
}

fn bfs(adj: &[Vec<usize>], src: usize) -> Vec<u32> {
    let mut dist = vec![u32::MAX; adj.len()];
    let mut queue = VecDeque::new();
    dist[src] = 0;
    queue.push_back(src);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if dist[v] == u32::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    dist
}
