//! Logical topology constructors.

use serde::{Deserialize, Serialize};

use super::{
    hamiltonian_decompose, Axis, DimKind, FabricSpec, InterLink, LogicalDim, LogicalTopology,
    NodeCoord, TopoError, TopologyKind,
};

/// Wires `group` into a rail-ring all-to-all: `rails_per_pair / 2` copies of
/// the Hamiltonian decomposition, one rail per directed cycle.
///
/// Rails are drawn from `first_rail..first_rail + available` in generation
/// order. Returns only the links; the caller owns the group layout.
pub fn build_all_to_all(
    group: &[NodeCoord],
    axis: Axis,
    rails_per_pair: usize,
    first_rail: u16,
    available: u16,
    dim: u16,
) -> Result<Vec<InterLink>, TopoError> {
    if rails_per_pair == 0 || !rails_per_pair.is_multiple_of(2) {
        return Err(TopoError::OddLinksPerPair(rails_per_pair));
    }
    let size = group.len();
    if size < 2 {
        return Ok(Vec::new());
    }
    let copies = rails_per_pair / 2;
    let needed = copies * (size - 1);
    if needed > available as usize {
        return Err(TopoError::InsufficientRails {
            size,
            per_pair: rails_per_pair,
            needed,
            available: available as usize,
        });
    }
    let cycles = hamiltonian_decompose(size)?;
    let mut links = Vec::with_capacity(copies * size * (size - 1));
    for copy in 0..copies {
        for (c, cycle) in cycles.iter().enumerate() {
            let rail = first_rail + (copy * (size - 1) + c) as u16;
            for (idx, &from) in cycle.iter().enumerate() {
                let to = cycle[(idx + 1) % cycle.len()];
                links.push(InterLink {
                    axis,
                    rail,
                    plus: group[from],
                    minus: group[to],
                    dim,
                });
            }
        }
    }
    Ok(links)
}

/// Parallel unidirectional rings `0 -> 1 -> ... -> len-1 -> 0` on each given rail.
fn ring_links(
    line: &[NodeCoord],
    axis: Axis,
    rails: std::ops::Range<u16>,
    dim: u16,
) -> Vec<InterLink> {
    let len = line.len();
    if len < 2 {
        return Vec::new();
    }
    let mut links = Vec::with_capacity(len * rails.len());
    for rail in rails {
        for i in 0..len {
            links.push(InterLink {
                axis,
                rail,
                plus: line[i],
                minus: line[(i + 1) % len],
                dim,
            });
        }
    }
    links
}

fn row(width: u32, y: u32) -> Vec<NodeCoord> {
    (0..width)
        .map(|x| NodeCoord::new(x as u16, y as u16))
        .collect()
}

fn column(height: u32, x: u32) -> Vec<NodeCoord> {
    (0..height)
        .map(|y| NodeCoord::new(x as u16, y as u16))
        .collect()
}

fn empty(
    spec: &FabricSpec,
    kind: TopologyKind,
    width: u32,
    height: u32,
    dims: Vec<LogicalDim>,
) -> LogicalTopology {
    LogicalTopology {
        kind,
        mesh: spec.mesh,
        ports_per_edge: spec.ports_per_edge,
        bandwidth_multiple: spec.bandwidth_multiple,
        width,
        height,
        dims,
        links: Vec::new(),
    }
}

/// 2D torus: every X-rail and every Y-rail forms a ring of `grid` nodes.
pub fn build_torus(spec: &FabricSpec) -> Result<LogicalTopology, TopoError> {
    spec.validate()?;
    if spec.grid < 2 {
        return Err(TopoError::InvalidSpec("a torus needs grid >= 2".into()));
    }
    let g = spec.grid;
    let rails = spec.rails() as u16;
    let dims = vec![
        LogicalDim {
            name: "x".into(),
            axis: Axis::X,
            kind: DimKind::TorusRing,
            scale: g,
            first_rail: 0,
            rail_count: rails,
        },
        LogicalDim {
            name: "y".into(),
            axis: Axis::Y,
            kind: DimKind::TorusRing,
            scale: g,
            first_rail: 0,
            rail_count: rails,
        },
    ];
    let mut topo = empty(spec, TopologyKind::Torus, g, g, dims);
    for j in 0..g {
        topo.links
            .extend(ring_links(&row(g, j), Axis::X, 0..rails, 0));
    }
    for i in 0..g {
        topo.links
            .extend(ring_links(&column(g, i), Axis::Y, 0..rails, 1));
    }
    Ok(topo)
}

/// 2D HyperX: all-to-all within every row and every column of the grid.
///
/// The natural size is `grid = r + 1` with two links per pair; smaller grids
/// replicate the decomposition to use `2 * r / (grid - 1)` links per pair.
pub fn build_hyperx(spec: &FabricSpec) -> Result<LogicalTopology, TopoError> {
    spec.validate()?;
    let g = spec.grid;
    let rails = spec.rails() as u16;
    if g > spec.rails() + 1 {
        return Err(TopoError::InsufficientRails {
            size: g as usize,
            per_pair: 2,
            needed: g as usize - 1,
            available: rails as usize,
        });
    }
    let per_pair = if g < 2 {
        2
    } else {
        2 * (spec.rails() / (g - 1)) as usize
    };
    let dims = vec![
        LogicalDim {
            name: "x".into(),
            axis: Axis::X,
            kind: DimKind::AllToAll,
            scale: g,
            first_rail: 0,
            rail_count: rails,
        },
        LogicalDim {
            name: "y".into(),
            axis: Axis::Y,
            kind: DimKind::AllToAll,
            scale: g,
            first_rail: 0,
            rail_count: rails,
        },
    ];
    let mut topo = empty(spec, TopologyKind::HyperX, g, g, dims);
    for j in 0..g {
        topo.links.extend(build_all_to_all(
            &row(g, j),
            Axis::X,
            per_pair,
            0,
            rails,
            0,
        )?);
    }
    for i in 0..g {
        topo.links.extend(build_all_to_all(
            &column(g, i),
            Axis::Y,
            per_pair,
            0,
            rails,
            1,
        )?);
    }
    Ok(topo)
}

/// Single-level Dragonfly.
///
/// Column `X` of the grid is group `X` and row `Y` holds member `Y` of every
/// group. Y-rails wire each group all-to-all; X-rails carry the global links,
/// one directed Hamiltonian cycle of the group graph per `(member, rail)`
/// pair, assigned round-robin over members so per-node load stays even.
pub fn build_dragonfly(
    spec: &FabricSpec,
    local_radix: u32,
    global_radix: u32,
) -> Result<LogicalTopology, TopoError> {
    spec.validate()?;
    let r = spec.rails();
    let group_size = r + 1;
    if 2 * group_size > local_radix {
        return Err(TopoError::InvalidSpec(format!(
            "groups of {group_size} nodes need a local radix of at least {}",
            2 * group_size
        )));
    }
    let groups = (r * r + r + 1).min(global_radix / 2);
    if groups < 2 {
        return Err(TopoError::InvalidSpec(
            "a dragonfly needs at least two groups".into(),
        ));
    }
    let global_rails = (r * group_size) as usize;
    if groups as usize - 1 > global_rails {
        return Err(TopoError::InsufficientRails {
            size: groups as usize,
            per_pair: 2,
            needed: groups as usize - 1,
            available: global_rails,
        });
    }
    let dims = vec![
        LogicalDim {
            name: "local".into(),
            axis: Axis::Y,
            kind: DimKind::AllToAll,
            scale: group_size,
            first_rail: 0,
            rail_count: r as u16,
        },
        LogicalDim {
            name: "global".into(),
            axis: Axis::X,
            kind: DimKind::Global,
            scale: groups,
            first_rail: 0,
            rail_count: r as u16,
        },
    ];
    let mut topo = empty(spec, TopologyKind::Dragonfly, groups, group_size, dims);
    let local_per_pair = 2 * (r / (group_size - 1)) as usize;
    for x in 0..groups {
        topo.links.extend(build_all_to_all(
            &column(group_size, x),
            Axis::Y,
            local_per_pair,
            0,
            r as u16,
            0,
        )?);
    }
    let cycles = hamiltonian_decompose(groups as usize)?;
    for (c, cycle) in cycles.iter().enumerate() {
        let member = (c as u32 % group_size) as u16;
        let rail = (c as u32 / group_size) as u16;
        for (idx, &from) in cycle.iter().enumerate() {
            let to = cycle[(idx + 1) % cycle.len()];
            topo.links.push(InterLink {
                axis: Axis::X,
                rail,
                plus: NodeCoord::new(from as u16, member),
                minus: NodeCoord::new(to as u16, member),
                dim: 1,
            });
        }
    }
    Ok(topo)
}

/// One rail group of a split axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitGroup {
    pub name: String,
    pub rails: u32,
    pub kind: DimKind,
    pub scale: u32,
}

/// Rail groups of one physical axis, innermost (fastest varying) first.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AxisSplit {
    pub groups: Vec<SplitGroup>,
}

impl AxisSplit {
    pub fn new(groups: Vec<SplitGroup>) -> Self {
        AxisSplit { groups }
    }

    /// Nodes spanned along this axis.
    pub fn extent(&self) -> u32 {
        self.groups.iter().map(|g| g.scale.max(1)).product()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DimensionSplitSpec {
    pub x: AxisSplit,
    pub y: AxisSplit,
}

impl SplitGroup {
    pub fn new(name: &str, rails: u32, kind: DimKind, scale: u32) -> Self {
        SplitGroup {
            name: name.to_string(),
            rails,
            kind,
            scale,
        }
    }
}

/// Splits each axis' rails into independent logical dimensions.
///
/// A node's position along an axis is read as mixed-radix digits, one per
/// rail group; group `i` links nodes that differ only in digit `i`.
pub fn split_dimensions(
    spec: &FabricSpec,
    split: &DimensionSplitSpec,
) -> Result<LogicalTopology, TopoError> {
    spec.validate()?;
    let limit = spec.ocs_radix / 2;
    let r = spec.rails();
    for (axis, side) in [(Axis::X, &split.x), (Axis::Y, &split.y)] {
        let used: u32 = side.groups.iter().map(|g| g.rails).sum();
        if used > r {
            return Err(TopoError::RailBudget {
                axis,
                used,
                available: r,
            });
        }
        let product = side.extent();
        if product > limit {
            return Err(TopoError::ScaleProduct {
                axis,
                product,
                limit,
            });
        }
        for g in &side.groups {
            if g.scale == 0 {
                return Err(TopoError::InvalidSpec(format!(
                    "dimension {} has zero scale",
                    g.name
                )));
            }
            if g.rails == 0 && g.scale > 1 {
                return Err(TopoError::InvalidSpec(format!(
                    "dimension {} has no rails",
                    g.name
                )));
            }
            if g.kind == DimKind::Global {
                return Err(TopoError::InvalidSpec(
                    "global links are only built by the dragonfly constructor".into(),
                ));
            }
        }
    }

    let width = split.x.extent();
    let height = split.y.extent();
    let mut dims = Vec::new();
    let mut plan = Vec::new();
    for (axis, side) in [(Axis::X, &split.x), (Axis::Y, &split.y)] {
        let mut first = 0u16;
        let mut stride = 1u32;
        for g in &side.groups {
            plan.push((axis, dims.len() as u16, g.clone(), first, stride));
            dims.push(LogicalDim {
                name: g.name.clone(),
                axis,
                kind: g.kind,
                scale: g.scale,
                first_rail: first,
                rail_count: g.rails as u16,
            });
            first += g.rails as u16;
            stride *= g.scale;
        }
    }

    let mut topo = empty(spec, TopologyKind::Split, width, height, dims);
    for (axis, dim, group, first, stride) in plan {
        if group.scale < 2 {
            continue;
        }
        let (along, across) = match axis {
            Axis::X => (width, height),
            Axis::Y => (height, width),
        };
        for other in 0..across {
            for base in 0..along {
                // Lines start where this group's digit is zero.
                if (base / stride) % group.scale != 0 {
                    continue;
                }
                let line: Vec<NodeCoord> = (0..group.scale)
                    .map(|d| {
                        let pos = (base + d * stride) as u16;
                        match axis {
                            Axis::X => NodeCoord::new(pos, other as u16),
                            Axis::Y => NodeCoord::new(other as u16, pos),
                        }
                    })
                    .collect();
                match group.kind {
                    DimKind::TorusRing => {
                        topo.links.extend(ring_links(
                            &line,
                            axis,
                            first..first + group.rails as u16,
                            dim,
                        ));
                    }
                    DimKind::AllToAll => {
                        let copies = group.rails / (group.scale - 1);
                        if copies == 0 {
                            return Err(TopoError::InsufficientRails {
                                size: group.scale as usize,
                                per_pair: 2,
                                needed: group.scale as usize - 1,
                                available: group.rails as usize,
                            });
                        }
                        topo.links.extend(build_all_to_all(
                            &line,
                            axis,
                            2 * copies as usize,
                            first,
                            group.rails as u16,
                            dim,
                        )?);
                    }
                    DimKind::Global => unreachable!("rejected above"),
                }
            }
        }
    }
    Ok(topo)
}
