//! Compilation of logical topologies onto per-switch port matchings.
//!
//! Every switch of an `width x height` grid is listed: X-switch `(y, rail)`
//! serves row `y`, Y-switch `(x, rail)` serves column `x`. Node `i` along a
//! switch's line owns ports `2i` (plus) and `2i + 1` (minus).

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{Axis, FabricSpec, InterLink, LogicalDim, LogicalTopology, NodeCoord, Sign, TopoError};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OcsMatching {
    pub axis: Axis,
    /// Row index for X-switches, column index for Y-switches.
    pub line: u16,
    pub rail: u16,
    /// Matched `[plus port, minus port]` pairs.
    pub pairs: Vec<[u32; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OcsConfiguration {
    pub radix: u32,
    pub width: u32,
    pub height: u32,
    pub dims: Vec<LogicalDim>,
    pub switches: Vec<OcsMatching>,
}

impl OcsConfiguration {
    pub fn switch_count(&self) -> usize {
        self.switches.len()
    }

    pub fn switch(&self, axis: Axis, line: u16, rail: u16) -> Option<&OcsMatching> {
        self.switches
            .iter()
            .find(|s| s.axis == axis && s.line == line && s.rail == rail)
    }
}

pub fn port_index(position: u16, sign: Sign) -> u32 {
    2 * position as u32 + if sign == Sign::Plus { 0 } else { 1 }
}

fn along(axis: Axis, node: NodeCoord) -> (u16, u16) {
    match axis {
        Axis::X => (node.x, node.y),
        Axis::Y => (node.y, node.x),
    }
}

/// Maps every logical link onto a port pair of the switch its endpoints share.
pub fn compile_ocs(
    topology: &LogicalTopology,
    spec: &FabricSpec,
) -> Result<OcsConfiguration, TopoError> {
    topology.validate()?;
    if topology.rails() != spec.rails() {
        return Err(TopoError::Unrealizable(format!(
            "topology uses {} rails per axis, fabric has {}",
            topology.rails(),
            spec.rails()
        )));
    }
    let half = spec.ocs_radix / 2;
    if topology.width > half || topology.height > half {
        return Err(TopoError::Unrealizable(format!(
            "{}x{} node grid exceeds the {half} nodes a switch can serve",
            topology.width, topology.height
        )));
    }
    let rails = spec.rails() as u16;
    let mut switches =
        Vec::with_capacity(rails as usize * (topology.width + topology.height) as usize);
    for (axis, lines) in [(Axis::X, topology.height), (Axis::Y, topology.width)] {
        for line in 0..lines as u16 {
            for rail in 0..rails {
                switches.push(OcsMatching {
                    axis,
                    line,
                    rail,
                    pairs: Vec::new(),
                });
            }
        }
    }
    let slot = |axis: Axis, line: u16, rail: u16| -> usize {
        let base = match axis {
            Axis::X => 0,
            Axis::Y => topology.height as usize * rails as usize,
        };
        base + line as usize * rails as usize + rail as usize
    };
    for link in &topology.links {
        let (p, p_line) = along(link.axis, link.plus);
        let (q, q_line) = along(link.axis, link.minus);
        if p_line != q_line {
            return Err(TopoError::Unrealizable(format!(
                "{} link on rail {} joins {:?} and {:?}, which share no switch",
                link.axis, link.rail, link.plus, link.minus
            )));
        }
        switches[slot(link.axis, p_line, link.rail)]
            .pairs
            .push([port_index(p, Sign::Plus), port_index(q, Sign::Minus)]);
    }
    for s in &mut switches {
        s.pairs.sort_unstable();
    }
    Ok(OcsConfiguration {
        radix: spec.ocs_radix,
        width: topology.width,
        height: topology.height,
        dims: topology.dims.clone(),
        switches,
    })
}

/// Recovers the inter-node links from switch matchings, sorted.
pub fn decompile(config: &OcsConfiguration) -> Result<Vec<InterLink>, TopoError> {
    let mut links = Vec::new();
    for s in &config.switches {
        let mut used = HashSet::new();
        for &[a, b] in &s.pairs {
            if a % 2 != 0 || b % 2 != 1 {
                return Err(TopoError::Unrealizable(format!(
                    "pair {a}-{b} does not join a plus to a minus port"
                )));
            }
            if !used.insert(a) || !used.insert(b) || a >= config.radix || b >= config.radix {
                return Err(TopoError::Unrealizable(format!(
                    "port reused or out of range on {:?} switch {}",
                    s.axis, s.line
                )));
            }
            let node = |pos: u32| match s.axis {
                Axis::X => NodeCoord::new(pos as u16, s.line),
                Axis::Y => NodeCoord::new(s.line, pos as u16),
            };
            let dim = config
                .dims
                .iter()
                .position(|d| {
                    d.axis == s.axis
                        && (d.first_rail..d.first_rail + d.rail_count).contains(&s.rail)
                })
                .unwrap_or(0) as u16;
            links.push(InterLink {
                axis: s.axis,
                rail: s.rail,
                plus: node(a / 2),
                minus: node(b / 2),
                dim,
            });
        }
    }
    links.sort_unstable();
    Ok(links)
}
