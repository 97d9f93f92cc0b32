//! Chip-level channel graph derived from a logical topology.

use serde::{Deserialize, Serialize};

use crate::topo::{Axis, ChipCoord, LocalCoord, LogicalTopology, Sign};

/// Index of a directed channel in [`Network::channels`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChannelId(pub u32);

impl ChannelId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dir {
    East,
    West,
    North,
    South,
}

impl Dir {
    pub const ALL: [Dir; 4] = [Dir::East, Dir::West, Dir::North, Dir::South];

    pub fn slot(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChannelKind {
    Mesh(Dir),
    Rail {
        axis: Axis,
        rail: u16,
        dim: u16,
        link: u32,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Channel {
    /// Source chip index.
    pub src: u32,
    /// Destination chip index.
    pub dst: u32,
    pub kind: ChannelKind,
}

impl Channel {
    pub fn is_rail(&self) -> bool {
        matches!(self.kind, ChannelKind::Rail { .. })
    }

    pub fn dim(&self) -> Option<u16> {
        match self.kind {
            ChannelKind::Rail { dim, .. } => Some(dim),
            ChannelKind::Mesh(_) => None,
        }
    }
}

/// Directed channels between chips plus node-level distances.
#[derive(Clone, Debug)]
pub struct Network {
    pub topology: LogicalTopology,
    pub channels: Vec<Channel>,
    mesh_out: Vec<[Option<ChannelId>; 4]>,
    rail_out: Vec<Vec<ChannelId>>,
    node_out: Vec<Vec<ChannelId>>,
    node_dist: Vec<u32>,
    chips_per_node: usize,
}

impl Network {
    pub fn new(topology: &LogicalTopology) -> Self {
        let topology = topology.clone();
        let m = topology.mesh as usize;
        let chips = topology.chip_count();
        let nodes = topology.node_count();
        let mut channels = Vec::new();
        let mut mesh_out = vec![[None; 4]; chips];
        for chip in 0..chips {
            let c = topology.chip_at(chip);
            let (x, y) = (c.local.x as usize, c.local.y as usize);
            let moves = [
                (Dir::East, x + 1 < m),
                (Dir::West, x > 0),
                (Dir::North, y + 1 < m),
                (Dir::South, y > 0),
            ];
            for (dir, ok) in moves {
                if !ok {
                    continue;
                }
                let local = step_local(c.local, dir);
                let dst = topology.chip_index(ChipCoord {
                    node: c.node,
                    local,
                });
                mesh_out[chip][dir.slot()] = Some(ChannelId(channels.len() as u32));
                channels.push(Channel {
                    src: chip as u32,
                    dst: dst as u32,
                    kind: ChannelKind::Mesh(dir),
                });
            }
        }
        let mut rail_out = vec![Vec::new(); chips];
        let mut node_out = vec![Vec::new(); nodes];
        for (idx, link) in topology.links.iter().enumerate() {
            let plus_chip = ChipCoord {
                node: link.plus,
                local: topology.port_chip(link.axis, link.rail, Sign::Plus),
            };
            let minus_chip = ChipCoord {
                node: link.minus,
                local: topology.port_chip(link.axis, link.rail, Sign::Minus),
            };
            let kind = ChannelKind::Rail {
                axis: link.axis,
                rail: link.rail,
                dim: link.dim,
                link: idx as u32,
            };
            for (from, to) in [(plus_chip, minus_chip), (minus_chip, plus_chip)] {
                let id = ChannelId(channels.len() as u32);
                let s = topology.chip_index(from);
                rail_out[s].push(id);
                node_out[topology.node_index(from.node)].push(id);
                channels.push(Channel {
                    src: s as u32,
                    dst: topology.chip_index(to) as u32,
                    kind,
                });
            }
        }
        let node_dist = topology.node_distances().into_iter().flatten().collect();
        Network {
            chips_per_node: m * m,
            topology,
            channels,
            mesh_out,
            rail_out,
            node_out,
            node_dist,
        }
    }

    pub fn chip_count(&self) -> usize {
        self.mesh_out.len()
    }

    pub fn node_count(&self) -> usize {
        self.node_out.len()
    }

    pub fn mesh(&self) -> u32 {
        self.topology.mesh
    }

    pub fn node_of(&self, chip: usize) -> usize {
        chip / self.chips_per_node
    }

    pub fn local_of(&self, chip: usize) -> LocalCoord {
        let m = self.topology.mesh as usize;
        let l = chip % self.chips_per_node;
        LocalCoord::new((l % m) as u16, (l / m) as u16)
    }

    pub fn coord(&self, chip: usize) -> ChipCoord {
        self.topology.chip_at(chip)
    }

    pub fn index(&self, chip: ChipCoord) -> usize {
        self.topology.chip_index(chip)
    }

    pub fn channel(&self, id: ChannelId) -> &Channel {
        &self.channels[id.index()]
    }

    pub fn mesh_channel(&self, chip: usize, dir: Dir) -> Option<ChannelId> {
        self.mesh_out[chip][dir.slot()]
    }

    /// Rail channels leaving a chip.
    pub fn rail_channels(&self, chip: usize) -> &[ChannelId] {
        &self.rail_out[chip]
    }

    /// Rail channels leaving any chip of a node.
    pub fn node_channels(&self, node: usize) -> &[ChannelId] {
        &self.node_out[node]
    }

    /// Node hop distance, `u32::MAX` if unreachable.
    pub fn node_distance(&self, a: usize, b: usize) -> u32 {
        self.node_dist[a * self.node_count() + b]
    }

    /// Inter-node diameter, or `None` when disconnected.
    pub fn node_diameter(&self) -> Option<u32> {
        let d = self.node_dist.iter().copied().max().unwrap_or(0);
        (d != u32::MAX).then_some(d)
    }
}

pub(crate) fn step_local(c: LocalCoord, dir: Dir) -> LocalCoord {
    match dir {
        Dir::East => LocalCoord::new(c.x + 1, c.y),
        Dir::West => LocalCoord::new(c.x - 1, c.y),
        Dir::North => LocalCoord::new(c.x, c.y + 1),
        Dir::South => LocalCoord::new(c.x, c.y - 1),
    }
}
