//! Rail-first minimal routing, budgeted misrouting with per-hop VC
//! escalation, mesh sub-routing and channel-dependency checking.
//!
//! Every inter-node hop moves a packet up one VC level; mesh hops stay on the
//! current level. Routes are therefore acyclic across levels as long as the
//! mesh policy is acyclic within one, and the level count is the longest
//! inter-node route plus one.

pub mod cdg;
mod mesh;
mod network;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topo::{Axis, ChipCoord};

pub use cdg::{verify_deadlock_free, DeadlockVerdict};
pub use mesh::{mesh_options, mesh_route, MeshPolicy};
pub use network::{Channel, ChannelId, ChannelKind, Dir, Network};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RouteError {
    #[error("chip {0:?} is outside the topology")]
    InvalidChip(ChipCoord),
    #[error("no route from {src:?} to {dst:?}")]
    Unreachable { src: ChipCoord, dst: ChipCoord },
    #[error("topology is disconnected")]
    Disconnected,
    #[error("misroute budget {budget} must exceed the inter-node diameter {diameter}")]
    Budget { budget: u32, diameter: u32 },
    #[error("route from {src:?} to {dst:?} did not terminate")]
    Livelock { src: ChipCoord, dst: ChipCoord },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoutingMode {
    #[default]
    MinimalDeterministic,
    MinimalAdaptive,
    NonminimalAdaptive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoutingPolicy {
    pub mode: RoutingMode,
    pub mesh: MeshPolicy,
    /// Longest allowed route in inter-node hops (nonminimal mode only).
    pub misroute_budget: u32,
    /// Misroute once the minimal output's free-credit fraction drops below this.
    pub misroute_threshold: f64,
    /// Raise the VC on every inter-node hop. Off means a single VC.
    pub escalate_vc: bool,
}

impl Default for RoutingPolicy {
    fn default() -> Self {
        RoutingPolicy {
            mode: RoutingMode::MinimalDeterministic,
            mesh: MeshPolicy::DimensionOrder,
            misroute_budget: 0,
            misroute_threshold: 0.25,
            escalate_vc: true,
        }
    }
}

impl RoutingPolicy {
    pub fn minimal() -> Self {
        Self::default()
    }

    pub fn adaptive() -> Self {
        RoutingPolicy {
            mode: RoutingMode::MinimalAdaptive,
            ..Self::default()
        }
    }

    pub fn nonminimal(budget: u32) -> Self {
        RoutingPolicy {
            mode: RoutingMode::NonminimalAdaptive,
            misroute_budget: budget,
            ..Self::default()
        }
    }

    pub fn with_mesh(mut self, mesh: MeshPolicy) -> Self {
        self.mesh = mesh;
        self
    }

    /// VC levels needed on a topology with the given inter-node diameter.
    pub fn vc_levels(&self, diameter: u32) -> u32 {
        match (self.escalate_vc, self.mode) {
            (false, _) => 1,
            (true, RoutingMode::NonminimalAdaptive) => self.misroute_budget + 1,
            (true, _) => diameter + 1,
        }
    }
}

/// Per-packet routing state carried between routers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RouteState {
    /// Inter-node hops taken so far.
    pub hops: u8,
    /// Rail channel chosen for leaving the current node.
    pub target: Option<ChannelId>,
    /// Dimension of a misroute just taken, avoided on the next hop.
    pub avoid_dim: Option<u16>,
}

/// Local congestion signal: free credit fraction of an output VC.
pub trait Congestion {
    fn free_fraction(&self, channel: ChannelId, vc: u8) -> f64;
}

/// No congestion anywhere.
pub struct Idle;

impl Congestion for Idle {
    fn free_fraction(&self, _: ChannelId, _: u8) -> f64 {
        1.0
    }
}

impl<F: Fn(ChannelId, u8) -> f64> Congestion for F {
    fn free_fraction(&self, channel: ChannelId, vc: u8) -> f64 {
        self(channel, vc)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Hop {
    Eject,
    Move {
        channel: ChannelId,
        vc: u8,
        next: RouteState,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "class")]
pub enum StepClass {
    Mesh,
    Rail { axis: Axis, rail: u16 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteStep {
    pub from: ChipCoord,
    pub to: ChipCoord,
    pub class: StepClass,
    pub channel: ChannelId,
    pub vc: u8,
}

#[derive(Clone, Debug)]
pub struct Router<'a> {
    net: &'a Network,
    policy: RoutingPolicy,
    diameter: u32,
    /// Candidates for every (node, destination node) pair with no avoided
    /// dimension; built only for small node counts.
    table: Option<Vec<Vec<ChannelId>>>,
}

const TABLE_MAX_NODES: usize = 1024;

impl<'a> Router<'a> {
    pub fn new(net: &'a Network, policy: RoutingPolicy) -> Result<Self, RouteError> {
        let diameter = net.node_diameter().ok_or(RouteError::Disconnected)?;
        if policy.mode == RoutingMode::NonminimalAdaptive && policy.misroute_budget <= diameter {
            return Err(RouteError::Budget {
                budget: policy.misroute_budget,
                diameter,
            });
        }
        let mut router = Router {
            net,
            policy,
            diameter,
            table: None,
        };
        let nodes = net.node_count();
        if nodes <= TABLE_MAX_NODES {
            let table = (0..nodes * nodes)
                .map(|i| router.compute_candidates(i / nodes, i % nodes, None))
                .collect();
            router.table = Some(table);
        }
        Ok(router)
    }

    pub fn network(&self) -> &'a Network {
        self.net
    }

    pub fn policy(&self) -> &RoutingPolicy {
        &self.policy
    }

    pub fn diameter(&self) -> u32 {
        self.diameter
    }

    pub fn vc_levels(&self) -> usize {
        self.policy.vc_levels(self.diameter) as usize
    }

    fn level(&self, hops: u8) -> u8 {
        if self.policy.escalate_vc {
            hops
        } else {
            0
        }
    }

    /// Productive rail channels out of `node` towards `dst_node`, restricted to
    /// the lowest dimension (X-rails before Y-rails).
    fn candidates(
        &self,
        node: usize,
        dst_node: usize,
        avoid: Option<u16>,
    ) -> std::borrow::Cow<'_, [ChannelId]> {
        match (&self.table, avoid) {
            (Some(t), None) => {
                std::borrow::Cow::Borrowed(&t[node * self.net.node_count() + dst_node])
            }
            _ => std::borrow::Cow::Owned(self.compute_candidates(node, dst_node, avoid)),
        }
    }

    fn compute_candidates(
        &self,
        node: usize,
        dst_node: usize,
        avoid: Option<u16>,
    ) -> Vec<ChannelId> {
        let net = self.net;
        let d = net.node_distance(node, dst_node);
        if d == 0 || d == u32::MAX {
            return Vec::new();
        }
        let mut productive: Vec<ChannelId> = net
            .node_channels(node)
            .iter()
            .copied()
            .filter(|&c| {
                net.node_distance(net.node_of(net.channel(c).dst as usize), dst_node) == d - 1
            })
            .collect();
        if let Some(avoid) = avoid {
            if productive
                .iter()
                .any(|&c| net.channel(c).dim() != Some(avoid))
            {
                productive.retain(|&c| net.channel(c).dim() != Some(avoid));
            }
        }
        let lowest = productive
            .iter()
            .filter_map(|&c| net.channel(c).dim())
            .min();
        productive.retain(|&c| net.channel(c).dim() == lowest);
        productive
    }

    /// Nearest exit; ties prefer lower exit chip (x, then y), then lower rail.
    fn nearest(&self, chip: usize, cands: &[ChannelId]) -> Option<ChannelId> {
        let here = self.net.local_of(chip);
        cands.iter().copied().min_by_key(|&c| {
            let ch = self.net.channel(c);
            let exit = self.net.local_of(ch.src as usize);
            let rail = match ch.kind {
                ChannelKind::Rail { rail, .. } => rail,
                ChannelKind::Mesh(_) => u16::MAX,
            };
            (here.manhattan(exit), exit.x, exit.y, rail, c)
        })
    }

    fn pick_target(&self, chip: usize, cands: &[ChannelId], flow: u64) -> Option<ChannelId> {
        match self.policy.mode {
            RoutingMode::MinimalAdaptive if !cands.is_empty() => {
                let h = mix(flow ^ mix(self.net.node_of(chip) as u64));
                Some(cands[(h % cands.len() as u64) as usize])
            }
            _ => self.nearest(chip, cands),
        }
    }

    fn unreachable(&self, chip: usize, dst: usize) -> RouteError {
        RouteError::Unreachable {
            src: self.net.coord(chip),
            dst: self.net.coord(dst),
        }
    }

    fn mesh_hop<C: Congestion>(
        &self,
        chip: usize,
        goal: usize,
        state: RouteState,
        cong: &C,
    ) -> Hop {
        let opts = mesh_options(
            self.net.local_of(chip),
            self.net.local_of(goal),
            self.policy.mesh,
        );
        let vc = self.level(state.hops);
        let channel_of = |d: Dir| {
            self.net
                .mesh_channel(chip, d)
                .expect("productive move stays on the mesh")
        };
        let mut best = channel_of(opts[0]);
        if opts.len() > 1 {
            let mut best_free = cong.free_fraction(best, vc);
            for &d in &opts[1..] {
                let c = channel_of(d);
                let free = cong.free_fraction(c, vc);
                if free > best_free {
                    best = c;
                    best_free = free;
                }
            }
        }
        Hop::Move {
            channel: best,
            vc,
            next: state,
        }
    }

    fn rail_hop(&self, channel: ChannelId, state: RouteState, avoid_dim: Option<u16>) -> Hop {
        let hops = state.hops + 1;
        Hop::Move {
            channel,
            vc: self.level(hops),
            next: RouteState {
                hops,
                target: None,
                avoid_dim,
            },
        }
    }

    /// Rail channels on `chip` that keep the route within the misroute budget.
    fn detours(
        &self,
        chip: usize,
        dst_node: usize,
        state: RouteState,
        minimal: ChannelId,
    ) -> Vec<ChannelId> {
        let net = self.net;
        let budget = self.policy.misroute_budget;
        net.rail_channels(chip)
            .iter()
            .copied()
            .filter(|&c| c != minimal)
            .filter(|&c| {
                let w = net.node_of(net.channel(c).dst as usize);
                let rest = net.node_distance(w, dst_node);
                rest != u32::MAX && state.hops as u32 + 1 + rest <= budget
            })
            .collect()
    }

    /// The next hop for a packet at `chip` headed for `dst`.
    pub fn decide<C: Congestion>(
        &self,
        chip: usize,
        dst: usize,
        state: RouteState,
        flow: u64,
        cong: &C,
    ) -> Result<Hop, RouteError> {
        let net = self.net;
        let node = net.node_of(chip);
        let dst_node = net.node_of(dst);
        if node == dst_node {
            if chip == dst {
                return Ok(Hop::Eject);
            }
            return Ok(self.mesh_hop(chip, dst, state, cong));
        }
        let target = match state.target {
            Some(t) => t,
            None => {
                let cands = self.candidates(node, dst_node, state.avoid_dim);
                self.pick_target(chip, &cands, flow)
                    .ok_or_else(|| self.unreachable(chip, dst))?
            }
        };
        let exit = net.channel(target).src as usize;
        if exit != chip {
            return Ok(self.mesh_hop(
                chip,
                exit,
                RouteState {
                    target: Some(target),
                    ..state
                },
                cong,
            ));
        }
        if self.policy.mode == RoutingMode::NonminimalAdaptive {
            let vc = self.level(state.hops + 1);
            let minimal_free = cong.free_fraction(target, vc);
            if minimal_free < self.policy.misroute_threshold {
                let mut best: Option<(ChannelId, f64)> = None;
                for c in self.detours(chip, dst_node, state, target) {
                    let free = cong.free_fraction(c, vc);
                    if best.is_none_or(|(_, f)| free > f) {
                        best = Some((c, free));
                    }
                }
                if let Some((c, free)) = best {
                    if free > minimal_free {
                        return Ok(self.rail_hop(c, state, net.channel(c).dim()));
                    }
                }
            }
        }
        Ok(self.rail_hop(target, state, None))
    }

    /// Every hop the policy may take from this state, for dependency analysis.
    pub fn options(&self, chip: usize, dst: usize, state: RouteState) -> Vec<Hop> {
        let net = self.net;
        let node = net.node_of(chip);
        let dst_node = net.node_of(dst);
        let mesh_moves = |goal: usize, next: RouteState| -> Vec<Hop> {
            mesh_options(net.local_of(chip), net.local_of(goal), self.policy.mesh)
                .iter()
                .map(|d| Hop::Move {
                    channel: net
                        .mesh_channel(chip, *d)
                        .expect("productive move stays on the mesh"),
                    vc: self.level(state.hops),
                    next,
                })
                .collect()
        };
        if node == dst_node {
            return if chip == dst {
                vec![Hop::Eject]
            } else {
                mesh_moves(dst, state)
            };
        }
        let targets: Vec<ChannelId> = match state.target {
            Some(t) => vec![t],
            None => {
                let cands = self.candidates(node, dst_node, state.avoid_dim);
                match self.policy.mode {
                    RoutingMode::MinimalAdaptive => cands.into_owned(),
                    _ => self.nearest(chip, &cands).into_iter().collect(),
                }
            }
        };
        let mut out = Vec::new();
        for t in targets {
            let exit = net.channel(t).src as usize;
            if exit != chip {
                out.extend(mesh_moves(
                    exit,
                    RouteState {
                        target: Some(t),
                        ..state
                    },
                ));
                continue;
            }
            out.push(self.rail_hop(t, state, None));
            if self.policy.mode == RoutingMode::NonminimalAdaptive {
                for c in self.detours(chip, dst_node, state, t) {
                    out.push(self.rail_hop(c, state, net.channel(c).dim()));
                }
            }
        }
        out
    }

    /// Full route under a congestion view.
    pub fn route_with<C: Congestion>(
        &self,
        src: ChipCoord,
        dst: ChipCoord,
        flow: u64,
        cong: &C,
    ) -> Result<Vec<RouteStep>, RouteError> {
        let topo = &self.net.topology;
        for c in [src, dst] {
            if !topo.contains(c) {
                return Err(RouteError::InvalidChip(c));
            }
        }
        let d = self.net.index(dst);
        let mut chip = self.net.index(src);
        let mut state = RouteState::default();
        let mut steps = Vec::new();
        let limit = 4 * self.net.chip_count() * (self.vc_levels() + 1);
        loop {
            match self.decide(chip, d, state, flow, cong)? {
                Hop::Eject => return Ok(steps),
                Hop::Move { channel, vc, next } => {
                    let ch = self.net.channel(channel);
                    let class = match ch.kind {
                        ChannelKind::Mesh(_) => StepClass::Mesh,
                        ChannelKind::Rail { axis, rail, .. } => StepClass::Rail { axis, rail },
                    };
                    steps.push(RouteStep {
                        from: self.net.coord(chip),
                        to: self.net.coord(ch.dst as usize),
                        class,
                        channel,
                        vc,
                    });
                    chip = ch.dst as usize;
                    state = next;
                    if steps.len() > limit {
                        return Err(RouteError::Livelock { src, dst });
                    }
                }
            }
        }
    }
}

/// Route on an idle network.
pub fn minimal_route(
    net: &Network,
    src: ChipCoord,
    dst: ChipCoord,
    policy: &RoutingPolicy,
) -> Result<Vec<RouteStep>, RouteError> {
    Router::new(net, *policy)?.route_with(src, dst, 0, &Idle)
}

/// One routing decision for a packet in flight.
pub fn nonminimal_route_next<C: Congestion>(
    router: &Router<'_>,
    chip: ChipCoord,
    dst: ChipCoord,
    state: RouteState,
    flow: u64,
    cong: &C,
) -> Result<Hop, RouteError> {
    let net = router.network();
    router.decide(net.index(chip), net.index(dst), state, flow, cong)
}

/// SplitMix64 finaliser.
pub(crate) fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
