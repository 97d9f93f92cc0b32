//! Channel dependency graph construction and cycle search.

use std::collections::{HashMap, HashSet, VecDeque};

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use serde::{Deserialize, Serialize};

use super::{ChannelId, Hop, Network, RouteError, RouteState, Router, RoutingPolicy};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeadlockVerdict {
    pub acyclic: bool,
    /// `(channel, vc)` pairs used by at least one route.
    pub channels: usize,
    pub dependencies: usize,
    /// A dependency cycle, first element repeated at the end.
    pub cycle: Option<Vec<(ChannelId, u8)>>,
}

/// Builds the dependency graph over `(channel, vc)` pairs induced by every
/// hop the policy may take, over all source/destination chip pairs, and
/// searches it for a cycle.
pub fn verify_deadlock_free(
    net: &Network,
    policy: &RoutingPolicy,
) -> Result<DeadlockVerdict, RouteError> {
    let router = Router::new(net, *policy)?;
    let levels = router.vc_levels().max(1) as u64;
    let key = |c: ChannelId, vc: u8| c.0 as u64 * levels + vc as u64;
    let mut used: HashSet<u64> = HashSet::new();
    let mut deps: HashSet<(u64, u64)> = HashSet::new();
    let chips = net.chip_count();
    for dst in 0..chips {
        let mut seen: HashSet<(u32, RouteState, Option<u64>)> = HashSet::new();
        let mut stack: Vec<(usize, RouteState, Option<u64>)> = Vec::new();
        for src in (0..chips).filter(|&s| s != dst) {
            if seen.insert((src as u32, RouteState::default(), None)) {
                stack.push((src, RouteState::default(), None));
            }
        }
        while let Some((chip, state, held)) = stack.pop() {
            let options = router.options(chip, dst, state);
            if options.is_empty() {
                return Err(RouteError::Unreachable {
                    src: net.coord(chip),
                    dst: net.coord(dst),
                });
            }
            for hop in options {
                let Hop::Move { channel, vc, next } = hop else {
                    continue;
                };
                let k = key(channel, vc);
                used.insert(k);
                if let Some(h) = held {
                    deps.insert((h, k));
                }
                let to = net.channel(channel).dst;
                if seen.insert((to, next, Some(k))) {
                    stack.push((to as usize, next, Some(k)));
                }
            }
        }
    }

    let mut graph = DiGraph::<u64, ()>::new();
    let mut index: HashMap<u64, NodeIndex> = HashMap::new();
    let mut sorted: Vec<u64> = used.iter().copied().collect();
    sorted.sort_unstable();
    for k in sorted {
        index.insert(k, graph.add_node(k));
    }
    let mut edges: Vec<(u64, u64)> = deps.iter().copied().collect();
    edges.sort_unstable();
    for &(a, b) in &edges {
        graph.add_edge(index[&a], index[&b], ());
    }
    let decode = |k: u64| (ChannelId((k / levels) as u32), (k % levels) as u8);
    let cycle = tarjan_scc(&graph)
        .into_iter()
        .find(|scc| scc.len() > 1 || graph.contains_edge(scc[0], scc[0]))
        .map(|scc| {
            extract_cycle(&graph, &scc)
                .into_iter()
                .map(|n| decode(graph[n]))
                .collect()
        });
    Ok(DeadlockVerdict {
        acyclic: cycle.is_none(),
        channels: used.len(),
        dependencies: edges.len(),
        cycle,
    })
}

/// Shortest cycle through the first node of a strongly connected component.
fn extract_cycle(graph: &DiGraph<u64, ()>, scc: &[NodeIndex]) -> Vec<NodeIndex> {
    let members: HashSet<NodeIndex> = scc.iter().copied().collect();
    let start = scc[0];
    let mut parent: HashMap<NodeIndex, NodeIndex> = HashMap::new();
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        for v in graph.neighbors(u) {
            if v == start {
                let mut cycle = vec![u];
                while let Some(&p) = parent.get(cycle.last().unwrap()) {
                    cycle.push(p);
                }
                cycle.reverse();
                if cycle[0] != start {
                    cycle.insert(0, start);
                }
                cycle.push(start);
                return cycle;
            }
            if members.contains(&v) && v != start && !parent.contains_key(&v) {
                parent.insert(v, u);
                queue.push_back(v);
            }
        }
    }
    unreachable!("a strongly connected component with an edge has a cycle through every member")
}
