use std::collections::BTreeSet;

use railx::route::*;
use railx::topo::*;

fn hyperx(m: u32, n: u32, grid: u32) -> Network {
    Network::new(&build_hyperx(&FabricSpec::new(m, n, 2.0, 64, grid).unwrap()).unwrap())
}

fn node_path(steps: &[RouteStep], src: ChipCoord) -> Vec<NodeCoord> {
    let mut nodes = vec![src.node];
    for s in steps {
        if s.to.node != *nodes.last().unwrap() {
            nodes.push(s.to.node);
        }
    }
    nodes
}

/// All minimal move sequences, filtered by the north-last turn rule.
fn north_last_oracle(src: LocalCoord, dst: LocalCoord) -> usize {
    let dx = dst.x as i32 - src.x as i32;
    let dy = dst.y as i32 - src.y as i32;
    let xs = vec![if dx > 0 { Dir::East } else { Dir::West }; dx.unsigned_abs() as usize];
    let ys = vec![if dy > 0 { Dir::North } else { Dir::South }; dy.unsigned_abs() as usize];
    let total = xs.len() + ys.len();
    let mut count = 0;
    // choose positions of the x moves
    for mask in 0u32..(1 << total) {
        if mask.count_ones() as usize != xs.len() {
            continue;
        }
        let seq: Vec<Dir> = (0..total)
            .map(|i| if mask >> i & 1 == 1 { xs[0] } else { ys[0] })
            .collect();
        let turns_after_north = seq
            .windows(2)
            .any(|w| w[0] == Dir::North && w[1] != Dir::North);
        if !turns_after_north {
            count += 1;
        }
    }
    count
}

fn policy_paths(cur: LocalCoord, dst: LocalCoord, policy: MeshPolicy) -> usize {
    let opts = mesh_options(cur, dst, policy);
    if opts.is_empty() {
        return 1;
    }
    opts.iter()
        .map(|d| {
            let next = match d {
                Dir::East => LocalCoord::new(cur.x + 1, cur.y),
                Dir::West => LocalCoord::new(cur.x - 1, cur.y),
                Dir::North => LocalCoord::new(cur.x, cur.y + 1),
                Dir::South => LocalCoord::new(cur.x, cur.y - 1),
            };
            policy_paths(next, dst, policy)
        })
        .sum()
}

#[test]
fn mesh_routes() {
    let r = mesh_route(
        LocalCoord::new(0, 0),
        LocalCoord::new(2, 3),
        MeshPolicy::DimensionOrder,
    );
    assert_eq!(
        r,
        vec![Dir::East, Dir::East, Dir::North, Dir::North, Dir::North]
    );
    assert!(mesh_route(
        LocalCoord::new(1, 1),
        LocalCoord::new(1, 1),
        MeshPolicy::DimensionOrder
    )
    .is_empty());
    for sx in 0..4 {
        for sy in 0..4 {
            for dx in 0..4 {
                for dy in 0..4 {
                    let (s, d) = (LocalCoord::new(sx, sy), LocalCoord::new(dx, dy));
                    assert_eq!(
                        policy_paths(s, d, MeshPolicy::NorthLast),
                        north_last_oracle(s, d)
                    );
                    assert_eq!(policy_paths(s, d, MeshPolicy::DimensionOrder), 1);
                    let nl = mesh_route(s, d, MeshPolicy::NorthLast);
                    assert_eq!(nl.len() as u32, s.manhattan(d));
                }
            }
        }
    }
    assert_eq!(
        north_last_oracle(LocalCoord::new(0, 0), LocalCoord::new(2, 2)),
        1
    );
    assert_eq!(
        north_last_oracle(LocalCoord::new(2, 2), LocalCoord::new(0, 0)),
        6
    );
}

#[test]
fn minimal_route_crosses_x_then_y() {
    let net = hyperx(2, 2, 5);
    let src = ChipCoord::new(0, 4, 0, 0);
    let dst = ChipCoord::new(4, 0, 1, 1);
    let steps = minimal_route(&net, src, dst, &RoutingPolicy::minimal()).unwrap();
    let nodes = node_path(&steps, src);
    assert_eq!(
        nodes,
        vec![
            NodeCoord::new(0, 4),
            NodeCoord::new(4, 4),
            NodeCoord::new(4, 0)
        ]
    );
    let mut level = 0;
    for s in &steps {
        match s.class {
            StepClass::Rail { axis, .. } => {
                level += 1;
                assert_eq!(axis, if level == 1 { Axis::X } else { Axis::Y });
            }
            StepClass::Mesh => {}
        }
        assert_eq!(s.vc, level);
    }
    assert_eq!(level, 2);
    assert!(minimal_route(&net, src, src, &RoutingPolicy::minimal())
        .unwrap()
        .is_empty());
}

/// Exhaustive all-pairs check on a 5x5-node HyperX (r = 4).
fn check_bounds(m: u32) {
    let net = hyperx(m, 4 / m, 5);
    let router = Router::new(&net, RoutingPolicy::minimal()).unwrap();
    let m = m as usize;
    let mut worst = (0, 0);
    for s in 0..net.chip_count() {
        for d in 0..net.chip_count() {
            let (src, dst) = (net.coord(s), net.coord(d));
            let steps = router.route_with(src, dst, 0, &Idle).unwrap();
            let inter = steps
                .iter()
                .filter(|st| matches!(st.class, StepClass::Rail { .. }))
                .count();
            let intra = steps.len() - inter;
            let bfs = net.node_distance(net.node_of(s), net.node_of(d)) as usize;
            assert_eq!(inter, bfs, "minimality {src:?}->{dst:?}");
            // per-node mesh hop bounds
            let mut segment = 0;
            for st in &steps {
                match st.class {
                    StepClass::Mesh => segment += 1,
                    StepClass::Rail { .. } => {
                        assert!(segment <= (m / 2 - 1) + (m - 1), "{src:?}->{dst:?}");
                        segment = 0;
                    }
                }
            }
            assert!(segment <= 2 * (m - 1));
            assert!(steps.windows(2).all(|w| w[0].vc <= w[1].vc));
            assert!(
                inter <= 2 && intra <= 5 * m - 6,
                "{src:?}->{dst:?}: {inter} {intra}"
            );
            worst = worst.max((inter, intra));
        }
    }
    assert_eq!(worst.0, 2);
}

#[test]
fn hyperx_route_bounds_m2() {
    check_bounds(2);
}

#[test]
fn hyperx_route_bounds_m4() {
    check_bounds(4);
}

#[test]
fn torus_and_dragonfly_routes_are_minimal() {
    let torus = Network::new(&build_torus(&FabricSpec::new(2, 1, 2.0, 16, 5).unwrap()).unwrap());
    let df =
        Network::new(&build_dragonfly(&FabricSpec::new(1, 2, 2.0, 16, 3).unwrap(), 8, 16).unwrap());
    for net in [torus, df] {
        let router = Router::new(&net, RoutingPolicy::minimal()).unwrap();
        for s in 0..net.chip_count() {
            for d in 0..net.chip_count() {
                let steps = router
                    .route_with(net.coord(s), net.coord(d), 0, &Idle)
                    .unwrap();
                let inter = steps.iter().filter(|st| st.channel_is_rail(&net)).count();
                assert_eq!(
                    inter as u32,
                    net.node_distance(net.node_of(s), net.node_of(d))
                );
            }
        }
    }
}

trait RailStep {
    fn channel_is_rail(&self, net: &Network) -> bool;
}

impl RailStep for RouteStep {
    fn channel_is_rail(&self, net: &Network) -> bool {
        net.channel(self.channel).is_rail()
    }
}

#[test]
fn congested_exit_takes_detour() {
    let net = hyperx(2, 2, 5);
    let router = Router::new(&net, RoutingPolicy::nonminimal(4)).unwrap();
    let hot_from = net.topology.node_index(NodeCoord::new(4, 4));
    let hot_to = net.topology.node_index(NodeCoord::new(4, 0));
    let congestion = |c: ChannelId, _vc: u8| {
        let ch = net.channel(c);
        if ch.is_rail()
            && net.node_of(ch.src as usize) == hot_from
            && net.node_of(ch.dst as usize) == hot_to
        {
            0.0
        } else {
            1.0
        }
    };
    let src = ChipCoord::new(0, 4, 0, 0);
    let dst = ChipCoord::new(4, 0, 1, 1);
    let steps = router.route_with(src, dst, 0, &congestion).unwrap();
    let nodes = node_path(&steps, src);
    assert_eq!(nodes.len(), 5, "{nodes:?}");
    let detour = nodes[2];
    assert_eq!(nodes[1], NodeCoord::new(4, 4));
    assert_eq!(detour.y, 4);
    assert_ne!(detour.x, 4);
    assert_eq!(nodes[3], NodeCoord::new(detour.x, 0));
    assert_eq!(nodes[4], NodeCoord::new(4, 0));
    let rails: Vec<&RouteStep> = steps
        .iter()
        .filter(|s| matches!(s.class, StepClass::Rail { .. }))
        .collect();
    let axes: Vec<Axis> = rails
        .iter()
        .map(|s| match s.class {
            StepClass::Rail { axis, .. } => axis,
            StepClass::Mesh => unreachable!(),
        })
        .collect();
    assert_eq!(axes, vec![Axis::X, Axis::X, Axis::Y, Axis::X]);
    // Arrival at the detour's second node is on VC-3.
    assert_eq!(rails[2].vc, 3);
    assert_eq!(rails[3].vc, 4);
    assert!(steps.windows(2).all(|w| w[0].vc <= w[1].vc));
}

#[test]
fn idle_nonminimal_matches_minimal() {
    let net = hyperx(2, 1, 3);
    let minimal = Router::new(&net, RoutingPolicy::minimal()).unwrap();
    let nonminimal = Router::new(&net, RoutingPolicy::nonminimal(3)).unwrap();
    for s in 0..net.chip_count() {
        for d in 0..net.chip_count() {
            let (a, b) = (net.coord(s), net.coord(d));
            assert_eq!(
                minimal.route_with(a, b, 7, &Idle).unwrap(),
                nonminimal.route_with(a, b, 7, &Idle).unwrap()
            );
        }
    }
}

#[test]
fn poisoned_link_routes_complete() {
    let net = hyperx(2, 1, 3);
    let router = Router::new(&net, RoutingPolicy::nonminimal(3)).unwrap();
    for poisoned in 0..net.topology.links.len() as u32 {
        let congestion = |c: ChannelId, _vc: u8| match net.channel(c).kind {
            ChannelKind::Rail { link, .. } if link == poisoned => 0.0,
            _ => 0.9,
        };
        for s in 0..net.chip_count() {
            for d in 0..net.chip_count() {
                let steps = router
                    .route_with(net.coord(s), net.coord(d), 0, &congestion)
                    .unwrap();
                assert!(steps.iter().all(|st| st.vc <= 3));
                assert_eq!(steps.last().map_or(net.coord(s), |st| st.to), net.coord(d));
            }
        }
    }
}

#[test]
fn policy_validation() {
    let net = hyperx(2, 2, 5);
    assert_eq!(
        Router::new(&net, RoutingPolicy::nonminimal(2)).unwrap_err(),
        RouteError::Budget {
            budget: 2,
            diameter: 2
        }
    );
    assert_eq!(
        Router::new(&net, RoutingPolicy::minimal())
            .unwrap()
            .vc_levels(),
        3
    );
    assert_eq!(
        Router::new(&net, RoutingPolicy::nonminimal(3))
            .unwrap()
            .vc_levels(),
        4
    );
    let mut t = build_hyperx(&FabricSpec::new(2, 2, 2.0, 64, 5).unwrap()).unwrap();
    t.links.retain(|l| l.plus.y != 0 && l.minus.y != 0);
    assert_eq!(
        Router::new(&Network::new(&t), RoutingPolicy::minimal()).unwrap_err(),
        RouteError::Disconnected
    );
    let outside = ChipCoord::new(9, 0, 0, 0);
    assert!(matches!(
        minimal_route(
            &net,
            outside,
            ChipCoord::new(0, 0, 0, 0),
            &RoutingPolicy::minimal()
        ),
        Err(RouteError::InvalidChip(_))
    ));
}

fn acyclic(net: &Network, policy: RoutingPolicy) -> bool {
    let v = verify_deadlock_free(net, &policy).unwrap();
    v.acyclic
}

#[test]
fn deadlock_freedom_matrix() {
    let single_vc = RoutingPolicy {
        escalate_vc: false,
        ..RoutingPolicy::minimal()
    };
    let mesh = Network::new(&LogicalTopology::single_node(4, 1, 2.0));
    assert!(acyclic(&mesh, single_vc));
    assert!(acyclic(&mesh, single_vc.with_mesh(MeshPolicy::NorthLast)));

    let nets = vec![
        hyperx(2, 2, 5),
        hyperx(2, 1, 3),
        Network::new(&build_torus(&FabricSpec::new(2, 1, 2.0, 16, 4).unwrap()).unwrap()),
        Network::new(&build_dragonfly(&FabricSpec::new(1, 2, 2.0, 16, 3).unwrap(), 8, 16).unwrap()),
    ];
    for net in &nets {
        let d = net.node_diameter().unwrap();
        for p in [
            RoutingPolicy::minimal(),
            RoutingPolicy::adaptive(),
            RoutingPolicy::minimal().with_mesh(MeshPolicy::NorthLast),
            RoutingPolicy::nonminimal(d + 1),
            RoutingPolicy::nonminimal(d + 2),
        ] {
            let v = verify_deadlock_free(net, &p).unwrap();
            assert!(v.acyclic, "{:?} {:?}", net.topology.kind, p.mode);
            assert!(v.channels > 0 && v.dependencies > 0);
        }
    }
}

#[test]
fn single_vc_torus_ring_is_cyclic() {
    let single_vc = RoutingPolicy {
        escalate_vc: false,
        ..RoutingPolicy::minimal()
    };
    let ring = Network::new(&build_torus(&FabricSpec::new(1, 1, 2.0, 16, 5).unwrap()).unwrap());
    let v = verify_deadlock_free(&ring, &single_vc).unwrap();
    assert!(!v.acyclic);
    let cycle = v.cycle.unwrap();
    assert!(cycle.len() >= 3);
    assert_eq!(cycle.first(), cycle.last());
    // consecutive channels chain head-to-tail
    for w in cycle.windows(2) {
        let a = ring.channel(w[0].0);
        let b = ring.channel(w[1].0);
        assert_eq!(a.dst, b.src);
    }
    let distinct: BTreeSet<_> = cycle.iter().collect();
    assert_eq!(distinct.len(), cycle.len() - 1);
    // With per-hop escalation the same ring is safe.
    assert!(acyclic(&ring, RoutingPolicy::minimal()));

    // Two-node rings never chain two hops along one axis.
    let pair = Network::new(&build_torus(&FabricSpec::new(2, 1, 2.0, 16, 2).unwrap()).unwrap());
    assert!(acyclic(&pair, single_vc));
}
