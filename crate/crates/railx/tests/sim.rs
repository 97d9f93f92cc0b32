use std::sync::atomic::{AtomicUsize, Ordering};

use railx::par::Exec;
use railx::route::*;
use railx::sim::*;
use railx::topo::*;
use railx::traffic::*;

fn hyperx(m: u32, n: u32, grid: u32) -> LogicalTopology {
    build_hyperx(&FabricSpec::new(m, n, 2.0, 64, grid).unwrap()).unwrap()
}

fn short() -> SimParams {
    SimParams { warmup: 500, measure: 1000, ..SimParams::default() }
}

fn one_packet(src: ChipCoord, dst: ChipCoord, flits: u64, params: &SimParams) -> Workload {
    Workload::Trace(TrafficPattern {
        demands: vec![Demand { time_ms: 0.0, src, dst, bytes: flits * params.flit_bytes, kind: Parallelism::Synthetic }],
    })
}

fn uniform(load: f64) -> Workload {
    Workload::Synthetic { pattern: SyntheticPattern::Uniform, load }
}

#[test]
fn zero_load_adjacent_mesh_chips() {
    let topo = hyperx(2, 1, 3);
    let p = SimParams::default();
    let r = run_simulation(
        &topo,
        &RoutingPolicy::minimal(),
        &one_packet(ChipCoord::new(0, 0, 0, 0), ChipCoord::new(0, 0, 1, 0), 4, &p),
        &p,
    )
    .unwrap();
    // pipeline 2 at injection, 2 + 1 for the hop, tail one cycle behind on 2 lanes
    assert_eq!(r.latency_mean, 6.0);
    assert_eq!(zero_load_latency(&p, 1, 0, 1), 6);
    assert_eq!(r.completion_cycle, Some(6));
    assert_eq!(r.flits_delivered, 4);
}

#[test]
fn zero_load_adjacent_nodes() {
    let topo = hyperx(2, 1, 3);
    let p = SimParams::default();
    let link = topo.links[0];
    let src = ChipCoord { node: link.plus, local: topo.port_chip(link.axis, link.rail, Sign::Plus) };
    let dst = ChipCoord { node: link.minus, local: topo.port_chip(link.axis, link.rail, Sign::Minus) };
    let r = run_simulation(&topo, &RoutingPolicy::minimal(), &one_packet(src, dst, 4, &p), &p).unwrap();
    // injection pipeline 2, rail hop 2 + 10, three trailing flits at 1 flit/cycle
    assert_eq!(r.latency_mean, 17.0);
}

#[test]
fn zero_load_matches_route_latency() {
    let p = SimParams::default();
    let spec = FabricSpec::new(2, 2, 2.0, 64, 4).unwrap();
    let topos = [
        build_torus(&spec).unwrap(),
        hyperx(2, 2, 5),
        build_dragonfly(&FabricSpec::new(2, 1, 2.0, 64, 7).unwrap(), 64, 64).unwrap(),
    ];
    for topo in &topos {
        let net = Network::new(topo);
        let chips = net.chip_count();
        for (s, d) in [(0, chips - 1), (1, chips / 2), (chips - 2, 3), (5, 6)] {
            let (src, dst) = (net.coord(s), net.coord(d));
            let steps = minimal_route(&net, src, dst, &RoutingPolicy::minimal()).unwrap();
            let inter = steps.iter().filter(|s| s.class != StepClass::Mesh).count() as u32;
            let mesh = steps.len() as u32 - inter;
            let r = run_simulation(topo, &RoutingPolicy::minimal(), &one_packet(src, dst, 4, &p), &p).unwrap();
            assert_eq!(r.latency_mean as u64, zero_load_latency(&p, topo.ports_per_edge, inter, mesh), "{:?} {s}->{d}", topo.kind);
        }
    }
}

#[test]
fn conservation_and_bounds() {
    let topo = hyperx(2, 2, 3);
    let p = short();
    for load in [0.2, 0.9] {
        let r = run_simulation(&topo, &RoutingPolicy::minimal(), &uniform(load), &p).unwrap();
        assert_eq!(r.flits_injected, r.flits_delivered + r.flits_in_flight);
        assert!(!r.deadlock);
        assert!(r.accepted <= r.measured_offered * 1.05 + 0.01, "{r:?}");
        let floor = zero_load_latency(&p, 2, 0, 1) as f64;
        assert!(r.latency_mean >= floor);
        let u = &r.utilization;
        assert!(u.per_channel.iter().all(|&x| (0.0..=1.0).contains(&x)));
        assert!(u.rail_max >= u.rail_mean);
    }
}

#[test]
fn identical_seeds_reproduce() {
    let topo = hyperx(2, 2, 3);
    let p = short();
    let a = run_simulation(&topo, &RoutingPolicy::adaptive(), &uniform(0.6), &p).unwrap();
    let b = run_simulation(&topo, &RoutingPolicy::adaptive(), &uniform(0.6), &p).unwrap();
    assert_eq!(a, b);
    let c = run_simulation(&topo, &RoutingPolicy::adaptive(), &uniform(0.6), &SimParams { seed: 9, ..p }).unwrap();
    assert_ne!(a.latency_mean, c.latency_mean);
}

#[test]
fn rejects_bad_configuration() {
    let topo = hyperx(2, 2, 3);
    let policy = RoutingPolicy::minimal();
    let few = SimParams { total_vcs: Some(2), ..short() };
    assert_eq!(
        run_simulation(&topo, &policy, &uniform(0.1), &few),
        Err(SimError::VcShortfall { needed: 3, available: 2 })
    );
    let tiny = SimParams { buffer_per_vc: 2, ..short() };
    assert!(matches!(run_simulation(&topo, &policy, &uniform(0.1), &tiny), Err(SimError::InvalidParams(_))));
    assert!(matches!(run_simulation(&topo, &policy, &uniform(-1.0), &short()), Err(SimError::InvalidParams(_))));
    let wide = build_torus(&FabricSpec::new(2, 2, 2.0, 64, 3).unwrap()).unwrap();
    let wide = rectangular_torus(&wide);
    let transpose = Workload::Synthetic { pattern: SyntheticPattern::Transpose, load: 0.1 };
    assert!(matches!(run_simulation(&wide, &policy, &transpose, &short()), Err(SimError::Traffic(_))));
}

/// A 4x2 torus, so transpose has no square grid.
fn rectangular_torus(torus: &LogicalTopology) -> LogicalTopology {
    let spec = FabricSpec::new(2, 2, 2.0, 64, 4).unwrap();
    let full = build_torus(&spec).unwrap();
    let links = full.links.into_iter().filter(|l| l.plus.y < 2 && l.minus.y < 2).collect();
    LogicalTopology { height: 2, width: 4, links, ..torus.clone() }
}

#[test]
fn sweep_is_monotone_until_plateau() {
    let topo = hyperx(2, 2, 3);
    let loads: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
    let seen = AtomicUsize::new(0);
    let reports = sweep_load(&topo, &RoutingPolicy::minimal(), &SyntheticPattern::Uniform, &loads, &short(), Exec::default(), |_| {
        seen.fetch_add(1, Ordering::Relaxed);
    })
    .unwrap();
    assert_eq!(seen.into_inner(), loads.len());
    assert_eq!(reports.len(), loads.len());
    for w in reports.windows(2) {
        assert!(w[1].accepted >= w[0].accepted - 0.02, "{} then {}", w[0].accepted, w[1].accepted);
    }
    assert!(sweep_load(&topo, &RoutingPolicy::minimal(), &SyntheticPattern::Uniform, &[0.5, 0.2], &short(), Exec::Sequential, |_| {}).is_err());
}

#[test]
fn sequential_and_parallel_sweeps_agree() {
    let topo = hyperx(2, 2, 3);
    let loads = [0.2, 0.4];
    let run = |exec| sweep_load(&topo, &RoutingPolicy::minimal(), &SyntheticPattern::Uniform, &loads, &short(), exec, |_| {}).unwrap();
    assert_eq!(run(Exec::Sequential), run(Exec::Parallel));
}

#[test]
fn hyperx_plateau_near_bisection_bound() {
    // m=4, n=1: bound 2n/m = 0.5
    let topo = hyperx(4, 1, 5);
    let p = SimParams { warmup: 1500, measure: 2000, ..SimParams::default() };
    let r = run_simulation(&topo, &RoutingPolicy::minimal(), &uniform(1.0), &p).unwrap();
    assert!(!r.deadlock);
    assert!((r.accepted - 0.5).abs() <= 0.1, "{}", r.accepted);
}

#[test]
fn torus_saturates_below_hyperx() {
    let spec = FabricSpec::new(4, 1, 2.0, 64, 5).unwrap();
    let p = SimParams { warmup: 1000, measure: 1500, ..SimParams::default() };
    let torus = run_simulation(&build_torus(&spec).unwrap(), &RoutingPolicy::minimal(), &uniform(1.0), &p).unwrap();
    let hx = run_simulation(&build_hyperx(&spec).unwrap(), &RoutingPolicy::minimal(), &uniform(1.0), &p).unwrap();
    assert!(torus.accepted < hx.accepted, "torus {} hyperx {}", torus.accepted, hx.accepted);
}

#[test]
fn hotspot_collapses_throughput() {
    // 40 flits/cycle aimed at one node whose 16 inbound rails carry 16
    let topo = hyperx(4, 1, 5);
    let p = SimParams { warmup: 1000, measure: 1000, ..SimParams::default() };
    let hot = Workload::Synthetic { pattern: SyntheticPattern::Hotspot { fraction: 0.1, node: NodeCoord::new(2, 2) }, load: 1.0 };
    let h = run_simulation(&topo, &RoutingPolicy::minimal(), &hot, &p).unwrap();
    let u = run_simulation(&topo, &RoutingPolicy::minimal(), &uniform(1.0), &p).unwrap();
    assert!(h.accepted < u.accepted, "hotspot {} uniform {}", h.accepted, u.accepted);
}

#[test]
fn adversarial_runs_finish_without_watchdog() {
    let topo = hyperx(2, 2, 3);
    let p = short();
    let patterns = [
        SyntheticPattern::Uniform,
        SyntheticPattern::Transpose,
        SyntheticPattern::BitReverse,
        SyntheticPattern::Hotspot { fraction: 0.3, node: NodeCoord::new(0, 0) },
    ];
    for policy in [RoutingPolicy::minimal(), RoutingPolicy::adaptive(), RoutingPolicy::nonminimal(3)] {
        for pattern in &patterns {
            let w = Workload::Synthetic { pattern: pattern.clone(), load: 1.0 };
            let r = run_simulation(&topo, &policy, &w, &p).unwrap();
            assert!(!r.deadlock, "{:?} {}", policy.mode, pattern.name());
            assert!(r.accepted > 0.0);
        }
    }
}

#[test]
fn trace_runs_to_completion() {
    let topo = hyperx(2, 2, 3);
    let spec = ParallelismSpec {
        tp: 4,
        cp: 1,
        ep: 9,
        dp_expert: 1,
        pp: 1,
        model: ModelSpec {
            layers: 1,
            micro_batch: 1,
            micro_batches: 1,
            seq_len: 16,
            hidden: 32,
            vocab: 64,
            heads_attn: 4,
            heads_kv: 4,
            ffn: 64,
            top_k: 2,
        },
        bytes_per_element: 2,
    };
    let groups = build_groups(&spec).unwrap();
    let placement = Placement::linear(&spec, &topo).unwrap();
    let pattern = synthesize_traffic(&spec, &groups, &placement, Phase::Forward, &Timeline { slot_ms: 0.2, cp_ep_gap_ms: 0.1 }).unwrap();
    let p = SimParams::default();
    let flits: u64 = pattern.demands.iter().map(|d| d.bytes.div_ceil(p.flit_bytes)).sum();
    let r = run_simulation(&topo, &RoutingPolicy::minimal(), &Workload::Trace(pattern), &p).unwrap();
    assert!(!r.deadlock);
    assert_eq!(r.flits_delivered, flits);
    assert_eq!(r.flits_in_flight, 0);
    assert!(r.completion_cycle.unwrap() >= 100);
}

#[test]
fn csv_rows() {
    let topo = hyperx(2, 2, 3);
    let r = run_simulation(&topo, &RoutingPolicy::minimal(), &uniform(0.3), &short()).unwrap();
    let mut buf = Vec::new();
    write_csv(&[r.clone(), r], &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("pattern,offered,"));
    assert!(lines[1].starts_with("uniform,0.3000,"));
    let json = serde_json::to_string(&SimReport::default()).unwrap();
    assert!(json.contains("\"deadlock\":false"));
}
