use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use railx::perf::*;
use railx::topo::{FabricSpec, TopologyKind};
use railx::traffic::{ModelSpec, ParallelismSpec};

const GB: f64 = 1e9;

fn fig12_link() -> LinkModel {
    LinkModel {
        alpha: 300e-9,
        alpha_local: 10e-9,
        port_bw: 100.0 * GB,
        ports_per_edge: 1,
        bandwidth_multiple: 4.0,
        mesh: 4,
    }
}

#[test]
fn torus_bound_cell() {
    let spec = FabricSpec::new(4, 2, 2.0, 128, 64).unwrap();
    let b = throughput_bound(TopologyKind::Torus, &spec).unwrap();
    assert_relative_eq!(b.approx, 16.0 * 2.0 / (128.0 * 4.0));
    assert_relative_eq!(b.exact, 0.0625);
}

#[test]
fn hyperx_and_dragonfly_bounds() {
    let spec = FabricSpec::new(4, 2, 2.0, 128, 9).unwrap();
    let hx = throughput_bound(TopologyKind::HyperX, &spec).unwrap();
    assert_relative_eq!(hx.approx, 1.0);
    // full HyperX: 2 (r+1) 4((r+1)/2)^2 / ((r+1)^2 m^2), r = 8
    let r = 8.0f64;
    assert_relative_eq!(hx.exact, 2.0 * (r + 1.0) * 4.0 * ((r + 1.0) / 2.0).powi(2) / ((r + 1.0).powi(2) * 16.0));
    let df = throughput_bound(TopologyKind::Dragonfly, &spec).unwrap();
    assert_relative_eq!(df.approx, hx.approx);
    assert_relative_eq!(df.exact, 2.0 * 9.0 * 64.0 * 8.0 / (9.0 * 64.0 * 16.0));
    assert!(throughput_bound(TopologyKind::SingleNode, &spec).is_err());
}

#[test]
fn ring_time_cells() {
    assert_eq!(t_ring(1, 5.0 * GB, 100.0 * GB, 300e-9), 0.0);
    let t = t_ring(2, 2.0 * GB, 100.0 * GB, 300e-9);
    assert_relative_eq!(t, 5.0003e-3, max_relative = 1e-12);
    let big = t_ring(1_000_000, 1.0 * GB, 100.0 * GB, 0.0);
    assert_relative_eq!(big, 1.0 * GB / (200.0 * GB), max_relative = 1e-5);
}

#[test]
fn eq5_predicate() {
    assert!(!mesh_non_bottleneck(1.0));
    assert!(!mesh_non_bottleneck(2.0));
    assert!(mesh_non_bottleneck(2.0001));
    assert!(mesh_non_bottleneck(4.0));
}

#[test]
fn model_tags_parse() {
    for m in AllReduceModel::ALL {
        assert_eq!(m.name().parse::<AllReduceModel>().unwrap(), m);
    }
    assert!(matches!("3d-ring".parse::<AllReduceModel>(), Err(PerfError::UnknownModel(_))));
}

#[test]
fn approximations_match_closed_forms() {
    let l = fig12_link();
    let (m, p, v) = (4.0, 8.0, 3.0 * GB);
    let nb = 100.0 * GB;
    let a = l.alpha;
    let cases = [
        (AllReduceModel::Ring2d, 4.0 * m * p * a + v / (2.0 * nb)),
        (AllReduceModel::Hierarchical, 4.0 * p * a + (2.0 / 4.0 + 1.0 / m) * v / (2.0 * nb)),
        (AllReduceModel::A2aHyperx, 4.0 * a + (2.0 / 4.0 + 1.0 / m) * v / (2.0 * nb)),
        (AllReduceModel::Node1d, 2.0 * p * a + v / (nb / m)),
        (AllReduceModel::Node2d, 4.0 * p * a + v / (2.0 * nb / m)),
    ];
    for (model, want) in cases {
        let t = t_allreduce(model, &l, 8, v).unwrap();
        assert_relative_eq!(t.approx, want, max_relative = 1e-12);
        // exact and approximate forms agree to leading order
        assert!((t.exact - t.approx).abs() / t.approx < 0.2, "{model:?} {t:?}");
    }
}

#[test]
fn exact_ring2d_from_primitives() {
    let l = fig12_link();
    let (p, v) = (4u64, 1.0 * GB);
    let mp = 16;
    let want = 2.0 * (t_ring(mp, v / 2.0, 100.0 * GB, l.alpha) + t_ring(mp, v / 32.0, 100.0 * GB, l.alpha));
    assert_relative_eq!(t_allreduce(AllReduceModel::Ring2d, &l, p, v).unwrap().exact, want);
    // exact all-to-all form: (m^2-1)/m^2 V/(knB) + 2[T_AR(p, V/2m^2, nB/m) + T_AR(mp, V/(2m^2 p), nB/m)]
    let shared = 25.0 * GB;
    let want = 15.0 / 16.0 * v / (400.0 * GB)
        + 2.0 * (t_direct(4, v / 32.0, shared, l.alpha) + t_direct(16, v / 128.0, shared, l.alpha));
    assert_relative_eq!(t_allreduce(AllReduceModel::A2aHyperx, &l, p, v).unwrap().exact, want);
}

#[test]
fn latency_ordering_at_zero_volume() {
    let l = fig12_link();
    for p in [2, 4, 16] {
        let at = |m| t_allreduce(m, &l, p, 0.0).unwrap();
        let (r, h, a) = (at(AllReduceModel::Ring2d), at(AllReduceModel::Hierarchical), at(AllReduceModel::A2aHyperx));
        assert!(r.approx > h.approx && h.approx > a.approx);
        assert!(r.exact > h.exact && h.exact >= a.exact);
    }
}

#[test]
fn models_are_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..300 {
        let base = LinkModel {
            alpha: rng.gen_range(1e-9..1e-6),
            alpha_local: 1e-8,
            port_bw: rng.gen_range(1.0..200.0) * GB,
            ports_per_edge: rng.gen_range(1..4),
            bandwidth_multiple: rng.gen_range(0.5..8.0),
            mesh: rng.gen_range(1..6),
        };
        let p = rng.gen_range(1..32);
        let v = rng.gen_range(1e3..1e11);
        for model in AllReduceModel::ALL {
            let t = |l: &LinkModel, v| t_allreduce(model, l, p, v).unwrap();
            let t0 = t(&base, v);
            let check = |other: AllReduceTime, grows: bool| {
                let ok = |a: f64, b: f64| if grows { a >= b * (1.0 - 1e-12) } else { a <= b * (1.0 + 1e-12) };
                assert!(ok(other.exact, t0.exact) && ok(other.approx, t0.approx), "{model:?} {base:?}");
            };
            check(t(&base, v * 1.5), true);
            check(t(&LinkModel { port_bw: base.port_bw * 1.5, ..base }, v), false);
            check(t(&LinkModel { ports_per_edge: base.ports_per_edge + 1, ..base }, v), false);
            check(t(&LinkModel { bandwidth_multiple: base.bandwidth_multiple * 2.0, ..base }, v), false);
        }
    }
}

#[test]
fn node2d_matches_hierarchical_global_phase() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let l = LinkModel {
            alpha: rng.gen_range(1e-9..1e-6),
            alpha_local: 0.0,
            port_bw: rng.gen_range(1.0..100.0) * GB,
            ports_per_edge: rng.gen_range(1..4),
            bandwidth_multiple: rng.gen_range(1.0..8.0),
            mesh: rng.gen_range(1..8),
        };
        let p = rng.gen_range(2..20);
        let v = rng.gen_range(1e6..1e10);
        let m2 = (l.mesh * l.mesh) as f64;
        let nb = l.ports_per_edge as f64 * l.port_bw;
        let hier = t_allreduce(AllReduceModel::Hierarchical, &l, p, v).unwrap();
        let node = t_allreduce(AllReduceModel::Node2d, &l, p, v / m2).unwrap();
        let local = v / (l.bandwidth_multiple * nb);
        assert_relative_eq!(hier.exact - local, node.exact, max_relative = 1e-9);
        assert_relative_eq!(hier.approx - local, node.approx, max_relative = 1e-9);
    }
}

#[test]
fn high_dimensional_reduces_to_node_ring() {
    let l = fig12_link();
    let one = t_allreduce_hd(&l, &[(8, 1)], GB).unwrap();
    assert_relative_eq!(one, t_allreduce(AllReduceModel::Node1d, &l, 8, GB).unwrap().exact);
    let two = t_allreduce_hd(&l, &[(8, 1), (8, 1)], GB).unwrap();
    let node2 = 2.0 * (t_ring(8, GB, 25.0 * GB, l.alpha) + t_ring(8, GB / 8.0, 25.0 * GB, l.alpha));
    assert_relative_eq!(two, node2);
    assert!(t_allreduce_hd(&l, &[(0, 1)], GB).is_err());
}

#[test]
fn hierarchical_wins_with_preset_link() {
    let l = fig12_link();
    for p in [2u64, 4, 8, 16] {
        let mut v = 1e6;
        while v <= 16.0 * GB {
            let t = |m| t_allreduce(m, &l, p, v).unwrap().approx;
            let (h, r2, r1) = (t(AllReduceModel::Hierarchical), t(AllReduceModel::Ring2d), t(AllReduceModel::Ring1d));
            assert!(h < r2 && r2 < r1, "p={p} v={v}: {h} {r2} {r1}");
            v *= 2.0;
        }
    }
}

#[test]
fn crossover_is_consistent_with_full_expressions() {
    // k = 3, m = 2: hierarchical bandwidth term is larger, latency smaller
    let l = LinkModel { bandwidth_multiple: 3.0, mesh: 2, ..fig12_link() };
    let c = crossover(&l, 8).unwrap();
    let v = c.volume.expect("crossover exists");
    assert!(c.hierarchical_wins_small && !c.hierarchical_wins_large);
    let diff = |v| {
        let h = t_allreduce(AllReduceModel::Hierarchical, &l, 8, v).unwrap().approx;
        let r = t_allreduce(AllReduceModel::Ring2d, &l, 8, v).unwrap().approx;
        h - r
    };
    assert!(diff(v).abs() < 1e-12);
    assert!(diff(v * 0.5) < 0.0 && diff(v * 2.0) > 0.0);
    // preset link: no crossover, hierarchical better everywhere
    let c = crossover(&fig12_link(), 8).unwrap();
    assert!(c.volume.is_none() && c.hierarchical_wins_small && c.hierarchical_wins_large);
}

fn problem(volumes: Vec<f64>, overlap: Vec<f64>, budget: u32, objective: Objective) -> AllocationProblem {
    AllocationProblem { volumes, overlap, budget, port_bw: 100.0 * GB, objective }
}

#[test]
fn symmetric_volumes_split_equally() {
    for objective in [Objective::Total, Objective::Slowest, Objective::OverlapAware] {
        let a = allocate_bandwidth(&problem(vec![GB, GB], vec![], 10, objective)).unwrap();
        assert_eq!(a.ports, vec![5, 5], "{objective:?}");
    }
    let a = allocate_bandwidth(&problem(vec![GB; 3], vec![], 9, Objective::Total)).unwrap();
    assert_eq!(a.ports, vec![3, 3, 3]);
}

#[test]
fn three_to_one_split_matches_enumeration() {
    let a = allocate_bandwidth(&problem(vec![3.0 * GB, GB], vec![], 10, Objective::Total)).unwrap();
    let best = (1..10u32)
        .min_by(|&x, &y| {
            let f = |n: u32| 3.0 / n as f64 + 1.0 / (10 - n) as f64;
            f(x).partial_cmp(&f(y)).unwrap()
        })
        .unwrap();
    assert_eq!(a.ports, vec![best, 10 - best]);
    assert_eq!(best, 6);
}

#[test]
fn overlap_hides_communication() {
    // dimension 1 fully hidden behind compute: it keeps a single port
    let a = allocate_bandwidth(&problem(vec![GB, GB], vec![0.0, 1.0], 10, Objective::OverlapAware)).unwrap();
    assert_eq!(a.ports, vec![9, 1]);
}

#[test]
fn infeasible_budget_rejected() {
    let err = allocate_bandwidth(&problem(vec![GB; 3], vec![], 2, Objective::Total)).unwrap_err();
    assert_eq!(err, PerfError::InfeasibleBudget { budget: 2, dims: 3 });
    assert!(allocate_bandwidth(&problem(vec![-1.0], vec![], 2, Objective::Total)).is_err());
}

#[test]
fn dp_matches_enumeration_on_random_problems() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..300 {
        let dims = rng.gen_range(1..=4);
        let budget = rng.gen_range(dims as u32..=32);
        let objective = [Objective::Total, Objective::Slowest, Objective::OverlapAware][rng.gen_range(0..3)];
        let volumes = (0..dims).map(|_| rng.gen_range(0..8) as f64 * GB).collect();
        let overlap = (0..dims).map(|_| rng.gen_range(0..4) as f64 * 2e-3).collect();
        let pr = problem(volumes, overlap, budget, objective);
        let fast = allocate_bandwidth(&pr).unwrap();
        let slow = enumerate_allocations(&pr).unwrap();
        assert_eq!(fast.ports.iter().sum::<u32>(), budget);
        assert_relative_eq!(fast.objective, slow.objective, max_relative = 1e-9);
        let sq = |p: &[u32]| p.iter().map(|&x| x * x).sum::<u32>();
        assert_eq!(sq(&fast.ports), sq(&slow.ports), "{pr:?}: {fast:?} vs {slow:?}");
    }
}

fn cp_ep(gap: f64, reconfig: f64) -> DynamicScenario {
    DynamicScenario { volumes: vec![GB, GB], gaps: vec![gap, gap], budget: 8, port_bw: 100.0 * GB, reconfig_time: reconfig }
}

#[test]
fn dynamic_allocation_feasible_with_gap() {
    let r = dynamic_allocation_eval(&cp_ep(6e-3, 1e-3)).unwrap();
    assert!(r.feasible);
    assert_eq!(r.static_ports, vec![4, 4]);
    // each phase at all 8 ports, plus two rewirings
    assert_relative_eq!(r.dynamic_time, 2.0 * GB / (2.0 * 8.0 * 100.0 * GB) + 2e-3);
}

#[test]
fn dynamic_allocation_falls_back_when_gap_too_short() {
    let r = dynamic_allocation_eval(&cp_ep(1e-3, 2e-3)).unwrap();
    assert!(!r.feasible);
    assert_eq!(r.chosen_time, r.static_time);
    assert_eq!(r.saved, 0.0);
}

#[test]
fn dynamic_saving_tends_to_two() {
    let mut last = 0.0;
    for reconfig in [1e-3, 1e-4, 1e-5, 1e-7, 0.0] {
        let r = dynamic_allocation_eval(&cp_ep(6e-3, reconfig)).unwrap();
        assert!(r.speedup >= last);
        last = r.speedup;
    }
    assert_relative_eq!(last, 2.0, max_relative = 1e-12);
}

#[test]
fn longer_sequences_shift_ports_to_context() {
    let model = ModelSpec {
        layers: 126,
        micro_batch: 1,
        micro_batches: 16,
        seq_len: 8192,
        hidden: 16384,
        vocab: 128256,
        heads_attn: 128,
        heads_kv: 8,
        ffn: 53248,
        top_k: 0,
    };
    let spec = ParallelismSpec { tp: 8, cp: 4, ep: 1, dp_expert: 8, pp: 9, model, bytes_per_element: 2 };
    let seqs = vec![8192, 16384, 32768, 65536, 131072];
    let run = |overlap| {
        plan_sequence_sweep(&SequencePlan {
            parallelism: spec.clone(),
            budget: 10,
            port_bw: 100.0 * GB,
            dp_overlap: overlap,
            seq_lens: seqs.clone(),
        })
        .unwrap()
    };
    let plain = run(0.0);
    assert!(plain[0].dp_ports > plain[0].cp_ports);
    assert!(plain.last().unwrap().cp_ports > plain[0].cp_ports);
    assert!(plain.windows(2).all(|w| w[1].cp_ports >= w[0].cp_ports));
    let hidden = run(10e-3);
    for (h, p) in hidden.iter().zip(&plain) {
        assert!(h.cp_ports >= p.cp_ports);
    }
    assert!(hidden.iter().zip(&plain).any(|(h, p)| h.cp_ports > p.cp_ports));
}
