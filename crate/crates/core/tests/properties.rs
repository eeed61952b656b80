use std::collections::BTreeSet;

use geoplan::gnn::{softmax_rows, GnnModel, ModelShape};
use geoplan::graph::{parse_cluster, ClusterGraph, CommEdge, FeatureConfig, MachineNode, NodeId};
use geoplan::scheduler::{assign_tasks, check_feasibility, workloads, PlannerConfig, TaskSpec};
use geoplan::sim::{generate_fleet, simulate, transfer_time, CostModelConfig, Placement, RegionLatencyTable, Strategy};
use ndarray::Array2;
use proptest::prelude::*;

fn fleet(seed: u64, n: usize) -> ClusterGraph {
    generate_fleet(seed, n, &RegionLatencyTable::standard())
}

fn rebuild(g: &ClusterGraph, id_map: impl Fn(NodeId) -> NodeId, scale: f64) -> ClusterGraph {
    let nodes = g
        .nodes()
        .iter()
        .map(|m| MachineNode {
            id: id_map(m.id),
            ..m.clone()
        })
        .collect();
    let edges = g
        .edges()
        .into_iter()
        .map(|e| CommEdge::new(id_map(e.a), id_map(e.b), e.latency_ms_per_64b * scale))
        .collect();
    ClusterGraph::from_parts(nodes, edges).unwrap()
}

fn untrained(g: &ClusterGraph, classes: usize, seed: u64) -> GnnModel {
    GnnModel::new(FeatureConfig::from_graph(g), &ModelShape::compact(classes), seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn latency_matrix_is_symmetric(seed in 0u64..1000, n in 1usize..30) {
        let g = fleet(seed, n);
        prop_assert!(g.check_matrix_invariants().is_ok());
        for i in 0..n {
            prop_assert!(!g.is_linked_at(i, i));
            for j in 0..n {
                prop_assert_eq!(g.latency_at(i, j), g.latency_at(j, i));
            }
        }
    }

    #[test]
    fn canonical_json_round_trips(seed in 0u64..1000, n in 1usize..20) {
        let g = fleet(seed, n);
        let text = g.to_canonical_json();
        let back = parse_cluster(&text).unwrap();
        prop_assert_eq!(&back, &g);
        prop_assert_eq!(back.to_canonical_json(), text);
    }

    #[test]
    fn add_then_remove_is_identity(seed in 0u64..1000, n in 2usize..20, w in 0.5f64..300.0) {
        let g = fleet(seed, n);
        let machine = MachineNode::new(999, "Rome", 7.0, 128.0);
        let bigger = g.add_machine(machine, &[(0, w), (1, w * 2.0)]).unwrap();
        prop_assert_eq!(bigger.len(), n + 1);
        prop_assert_eq!(bigger.latency(999, 1), Some(w * 2.0));
        prop_assert_eq!(bigger.remove_machine(999).unwrap(), g);
    }

    #[test]
    fn softmax_rows_sum_to_one(values in prop::collection::vec(-800.0f64..800.0, 12)) {
        let logits = Array2::from_shape_vec((3, 4), values).unwrap();
        let p = softmax_rows(&logits);
        for row in p.rows() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-9);
            prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn relabelling_nodes_permutes_predictions(seed in 0u64..200, n in 2usize..10, shift in 1u32..9) {
        let g = fleet(seed, n);
        let n32 = n as NodeId;
        // rotate ids, so the stored (id-sorted) order is a cyclic shift of the original
        let s = shift % n32;
        let h = rebuild(&g, |id| (id + s) % n32, 1.0);
        let model = untrained(&g, 3, seed);
        let pg = model.forward(&g, &model.embed(&g)).unwrap().probs;
        let ph = model.forward(&h, &model.embed(&h)).unwrap().probs;
        for (i, m) in g.nodes().iter().enumerate() {
            let j = h.index_of((m.id + s) % n32).unwrap();
            for c in 0..3 {
                prop_assert!((pg[[i, c]] - ph[[j, c]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn doubling_latency_doubles_communication(seed in 0u64..300, n in 2usize..12) {
        let g = fleet(seed, n);
        let h = rebuild(&g, |id| id, 2.0);
        let cfg = CostModelConfig::default();
        let task = workloads::bert_large();
        for s in Strategy::ALL {
            let a = simulate(&g, Placement::Fleet, &task, s, &cfg);
            let b = simulate(&h, Placement::Fleet, &task, s, &cfg);
            match (a, b) {
                (Ok(a), Ok(b)) => {
                    prop_assert_eq!(2.0 * a.comm_ms, b.comm_ms);
                    prop_assert_eq!(a.compute_ms, b.compute_ms);
                }
                (Err(_), Err(_)) => {}
                (a, b) => prop_assert!(false, "{:?} vs {:?}", a, b),
            }
        }
    }

    #[test]
    fn transfer_is_linear_in_chunks(seed in 0u64..300, chunks in 0u64..10_000, tail in 1u64..=64) {
        let g = fleet(seed, 4);
        let Some(e) = g.edges().into_iter().next() else { return Ok(()); };
        let w = e.latency_ms_per_64b;
        let exact = transfer_time(&g, e.a, e.b, 64 * chunks).unwrap();
        prop_assert_eq!(exact, chunks as f64 * w);
        // any partial chunk costs a whole one
        let partial = transfer_time(&g, e.a, e.b, 64 * chunks + tail).unwrap();
        prop_assert_eq!(partial, (chunks + 1) as f64 * w);
        prop_assert!(partial >= exact);
    }

    #[test]
    fn grouped_chain_never_beats_id_order_pipeline_backwards(seed in 0u64..300, n in 2usize..14, pick in any::<u16>()) {
        let g = fleet(seed, n);
        let ids: Vec<NodeId> = g.node_ids().into_iter().filter(|&id| pick & (1 << (id % 16)) != 0 || id == 0).collect();
        let cfg = CostModelConfig::default();
        let task = workloads::gpt2_xl();
        let grouped = simulate(&g, Placement::Group(&ids), &task, Strategy::HulkGrouped, &cfg);
        let pipeline = simulate(&g, Placement::Group(&ids), &task, Strategy::Pipeline, &cfg);
        if let (Ok(a), Ok(b)) = (grouped, pipeline) {
            prop_assert!(a.comm_ms <= b.comm_ms);
            if ids.len() == 1 {
                prop_assert_eq!(a.comm_ms, 0.0);
            }
        }
    }

    #[test]
    fn order_preserving_relabel_keeps_baseline_totals(seed in 0u64..200, n in 2usize..14, stride in 2u32..7) {
        let g = fleet(seed, n);
        let h = rebuild(&g, |id| id * stride + 3, 1.0);
        let cfg = CostModelConfig::default();
        let task = workloads::t5_11b();
        for s in [Strategy::DataParallel, Strategy::TensorParallel, Strategy::Pipeline] {
            let a = simulate(&g, Placement::Fleet, &task, s, &cfg).ok().map(|c| (c.comm_ms, c.compute_ms));
            let b = simulate(&h, Placement::Fleet, &task, s, &cfg).ok().map(|c| (c.comm_ms, c.compute_ms));
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn plans_are_disjoint_feasible_and_deterministic(seed in 0u64..200, n in 4usize..24) {
        let g = fleet(seed, n);
        let tasks = workloads::four_models();
        let model = untrained(&g, tasks.len(), seed);
        let cfg = PlannerConfig::default();
        let Ok(a) = assign_tasks(&g, &model, &tasks, &cfg) else { return Ok(()); };
        let mut seen = BTreeSet::new();
        for (name, group) in &a.groups {
            let task = tasks.iter().find(|t| &t.name == name).unwrap();
            prop_assert_eq!(check_feasibility(&g, group, task), Ok(()));
            for id in group {
                prop_assert!(seen.insert(*id));
            }
        }
        for id in &a.leftovers {
            prop_assert!(seen.insert(*id));
        }
        prop_assert_eq!(seen.len(), n);
        prop_assert_eq!(assign_tasks(&g, &model, &tasks, &cfg).unwrap(), a);
    }

    #[test]
    fn more_memory_never_breaks_precheck(seed in 0u64..200, n in 2usize..12, params in 1u64..2_000_000_000_000) {
        let g = fleet(seed, n);
        let tasks = vec![TaskSpec::new("x", params)];
        let model = untrained(&g, 1, seed);
        let cfg = PlannerConfig::default();
        let richer = ClusterGraph::from_parts(
            g.nodes().iter().map(|m| MachineNode { memory_gb: m.memory_gb * 2.0, ..m.clone() }).collect(),
            g.edges(),
        ).unwrap();
        if assign_tasks(&g, &model, &tasks, &cfg).is_ok() {
            prop_assert!(assign_tasks(&richer, &model, &tasks, &cfg).is_ok());
        }
    }
}

#[test]
fn isolated_machine_prediction_ignores_the_rest() {
    let mut g = fleet(9, 6);
    g = g.add_machine(MachineNode::new(50, "Rome", 7.0, 128.0), &[]).unwrap();
    let model = untrained(&g, 3, 1);
    let x = model.embed(&g);
    let before = model.forward(&g, &x).unwrap().probs;
    let last = g.index_of(50).unwrap();
    // reshaping the connected part leaves the isolated row untouched
    let h = rebuild(&g, |id| id, 3.0);
    let after = model.forward(&h, &model.embed(&h)).unwrap().probs;
    for c in 0..3 {
        assert!((before[[last, c]] - after[[last, c]]).abs() < 1e-12);
    }
}
