use geoplan::gnn::{GnnModel, ModelShape};
use geoplan::graph::{parse_cluster, FeatureConfig};
use geoplan::scheduler::{assign_tasks, parse_tasks, replan_after_failure, workloads, PlannerConfig};
use geoplan::sim::{generate_fleet, RegionLatencyTable};

const DEMO8: &str = include_str!("../data/demo8.json");
const FLEET46: &str = include_str!("../data/fleet46.json");

#[test]
fn bundled_fleet_matches_generator() {
    let g = generate_fleet(46, 46, &RegionLatencyTable::standard());
    assert_eq!(parse_cluster(FLEET46).unwrap(), g);
    assert_eq!(FLEET46.trim_end(), g.to_canonical_json().trim_end());
}

#[test]
fn demo_cluster_is_canonical() {
    let g = parse_cluster(DEMO8).unwrap();
    assert_eq!(g.len(), 8);
    assert!(g.validate().is_empty());
    assert_eq!(DEMO8.trim_end(), g.to_canonical_json().trim_end());
    assert_eq!(g.latency(0, 1), Some(30.0));
    assert_eq!(g.latency(0, 6), None);
    assert_eq!(g.node(2).unwrap().region, "California");
}

#[test]
fn bundled_task_files_parse() {
    let four = parse_tasks(include_str!("../data/tasks4.json")).unwrap();
    assert_eq!(four, workloads::four_models());
    let six = parse_tasks(include_str!("../data/tasks6.json")).unwrap();
    assert_eq!(six, workloads::six_models());
    assert_eq!(
        parse_tasks(include_str!("../data/tasks_pair.json")).unwrap(),
        workloads::two_models()
    );
    assert_eq!(parse_tasks(include_str!("../data/tasks_demo8.json")).unwrap().len(), 2);
}

#[test]
fn losing_and_regaining_a_machine_restores_the_plan() {
    let g = generate_fleet(12, 14, &RegionLatencyTable::standard());
    let tasks = workloads::four_models();
    let cfg = PlannerConfig::default();
    let model = GnnModel::new(FeatureConfig::from_graph(&g), &ModelShape::compact(4), 12).unwrap();
    let before = assign_tasks(&g, &model, &tasks, &cfg).unwrap();

    for failed in g.node_ids() {
        let after = replan_after_failure(&g, &model, &tasks, failed, &cfg).unwrap();
        assert!(after.groups.values().flatten().all(|&id| id != failed));
        assert!(!after.leftovers.contains(&failed));

        let machine = g.node(failed).unwrap().clone();
        let links: Vec<_> = g
            .node_ids()
            .into_iter()
            .filter_map(|id| g.latency(failed, id).map(|w| (id, w)))
            .collect();
        let restored = g.remove_machine(failed).unwrap().add_machine(machine, &links).unwrap();
        assert_eq!(assign_tasks(&restored, &model, &tasks, &cfg).unwrap(), before);
    }
}
