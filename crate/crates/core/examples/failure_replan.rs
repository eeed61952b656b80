//! Re-plans after a machine drops out, then shows that bringing it back
//! restores the original plan.

use geoplan::gnn::{train, GnnModel, ModelShape, TrainConfig};
use geoplan::graph::FeatureConfig;
use geoplan::scheduler::{assign_tasks, replan_after_failure, synthetic_labels, workloads, PlannerConfig};
use geoplan::sim::{generate_fleet, RegionLatencyTable};

fn main() -> geoplan::Result<()> {
    let g = generate_fleet(3, 20, &RegionLatencyTable::standard());
    let tasks = workloads::four_models();
    let planner = PlannerConfig::default();

    let plan = synthetic_labels(&g, &tasks, &planner)?;
    let model = GnnModel::new(FeatureConfig::from_graph(&g), &ModelShape::compact(tasks.len()), 3)?;
    let x = model.embed(&g);
    let cfg = TrainConfig {
        learning_rate: 0.01,
        steps: 100,
        seed: 3,
    };
    let (model, _) = train(&model, &g, &x, &plan.labels, &cfg)?;

    let before = assign_tasks(&g, &model, &tasks, &planner)?;
    println!("before: {:?}", before.groups);

    let failed = before.groups[&tasks[0].name][0];
    let after = replan_after_failure(&g, &model, &tasks, failed, &planner)?;
    println!(
        "machine {failed} lost: {:?} (waiting {:?})",
        after.groups, after.waiting
    );

    let machine = g.node(failed).expect("member of the fleet").clone();
    let links: Vec<_> = g
        .node_ids()
        .into_iter()
        .filter_map(|id| g.latency(failed, id).map(|w| (id, w)))
        .collect();
    let restored = g.remove_machine(failed)?.add_machine(machine, &links)?;
    assert_eq!(restored, g);
    assert_eq!(assign_tasks(&restored, &model, &tasks, &planner)?, before);
    println!("machine {failed} back: plan restored");
    Ok(())
}
