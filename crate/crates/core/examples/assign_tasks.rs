//! Plans four concurrent training jobs on a generated 46-machine fleet.

use geoplan::gnn::{train, GnnModel, ModelShape, TrainConfig};
use geoplan::graph::FeatureConfig;
use geoplan::scheduler::{assign_tasks, synthetic_labels, workloads, PlannerConfig, TaskStatus};
use geoplan::sim::{generate_fleet, RegionLatencyTable};

fn main() -> geoplan::Result<()> {
    let g = generate_fleet(46, 46, &RegionLatencyTable::standard());
    let tasks = workloads::four_models();
    let planner = PlannerConfig::default();

    let plan = synthetic_labels(&g, &tasks, &planner)?;
    let model = GnnModel::new(FeatureConfig::from_graph(&g), &ModelShape::compact(tasks.len()), 46)?;
    let x = model.embed(&g);
    let cfg = TrainConfig {
        learning_rate: 0.01,
        steps: 100,
        seed: 46,
    };
    let (model, _) = train(&model, &g, &x, &plan.labels, &cfg)?;

    let assignment = assign_tasks(&g, &model, &tasks, &planner)?;
    for t in &tasks {
        match assignment.status(&t.name) {
            Some(TaskStatus::Assigned) => {
                let group = &assignment.groups[&t.name];
                let memory: f64 = group.iter().filter_map(|&id| g.node(id)).map(|m| m.memory_gb).sum();
                println!(
                    "{}: {} machine(s), {:.0} GB of {:.0} GB needed",
                    t.name,
                    group.len(),
                    memory,
                    t.required_memory_gb(planner.overhead_factor)
                );
            }
            _ => println!("{}: waiting", t.name),
        }
    }
    println!("leftovers: {:?}", assignment.leftovers);
    Ok(())
}
