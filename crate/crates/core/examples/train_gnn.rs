//! Trains the standard node classifier on the bundled 8-machine demo cluster.

use geoplan::gnn::{train, GnnModel, ModelShape, TrainConfig};
use geoplan::graph::{parse_cluster, FeatureConfig};
use geoplan::scheduler::{parse_tasks, synthetic_labels, PlannerConfig};

fn main() -> geoplan::Result<()> {
    let g = parse_cluster(include_str!("../data/demo8.json"))?;
    let tasks = parse_tasks(include_str!("../data/tasks_demo8.json"))?;
    let plan = synthetic_labels(&g, &tasks, &PlannerConfig::default())?;
    for (name, group) in &plan.groups {
        println!("reference group {name}: {group:?}");
    }

    let model = GnnModel::new(
        FeatureConfig::from_graph(&g),
        &ModelShape::standard(plan.num_classes),
        7,
    )?;
    println!("parameters: {}", model.param_count());
    let x = model.embed(&g);
    let cfg = TrainConfig {
        learning_rate: 0.01,
        steps: 20,
        seed: 7,
    };
    let (_, trace) = train(&model, &g, &x, &plan.labels, &cfg)?;
    for e in trace.iter().step_by(4) {
        println!("step {:>2}  loss {:.4}  accuracy {:.3}", e.step, e.loss, e.accuracy);
    }
    Ok(())
}
