//! Scores the grouped plan against data, pipeline and tensor parallelism
//! over the whole fleet.

use geoplan::gnn::{train, GnnModel, ModelShape, TrainConfig};
use geoplan::graph::FeatureConfig;
use geoplan::scheduler::{synthetic_labels, workloads, PlannerConfig};
use geoplan::sim::{compare, generate_fleet, CostModelConfig, RegionLatencyTable, Strategy};

fn main() -> geoplan::Result<()> {
    let g = generate_fleet(46, 46, &RegionLatencyTable::standard());
    let tasks = workloads::six_models();
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

    let report = compare(&g, &model, &tasks, &CostModelConfig::default(), &planner)?;
    for s in Strategy::ALL {
        println!("{:>4}: communication {:.1} ms", s.label(), report.total_comm_ms(s));
    }
    let (best, _) = report.best_baseline_comm_ms();
    println!(
        "reduction vs {}: {:+.1}%",
        best.label(),
        100.0 * report.comm_reduction()
    );
    print!("{}", report.to_csv());
    Ok(())
}
