//! Latency-aware placement of training jobs on geographically spread GPU
//! machines.
//!
//! The crate is a pipeline of small pieces:
//!
//! - [`graph`]: the machine/latency graph, its file format and node features.
//! - [`gnn`]: an edge-aware graph convolutional classifier with hand-written
//!   backpropagation, full-batch training and a binary checkpoint format.
//! - [`scheduler`]: turns per-node class predictions into disjoint,
//!   memory-feasible, connected machine groups, one per task.
//! - [`sim`]: a deterministic cost model comparing the grouped plan with
//!   whole-fleet data, pipeline and tensor parallelism.
//! - [`cli`]: the `geoplan` command line.
//!
//! ```
//! use geoplan::gnn::{GnnModel, ModelShape, TrainConfig};
//! use geoplan::graph::FeatureConfig;
//! use geoplan::scheduler::{assign_tasks, synthetic_labels, workloads, PlannerConfig};
//! use geoplan::sim::{generate_fleet, RegionLatencyTable};
//!
//! let g = generate_fleet(7, 12, &RegionLatencyTable::standard());
//! let tasks = workloads::two_models();
//! let plan = synthetic_labels(&g, &tasks, &PlannerConfig::default()).unwrap();
//! let model = GnnModel::new(FeatureConfig::from_graph(&g), &ModelShape::compact(2), 1).unwrap();
//! let x = model.embed(&g);
//! let cfg = TrainConfig { steps: 5, ..TrainConfig::default() };
//! let (model, _trace) = geoplan::gnn::train(&model, &g, &x, &plan.labels, &cfg).unwrap();
//! let assignment = assign_tasks(&g, &model, &tasks, &PlannerConfig::default()).unwrap();
//! assert_eq!(assignment.groups.len() + assignment.waiting.len(), 2);
//! ```

pub mod cli;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod scheduler;
pub mod sim;

pub use error::{Error, Result};

/// Crate version, embedded in every file the CLI writes.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
