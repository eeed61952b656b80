use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::ClusterGraph;

/// Region vocabulary and scaling constants used to turn machines into
/// numeric rows. Carried by trained models so residual subgraphs are
/// embedded exactly like the graph the model was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub vocab: Vec<String>,
    pub max_compute: f64,
    pub max_memory_gb: f64,
    /// Divisor for edge latencies fed to the edge embedding.
    pub max_latency: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            vocab: crate::sim::KNOWN_REGIONS.iter().map(|s| s.to_string()).collect(),
            max_compute: 9.0,
            max_memory_gb: 1024.0,
            max_latency: 1000.0,
        }
    }
}

impl FeatureConfig {
    /// Vocabulary = sorted distinct regions of `g`; maxima taken over `g`.
    pub fn from_graph(g: &ClusterGraph) -> Self {
        let mut vocab: Vec<String> = g.nodes().iter().map(|n| n.region.clone()).collect();
        vocab.sort();
        vocab.dedup();
        let max_compute = g.nodes().iter().map(|n| n.compute_capability).fold(0.0, f64::max);
        let max_memory_gb = g.nodes().iter().map(|n| n.memory_gb).fold(0.0, f64::max);
        let max_latency = g.max_latency();
        Self {
            vocab,
            max_compute,
            max_memory_gb,
            max_latency: if max_latency > 0.0 { max_latency } else { 1.0 },
        }
    }

    /// Width of a feature row: one-hot regions, the unknown slot, compute, memory.
    pub fn dim(&self) -> usize {
        self.vocab.len() + 3
    }

    fn region_slot(&self, region: &str) -> usize {
        self.vocab.iter().position(|r| r == region).unwrap_or(self.vocab.len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Array2<f64>,
    pub config: FeatureConfig,
}

impl FeatureMatrix {
    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }
}

pub fn embed_features(g: &ClusterGraph, config: &FeatureConfig) -> FeatureMatrix {
    let d = config.dim();
    let k = config.vocab.len();
    let mut values = Array2::zeros((g.len(), d));
    for (i, node) in g.nodes().iter().enumerate() {
        values[[i, config.region_slot(&node.region)]] = 1.0;
        values[[i, k + 1]] = (node.compute_capability / config.max_compute).clamp(0.0, 1.0);
        values[[i, k + 2]] = (node.memory_gb / config.max_memory_gb).clamp(0.0, 1.0);
    }
    FeatureMatrix {
        values,
        config: config.clone(),
    }
}
