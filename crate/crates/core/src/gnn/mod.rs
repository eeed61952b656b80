//! Edge-pooling graph convolutional classifier with hand-written gradients.
//!
//! The network has three stages:
//!
//! 1. an edge embedding `e_vu = ReLU(Θ·[latency_vu ‖ x_u ‖ x_v] + b)` for every
//!    connected ordered pair,
//! 2. an edge-pooling layer `h_v = ReLU(Σ_{u∈N(v)} F·[x_v ‖ x_u ‖ e_vu] + b)`
//!    that folds edge information into node rows,
//! 3. a stack of graph convolutions over the symmetric-normalized adjacency
//!    with self-loops, ReLU between layers and raw logits at the end.
//!
//! Everything is dense `f64`; fleets are tens of machines, not millions.

mod backward;
mod checkpoint;
mod forward;
mod labels;
mod train;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{embed_features, ClusterGraph, FeatureConfig, FeatureMatrix};

pub use backward::{backward, Gradients};
pub use checkpoint::{load_model, save_model, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use forward::{
    cross_entropy_loss, edge_pool_forward, embed_edges, gcn_forward, normalized_adjacency, predict, softmax_rows,
    EdgeFeatures, ForwardCache, Prediction, LOG_CLAMP,
};
pub use labels::{LabelSet, Labels};
pub use train::{accuracy, train, TraceEntry, TrainConfig};

/// Affine map `y = W x + b` with `W` stored as `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            weight: Array2::zeros((out_dim, in_dim)),
            bias: Array1::zeros(out_dim),
        }
    }

    /// Glorot-uniform weights, zero bias.
    fn glorot(out_dim: usize, in_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((out_dim, in_dim), || rng.gen_range(-limit..=limit));
        Self {
            weight,
            bias: Array1::zeros(out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn slices(&self) -> [&[f64]; 2] {
        [
            self.weight.as_slice().expect("standard layout"),
            self.bias.as_slice().expect("standard layout"),
        ]
    }

    fn slices_mut(&mut self) -> [&mut [f64]; 2] {
        [
            self.weight.as_slice_mut().expect("standard layout"),
            self.bias.as_slice_mut().expect("standard layout"),
        ]
    }
}

/// Edge embedding `g`: `[latency ‖ u ‖ v] → edge_dim`.
pub type EdgeEmbedding = Dense;
/// Edge pooling `f`: `[v ‖ u ‖ e_vu] → hidden_dim`.
pub type EdgePoolLayer = Dense;
/// One graph convolution, `out_dim × in_dim` plus bias.
pub type GcnLayer = Dense;

/// Layer widths. Node feature width comes from the [`FeatureConfig`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelShape {
    pub edge_dim: usize,
    pub hidden_dim: usize,
    /// Widths of the hidden graph convolutions; an output convolution to
    /// `num_classes` is always appended.
    pub gcn_hidden: Vec<usize>,
    pub num_classes: usize,
}

impl ModelShape {
    /// Default architecture: 16-wide edge embedding, 410-wide pooling and
    /// two graph convolutions. Lands near 188k parameters for typical
    /// region vocabularies.
    pub fn standard(num_classes: usize) -> Self {
        Self {
            edge_dim: 16,
            hidden_dim: 410,
            gcn_hidden: vec![410],
            num_classes,
        }
    }

    /// Narrow variant for quick experiments and tests.
    pub fn compact(num_classes: usize) -> Self {
        Self {
            edge_dim: 8,
            hidden_dim: 48,
            gcn_hidden: vec![48],
            num_classes,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.edge_dim == 0 || self.hidden_dim == 0 || self.num_classes == 0 || self.gcn_hidden.contains(&0) {
            return Err(Error::Config("all layer widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnnModel {
    pub features: FeatureConfig,
    pub seed: u64,
    pub edge_embed: EdgeEmbedding,
    pub edge_pool: EdgePoolLayer,
    pub gcn: Vec<GcnLayer>,
}

impl GnnModel {
    pub fn new(features: FeatureConfig, shape: &ModelShape, seed: u64) -> Result<Self> {
        shape.validate()?;
        let f = features.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let edge_embed = Dense::glorot(shape.edge_dim, 1 + 2 * f, &mut rng);
        let edge_pool = Dense::glorot(shape.hidden_dim, 2 * f + shape.edge_dim, &mut rng);
        let mut gcn = Vec::new();
        let mut width = shape.hidden_dim;
        for &out in shape.gcn_hidden.iter().chain(std::iter::once(&shape.num_classes)) {
            gcn.push(Dense::glorot(out, width, &mut rng));
            width = out;
        }
        Ok(Self {
            features,
            seed,
            edge_embed,
            edge_pool,
            gcn,
        })
    }

    pub fn node_feature_dim(&self) -> usize {
        self.features.dim()
    }

    pub fn edge_dim(&self) -> usize {
        self.edge_embed.out_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.edge_pool.out_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.gcn.last().map(Dense::out_dim).unwrap_or(0)
    }

    pub fn shape(&self) -> ModelShape {
        ModelShape {
            edge_dim: self.edge_dim(),
            hidden_dim: self.hidden_dim(),
            gcn_hidden: self.gcn[..self.gcn.len() - 1].iter().map(Dense::out_dim).collect(),
            num_classes: self.num_classes(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(Dense::param_count).sum()
    }

    pub fn embed(&self, g: &ClusterGraph) -> FeatureMatrix {
        embed_features(g, &self.features)
    }

    /// Checks that the layer widths chain into each other.
    pub fn check_dims(&self) -> Result<()> {
        let f = self.node_feature_dim();
        let e = self.edge_dim();
        if self.edge_embed.in_dim() != 1 + 2 * f {
            return Err(Error::Dimension(format!(
                "edge embedding expects {} inputs, features give {}",
                self.edge_embed.in_dim(),
                1 + 2 * f
            )));
        }
        if self.edge_pool.in_dim() != 2 * f + e {
            return Err(Error::Dimension(format!(
                "edge pool expects {} inputs, got {}",
                self.edge_pool.in_dim(),
                2 * f + e
            )));
        }
        if self.gcn.is_empty() {
            return Err(Error::Dimension("model has no graph convolution".into()));
        }
        let mut width = self.hidden_dim();
        for (l, layer) in self.gcn.iter().enumerate() {
            if layer.in_dim() != width {
                return Err(Error::Dimension(format!(
                    "gcn layer {l} expects {} inputs, previous layer gives {width}",
                    layer.in_dim()
                )));
            }
            width = layer.out_dim();
        }
        Ok(())
    }

    pub(crate) fn layers(&self) -> impl Iterator<Item = &Dense> {
        std::iter::once(&self.edge_embed)
            .chain(std::iter::once(&self.edge_pool))
            .chain(self.gcn.iter())
    }

    /// Every trainable tensor, in declaration order.
    pub fn param_slices(&self) -> Vec<&[f64]> {
        self.layers().flat_map(Dense::slices).collect()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        std::iter::once(&mut self.edge_embed)
            .chain(std::iter::once(&mut self.edge_pool))
            .chain(self.gcn.iter_mut())
            .flat_map(Dense::slices_mut)
            .collect()
    }

    /// Reads flat parameter `k` (declaration order).
    pub fn param(&self, mut k: usize) -> f64 {
        for s in self.param_slices() {
            if k < s.len() {
                return s[k];
            }
            k -= s.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set_param(&mut self, mut k: usize, value: f64) {
        for s in self.param_slices_mut() {
            if k < s.len() {
                s[k] = value;
                return;
            }
            k -= s.len();
        }
        panic!("parameter index out of range");
    }

    /// One plain gradient-descent step.
    pub fn apply_gradients(&mut self, grads: &Gradients, learning_rate: f64) {
        let gs = grads.param_slices();
        for (p, g) in self.param_slices_mut().into_iter().zip(gs) {
            for (w, d) in p.iter_mut().zip(g) {
                *w -= learning_rate * d;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_shape_is_near_188k() {
        // 8 demo regions, 10 known regions and 2..6 classes all land in band
        for vocab in [8usize, 10] {
            for classes in 2..=6 {
                let features = FeatureConfig {
                    vocab: (0..vocab).map(|i| format!("r{i}")).collect(),
                    ..FeatureConfig::default()
                };
                let m = GnnModel::new(features, &ModelShape::standard(classes), 1).unwrap();
                let p = m.param_count();
                assert!((180_000..=196_000).contains(&p), "vocab {vocab} classes {classes}: {p}");
            }
        }
    }

    #[test]
    fn param_count_matches_formula() {
        let m = GnnModel::new(FeatureConfig::default(), &ModelShape::compact(3), 0).unwrap();
        let f = 13;
        let expected = 8 * (1 + 2 * f) + 8 + 48 * (2 * f + 8) + 48 + 48 * 48 + 48 + 3 * 48 + 3;
        assert_eq!(m.param_count(), expected);
        assert_eq!(m.param_slices().iter().map(|s| s.len()).sum::<usize>(), expected);
        m.check_dims().unwrap();
    }

    #[test]
    fn init_is_seeded_with_zero_bias() {
        let a = GnnModel::new(FeatureConfig::default(), &ModelShape::compact(2), 9).unwrap();
        let b = GnnModel::new(FeatureConfig::default(), &ModelShape::compact(2), 9).unwrap();
        let c = GnnModel::new(FeatureConfig::default(), &ModelShape::compact(2), 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.edge_pool.bias.iter().all(|&x| x == 0.0));
        let limit = (6.0f64 / (48 + 34) as f64).sqrt();
        assert!(a.edge_pool.weight.iter().all(|w| w.abs() <= limit));
    }

    #[test]
    fn zero_width_is_rejected() {
        let mut s = ModelShape::compact(2);
        s.hidden_dim = 0;
        assert!(GnnModel::new(FeatureConfig::default(), &s, 0).is_err());
    }
}
