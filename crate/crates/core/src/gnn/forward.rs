use ndarray::{s, Array1, Array2, Axis};

use super::{Dense, GnnModel, Labels};
use crate::error::{Error, Result};
use crate::graph::{ClusterGraph, FeatureMatrix};

/// Lower bound applied to probabilities before taking the log.
pub const LOG_CLAMP: f64 = 1e-12;

/// Per-pair edge features. Row `p` belongs to the ordered pair `pairs[p] = (v, u)`.
#[derive(Debug, Clone)]
pub struct EdgeFeatures {
    pub pairs: Vec<(usize, usize)>,
    /// `[latency/scale ‖ x_u ‖ x_v]` per pair.
    pub inputs: Array2<f64>,
    pub pre_activation: Array2<f64>,
    pub values: Array2<f64>,
}

impl EdgeFeatures {
    /// Feature vector of the ordered pair `(v, u)`, if connected.
    pub fn get(&self, v: usize, u: usize) -> Option<ndarray::ArrayView1<'_, f64>> {
        self.pairs.iter().position(|&p| p == (v, u)).map(|p| self.values.row(p))
    }
}

fn relu(a: &Array2<f64>) -> Array2<f64> {
    a.mapv(|x| x.max(0.0))
}

fn affine_rows(input: &Array2<f64>, layer: &Dense) -> Array2<f64> {
    input.dot(&layer.weight.t()) + &layer.bias
}

fn check_features(x: &FeatureMatrix, g: &ClusterGraph, f: usize) -> Result<()> {
    if x.rows() != g.len() {
        return Err(Error::Dimension(format!(
            "{} feature rows for {} nodes",
            x.rows(),
            g.len()
        )));
    }
    if x.dim() != f {
        return Err(Error::Dimension(format!(
            "feature width {} but model expects {f}",
            x.dim()
        )));
    }
    Ok(())
}

/// Edge embedding for every connected ordered pair; unconnected pairs get no row.
pub fn embed_edges(g: &ClusterGraph, x: &FeatureMatrix, layer: &Dense) -> Result<EdgeFeatures> {
    let f = x.dim();
    if layer.in_dim() != 1 + 2 * f {
        return Err(Error::Dimension(format!(
            "edge embedding expects {} inputs, got {}",
            layer.in_dim(),
            1 + 2 * f
        )));
    }
    let scale = x.config.max_latency;
    let mut pairs = Vec::new();
    for v in 0..g.len() {
        pairs.extend(g.neighbors(v).map(|u| (v, u)));
    }
    let mut inputs = Array2::zeros((pairs.len(), 1 + 2 * f));
    for (p, &(v, u)) in pairs.iter().enumerate() {
        let mut row = inputs.row_mut(p);
        row[0] = g.latency_at(v, u).expect("pair is connected") / scale;
        row.slice_mut(s![1..1 + f]).assign(&x.values.row(u));
        row.slice_mut(s![1 + f..]).assign(&x.values.row(v));
    }
    let pre_activation = affine_rows(&inputs, layer);
    let values = relu(&pre_activation);
    Ok(EdgeFeatures {
        pairs,
        inputs,
        pre_activation,
        values,
    })
}

/// Neighbour sums `[deg·x_v ‖ Σ x_u ‖ Σ e_vu]`. Since the pooling map is
/// affine, applying it to these sums equals summing it over neighbours.
pub(crate) fn pool_inputs(x: &FeatureMatrix, edges: &EdgeFeatures) -> Array2<f64> {
    let f = x.dim();
    let e = edges.values.ncols();
    let mut z = Array2::zeros((x.rows(), 2 * f + e));
    for (p, &(v, u)) in edges.pairs.iter().enumerate() {
        let mut row = z.row_mut(v);
        {
            let mut own = row.slice_mut(s![0..f]);
            own += &x.values.row(v);
        }
        {
            let mut peer = row.slice_mut(s![f..2 * f]);
            peer += &x.values.row(u);
        }
        let mut edge = row.slice_mut(s![2 * f..]);
        edge += &edges.values.row(p);
    }
    z
}

/// Edge pooling. Returns `(pre_activation, hidden)`; the bias is added once
/// per node, outside the neighbour sum, so an isolated node yields `ReLU(b)`.
pub fn edge_pool_forward(x: &FeatureMatrix, edges: &EdgeFeatures, layer: &Dense) -> Result<(Array2<f64>, Array2<f64>)> {
    let want = 2 * x.dim() + edges.values.ncols();
    if layer.in_dim() != want {
        return Err(Error::Dimension(format!(
            "edge pool expects {} inputs, got {want}",
            layer.in_dim()
        )));
    }
    let z = pool_inputs(x, edges);
    let pre = affine_rows(&z, layer);
    let h = relu(&pre);
    Ok((pre, h))
}

/// `D̂^{-1/2} (A + I) D̂^{-1/2}` over the binary connectivity mask.
pub fn normalized_adjacency(g: &ClusterGraph) -> Array2<f64> {
    let n = g.len();
    let deg: Vec<f64> = (0..n).map(|i| (g.degree(i) + 1) as f64).collect();
    let mut a = Array2::zeros((n, n));
    for v in 0..n {
        a[[v, v]] = 1.0 / deg[v];
        for u in g.neighbors(v) {
            a[[v, u]] = 1.0 / (deg[v] * deg[u]).sqrt();
        }
    }
    a
}

/// Per-layer aggregated inputs and pre-activations.
pub type LayerTrace = (Vec<Array2<f64>>, Vec<Array2<f64>>);

/// Stacked graph convolutions. Returns `(aggregated inputs, pre-activations)`
/// per layer; the last pre-activation is the logits matrix.
pub fn gcn_forward(h: &Array2<f64>, adjacency: &Array2<f64>, layers: &[Dense]) -> Result<LayerTrace> {
    let mut aggregated = Vec::with_capacity(layers.len());
    let mut pre = Vec::with_capacity(layers.len());
    let mut current = h.clone();
    for (l, layer) in layers.iter().enumerate() {
        if current.ncols() != layer.in_dim() {
            return Err(Error::Dimension(format!(
                "gcn layer {l} expects {} inputs, got {}",
                layer.in_dim(),
                current.ncols()
            )));
        }
        let m = adjacency.dot(&current);
        let z = affine_rows(&m, layer);
        current = if l + 1 < layers.len() { relu(&z) } else { z.clone() };
        aggregated.push(m);
        pre.push(z);
    }
    Ok((aggregated, pre))
}

pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|z| (z - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    p
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub edges: EdgeFeatures,
    pub pool_input: Array2<f64>,
    pub pool_pre: Array2<f64>,
    pub hidden: Array2<f64>,
    pub adjacency: Array2<f64>,
    pub gcn_aggregated: Vec<Array2<f64>>,
    pub gcn_pre: Vec<Array2<f64>>,
    pub probs: Array2<f64>,
}

impl ForwardCache {
    pub fn logits(&self) -> &Array2<f64> {
        self.gcn_pre.last().expect("at least one gcn layer")
    }

    /// Sign of every ReLU input; used to detect kinks crossed by a perturbation.
    pub fn activation_pattern(&self) -> Vec<bool> {
        let hidden_gcn = &self.gcn_pre[..self.gcn_pre.len() - 1];
        self.edges
            .pre_activation
            .iter()
            .chain(self.pool_pre.iter())
            .chain(hidden_gcn.iter().flat_map(|a| a.iter()))
            .map(|&z| z > 0.0)
            .collect()
    }
}

impl GnnModel {
    pub fn forward(&self, g: &ClusterGraph, x: &FeatureMatrix) -> Result<ForwardCache> {
        self.check_dims()?;
        check_features(x, g, self.node_feature_dim())?;
        let edges = embed_edges(g, x, &self.edge_embed)?;
        let pool_input = pool_inputs(x, &edges);
        let pool_pre = affine_rows(&pool_input, &self.edge_pool);
        let hidden = relu(&pool_pre);
        let adjacency = normalized_adjacency(g);
        let (gcn_aggregated, gcn_pre) = gcn_forward(&hidden, &adjacency, &self.gcn)?;
        let probs = softmax_rows(gcn_pre.last().expect("at least one gcn layer"));
        Ok(ForwardCache {
            edges,
            pool_input,
            pool_pre,
            hidden,
            adjacency,
            gcn_aggregated,
            gcn_pre,
            probs,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probs: Array2<f64>,
    /// Argmax per node; ties go to the lowest class index.
    pub labels: Vec<usize>,
}

pub(crate) fn argmax_rows(p: &Array2<f64>) -> Vec<usize> {
    p.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

pub fn predict(model: &GnnModel, g: &ClusterGraph, x: &FeatureMatrix) -> Result<Prediction> {
    let probs = model.forward(g, x)?.probs;
    let labels = argmax_rows(&probs);
    Ok(Prediction { probs, labels })
}

/// Mean over labelled nodes of `-ln p(true class)`, with `p` clamped at [`LOG_CLAMP`].
pub fn cross_entropy_loss(probs: &Array2<f64>, labels: &Labels) -> Result<f64> {
    if labels.len() != probs.nrows() {
        return Err(Error::Dimension(format!(
            "{} labels for {} prediction rows",
            labels.len(),
            probs.nrows()
        )));
    }
    let classes = probs.ncols();
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, label) in labels.iter().enumerate() {
        if let Some(c) = label {
            if c >= classes {
                return Err(Error::Dimension(format!("label {c} outside {classes} classes")));
            }
            total -= probs[[i, c]].max(LOG_CLAMP).ln();
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(total / count as f64)
}

pub(crate) fn column_sums(a: &Array2<f64>) -> Array1<f64> {
    a.sum_axis(Axis(0))
}
