use ndarray::{s, Array2, Zip};

use super::forward::column_sums;
use super::{Dense, ForwardCache, GnnModel, Labels};
use crate::error::{Error, Result};
use crate::graph::{ClusterGraph, FeatureMatrix};

/// Gradients with the same layout as the model's trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub edge_embed: Dense,
    pub edge_pool: Dense,
    pub gcn: Vec<Dense>,
}

impl Gradients {
    pub fn param_slices(&self) -> Vec<&[f64]> {
        std::iter::once(&self.edge_embed)
            .chain(std::iter::once(&self.edge_pool))
            .chain(self.gcn.iter())
            .flat_map(Dense::slices)
            .collect()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.param_slices().concat()
    }
}

fn relu_mask(grad: &mut Array2<f64>, pre: &Array2<f64>) {
    Zip::from(grad).and(pre).for_each(|g, &z| {
        if z <= 0.0 {
            *g = 0.0;
        }
    });
}

fn dense_grad(upstream: &Array2<f64>, input: &Array2<f64>) -> Dense {
    Dense {
        weight: upstream.t().dot(input),
        bias: column_sums(upstream),
    }
}

/// Gradients of the masked mean cross-entropy with respect to every weight
/// and bias. Also returns the loss of the forward pass it differentiated.
pub fn backward(model: &GnnModel, g: &ClusterGraph, x: &FeatureMatrix, labels: &Labels) -> Result<(f64, Gradients)> {
    let cache = model.forward(g, x)?;
    let loss = super::cross_entropy_loss(&cache.probs, labels)?;
    let grads = backward_from_cache(model, &cache, labels)?;
    Ok((loss, grads))
}

pub(crate) fn backward_from_cache(model: &GnnModel, cache: &ForwardCache, labels: &Labels) -> Result<Gradients> {
    let n = cache.probs.nrows();
    let classes = cache.probs.ncols();
    let count = labels.labelled_count();
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    // dL/dlogits = (p - y) / |mask| on labelled rows
    let mut upstream = Array2::zeros((n, classes));
    for (i, label) in labels.iter().enumerate() {
        if let Some(c) = label {
            if c >= classes {
                return Err(Error::Dimension(format!("label {c} outside {classes} classes")));
            }
            let mut row = upstream.row_mut(i);
            row.assign(&cache.probs.row(i));
            row[c] -= 1.0;
            row /= count as f64;
        }
    }

    let mut gcn_grads = Vec::with_capacity(model.gcn.len());
    for l in (0..model.gcn.len()).rev() {
        gcn_grads.push(dense_grad(&upstream, &cache.gcn_aggregated[l]));
        // Â is symmetric, so Âᵀ (dZ W) = Â (dZ W)
        let d_input = cache.adjacency.dot(&upstream.dot(&model.gcn[l].weight));
        upstream = d_input;
        let pre = if l > 0 { &cache.gcn_pre[l - 1] } else { &cache.pool_pre };
        relu_mask(&mut upstream, pre);
    }
    gcn_grads.reverse();

    let edge_pool = dense_grad(&upstream, &cache.pool_input);
    let f = model.node_feature_dim();
    let d_pool_input = upstream.dot(&model.edge_pool.weight);
    let d_edge_sum = d_pool_input.slice(s![.., 2 * f..]);
    let edges = &cache.edges;
    let mut d_edge = Array2::zeros(edges.values.raw_dim());
    for (p, &(v, _)) in edges.pairs.iter().enumerate() {
        d_edge.row_mut(p).assign(&d_edge_sum.row(v));
    }
    relu_mask(&mut d_edge, &edges.pre_activation);
    let edge_embed = dense_grad(&d_edge, &edges.inputs);

    Ok(Gradients {
        edge_embed,
        edge_pool,
        gcn: gcn_grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::{cross_entropy_loss, ModelShape};
    use crate::graph::FeatureConfig;
    use crate::sim::{generate_fleet, RegionLatencyTable};

    fn setup(classes: usize) -> (ClusterGraph, GnnModel, FeatureMatrix) {
        let g = generate_fleet(5, 6, &RegionLatencyTable::standard());
        let shape = ModelShape {
            edge_dim: 3,
            hidden_dim: 5,
            gcn_hidden: vec![4],
            num_classes: classes,
        };
        let model = GnnModel::new(FeatureConfig::from_graph(&g), &shape, 11).unwrap();
        let x = model.embed(&g);
        (g, model, x)
    }

    fn loss_at(model: &GnnModel, g: &ClusterGraph, x: &FeatureMatrix, labels: &Labels) -> f64 {
        cross_entropy_loss(&model.forward(g, x).unwrap().probs, labels).unwrap()
    }

    #[test]
    fn matches_central_differences() {
        let (g, model, x) = setup(3);
        let labels = Labels::new(vec![Some(0), Some(2), None, Some(1), Some(2), Some(0)]);
        let (_, grads) = backward(&model, &g, &x, &labels).unwrap();
        let flat = grads.flat();
        assert_eq!(flat.len(), model.param_count());
        let base = model.forward(&g, &x).unwrap().activation_pattern();
        let eps = 1e-4;
        let mut checked = 0;
        for k in (0..flat.len()).step_by(7) {
            let mut plus = model.clone();
            plus.set_param(k, model.param(k) + eps);
            let mut minus = model.clone();
            minus.set_param(k, model.param(k) - eps);
            if plus.forward(&g, &x).unwrap().activation_pattern() != base
                || minus.forward(&g, &x).unwrap().activation_pattern() != base
            {
                continue;
            }
            let numeric = (loss_at(&plus, &g, &x, &labels) - loss_at(&minus, &g, &x, &labels)) / (2.0 * eps);
            let err = (numeric - flat[k]).abs() / numeric.abs().max(flat[k].abs()).max(1e-6);
            assert!(err < 1e-4, "param {k}: analytic {} numeric {numeric}", flat[k]);
            checked += 1;
        }
        assert!(checked > 20);
    }

    #[test]
    fn zero_rate_step_keeps_loss() {
        let (g, model, x) = setup(2);
        let labels = Labels::new(vec![Some(0), Some(1), Some(0), Some(1), None, None]);
        let (loss, grads) = backward(&model, &g, &x, &labels).unwrap();
        let mut stepped = model.clone();
        stepped.apply_gradients(&grads, 0.0);
        assert_eq!(stepped, model);
        assert_eq!(loss_at(&stepped, &g, &x, &labels), loss);
    }

    #[test]
    fn unused_class_bias_gradient_is_its_mean_probability() {
        let (g, model, x) = setup(3);
        let labels = Labels::new(vec![Some(0), Some(1), Some(0), None, Some(1), None]);
        let (_, grads) = backward(&model, &g, &x, &labels).unwrap();
        let probs = model.forward(&g, &x).unwrap().probs;
        let labelled = [0, 1, 2, 4];
        let mean_p2: f64 = labelled.iter().map(|&i| probs[[i, 2]]).sum::<f64>() / 4.0;
        let db = grads.gcn.last().unwrap().bias[2];
        assert!(db > 0.0);
        assert!((db - mean_p2).abs() < 1e-12);
        // the last parameter is that bias entry
        let k = model.param_count() - 1;
        let eps = 1e-4;
        let mut plus = model.clone();
        plus.set_param(k, model.param(k) + eps);
        let mut minus = model.clone();
        minus.set_param(k, model.param(k) - eps);
        let numeric = (loss_at(&plus, &g, &x, &labels) - loss_at(&minus, &g, &x, &labels)) / (2.0 * eps);
        assert!((numeric - db).abs() / db < 1e-6);
    }

    #[test]
    fn empty_mask_is_an_error() {
        let (g, model, x) = setup(2);
        assert!(matches!(
            backward(&model, &g, &x, &Labels::new(vec![None; 6])),
            Err(Error::EmptyMask)
        ));
    }
}
