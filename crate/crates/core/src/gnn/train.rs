use super::backward::backward_from_cache;
use super::forward::{argmax_rows, cross_entropy_loss};
use super::{GnnModel, Labels};
use crate::error::{Error, Result};
use crate::graph::{ClusterGraph, FeatureMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub steps: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            steps: 10,
            seed: 0,
        }
    }
}

/// Loss and labelled-node accuracy measured by the forward pass of a step,
/// i.e. before that step's update is applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub step: usize,
    pub loss: f64,
    pub accuracy: f64,
}

/// Fraction of labelled nodes whose argmax equals their label.
pub fn accuracy(probs: &ndarray::Array2<f64>, labels: &Labels) -> f64 {
    let predicted = argmax_rows(probs);
    let (mut hit, mut total) = (0usize, 0usize);
    for (p, l) in predicted.iter().zip(labels.iter()) {
        if let Some(c) = l {
            total += 1;
            hit += usize::from(*p == c);
        }
    }
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}

/// Full-batch gradient descent for `cfg.steps` iterations.
pub fn train(
    model: &GnnModel,
    g: &ClusterGraph,
    x: &FeatureMatrix,
    labels: &Labels,
    cfg: &TrainConfig,
) -> Result<(GnnModel, Vec<TraceEntry>)> {
    if !(cfg.learning_rate.is_finite() && cfg.learning_rate > 0.0) {
        return Err(Error::Config(format!(
            "learning rate must be positive, got {}",
            cfg.learning_rate
        )));
    }
    let mut model = model.clone();
    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 1..=cfg.steps {
        let cache = model.forward(g, x)?;
        let loss = cross_entropy_loss(&cache.probs, labels)?;
        let grads = backward_from_cache(&model, &cache, labels)?;
        trace.push(TraceEntry {
            step,
            loss,
            accuracy: accuracy(&cache.probs, labels),
        });
        model.apply_gradients(&grads, cfg.learning_rate);
    }
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::ModelShape;
    use crate::graph::FeatureConfig;
    use crate::sim::{generate_fleet, RegionLatencyTable};

    fn setup() -> (ClusterGraph, GnnModel, FeatureMatrix, Labels) {
        let g = generate_fleet(2, 8, &RegionLatencyTable::standard());
        let model = GnnModel::new(FeatureConfig::from_graph(&g), &ModelShape::compact(2), 4).unwrap();
        let x = model.embed(&g);
        let labels = Labels::new((0..8).map(|i| Some(i % 2)).collect());
        (g, model, x, labels)
    }

    #[test]
    fn zero_steps_returns_initial_model() {
        let (g, model, x, labels) = setup();
        let cfg = TrainConfig {
            steps: 0,
            ..TrainConfig::default()
        };
        let (trained, trace) = train(&model, &g, &x, &labels, &cfg).unwrap();
        assert_eq!(trained, model);
        assert!(trace.is_empty());
    }

    #[test]
    fn traces_are_reproducible_and_loss_falls() {
        let (g, model, x, labels) = setup();
        let cfg = TrainConfig {
            steps: 30,
            learning_rate: 0.1,
            seed: 4,
        };
        let (a, ta) = train(&model, &g, &x, &labels, &cfg).unwrap();
        let (b, tb) = train(&model, &g, &x, &labels, &cfg).unwrap();
        assert_eq!(ta, tb);
        assert_eq!(a, b);
        assert_eq!(ta.len(), 30);
        assert_eq!(ta[0].step, 1);
        assert!(ta[29].loss < ta[0].loss);
    }

    #[test]
    fn rejects_bad_rate() {
        let (g, model, x, labels) = setup();
        for lr in [0.0, -0.1, f64::NAN] {
            let cfg = TrainConfig {
                learning_rate: lr,
                ..TrainConfig::default()
            };
            assert!(matches!(train(&model, &g, &x, &labels, &cfg), Err(Error::Config(_))));
        }
    }

    #[test]
    fn accuracy_ignores_unlabelled_rows() {
        let probs = ndarray::arr2(&[[0.9, 0.1], [0.2, 0.8], [0.6, 0.4]]);
        assert_eq!(accuracy(&probs, &Labels::new(vec![Some(0), Some(0), None])), 0.5);
        assert_eq!(accuracy(&probs, &Labels::new(vec![None; 3])), 0.0);
    }
}
