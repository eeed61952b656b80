use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ClusterGraph, NodeId};

/// Per-node class labels in graph node order; `None` = unlabelled (masked out).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labels(Vec<Option<usize>>);

impl Labels {
    pub fn new(labels: Vec<Option<usize>>) -> Self {
        Self(labels)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Option<usize>> + '_ {
        self.0.iter().copied()
    }

    pub fn labelled_count(&self) -> usize {
        self.0.iter().filter(|l| l.is_some()).count()
    }

    pub fn as_slice(&self) -> &[Option<usize>] {
        &self.0
    }
}

/// Label file: `{"labels": {"<node id>": class}, "num_classes": k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelSet {
    pub labels: BTreeMap<String, usize>,
    pub num_classes: usize,
}

impl LabelSet {
    pub fn from_json(text: &str) -> Result<Self> {
        let set: Self = serde_json::from_str(text)?;
        for (id, &c) in &set.labels {
            id.parse::<NodeId>()
                .map_err(|_| Error::Malformed(format!("label key {id:?} is not a node id")))?;
            if c >= set.num_classes {
                return Err(Error::Malformed(format!(
                    "label {c} for node {id} outside {} classes",
                    set.num_classes
                )));
            }
        }
        Ok(set)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("labels serialize");
        s.push('\n');
        s
    }

    pub fn from_labels(g: &ClusterGraph, labels: &Labels, num_classes: usize) -> Self {
        let labels = g
            .nodes()
            .iter()
            .zip(labels.iter())
            .filter_map(|(n, l)| l.map(|c| (n.id.to_string(), c)))
            .collect();
        Self { labels, num_classes }
    }

    /// Aligns to `g`'s node order. Ids absent from the file are unlabelled;
    /// ids absent from the graph are ignored.
    pub fn for_graph(&self, g: &ClusterGraph) -> Labels {
        Labels(
            g.nodes()
                .iter()
                .map(|n| self.labels.get(&n.id.to_string()).copied())
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::MachineNode;

    #[test]
    fn absent_ids_are_unlabelled() {
        let g = ClusterGraph::from_parts(
            vec![MachineNode::new(4, "A", 1.0, 1.0), MachineNode::new(7, "A", 1.0, 1.0)],
            vec![],
        )
        .unwrap();
        let set = LabelSet::from_json(r#"{"labels": {"7": 1, "99": 0}, "num_classes": 2}"#).unwrap();
        assert_eq!(set.for_graph(&g), Labels::new(vec![None, Some(1)]));
        assert_eq!(LabelSet::from_labels(&g, &set.for_graph(&g), 2).labels.len(), 1);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(LabelSet::from_json(r#"{"labels": {"x": 1}, "num_classes": 2}"#).is_err());
        assert!(LabelSet::from_json(r#"{"labels": {"1": 3}, "num_classes": 2}"#).is_err());
        assert!(LabelSet::from_json(r#"{"labels": {}, "num_classes": 2, "extra": 1}"#).is_err());
    }
}
