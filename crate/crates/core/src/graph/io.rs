use serde::{Deserialize, Serialize};

use super::{validate_parts, ClusterGraph, CommEdge, MachineNode};
use crate::error::Result;

/// On-disk cluster file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterDocument {
    pub nodes: Vec<MachineNode>,
    #[serde(default)]
    pub edges: Vec<CommEdge>,
}

impl ClusterDocument {
    pub fn violations(&self) -> Vec<String> {
        validate_parts(&self.nodes, &self.edges)
    }

    pub fn into_graph(self) -> Result<ClusterGraph> {
        ClusterGraph::from_parts(self.nodes, self.edges)
    }
}

/// Syntax-only parse; structural rules are left to [`ClusterDocument::violations`].
pub fn parse_cluster_document(text: &str) -> Result<ClusterDocument> {
    Ok(serde_json::from_str(text)?)
}

pub fn parse_cluster(text: &str) -> Result<ClusterGraph> {
    parse_cluster_document(text)?.into_graph()
}
