//! Latency-weighted machine graph.
//!
//! Each node is a machine (region, compute score, aggregate GPU memory) and
//! each undirected edge carries the measured time to move 64 bytes between
//! the two machines. A missing edge means the pair cannot talk at all; that
//! is tracked by an explicit connectivity mask so a zero in the latency
//! matrix is never ambiguous.

mod features;
mod io;

use std::collections::{BTreeSet, HashMap, VecDeque};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use features::{embed_features, FeatureConfig, FeatureMatrix};
pub use io::{parse_cluster, parse_cluster_document, ClusterDocument};

pub type NodeId = u32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineNode {
    pub id: NodeId,
    pub region: String,
    #[serde(rename = "compute")]
    pub compute_capability: f64,
    pub memory_gb: f64,
}

impl MachineNode {
    pub fn new(id: NodeId, region: impl Into<String>, compute_capability: f64, memory_gb: f64) -> Self {
        Self {
            id,
            region: region.into(),
            compute_capability,
            memory_gb,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommEdge {
    pub a: NodeId,
    pub b: NodeId,
    #[serde(rename = "ms_per_64b")]
    pub latency_ms_per_64b: f64,
}

impl CommEdge {
    pub fn new(a: NodeId, b: NodeId, latency_ms_per_64b: f64) -> Self {
        Self {
            a,
            b,
            latency_ms_per_64b,
        }
    }

    fn key(&self) -> (NodeId, NodeId) {
        (self.a.min(self.b), self.a.max(self.b))
    }
}

/// Immutable machine graph. Mutations return new graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterGraph {
    nodes: Vec<MachineNode>,
    index: HashMap<NodeId, usize>,
    // row-major n*n; entries are 0.0 wherever `connected` is false
    latency: Vec<f64>,
    connected: Vec<bool>,
}

/// Lists every broken graph invariant in `nodes`/`edges`. Empty means valid.
pub fn validate_parts(nodes: &[MachineNode], edges: &[CommEdge]) -> Vec<String> {
    let mut out = Vec::new();
    if nodes.is_empty() {
        out.push("empty cluster".to_string());
    }
    let mut seen = BTreeSet::new();
    for n in nodes {
        if !seen.insert(n.id) {
            out.push(format!("duplicate node id {}", n.id));
        }
        if n.region.trim().is_empty() {
            out.push(format!("empty region on node {}", n.id));
        }
        if !(n.compute_capability.is_finite() && n.compute_capability > 0.0) {
            out.push(format!("non-positive compute on node {}", n.id));
        }
        if !(n.memory_gb.is_finite() && n.memory_gb > 0.0) {
            out.push(format!("non-positive memory on node {}", n.id));
        }
    }
    let mut declared: HashMap<(NodeId, NodeId), f64> = HashMap::new();
    for e in edges {
        if e.a == e.b {
            out.push(format!("self-loop at {}", e.a));
            continue;
        }
        for end in [e.a, e.b] {
            if !seen.contains(&end) {
                out.push(format!("edge ({},{}) references unknown node {}", e.a, e.b, end));
            }
        }
        if !(e.latency_ms_per_64b.is_finite() && e.latency_ms_per_64b > 0.0) {
            out.push(format!("non-positive latency on ({},{})", e.a, e.b));
            continue;
        }
        match declared.get(&e.key()) {
            Some(&w) if w != e.latency_ms_per_64b => out.push(format!(
                "conflicting duplicate edge ({},{}): {} vs {}",
                e.a, e.b, w, e.latency_ms_per_64b
            )),
            Some(_) => {}
            None => {
                declared.insert(e.key(), e.latency_ms_per_64b);
            }
        }
    }
    out
}

impl ClusterGraph {
    /// Builds a validated graph. Nodes are stored sorted by id, so node
    /// positions never depend on declaration order.
    pub fn from_parts(mut nodes: Vec<MachineNode>, edges: Vec<CommEdge>) -> Result<Self> {
        let violations = validate_parts(&nodes, &edges);
        if !violations.is_empty() {
            if violations.len() == 1 && nodes.is_empty() {
                return Err(Error::EmptyCluster);
            }
            return Err(Error::InvalidCluster(violations));
        }
        nodes.sort_by_key(|m| m.id);
        let n = nodes.len();
        let index: HashMap<NodeId, usize> = nodes.iter().enumerate().map(|(i, m)| (m.id, i)).collect();
        let mut latency = vec![0.0; n * n];
        let mut connected = vec![false; n * n];
        for e in &edges {
            let (i, j) = (index[&e.a], index[&e.b]);
            latency[i * n + j] = e.latency_ms_per_64b;
            latency[j * n + i] = e.latency_ms_per_64b;
            connected[i * n + j] = true;
            connected[j * n + i] = true;
        }
        let g = Self {
            nodes,
            index,
            latency,
            connected,
        };
        debug_assert!(g.check_matrix_invariants().is_ok());
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[MachineNode] {
        &self.nodes
    }

    pub fn node_ids(&self) -> Vec<NodeId> {
        self.nodes.iter().map(|n| n.id).collect()
    }

    pub fn node(&self, id: NodeId) -> Option<&MachineNode> {
        self.index.get(&id).map(|&i| &self.nodes[i])
    }

    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.index.contains_key(&id)
    }

    /// Latency between two node positions, `None` when unconnected.
    pub fn latency_at(&self, i: usize, j: usize) -> Option<f64> {
        let n = self.len();
        self.connected[i * n + j].then(|| self.latency[i * n + j])
    }

    pub fn is_linked_at(&self, i: usize, j: usize) -> bool {
        self.connected[i * self.len() + j]
    }

    /// Latency between two machines by id, `None` when unconnected or unknown.
    pub fn latency(&self, a: NodeId, b: NodeId) -> Option<f64> {
        let (i, j) = (self.index_of(a)?, self.index_of(b)?);
        self.latency_at(i, j)
    }

    /// Dense adjacency W with W[i][j] = latency, 0 where unconnected.
    pub fn adjacency(&self) -> Array2<f64> {
        let n = self.len();
        Array2::from_shape_vec((n, n), self.latency.clone()).expect("square matrix")
    }

    /// Connectivity mask paired with [`adjacency`](Self::adjacency).
    pub fn mask(&self) -> Array2<bool> {
        let n = self.len();
        Array2::from_shape_vec((n, n), self.connected.clone()).expect("square matrix")
    }

    /// Positions of the neighbours of position `i`, ascending.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let n = self.len();
        (0..n).filter(move |&j| self.connected[i * n + j])
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors(i).count()
    }

    /// Edges in canonical order: `a < b`, sorted by `(a, b)`.
    pub fn edges(&self) -> Vec<CommEdge> {
        let n = self.len();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if self.connected[i * n + j] {
                    let (a, b) = (self.nodes[i].id, self.nodes[j].id);
                    out.push(CommEdge::new(a.min(b), a.max(b), self.latency[i * n + j]));
                }
            }
        }
        out.sort_by_key(|e| (e.a, e.b));
        out
    }

    pub fn max_latency(&self) -> f64 {
        self.latency.iter().copied().fold(0.0, f64::max)
    }

    pub fn total_memory(&self) -> f64 {
        self.nodes.iter().map(|n| n.memory_gb).sum()
    }

    /// Re-runs the structural validation on this graph's own parts.
    pub fn validate(&self) -> Vec<String> {
        let mut v = validate_parts(&self.nodes, &self.edges());
        if let Err(e) = self.check_matrix_invariants() {
            v.push(e);
        }
        v
    }

    /// W = Wᵀ, zero diagonal, non-negative, and zero wherever the mask is off.
    pub fn check_matrix_invariants(&self) -> std::result::Result<(), String> {
        let n = self.len();
        for i in 0..n {
            if self.connected[i * n + i] || self.latency[i * n + i] != 0.0 {
                return Err(format!("non-zero diagonal at {}", self.nodes[i].id));
            }
            for j in 0..n {
                let w = self.latency[i * n + j];
                if w < 0.0 {
                    return Err(format!(
                        "negative weight at ({},{})",
                        self.nodes[i].id, self.nodes[j].id
                    ));
                }
                if w != self.latency[j * n + i] || self.connected[i * n + j] != self.connected[j * n + i] {
                    return Err(format!(
                        "asymmetric entry at ({},{})",
                        self.nodes[i].id, self.nodes[j].id
                    ));
                }
                if !self.connected[i * n + j] && w != 0.0 {
                    return Err(format!(
                        "weight without edge at ({},{})",
                        self.nodes[i].id, self.nodes[j].id
                    ));
                }
            }
        }
        Ok(())
    }

    /// Adds a machine linked to existing peers. All prior entries of W are kept.
    pub fn add_machine(&self, machine: MachineNode, links: &[(NodeId, f64)]) -> Result<Self> {
        if self.contains(machine.id) {
            return Err(Error::DuplicateNode(machine.id));
        }
        for &(peer, lat) in links {
            if !self.contains(peer) {
                return Err(Error::UnknownNode(peer));
            }
            if !(lat.is_finite() && lat > 0.0) {
                return Err(Error::NonPositiveLatency(machine.id, peer));
            }
        }
        let id = machine.id;
        let mut nodes = self.nodes.clone();
        nodes.push(machine);
        let mut edges = self.edges();
        edges.extend(links.iter().map(|&(peer, lat)| CommEdge::new(id, peer, lat)));
        Self::from_parts(nodes, edges)
    }

    /// Drops a machine and every incident edge. Removing the last machine is
    /// an error since an empty cluster is never valid.
    pub fn remove_machine(&self, id: NodeId) -> Result<Self> {
        if !self.contains(id) {
            return Err(Error::UnknownNode(id));
        }
        let nodes: Vec<MachineNode> = self.nodes.iter().filter(|n| n.id != id).cloned().collect();
        let edges = self.edges().into_iter().filter(|e| e.a != id && e.b != id).collect();
        Self::from_parts(nodes, edges)
    }

    /// Subgraph induced by `ids`, keeping this graph's node order.
    pub fn induced_subgraph(&self, ids: &[NodeId]) -> Result<Self> {
        let keep: BTreeSet<NodeId> = ids.iter().copied().collect();
        for id in &keep {
            if !self.contains(*id) {
                return Err(Error::UnknownNode(*id));
            }
        }
        let nodes: Vec<MachineNode> = self.nodes.iter().filter(|n| keep.contains(&n.id)).cloned().collect();
        let edges = self
            .edges()
            .into_iter()
            .filter(|e| keep.contains(&e.a) && keep.contains(&e.b))
            .collect();
        Self::from_parts(nodes, edges)
    }

    /// True when the machines in `ids` form one connected component using
    /// only edges among themselves. The empty set is not connected.
    pub fn is_connected_set(&self, ids: &[NodeId]) -> bool {
        let Some(idx) = ids.iter().map(|&id| self.index_of(id)).collect::<Option<Vec<_>>>() else {
            return false;
        };
        let members: BTreeSet<usize> = idx.iter().copied().collect();
        let Some(&start) = members.iter().next() else {
            return false;
        };
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            for j in self.neighbors(i) {
                if members.contains(&j) && seen.insert(j) {
                    queue.push_back(j);
                }
            }
        }
        seen.len() == members.len()
    }

    /// Minimum-latency relay path between two machines (sum of hop
    /// latencies), `None` if no path exists.
    pub fn shortest_path_latency(&self, a: NodeId, b: NodeId) -> Option<f64> {
        let (s, t) = (self.index_of(a)?, self.index_of(b)?);
        if s == t {
            return Some(0.0);
        }
        let n = self.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        dist[s] = 0.0;
        for _ in 0..n {
            let Some(u) = (0..n)
                .filter(|&i| !done[i] && dist[i].is_finite())
                .min_by(|&x, &y| dist[x].total_cmp(&dist[y]).then(x.cmp(&y)))
            else {
                break;
            };
            if u == t {
                return Some(dist[t]);
            }
            done[u] = true;
            for v in self.neighbors(u) {
                let nd = dist[u] + self.latency[u * n + v];
                if nd < dist[v] {
                    dist[v] = nd;
                }
            }
        }
        dist[t].is_finite().then_some(dist[t])
    }

    pub fn to_document(&self) -> ClusterDocument {
        ClusterDocument {
            nodes: self.nodes.clone(),
            edges: self.edges(),
        }
    }

    /// Canonical JSON: nodes sorted by id, edges by `(min, max)`.
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_document()).expect("cluster serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig2_like() -> ClusterGraph {
        let regions = [
            "Beijing",
            "Nanjing",
            "California",
            "Tokyo",
            "Berlin",
            "London",
            "Paris",
            "Rome",
        ];
        let nodes = regions
            .iter()
            .enumerate()
            .map(|(i, r)| MachineNode::new(i as u32, *r, 8.6, 152.0))
            .collect();
        let edges = vec![
            CommEdge::new(0, 1, 30.0),
            CommEdge::new(1, 2, 97.9),
            CommEdge::new(2, 3, 118.8),
            CommEdge::new(0, 3, 74.3),
        ];
        ClusterGraph::from_parts(nodes, edges).unwrap()
    }

    #[test]
    fn single_node_has_zero_adjacency() {
        let g = ClusterGraph::from_parts(vec![MachineNode::new(0, "Beijing", 8.6, 152.0)], vec![]).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.adjacency(), Array2::<f64>::zeros((1, 1)));
    }

    #[test]
    fn edge_declared_once_is_mirrored() {
        let g = fig2_like();
        let w = g.adjacency();
        assert_eq!(w[[0, 1]], 30.0);
        assert_eq!(w[[1, 0]], 30.0);
        assert!(g.validate().is_empty());
    }

    #[test]
    fn empty_node_list_is_rejected() {
        assert!(matches!(
            ClusterGraph::from_parts(vec![], vec![]),
            Err(Error::EmptyCluster)
        ));
    }

    #[test]
    fn violations_name_the_broken_rule() {
        let nodes = vec![
            MachineNode::new(3, "Rome", 7.0, 384.0),
            MachineNode::new(4, "Rome", 7.0, 384.0),
        ];
        assert_eq!(
            validate_parts(&nodes, &[CommEdge::new(3, 3, 1.0)]),
            vec!["self-loop at 3"]
        );
        assert_eq!(
            validate_parts(&nodes, &[CommEdge::new(3, 4, -5.0)]),
            vec!["non-positive latency on (3,4)"]
        );
        let dup = validate_parts(&nodes, &[CommEdge::new(3, 4, 5.0), CommEdge::new(4, 3, 6.0)]);
        assert_eq!(dup.len(), 1);
        assert!(dup[0].starts_with("conflicting duplicate edge"));
        // an identical mirror declaration is accepted
        assert!(validate_parts(&nodes, &[CommEdge::new(3, 4, 5.0), CommEdge::new(4, 3, 5.0)]).is_empty());
    }

    #[test]
    fn bad_nodes_are_reported() {
        let nodes = vec![
            MachineNode::new(1, "", 8.6, 152.0),
            MachineNode::new(1, "Rome", 0.0, -1.0),
        ];
        let v = validate_parts(&nodes, &[CommEdge::new(1, 9, 2.0)]);
        assert!(v.contains(&"empty region on node 1".to_string()));
        assert!(v.contains(&"duplicate node id 1".to_string()));
        assert!(v.contains(&"non-positive compute on node 1".to_string()));
        assert!(v.contains(&"non-positive memory on node 1".to_string()));
        assert!(v.contains(&"edge (1,9) references unknown node 9".to_string()));
    }

    #[test]
    fn add_then_remove_is_identity() {
        let g = fig2_like();
        let g2 = g
            .add_machine(MachineNode::new(45, "Rome", 7.0, 384.0), &[(7, 2.0), (4, 30.0)])
            .unwrap();
        assert_eq!(g2.len(), 9);
        assert_eq!(g2.latency(45, 7), Some(2.0));
        assert_eq!(g2.latency(7, 45), Some(2.0));
        let w = g.adjacency();
        let w2 = g2.adjacency();
        for i in 0..g.len() {
            for j in 0..g.len() {
                assert_eq!(w[[i, j]], w2[[i, j]]);
            }
        }
        assert_eq!(g2.remove_machine(45).unwrap(), g);
    }

    #[test]
    fn add_isolated_machine() {
        let g = fig2_like()
            .add_machine(MachineNode::new(45, "Rome", 7.0, 384.0), &[])
            .unwrap();
        assert_eq!(g.degree(g.index_of(45).unwrap()), 0);
        assert!(g.validate().is_empty());
    }

    #[test]
    fn add_errors() {
        let g = fig2_like();
        let m = MachineNode::new(45, "Rome", 7.0, 384.0);
        assert!(matches!(
            g.add_machine(m.clone(), &[(999, 1.0)]),
            Err(Error::UnknownNode(999))
        ));
        assert!(matches!(
            g.add_machine(m.clone(), &[(0, 0.0)]),
            Err(Error::NonPositiveLatency(45, 0))
        ));
        assert!(matches!(
            g.add_machine(MachineNode::new(0, "Rome", 7.0, 384.0), &[]),
            Err(Error::DuplicateNode(0))
        ));
    }

    #[test]
    fn remove_errors() {
        let g = fig2_like();
        assert!(matches!(g.remove_machine(999), Err(Error::UnknownNode(999))));
        let one = ClusterGraph::from_parts(vec![MachineNode::new(0, "Beijing", 8.6, 152.0)], vec![]).unwrap();
        assert!(matches!(one.remove_machine(0), Err(Error::EmptyCluster)));
    }

    #[test]
    fn remove_preserves_order_and_drops_edges() {
        let g = fig2_like().remove_machine(1).unwrap();
        assert_eq!(g.node_ids(), vec![0, 2, 3, 4, 5, 6, 7]);
        assert!(g.edges().iter().all(|e| e.a != 1 && e.b != 1));
        assert_eq!(g.latency(0, 3), Some(74.3));
    }

    #[test]
    fn connectivity_and_relay() {
        let g = fig2_like();
        assert!(g.is_connected_set(&[0, 1, 2, 3]));
        assert!(!g.is_connected_set(&[0, 2]));
        assert!(!g.is_connected_set(&[]));
        assert!(g.is_connected_set(&[5]));
        assert_eq!(g.shortest_path_latency(0, 2), Some(127.9));
        assert_eq!(g.shortest_path_latency(0, 5), None);
    }
}
