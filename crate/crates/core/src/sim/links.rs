use crate::error::{Error, Result};
use crate::graph::{ClusterGraph, NodeId};

/// Per-pair link latency (ms per 64 bytes) used by the cost model: the
/// direct edge when one exists, otherwise the cheapest relay path.
#[derive(Debug, Clone)]
pub struct LinkTable {
    ids: Vec<NodeId>,
    n: usize,
    latency: Vec<f64>,
}

impl LinkTable {
    pub fn new(g: &ClusterGraph) -> Self {
        let n = g.len();
        let mut relay = vec![f64::INFINITY; n * n];
        for i in 0..n {
            relay[i * n + i] = 0.0;
            for j in g.neighbors(i) {
                relay[i * n + j] = g.latency_at(i, j).expect("neighbour");
            }
        }
        for k in 0..n {
            for i in 0..n {
                let ik = relay[i * n + k];
                if !ik.is_finite() {
                    continue;
                }
                for j in 0..n {
                    let via = ik + relay[k * n + j];
                    if via < relay[i * n + j] {
                        relay[i * n + j] = via;
                    }
                }
            }
        }
        let mut latency = relay;
        for i in 0..n {
            for j in g.neighbors(i) {
                latency[i * n + j] = g.latency_at(i, j).expect("neighbour");
            }
        }
        Self {
            ids: g.node_ids(),
            n,
            latency,
        }
    }

    /// Latency between node positions; infinite if unreachable.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.latency[i * self.n + j]
    }

    pub fn checked(&self, i: usize, j: usize) -> Result<f64> {
        let w = self.at(i, j);
        if w.is_finite() {
            Ok(w)
        } else {
            Err(Error::Unreachable(self.ids[i], self.ids[j]))
        }
    }

    /// Sum of link latencies along consecutive positions.
    pub fn chain_latency(&self, order: &[usize]) -> f64 {
        order.windows(2).map(|w| self.at(w[0], w[1])).sum()
    }

    /// Slowest hop of the ring `order[0] → … → order[k-1] → order[0]`.
    pub fn ring_bottleneck(&self, order: &[usize]) -> Result<f64> {
        let k = order.len();
        let mut worst: f64 = 0.0;
        if k < 2 {
            return Ok(0.0);
        }
        for i in 0..k {
            worst = worst.max(self.checked(order[i], order[(i + 1) % k])?);
        }
        Ok(worst)
    }

    /// Greedy nearest-neighbour chain over `members` starting at `start`.
    /// Ties go to the lowest position.
    pub fn nearest_neighbour_chain(&self, members: &[usize], start: usize) -> Vec<usize> {
        let mut left: Vec<usize> = members.iter().copied().filter(|&m| m != start).collect();
        left.sort_unstable();
        let mut order = vec![start];
        let mut cur = start;
        while !left.is_empty() {
            let (k, _) = left
                .iter()
                .enumerate()
                .min_by(|(_, &a), (_, &b)| self.at(cur, a).total_cmp(&self.at(cur, b)))
                .expect("non-empty");
            cur = left.remove(k);
            order.push(cur);
        }
        order
    }
}
