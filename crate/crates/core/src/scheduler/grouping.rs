//! Latency-driven helpers for carving connected machine groups.

use std::collections::BTreeSet;

use crate::graph::{ClusterGraph, NodeId};
use crate::sim::LinkTable;

/// Mean link latency from position `u` to `members`, with unreachable pairs
/// charged a fixed penalty.
fn attach_cost(links: &LinkTable, u: usize, members: &BTreeSet<usize>, penalty: f64) -> f64 {
    if members.is_empty() {
        return 0.0;
    }
    let total: f64 = members
        .iter()
        .map(|&v| {
            let w = links.at(u, v);
            if w.is_finite() {
                w
            } else {
                penalty
            }
        })
        .sum();
    total / members.len() as f64
}

fn penalty(g: &ClusterGraph) -> f64 {
    2.0 * g.max_latency() + 1.0
}

fn connected(g: &ClusterGraph, members: &BTreeSet<usize>) -> bool {
    let ids: Vec<NodeId> = members.iter().map(|&i| g.nodes()[i].id).collect();
    g.is_connected_set(&ids)
}

fn adjacent_to(g: &ClusterGraph, u: usize, members: &BTreeSet<usize>) -> bool {
    members.is_empty() || g.neighbors(u).any(|v| members.contains(&v))
}

/// Mean pairwise link latency inside a group (0 for one machine).
pub(crate) fn mean_intra_latency(links: &LinkTable, members: &[usize]) -> f64 {
    let k = members.len();
    if k < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for (a, &i) in members.iter().enumerate() {
        for &j in &members[a + 1..] {
            total += links.at(i, j);
        }
    }
    total / (k * (k - 1) / 2) as f64
}

/// Largest connected piece of `members` (ties: the piece holding the lowest position).
fn largest_component(g: &ClusterGraph, members: &BTreeSet<usize>) -> BTreeSet<usize> {
    let mut best = BTreeSet::new();
    let mut seen = BTreeSet::new();
    for &s in members {
        if seen.contains(&s) {
            continue;
        }
        let mut comp = BTreeSet::from([s]);
        let mut stack = vec![s];
        while let Some(i) = stack.pop() {
            for j in g.neighbors(i) {
                if members.contains(&j) && comp.insert(j) {
                    stack.push(j);
                }
            }
        }
        seen.extend(comp.iter().copied());
        if comp.len() > best.len() {
            best = comp;
        }
    }
    best
}

/// Grows `members` by `count` machines drawn from `pool`, each time taking
/// the cheapest machine adjacent to the group. Stops early when nothing in
/// the pool touches the group.
fn grow(
    g: &ClusterGraph,
    links: &LinkTable,
    members: &mut BTreeSet<usize>,
    added: &mut BTreeSet<usize>,
    pool: &BTreeSet<usize>,
    count: usize,
) {
    let pen = penalty(g);
    for _ in 0..count {
        let next = pool
            .iter()
            .copied()
            .filter(|u| !members.contains(u) && adjacent_to(g, *u, members))
            .min_by(|&a, &b| {
                attach_cost(links, a, members, pen)
                    .total_cmp(&attach_cost(links, b, members, pen))
                    .then(a.cmp(&b))
            });
        match next {
            Some(u) => {
                members.insert(u);
                added.insert(u);
            }
            None => break,
        }
    }
}

/// Reshapes a predicted candidate so that `base ∪ candidate` is connected
/// and the candidate holds `size` machines from `pool`.
///
/// Surplus machines are dropped starting with the one farthest from the
/// rest of the group; shortfalls are filled with the closest adjacent pool
/// machines. An empty candidate with an empty base falls back to
/// [`greedy_fill`].
pub(crate) fn shape_group(
    g: &ClusterGraph,
    links: &LinkTable,
    base: &BTreeSet<usize>,
    candidate: &BTreeSet<usize>,
    pool: &BTreeSet<usize>,
    size: usize,
    accept: &dyn Fn(&[usize]) -> bool,
) -> BTreeSet<usize> {
    if base.is_empty() && candidate.is_empty() {
        return greedy_fill(g, links, pool, size, accept);
    }
    let pen = penalty(g);
    let mut cand: BTreeSet<usize> = candidate.clone();
    if base.is_empty() {
        cand = largest_component(g, &cand);
    }
    let mut members: BTreeSet<usize> = base.union(&cand).copied().collect();

    while cand.len() > size {
        let others = |u: usize| -> BTreeSet<usize> { members.iter().copied().filter(|&v| v != u).collect() };
        let mut ranked: Vec<(f64, usize)> = cand
            .iter()
            .map(|&u| (attach_cost(links, u, &others(u), pen), u))
            .collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let was_connected = connected(g, &members);
        let victim = ranked
            .iter()
            .map(|&(_, u)| u)
            .find(|&u| !was_connected || connected(g, &others(u)))
            .unwrap_or(ranked[0].1);
        cand.remove(&victim);
        members.remove(&victim);
    }
    if cand.len() < size {
        let need = size - cand.len();
        grow(g, links, &mut members, &mut cand, pool, need);
    }
    cand
}

/// Best connected group of `size` machines from `pool`: grow greedily from
/// every seed and keep the acceptable result with the lowest mean intra-group
/// latency. Falls back to the cheapest connected result if none is acceptable.
pub(crate) fn greedy_fill(
    g: &ClusterGraph,
    links: &LinkTable,
    pool: &BTreeSet<usize>,
    size: usize,
    accept: &dyn Fn(&[usize]) -> bool,
) -> BTreeSet<usize> {
    let mut best: Option<(bool, f64, BTreeSet<usize>)> = None;
    for &seed in pool {
        let mut members = BTreeSet::from([seed]);
        let mut added = BTreeSet::new();
        grow(g, links, &mut members, &mut added, pool, size.saturating_sub(1));
        let list: Vec<usize> = members.iter().copied().collect();
        let ok = accept(&list);
        let score = mean_intra_latency(links, &list);
        let better = match &best {
            None => true,
            Some((bok, bscore, bset)) => {
                (ok && !bok)
                    || (ok == *bok && members.len() > bset.len())
                    || (ok == *bok && members.len() == bset.len() && score < *bscore)
            }
        };
        if better {
            best = Some((ok, score, members));
        }
    }
    best.map(|b| b.2).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{CommEdge, MachineNode};

    // two tight pairs {0,1} and {2,3} joined by a slow link 1-2
    fn barbell() -> ClusterGraph {
        ClusterGraph::from_parts(
            (0..4).map(|i| MachineNode::new(i, "X", 8.0, 100.0)).collect(),
            vec![
                CommEdge::new(0, 1, 1.0),
                CommEdge::new(2, 3, 2.0),
                CommEdge::new(1, 2, 100.0),
            ],
        )
        .unwrap()
    }

    fn all(n: usize) -> BTreeSet<usize> {
        (0..n).collect()
    }

    #[test]
    fn fill_finds_tight_pair() {
        let g = barbell();
        let links = LinkTable::new(&g);
        let got = greedy_fill(&g, &links, &all(4), 2, &|_| true);
        assert_eq!(got, BTreeSet::from([0, 1]));
        // with {0,1} rejected the next best is {2,3}
        let got = greedy_fill(&g, &links, &all(4), 2, &|m| m != [0, 1]);
        assert_eq!(got, BTreeSet::from([2, 3]));
    }

    #[test]
    fn trim_keeps_group_connected() {
        let g = barbell();
        let links = LinkTable::new(&g);
        let got = shape_group(&g, &links, &BTreeSet::new(), &all(4), &all(4), 3, &|_| true);
        assert_eq!(got.len(), 3);
        let ids: Vec<NodeId> = got.iter().map(|&i| i as NodeId).collect();
        assert!(g.is_connected_set(&ids));
    }

    #[test]
    fn grow_prefers_cheap_neighbours() {
        let g = barbell();
        let links = LinkTable::new(&g);
        let got = shape_group(&g, &links, &BTreeSet::new(), &BTreeSet::from([2]), &all(4), 2, &|_| {
            true
        });
        assert_eq!(got, BTreeSet::from([2, 3]));
        // base machines are not part of the returned candidate
        let got = shape_group(
            &g,
            &links,
            &BTreeSet::from([0]),
            &BTreeSet::new(),
            &BTreeSet::from([1, 2, 3]),
            1,
            &|_| true,
        );
        assert_eq!(got, BTreeSet::from([1]));
    }

    #[test]
    fn mean_latency_counts_pairs() {
        let g = barbell();
        let links = LinkTable::new(&g);
        assert_eq!(mean_intra_latency(&links, &[0]), 0.0);
        assert_eq!(mean_intra_latency(&links, &[0, 1, 2]), (1.0 + 101.0 + 100.0) / 3.0);
    }
}
