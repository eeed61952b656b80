//! Reference partitions used as training targets for the node classifier.

use std::collections::{BTreeMap, BTreeSet};

use super::grouping::greedy_fill;
use super::{check_feasibility_with, priority_order, size_classes, PlannerConfig, TaskSpec};
use crate::error::Result;
use crate::gnn::Labels;
use crate::graph::{ClusterGraph, NodeId};
use crate::sim::{group_chain, LinkTable};

const MAX_PASSES: usize = 50;

// (every group feasible, every group full size), total cost, groups by task index
type Candidate = ((bool, bool), f64, BTreeMap<usize, BTreeSet<usize>>);

/// Node classes from a latency-aware reference partition, plus the groups
/// they came from. Machines outside every group stay unlabelled.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelPlan {
    pub labels: Labels,
    pub groups: BTreeMap<String, Vec<NodeId>>,
    pub num_classes: usize,
}

fn sorted_ids(g: &ClusterGraph, set: &BTreeSet<usize>) -> Vec<NodeId> {
    let mut v: Vec<NodeId> = set.iter().map(|&i| g.nodes()[i].id).collect();
    v.sort_unstable();
    v
}

fn chain_cost(g: &ClusterGraph, links: &LinkTable, set: &BTreeSet<usize>) -> f64 {
    match group_chain(g, links, &sorted_ids(g, set)) {
        Ok(order) => links.chain_latency(&order),
        Err(_) => f64::INFINITY,
    }
}

/// Pairwise member swaps between groups, first improvement, until no swap
/// lowers the summed cost or the pass budget runs out.
fn improve_by_swaps(
    groups: &mut BTreeMap<usize, BTreeSet<usize>>,
    keys: &[usize],
    feasible: &dyn Fn(usize, &BTreeSet<usize>) -> bool,
    cost_of: &dyn Fn(&BTreeSet<usize>) -> f64,
) {
    let mut cost: BTreeMap<usize, f64> = groups.iter().map(|(&k, s)| (k, cost_of(s))).collect();
    for _ in 0..MAX_PASSES {
        let mut improved = false;
        for (x, &ta) in keys.iter().enumerate() {
            for &tb in &keys[x + 1..] {
                let members_a: Vec<usize> = groups[&ta].iter().copied().collect();
                for a in members_a {
                    let members_b: Vec<usize> = groups[&tb].iter().copied().collect();
                    for b in members_b {
                        let mut sa = groups[&ta].clone();
                        let mut sb = groups[&tb].clone();
                        sa.remove(&a);
                        sa.insert(b);
                        sb.remove(&b);
                        sb.insert(a);
                        if !feasible(ta, &sa) || !feasible(tb, &sb) {
                            continue;
                        }
                        let (ca, cb) = (cost_of(&sa), cost_of(&sb));
                        if ca + cb < cost[&ta] + cost[&tb] - 1e-9 {
                            groups.insert(ta, sa);
                            groups.insert(tb, sb);
                            cost.insert(ta, ca);
                            cost.insert(tb, cb);
                            improved = true;
                            break;
                        }
                    }
                }
            }
        }
        if !improved {
            break;
        }
    }
}

/// Partitions the cluster into one group per task (sizes from
/// [`size_classes`](super::size_classes)) and labels every member with its
/// task's class.
///
/// Groups are seeded greedily, each as the tightest feasible connected set
/// left, once largest task first and once smallest first. Pairwise swaps
/// between groups then lower the summed stage-chain latency while every group
/// stays feasible, and the cheaper of the two results wins.
pub fn synthetic_labels(g: &ClusterGraph, tasks: &[TaskSpec], cfg: &PlannerConfig) -> Result<LabelPlan> {
    let targets = size_classes(tasks, g.len())?;
    let links = LinkTable::new(g);
    let order = priority_order(tasks);
    let overhead = cfg.overhead_factor;
    let feasible =
        |ti: usize, set: &BTreeSet<usize>| check_feasibility_with(g, &sorted_ids(g, set), &tasks[ti], overhead).is_ok();

    let mut best: Option<Candidate> = None;
    for seed_order in [order.clone(), order.iter().rev().copied().collect()] {
        let mut pool: BTreeSet<usize> = (0..g.len()).collect();
        let mut groups: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for &ti in &seed_order {
            let accept = |m: &[usize]| feasible(ti, &m.iter().copied().collect());
            let group = greedy_fill(g, &links, &pool, targets[ti], &accept);
            for p in &group {
                pool.remove(p);
            }
            groups.insert(ti, group);
        }
        improve_by_swaps(&mut groups, &order, &|ti, s| feasible(ti, s), &|s| {
            chain_cost(g, &links, s)
        });
        let rank = (
            groups.iter().all(|(&ti, s)| feasible(ti, s)),
            groups.iter().all(|(&ti, s)| s.len() == targets[ti]),
        );
        let total: f64 = groups.values().map(|s| chain_cost(g, &links, s)).sum();
        let better = match &best {
            None => true,
            Some((r, cost, _)) => rank > *r || (rank == *r && total < *cost),
        };
        if better {
            best = Some((rank, total, groups));
        }
    }
    let groups = best.expect("two seedings").2;

    let num_classes = tasks.len();
    let mut labels = vec![None; g.len()];
    for (rank, &ti) in order.iter().enumerate() {
        for &p in &groups[&ti] {
            labels[p] = Some(num_classes - 1 - rank);
        }
    }
    Ok(LabelPlan {
        labels: Labels::new(labels),
        groups: groups
            .iter()
            .map(|(&ti, s)| (tasks[ti].name.clone(), sorted_ids(g, s)))
            .collect(),
        num_classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{CommEdge, MachineNode};
    use crate::scheduler::workloads;

    // regions {0,1,2} and {3,4} with a slow bridge between 2 and 3
    fn two_sites() -> ClusterGraph {
        let nodes = (0..5)
            .map(|i| MachineNode::new(i, if i < 3 { "Berlin" } else { "Tokyo" }, 8.0, 320.0))
            .collect();
        let mut edges = vec![CommEdge::new(2, 3, 200.0)];
        for (a, b) in [(0, 1), (0, 2), (1, 2), (3, 4)] {
            edges.push(CommEdge::new(a, b, 2.0));
        }
        ClusterGraph::from_parts(nodes, edges).unwrap()
    }

    #[test]
    fn groups_follow_sites() {
        let g = two_sites();
        let tasks = vec![TaskSpec::new("big", 3_000), TaskSpec::new("small", 2_000)];
        let plan = synthetic_labels(&g, &tasks, &PlannerConfig::default()).unwrap();
        assert_eq!(plan.groups["big"], vec![0, 1, 2]);
        assert_eq!(plan.groups["small"], vec![3, 4]);
        let labels: Vec<Option<usize>> = plan.labels.iter().collect();
        assert_eq!(labels, [Some(1), Some(1), Some(1), Some(0), Some(0)]);
    }

    #[test]
    fn groups_are_feasible_partition() {
        let g = two_sites();
        let tasks = workloads::two_models();
        let plan = synthetic_labels(&g, &tasks, &PlannerConfig::default()).unwrap();
        let mut all: Vec<NodeId> = plan.groups.values().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, g.node_ids());
        for t in &tasks {
            assert_eq!(super::super::check_feasibility(&g, &plan.groups[&t.name], t), Ok(()));
        }
        assert_eq!(plan, synthetic_labels(&g, &tasks, &PlannerConfig::default()).unwrap());
    }
}
