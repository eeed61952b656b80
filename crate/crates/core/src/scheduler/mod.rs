//! Carving a cluster into per-task machine groups.
//!
//! Tasks are served largest first. For each task the classifier is re-run on
//! the machines still free, the nodes predicted for that task's class form a
//! candidate group, and the candidate is reshaped to the task's target size.
//! A candidate that cannot host its task is carried into the next attempt
//! instead of being discarded.

mod grouping;
mod labeler;
mod task;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::{predict, GnnModel};
use crate::graph::{ClusterGraph, NodeId};
use crate::sim::LinkTable;

pub use labeler::{synthetic_labels, LabelPlan};
pub use task::{
    parse_tasks, priority_order, tasks_to_json, workloads, TaskSpec, DEFAULT_BYTES_PER_PARAM, DEFAULT_MEMORY_OVERHEAD,
};

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig {
    /// Multiplier on raw weight bytes when sizing a task's memory need.
    pub overhead_factor: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            overhead_factor: DEFAULT_MEMORY_OVERHEAD,
        }
    }
}

/// Why a group cannot host a task.
#[derive(Debug, Clone, PartialEq)]
pub enum Infeasible {
    EmptyGroup,
    UnknownNode(NodeId),
    InsufficientMemory { have: f64, need: f64 },
    Disconnected,
}

impl fmt::Display for Infeasible {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Infeasible::EmptyGroup => write!(f, "empty group"),
            Infeasible::UnknownNode(id) => write!(f, "unknown node {id}"),
            Infeasible::InsufficientMemory { have, need } => {
                write!(f, "group has {have:.1} GB, task needs {need:.1} GB")
            }
            Infeasible::Disconnected => write!(f, "disconnected group"),
        }
    }
}

pub fn check_feasibility(g: &ClusterGraph, group: &[NodeId], task: &TaskSpec) -> std::result::Result<(), Infeasible> {
    check_feasibility_with(g, group, task, DEFAULT_MEMORY_OVERHEAD)
}

/// A group can host a task when it is non-empty, connected, and holds the
/// task's memory requirement in aggregate.
pub fn check_feasibility_with(
    g: &ClusterGraph,
    group: &[NodeId],
    task: &TaskSpec,
    overhead: f64,
) -> std::result::Result<(), Infeasible> {
    if group.is_empty() {
        return Err(Infeasible::EmptyGroup);
    }
    let mut have = 0.0;
    for &id in group {
        have += g.node(id).ok_or(Infeasible::UnknownNode(id))?.memory_gb;
    }
    let need = task.required_memory_gb(overhead);
    if have < need {
        return Err(Infeasible::InsufficientMemory { have, need });
    }
    if !g.is_connected_set(group) {
        return Err(Infeasible::Disconnected);
    }
    Ok(())
}

/// Target group size per task (input order), proportional to parameter
/// count. Each task gets at least one machine and the sizes sum to `n`;
/// rounding is settled by largest remainder, ties by task name.
pub fn size_classes(tasks: &[TaskSpec], n: usize) -> Result<Vec<usize>> {
    if n < tasks.len() {
        return Err(Error::TooFewNodes {
            nodes: n,
            tasks: tasks.len(),
        });
    }
    if tasks.is_empty() {
        return Ok(Vec::new());
    }
    let total: f64 = tasks.iter().map(|t| t.param_count as f64).sum();
    let quota: Vec<f64> = tasks.iter().map(|t| n as f64 * t.param_count as f64 / total).collect();
    let mut sizes: Vec<usize> = quota.iter().map(|q| (q.floor() as usize).max(1)).collect();
    let pick = |sizes: &[usize], key: &dyn Fn(usize) -> Option<f64>| -> usize {
        (0..tasks.len())
            .filter_map(|i| key(i).map(|k| (i, k)))
            .max_by(|a, b| a.1.total_cmp(&b.1).then_with(|| tasks[b.0].name.cmp(&tasks[a.0].name)))
            .map(|(i, _)| i)
            .unwrap_or_else(|| unreachable!("sizes {sizes:?} cannot be adjusted"))
    };
    while sizes.iter().sum::<usize>() > n {
        let i = pick(&sizes, &|i| (sizes[i] > 1).then(|| sizes[i] as f64 - quota[i]));
        sizes[i] -= 1;
    }
    while sizes.iter().sum::<usize>() < n {
        let i = pick(&sizes, &|i| Some(quota[i] - sizes[i] as f64));
        sizes[i] += 1;
    }
    Ok(sizes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskStatus {
    Assigned,
    Waiting,
}

/// Planner output. Group and leftover ids are sorted; `waiting` lists tasks
/// in priority order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Assignment {
    pub groups: BTreeMap<String, Vec<NodeId>>,
    pub leftovers: Vec<NodeId>,
    pub waiting: Vec<String>,
}

impl Assignment {
    pub fn status(&self, task: &str) -> Option<TaskStatus> {
        if self.groups.contains_key(task) {
            Some(TaskStatus::Assigned)
        } else if self.waiting.iter().any(|w| w == task) {
            Some(TaskStatus::Waiting)
        } else {
            None
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("assignment serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn ids(g: &ClusterGraph, positions: &BTreeSet<usize>) -> Vec<NodeId> {
    let mut v: Vec<NodeId> = positions.iter().map(|&i| g.nodes()[i].id).collect();
    v.sort_unstable();
    v
}

fn memory(g: &ClusterGraph, positions: &BTreeSet<usize>) -> f64 {
    positions.iter().map(|&i| g.nodes()[i].memory_gb).sum()
}

/// Positions in `g` of the free machines the model assigns to `class`.
fn predicted_members(
    g: &ClusterGraph,
    model: &GnnModel,
    residual: &BTreeSet<usize>,
    class: usize,
) -> Result<BTreeSet<usize>> {
    if residual.is_empty() {
        return Ok(BTreeSet::new());
    }
    let sub = g.induced_subgraph(&ids(g, residual))?;
    let x = model.embed(&sub);
    let pred = predict(model, &sub, &x)?;
    Ok(sub
        .nodes()
        .iter()
        .zip(&pred.labels)
        .filter(|(_, &label)| label == class)
        .map(|(node, _)| g.index_of(node.id).expect("subgraph node"))
        .collect())
}

/// Plans one group per task with the trained classifier.
///
/// The task of priority rank `r` (0 = most parameters) owns class
/// `T - 1 - r`, so the largest class index goes to the largest task.
pub fn assign_tasks(g: &ClusterGraph, model: &GnnModel, tasks: &[TaskSpec], cfg: &PlannerConfig) -> Result<Assignment> {
    if cfg.overhead_factor.is_nan() || cfg.overhead_factor <= 0.0 {
        return Err(Error::Config("overhead factor must be positive".into()));
    }
    for t in tasks {
        t.validate()?;
    }
    let all: BTreeSet<usize> = (0..g.len()).collect();
    if tasks.is_empty() {
        return Ok(Assignment {
            leftovers: ids(g, &all),
            ..Assignment::default()
        });
    }
    if model.num_classes() < tasks.len() {
        return Err(Error::Dimension(format!(
            "model has {} classes for {} tasks",
            model.num_classes(),
            tasks.len()
        )));
    }
    let targets = size_classes(tasks, g.len())?;
    let overhead = cfg.overhead_factor;
    let required: f64 = tasks.iter().map(|t| t.required_memory_gb(overhead)).sum();
    let available = g.total_memory();
    if available < required {
        return Err(Error::InsufficientMemory { available, required });
    }

    let links = LinkTable::new(g);
    let order = priority_order(tasks);
    let class_of: BTreeMap<usize, usize> = order
        .iter()
        .enumerate()
        .map(|(r, &i)| (i, tasks.len() - 1 - r))
        .collect();
    let mut pending: Vec<usize> = order.clone();
    let mut residual = all;
    let mut carry: BTreeSet<usize> = BTreeSet::new();
    let mut plan = Assignment::default();

    while let Some(&ti) = pending.first() {
        let task = &tasks[ti];
        let need = task.required_memory_gb(overhead);
        if memory(g, &residual) + memory(g, &carry) < need {
            plan.waiting.push(task.name.clone());
            pending.remove(0);
            continue;
        }
        let candidate = predicted_members(g, model, &residual, class_of[&ti])?;
        let size = targets[ti].saturating_sub(carry.len()).max(1);
        let feasible_with_carry = |members: &[usize]| {
            let mut group: BTreeSet<usize> = carry.clone();
            group.extend(members.iter().copied());
            check_feasibility_with(g, &ids(g, &group), task, overhead).is_ok()
        };
        let picked = grouping::shape_group(g, &links, &carry, &candidate, &residual, size, &feasible_with_carry);
        for p in &picked {
            residual.remove(p);
        }
        let mut group = std::mem::take(&mut carry);
        group.extend(picked.iter().copied());
        let group_ids = ids(g, &group);
        if check_feasibility_with(g, &group_ids, task, overhead).is_ok() {
            plan.groups.insert(task.name.clone(), group_ids);
            pending.remove(0);
        } else {
            carry = group;
            if picked.is_empty() {
                // no free machine can extend the group any further
                plan.waiting.push(task.name.clone());
                pending.remove(0);
            }
        }
    }
    residual.extend(carry);
    plan.leftovers = ids(g, &residual);
    Ok(plan)
}

/// Plans again on the cluster without the failed machine.
pub fn replan_after_failure(
    g: &ClusterGraph,
    model: &GnnModel,
    tasks: &[TaskSpec],
    failed: NodeId,
    cfg: &PlannerConfig,
) -> Result<Assignment> {
    assign_tasks(&g.remove_machine(failed)?, model, tasks, cfg)
}
