//! Deterministic communication/computation cost model.
//!
//! Transfer time is linear in 64-byte chunks of the measured per-link
//! latency. Four placements are scored:
//!
//! | strategy | machines | communication |
//! |---|---|---|
//! | A, data parallel | every machine that fits the whole model | ring all-reduce of the weights |
//! | B, pipeline | whole fleet, id order | activations across each stage boundary |
//! | C, tensor parallel | whole fleet | two activation all-reduces per layer |
//! | Hulk, grouped | the planner's group for the task | pipeline within the group |
//!
//! A pair without a direct edge relays over the cheapest path.

mod fleet;
mod links;

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::GnnModel;
use crate::graph::{ClusterGraph, NodeId};
use crate::scheduler::{assign_tasks, check_feasibility_with, Assignment, PlannerConfig, TaskSpec};

pub use fleet::{generate_fleet, generate_fleet_with, FleetConfig, RegionLatencyTable, GPU_ROSTER, KNOWN_REGIONS};
pub use links::LinkTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    /// System A.
    DataParallel,
    /// System B.
    Pipeline,
    /// System C.
    TensorParallel,
    HulkGrouped,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::DataParallel,
        Strategy::Pipeline,
        Strategy::TensorParallel,
        Strategy::HulkGrouped,
    ];

    pub const BASELINES: [Strategy; 3] = [Strategy::DataParallel, Strategy::Pipeline, Strategy::TensorParallel];

    pub fn label(self) -> &'static str {
        match self {
            Strategy::DataParallel => "A",
            Strategy::Pipeline => "B",
            Strategy::TensorParallel => "C",
            Strategy::HulkGrouped => "Hulk",
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" | "data-parallel" | "dp" => Ok(Strategy::DataParallel),
            "b" | "pipeline" | "pp" => Ok(Strategy::Pipeline),
            "c" | "tensor-parallel" | "tp" => Ok(Strategy::TensorParallel),
            "hulk" | "grouped" => Ok(Strategy::HulkGrouped),
            _ => Err(Error::Config(format!("unknown strategy {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostModelConfig {
    pub tokens_per_step: u64,
    /// Pipeline micro-batches per step (K).
    pub micro_batches: u32,
    pub activation_bytes_per_boundary: u64,
    pub flops_per_param_token: f64,
    /// Sustained TFLOPS per unit of machine compute score.
    pub tflops_per_compute_unit: f64,
    /// Layers whose activations are all-reduced under tensor parallelism.
    pub tensor_parallel_layers: u32,
    /// Memory overhead used to decide which machines fit a whole replica.
    pub memory_overhead: f64,
}

impl Default for CostModelConfig {
    fn default() -> Self {
        Self {
            tokens_per_step: 2048,
            micro_batches: 8,
            activation_bytes_per_boundary: 65_536,
            flops_per_param_token: 6.0,
            tflops_per_compute_unit: 10.0,
            tensor_parallel_layers: 24,
            memory_overhead: crate::scheduler::DEFAULT_MEMORY_OVERHEAD,
        }
    }
}

impl CostModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.tokens_per_step > 0
            && self.micro_batches > 0
            && self.activation_bytes_per_boundary > 0
            && self.flops_per_param_token > 0.0
            && self.tflops_per_compute_unit > 0.0
            && self.tensor_parallel_layers > 0
            && self.memory_overhead > 0.0;
        if positive {
            Ok(())
        } else {
            Err(Error::Config("cost model values must all be positive".into()))
        }
    }

    fn flops(&self, task: &TaskSpec, tokens: f64) -> f64 {
        self.flops_per_param_token * task.param_count as f64 * tokens
    }

    /// FLOP/s of one machine.
    fn throughput(&self, compute_capability: f64) -> f64 {
        compute_capability * self.tflops_per_compute_unit * 1e12
    }
}

/// `ceil(bytes / 64) × W[a][b]`. Requires a direct edge.
pub fn transfer_time(g: &ClusterGraph, a: NodeId, b: NodeId, bytes: u64) -> Result<f64> {
    if !g.contains(a) {
        return Err(Error::UnknownNode(a));
    }
    if !g.contains(b) {
        return Err(Error::UnknownNode(b));
    }
    let w = g.latency(a, b).ok_or(Error::Unreachable(a, b))?;
    Ok(chunks(bytes) * w)
}

fn chunks(bytes: u64) -> f64 {
    bytes.div_ceil(64) as f64
}

/// One (strategy, task) cell of a report.
#[derive(Debug, Clone, PartialEq)]
pub struct CellReport {
    pub strategy: Strategy,
    pub task: String,
    pub comm_ms: f64,
    pub compute_ms: f64,
    pub total_ms: f64,
    /// Machines used, in stage/ring order.
    pub machines: Vec<NodeId>,
    pub note: Option<String>,
}

impl CellReport {
    fn new(strategy: Strategy, task: &TaskSpec, comm_ms: f64, compute_ms: f64, machines: Vec<NodeId>) -> Self {
        Self {
            strategy,
            task: task.name.clone(),
            comm_ms,
            compute_ms,
            total_ms: comm_ms + compute_ms,
            machines,
            note: None,
        }
    }

    /// Placeholder for a strategy that cannot run this task at all.
    pub fn unavailable(strategy: Strategy, task: &TaskSpec, reason: String) -> Self {
        Self {
            strategy,
            task: task.name.clone(),
            comm_ms: f64::INFINITY,
            compute_ms: f64::INFINITY,
            total_ms: f64::INFINITY,
            machines: Vec::new(),
            note: Some(reason),
        }
    }

    pub fn is_available(&self) -> bool {
        self.total_ms.is_finite()
    }
}

fn positions(g: &ClusterGraph, ids: &[NodeId]) -> Result<Vec<usize>> {
    ids.iter()
        .map(|&id| g.index_of(id).ok_or(Error::UnknownNode(id)))
        .collect()
}

fn sorted_positions(g: &ClusterGraph, ids: &[NodeId]) -> Result<Vec<usize>> {
    let mut ids = ids.to_vec();
    ids.sort_unstable();
    positions(g, &ids)
}

/// Ring all-reduce: `2(k-1)` steps of `bytes/k`, each paced by the slowest hop.
fn ring_allreduce_ms(links: &LinkTable, ring: &[usize], bytes: f64) -> Result<f64> {
    let k = ring.len();
    if k < 2 {
        return Ok(0.0);
    }
    let chunk = (bytes / k as f64).ceil() as u64;
    let slowest = links.ring_bottleneck(ring)?;
    Ok(2.0 * (k - 1) as f64 * chunks(chunk) * slowest)
}

fn pipeline_ms(
    g: &ClusterGraph,
    links: &LinkTable,
    order: &[usize],
    task: &TaskSpec,
    cfg: &CostModelConfig,
) -> Result<(f64, f64)> {
    let k = f64::from(cfg.micro_batches);
    let mut comm = 0.0;
    for w in order.windows(2) {
        comm += 2.0 * k * chunks(cfg.activation_bytes_per_boundary) * links.checked(w[0], w[1])?;
    }
    let nodes = g.nodes();
    let total_mem: f64 = order.iter().map(|&i| nodes[i].memory_gb).sum();
    let stages = order.len() as f64;
    let fill = (k + stages - 1.0) / k;
    let compute: f64 = order
        .iter()
        .map(|&i| {
            let share = nodes[i].memory_gb / total_mem;
            share * cfg.flops(task, cfg.tokens_per_step as f64) / cfg.throughput(nodes[i].compute_capability)
        })
        .sum();
    Ok((comm, compute * fill * 1e3))
}

/// Stage order for a grouped pipeline: greedy nearest-neighbour chain from
/// the highest-memory member, unless plain id order is cheaper.
pub fn group_chain(g: &ClusterGraph, links: &LinkTable, group: &[NodeId]) -> Result<Vec<usize>> {
    let by_id = sorted_positions(g, group)?;
    let Some(&start) = by_id.iter().max_by(|&&a, &&b| {
        let (ma, mb) = (g.nodes()[a].memory_gb, g.nodes()[b].memory_gb);
        // max_by keeps the last maximum; reverse position order so the lowest id wins ties
        ma.total_cmp(&mb).then(b.cmp(&a))
    }) else {
        return Ok(Vec::new());
    };
    let greedy = links.nearest_neighbour_chain(&by_id, start);
    if links.chain_latency(&by_id) < links.chain_latency(&greedy) {
        Ok(by_id)
    } else {
        Ok(greedy)
    }
}

/// Communication of a grouped pipeline, without compute. Cheap enough for
/// search loops.
pub fn grouped_comm_ms(g: &ClusterGraph, links: &LinkTable, group: &[NodeId], cfg: &CostModelConfig) -> Result<f64> {
    let order = group_chain(g, links, group)?;
    let k = f64::from(cfg.micro_batches);
    let mut comm = 0.0;
    for w in order.windows(2) {
        comm += 2.0 * k * chunks(cfg.activation_bytes_per_boundary) * links.checked(w[0], w[1])?;
    }
    Ok(comm)
}

/// What a strategy runs on.
#[derive(Debug, Clone, Copy)]
pub enum Placement<'a> {
    /// The whole fleet (systems A, B, C).
    Fleet,
    /// An explicit machine group (grouped pipeline).
    Group(&'a [NodeId]),
}

pub fn simulate(
    g: &ClusterGraph,
    placement: Placement<'_>,
    task: &TaskSpec,
    strategy: Strategy,
    cfg: &CostModelConfig,
) -> Result<CellReport> {
    simulate_with_links(g, &LinkTable::new(g), placement, task, strategy, cfg)
}

pub fn simulate_with_links(
    g: &ClusterGraph,
    links: &LinkTable,
    placement: Placement<'_>,
    task: &TaskSpec,
    strategy: Strategy,
    cfg: &CostModelConfig,
) -> Result<CellReport> {
    cfg.validate()?;
    let machines: Vec<NodeId> = match placement {
        Placement::Fleet => g.node_ids(),
        Placement::Group(ids) => ids.to_vec(),
    };
    if machines.is_empty() {
        return Err(Error::NoEligibleMachines(task.name.clone()));
    }
    let nodes = g.nodes();
    let ids_of = |order: &[usize]| order.iter().map(|&i| nodes[i].id).collect::<Vec<_>>();
    match strategy {
        Strategy::DataParallel => {
            let need = task.required_memory_gb(cfg.memory_overhead);
            let ring: Vec<usize> = sorted_positions(g, &machines)?
                .into_iter()
                .filter(|&i| nodes[i].memory_gb >= need)
                .collect();
            if ring.is_empty() {
                return Err(Error::NoEligibleMachines(task.name.clone()));
            }
            let comm = ring_allreduce_ms(links, &ring, task.model_bytes())?;
            let slowest = ring
                .iter()
                .map(|&i| nodes[i].compute_capability)
                .fold(f64::INFINITY, f64::min);
            let tokens = cfg.tokens_per_step as f64 / ring.len() as f64;
            let compute = cfg.flops(task, tokens) / cfg.throughput(slowest) * 1e3;
            let mut cell = CellReport::new(strategy, task, comm, compute, ids_of(&ring));
            let dropped = machines.len() - ring.len();
            if dropped > 0 {
                cell.note = Some(format!("{dropped} machines lack {need:.1} GB for a full replica"));
            }
            Ok(cell)
        }
        Strategy::Pipeline => {
            let order = sorted_positions(g, &machines)?;
            let (comm, compute) = pipeline_ms(g, links, &order, task, cfg)?;
            Ok(CellReport::new(strategy, task, comm, compute, ids_of(&order)))
        }
        Strategy::TensorParallel => {
            let ring = sorted_positions(g, &machines)?;
            let per_layer = 2.0 * ring_allreduce_ms(links, &ring, cfg.activation_bytes_per_boundary as f64)?;
            let comm = f64::from(cfg.tensor_parallel_layers) * per_layer;
            let aggregate: f64 = ring.iter().map(|&i| cfg.throughput(nodes[i].compute_capability)).sum();
            let compute = cfg.flops(task, cfg.tokens_per_step as f64) / aggregate * 1e3;
            Ok(CellReport::new(strategy, task, comm, compute, ids_of(&ring)))
        }
        Strategy::HulkGrouped => {
            let order = group_chain(g, links, &machines)?;
            let (comm, compute) = pipeline_ms(g, links, &order, task, cfg)?;
            Ok(CellReport::new(strategy, task, comm, compute, ids_of(&order)))
        }
    }
}

/// Grid of cells, strategy-major (A, B, C, Hulk) then task order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimReport {
    pub cells: Vec<CellReport>,
    pub assignment: Option<Assignment>,
}

impl SimReport {
    pub fn cell(&self, strategy: Strategy, task: &str) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.strategy == strategy && c.task == task)
    }

    pub fn total_comm_ms(&self, strategy: Strategy) -> f64 {
        self.cells
            .iter()
            .filter(|c| c.strategy == strategy)
            .map(|c| c.comm_ms)
            .sum()
    }

    pub fn total_compute_ms(&self, strategy: Strategy) -> f64 {
        self.cells
            .iter()
            .filter(|c| c.strategy == strategy)
            .map(|c| c.compute_ms)
            .sum()
    }

    /// Lowest total communication among systems A, B and C.
    pub fn best_baseline_comm_ms(&self) -> (Strategy, f64) {
        Strategy::BASELINES
            .iter()
            .map(|&s| (s, self.total_comm_ms(s)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("three baselines")
    }

    /// Relative communication saving of the grouped plan over the best
    /// baseline; positive means the grouped plan communicates less.
    pub fn comm_reduction(&self) -> f64 {
        let (_, best) = self.best_baseline_comm_ms();
        let hulk = self.total_comm_ms(Strategy::HulkGrouped);
        if best.is_infinite() {
            return if hulk.is_finite() { 1.0 } else { 0.0 };
        }
        if best == 0.0 {
            return if hulk == 0.0 { 0.0 } else { f64::NEG_INFINITY };
        }
        1.0 - hulk / best
    }

    /// `strategy,task,comm_ms,compute_ms,total_ms`, three decimals.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("strategy,task,comm_ms,compute_ms,total_ms\n");
        for c in &self.cells {
            writeln!(
                s,
                "{},{},{:.3},{:.3},{:.3}",
                c.strategy.label(),
                c.task,
                c.comm_ms,
                c.compute_ms,
                c.total_ms
            )
            .expect("write to string");
        }
        s
    }
}

/// Cell for a task under the grouped plan. Tasks left waiting run on the
/// first planned group (priority order) that can hold them once it frees up.
fn grouped_cell(
    g: &ClusterGraph,
    links: &LinkTable,
    assignment: &Assignment,
    tasks: &[TaskSpec],
    task: &TaskSpec,
    cfg: &CostModelConfig,
    planner: &PlannerConfig,
) -> Result<CellReport> {
    if let Some(group) = assignment.groups.get(&task.name) {
        return simulate_with_links(g, links, Placement::Group(group), task, Strategy::HulkGrouped, cfg);
    }
    for &i in &crate::scheduler::priority_order(tasks) {
        if let Some(group) = assignment.groups.get(&tasks[i].name) {
            if check_feasibility_with(g, group, task, planner.overhead_factor).is_ok() {
                let mut cell =
                    simulate_with_links(g, links, Placement::Group(group), task, Strategy::HulkGrouped, cfg)?;
                cell.note = Some(format!("waits for {}", tasks[i].name));
                return Ok(cell);
            }
        }
    }
    Ok(CellReport::unavailable(
        Strategy::HulkGrouped,
        task,
        "no planned group can hold this task".into(),
    ))
}

/// Scores every task under all four strategies.
pub fn compare(
    g: &ClusterGraph,
    model: &GnnModel,
    tasks: &[TaskSpec],
    cfg: &CostModelConfig,
    planner: &PlannerConfig,
) -> Result<SimReport> {
    cfg.validate()?;
    if tasks.is_empty() {
        return Ok(SimReport::default());
    }
    let assignment = assign_tasks(g, model, tasks, planner)?;
    let links = LinkTable::new(g);
    let mut cells = Vec::with_capacity(4 * tasks.len());
    for strategy in Strategy::BASELINES {
        for task in tasks {
            let cell = match simulate_with_links(g, &links, Placement::Fleet, task, strategy, cfg) {
                Ok(c) => c,
                Err(e @ Error::NoEligibleMachines(_)) => CellReport::unavailable(strategy, task, e.to_string()),
                Err(e) => return Err(e),
            };
            cells.push(cell);
        }
    }
    for task in tasks {
        cells.push(grouped_cell(g, &links, &assignment, tasks, task, cfg, planner)?);
    }
    Ok(SimReport {
        cells,
        assignment: Some(assignment),
    })
}
