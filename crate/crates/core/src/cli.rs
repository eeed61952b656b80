//! `geoplan` command line: validate, train, assign, simulate, compare.
//!
//! Every command except `validate` reads a run manifest:
//!
//! ```json
//! {
//!   "cluster": "demo8.json",
//!   "tasks": "tasks_demo8.json",
//!   "labels": null,
//!   "seed": 7,
//!   "out": "out/demo8",
//!   "train": {"learning_rate": 0.01, "steps": 10, "edge_dim": 16, "hidden_dim": 410, "gcn_hidden": [410]},
//!   "cost": {"micro_batches": 8}
//! }
//! ```
//!
//! Relative paths resolve against the manifest's directory. Without a label
//! file the synthetic labeler supplies training targets.
//!
//! Exit codes: 0 success, 1 domain failure (invalid cluster, infeasible
//! plan, shape mismatch), 2 I/O or usage error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::{
    accuracy, load_model, predict, save_model, train, GnnModel, LabelSet, Labels, ModelShape, TrainConfig,
};
use crate::graph::{parse_cluster, parse_cluster_document, ClusterGraph, FeatureConfig};
use crate::scheduler::{
    assign_tasks, parse_tasks, priority_order, synthetic_labels, Assignment, PlannerConfig, TaskSpec,
};
use crate::sim::{
    compare, simulate_with_links, CellReport, CostModelConfig, LinkTable, Placement, SimReport, Strategy,
};
use crate::VERSION;

#[derive(Debug, Parser)]
#[command(name = "geoplan", version, about = "Latency-aware training placement planner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a cluster file and list every violation.
    Validate {
        #[arg(long)]
        cluster: PathBuf,
    },
    /// Train the node classifier; writes model.ckpt and trace.csv.
    Train(RunArgs),
    /// Plan task groups; writes assignment.json.
    Assign(RunArgs),
    /// Score one strategy for every task; writes simulate.csv.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// A, B, C or Hulk.
        #[arg(long)]
        strategy: String,
    },
    /// Score all four strategies; writes report.csv.
    Compare(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Overrides the manifest seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the manifest output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Model checkpoint; defaults to `<out>/model.ckpt`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

/// Training section of a run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub steps: usize,
    pub edge_dim: usize,
    pub hidden_dim: usize,
    pub gcn_hidden: Vec<usize>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let shape = ModelShape::standard(1);
        Self {
            learning_rate: TrainConfig::default().learning_rate,
            steps: TrainConfig::default().steps,
            edge_dim: shape.edge_dim,
            hidden_dim: shape.hidden_dim,
            gcn_hidden: shape.gcn_hidden,
        }
    }
}

impl TrainSection {
    pub fn shape(&self, num_classes: usize) -> ModelShape {
        ModelShape {
            edge_dim: self.edge_dim,
            hidden_dim: self.hidden_dim,
            gcn_hidden: self.gcn_hidden.clone(),
            num_classes,
        }
    }
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub cluster: PathBuf,
    pub tasks: PathBuf,
    #[serde(default)]
    pub labels: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub cost: CostModelConfig,
}

impl RunManifest {
    /// Reads a manifest and resolves its paths against the manifest's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut m: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        m.cluster = resolve(&m.cluster);
        m.tasks = resolve(&m.tasks);
        m.labels = m.labels.as_deref().map(resolve);
        m.out = resolve(&m.out);
        m.cost.validate()?;
        Ok(m)
    }

    pub fn planner(&self) -> PlannerConfig {
        PlannerConfig {
            overhead_factor: self.cost.memory_overhead,
        }
    }
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) | Error::Malformed(_) | Error::Config(_) | Error::Checkpoint(_) => 2,
        _ => 1,
    }
}

struct Context {
    manifest: RunManifest,
    checkpoint: PathBuf,
    graph: ClusterGraph,
    tasks: Vec<TaskSpec>,
}

impl Context {
    fn load(args: &RunArgs) -> Result<Self> {
        let mut manifest = RunManifest::load(&args.manifest)?;
        if let Some(seed) = args.seed {
            manifest.seed = seed;
        }
        if let Some(out) = &args.out {
            manifest.out = out.clone();
        }
        let checkpoint = args
            .checkpoint
            .clone()
            .unwrap_or_else(|| manifest.out.join("model.ckpt"));
        let graph = parse_cluster(&fs::read_to_string(&manifest.cluster)?)?;
        let tasks = parse_tasks(&fs::read_to_string(&manifest.tasks)?)?;
        Ok(Self {
            manifest,
            checkpoint,
            graph,
            tasks,
        })
    }

    fn stamp(&self) -> String {
        format!("# geoplan {VERSION} seed={}\n", self.manifest.seed)
    }

    fn write(&self, name: &str, contents: &[u8]) -> Result<PathBuf> {
        fs::create_dir_all(&self.manifest.out)?;
        let path = self.manifest.out.join(name);
        fs::write(&path, contents)?;
        Ok(path)
    }

    fn model(&self) -> Result<GnnModel> {
        load_model(&fs::read(&self.checkpoint)?)
    }

    fn labels(&self) -> Result<(Labels, usize)> {
        match &self.manifest.labels {
            Some(path) => {
                let set = LabelSet::from_json(&fs::read_to_string(path)?)?;
                Ok((set.for_graph(&self.graph), set.num_classes))
            }
            None => {
                let plan = synthetic_labels(&self.graph, &self.tasks, &self.manifest.planner())?;
                Ok((plan.labels, plan.num_classes))
            }
        }
    }
}

fn cmd_validate(cluster: &Path, out: &mut dyn Write) -> Result<i32> {
    let doc = parse_cluster_document(&fs::read_to_string(cluster)?)?;
    let violations = doc.violations();
    for v in &violations {
        writeln!(out, "{v}")?;
    }
    Ok(if violations.is_empty() { 0 } else { 1 })
}

fn cmd_train(args: &RunArgs, out: &mut dyn Write) -> Result<i32> {
    let ctx = Context::load(args)?;
    let (labels, num_classes) = ctx.labels()?;
    let shape = ctx.manifest.train.shape(num_classes);
    let model = GnnModel::new(FeatureConfig::from_graph(&ctx.graph), &shape, ctx.manifest.seed)?;
    let x = model.embed(&ctx.graph);
    let cfg = TrainConfig {
        learning_rate: ctx.manifest.train.learning_rate,
        steps: ctx.manifest.train.steps,
        seed: ctx.manifest.seed,
    };
    let (model, trace) = train(&model, &ctx.graph, &x, &labels, &cfg)?;

    let mut csv = ctx.stamp();
    csv.push_str("step,loss,accuracy\n");
    for e in &trace {
        csv.push_str(&format!("{},{:.6},{:.4}\n", e.step, e.loss, e.accuracy));
    }
    ctx.write("trace.csv", csv.as_bytes())?;
    if let Some(dir) = ctx.checkpoint.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(&ctx.checkpoint, save_model(&model))?;

    let final_acc = accuracy(&predict(&model, &ctx.graph, &x)?.probs, &labels);
    writeln!(out, "parameters: {}", model.param_count())?;
    writeln!(out, "final accuracy: {final_acc:.4}")?;
    Ok(0)
}

#[derive(Serialize)]
struct AssignmentFile<'a> {
    tool_version: &'a str,
    seed: u64,
    #[serde(flatten)]
    assignment: &'a Assignment,
}

fn summarize(ctx: &Context, a: &Assignment, out: &mut dyn Write) -> Result<()> {
    let overhead = ctx.manifest.cost.memory_overhead;
    for &i in &priority_order(&ctx.tasks) {
        let t = &ctx.tasks[i];
        match a.groups.get(&t.name) {
            Some(group) => {
                let mem: f64 = group
                    .iter()
                    .filter_map(|&id| ctx.graph.node(id))
                    .map(|n| n.memory_gb)
                    .sum();
                writeln!(
                    out,
                    "{}: {} machines, {mem:.1} GB of {:.1} GB needed, feasible",
                    t.name,
                    group.len(),
                    t.required_memory_gb(overhead)
                )?;
            }
            None => writeln!(out, "{}: waiting", t.name)?,
        }
    }
    writeln!(out, "leftovers: {}", a.leftovers.len())?;
    Ok(())
}

fn cmd_assign(args: &RunArgs, out: &mut dyn Write) -> Result<i32> {
    let ctx = Context::load(args)?;
    let model = ctx.model()?;
    let a = assign_tasks(&ctx.graph, &model, &ctx.tasks, &ctx.manifest.planner())?;
    let file = AssignmentFile {
        tool_version: VERSION,
        seed: ctx.manifest.seed,
        assignment: &a,
    };
    let mut json = serde_json::to_string_pretty(&file).expect("assignment serializes");
    json.push('\n');
    ctx.write("assignment.json", json.as_bytes())?;
    summarize(&ctx, &a, out)?;
    Ok(0)
}

fn cmd_simulate(args: &RunArgs, strategy: &str, out: &mut dyn Write) -> Result<i32> {
    let strategy: Strategy = strategy.parse()?;
    let ctx = Context::load(args)?;
    let cost = &ctx.manifest.cost;
    let links = LinkTable::new(&ctx.graph);
    let mut cells = Vec::with_capacity(ctx.tasks.len());
    if strategy == Strategy::HulkGrouped {
        let report = compare(&ctx.graph, &ctx.model()?, &ctx.tasks, cost, &ctx.manifest.planner())?;
        cells.extend(report.cells.into_iter().filter(|c| c.strategy == strategy));
    } else {
        for t in &ctx.tasks {
            let cell = match simulate_with_links(&ctx.graph, &links, Placement::Fleet, t, strategy, cost) {
                Ok(c) => c,
                Err(e @ Error::NoEligibleMachines(_)) => CellReport::unavailable(strategy, t, e.to_string()),
                Err(e) => return Err(e),
            };
            cells.push(cell);
        }
    }
    let report = SimReport {
        cells,
        assignment: None,
    };
    let path = ctx.write("simulate.csv", format!("{}{}", ctx.stamp(), report.to_csv()).as_bytes())?;
    writeln!(
        out,
        "{} total communication: {:.3} ms, computation: {:.3} ms ({})",
        strategy.label(),
        report.total_comm_ms(strategy),
        report.total_compute_ms(strategy),
        path.display()
    )?;
    Ok(0)
}

fn cmd_compare(args: &RunArgs, out: &mut dyn Write) -> Result<i32> {
    let ctx = Context::load(args)?;
    let model = ctx.model()?;
    let report = compare(
        &ctx.graph,
        &model,
        &ctx.tasks,
        &ctx.manifest.cost,
        &ctx.manifest.planner(),
    )?;
    let path = ctx.write("report.csv", format!("{}{}", ctx.stamp(), report.to_csv()).as_bytes())?;
    for s in Strategy::ALL {
        writeln!(out, "{:>4}: communication {:.3} ms", s.label(), report.total_comm_ms(s))?;
    }
    let (best, _) = report.best_baseline_comm_ms();
    writeln!(
        out,
        "communication reduction vs best baseline ({}): {:+.1}%",
        best.label(),
        100.0 * report.comm_reduction()
    )?;
    writeln!(out, "report: {}", path.display())?;
    Ok(0)
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = if e.use_stderr() {
                e.render().to_string()
            } else {
                e.to_string()
            };
            let sink: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(sink, "{text}");
            return code;
        }
    };
    let result = match &cli.command {
        Command::Validate { cluster } => cmd_validate(cluster, out),
        Command::Train(a) => cmd_train(a, out),
        Command::Assign(a) => cmd_assign(a, out),
        Command::Simulate { run, strategy } => cmd_simulate(run, strategy, out),
        Command::Compare(a) => cmd_compare(a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
