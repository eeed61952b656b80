use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BYTES_PER_PARAM: f64 = 2.0;
/// Multiplier on raw weight bytes covering optimizer state and activations.
pub const DEFAULT_MEMORY_OVERHEAD: f64 = 1.2;

const GIB: f64 = (1u64 << 30) as f64;

/// One training job to place.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub name: String,
    pub param_count: u64,
    pub bytes_per_param: f64,
    /// Minimum aggregate group memory, in GB.
    pub min_memory_gb: f64,
}

impl TaskSpec {
    /// Task whose memory threshold defaults to the weights-plus-overhead estimate.
    pub fn new(name: impl Into<String>, param_count: u64) -> Self {
        let mut t = Self {
            name: name.into(),
            param_count,
            bytes_per_param: DEFAULT_BYTES_PER_PARAM,
            min_memory_gb: 0.0,
        };
        t.min_memory_gb = t.estimated_memory_gb(DEFAULT_MEMORY_OVERHEAD);
        t
    }

    pub fn model_bytes(&self) -> f64 {
        self.param_count as f64 * self.bytes_per_param
    }

    /// `params × bytes_per_param × overhead / 2^30`.
    pub fn estimated_memory_gb(&self, overhead: f64) -> f64 {
        self.model_bytes() * overhead / GIB
    }

    /// Memory a group (or a lone data-parallel replica) must provide.
    pub fn required_memory_gb(&self, overhead: f64) -> f64 {
        self.min_memory_gb.max(self.estimated_memory_gb(overhead))
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::Config("task name is empty".into()));
        }
        if self.param_count == 0 {
            return Err(Error::Config(format!("task {} has no parameters", self.name)));
        }
        if [self.bytes_per_param, self.min_memory_gb]
            .iter()
            .any(|v| v.is_nan() || *v <= 0.0)
        {
            return Err(Error::Config(format!("task {} needs positive sizes", self.name)));
        }
        Ok(())
    }
}

/// Indices of `tasks` in priority order: parameter count descending, then name.
pub fn priority_order(tasks: &[TaskSpec]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..tasks.len()).collect();
    idx.sort_by(|&a, &b| {
        tasks[b]
            .param_count
            .cmp(&tasks[a].param_count)
            .then_with(|| tasks[a].name.cmp(&tasks[b].name))
    });
    idx
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskEntry {
    name: String,
    params: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bytes_per_param: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    min_memory_gb: Option<f64>,
}

/// Parses a task manifest: `[{name, params, bytes_per_param?, min_memory_gb?}]`.
pub fn parse_tasks(text: &str) -> Result<Vec<TaskSpec>> {
    let entries: Vec<TaskEntry> = serde_json::from_str(text)?;
    let mut names = BTreeSet::new();
    let mut out = Vec::with_capacity(entries.len());
    for e in entries {
        if !names.insert(e.name.clone()) {
            return Err(Error::Config(format!("duplicate task name {}", e.name)));
        }
        let mut t = TaskSpec::new(e.name, e.params);
        if let Some(b) = e.bytes_per_param {
            t.bytes_per_param = b;
            t.min_memory_gb = t.estimated_memory_gb(DEFAULT_MEMORY_OVERHEAD);
        }
        if let Some(m) = e.min_memory_gb {
            t.min_memory_gb = m;
        }
        t.validate()?;
        out.push(t);
    }
    Ok(out)
}

pub fn tasks_to_json(tasks: &[TaskSpec]) -> String {
    let entries: Vec<TaskEntry> = tasks
        .iter()
        .map(|t| TaskEntry {
            name: t.name.clone(),
            params: t.param_count,
            bytes_per_param: Some(t.bytes_per_param),
            min_memory_gb: Some(t.min_memory_gb),
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&entries).expect("tasks serialize");
    s.push('\n');
    s
}

/// Named workloads used by the bundled demos.
pub mod workloads {
    use super::TaskSpec;

    pub fn opt_175b() -> TaskSpec {
        TaskSpec::new("OPT", 175_000_000_000)
    }
    pub fn t5_11b() -> TaskSpec {
        TaskSpec::new("T5", 11_000_000_000)
    }
    pub fn gpt2_xl() -> TaskSpec {
        TaskSpec::new("GPT-2", 1_500_000_000)
    }
    pub fn bert_large() -> TaskSpec {
        TaskSpec::new("BERT-large", 340_000_000)
    }
    pub fn roberta_large() -> TaskSpec {
        TaskSpec::new("RoBERTa", 355_000_000)
    }
    pub fn xlnet_large() -> TaskSpec {
        TaskSpec::new("XLNet", 340_000_000)
    }

    /// GPT-2 and BERT-large (about 4.4 : 1 by parameter count).
    pub fn two_models() -> Vec<TaskSpec> {
        vec![gpt2_xl(), bert_large()]
    }

    pub fn four_models() -> Vec<TaskSpec> {
        vec![opt_175b(), t5_11b(), gpt2_xl(), bert_large()]
    }

    pub fn six_models() -> Vec<TaskSpec> {
        vec![
            opt_175b(),
            t5_11b(),
            gpt2_xl(),
            bert_large(),
            roberta_large(),
            xlnet_large(),
        ]
    }
}
