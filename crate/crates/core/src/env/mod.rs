//! The frozen worker as an environment: task data, hidden task rules,
//! per-example scoring and slice-aggregated rewards.

mod dataset;
mod keyword;
mod ordered;
mod remote;
pub mod synthetic;

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::PromptSequence;
use crate::vocab::{TokenId, Vocabulary};

pub use dataset::{
    load_dataset_jsonl, parse_dataset_jsonl, sample_slice, ContextSplits, DatasetSplits, Split,
};
pub use keyword::KeywordWorker;
pub use ordered::{ordered_prefix_len, OrderedProtocolWorker};
pub use remote::{Matcher, RemoteWorker};

/// Category tag that every prompt satisfies.
pub const DEFAULT_CATEGORY: &str = "default";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub context_id: String,
    pub input: String,
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

impl TaskInstance {
    pub fn category_tag(&self) -> &str {
        self.category.as_deref().unwrap_or(DEFAULT_CATEGORY)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordSpec {
    /// Sorted ascending.
    pub required: Vec<TokenId>,
    /// Sorted ascending.
    pub forbidden: Vec<TokenId>,
    /// Category tag and the control token that unlocks it.
    pub categories: Vec<(String, TokenId)>,
}

impl KeywordSpec {
    pub fn category_token(&self, tag: &str) -> Option<TokenId> {
        self.categories
            .iter()
            .find(|(t, _)| t == tag)
            .map(|(_, tok)| *tok)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderedSpec {
    pub sequence: Vec<TokenId>,
}

/// Environment-private task rules. Never shown to the prompter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenSpec {
    Keyword(KeywordSpec),
    Ordered(OrderedSpec),
    /// Rules live behind a remote endpoint.
    Opaque,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextDescriptor {
    pub context_id: String,
    pub description_tokens: Vec<TokenId>,
    pub hidden: HiddenSpec,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerOutput {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
}

/// Everything the trainer may see about a task family: the vocabulary,
/// the context descriptors and the data splits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskSuite {
    pub vocab: Vocabulary,
    pub contexts: Vec<ContextDescriptor>,
    pub splits: DatasetSplits,
}

impl TaskSuite {
    /// Every context must have data and vice versa, in the same order.
    pub fn new(
        vocab: Vocabulary,
        contexts: Vec<ContextDescriptor>,
        splits: DatasetSplits,
    ) -> Result<Self> {
        let ids: Vec<&str> = contexts.iter().map(|c| c.context_id.as_str()).collect();
        let data: Vec<&str> = splits.context_ids().collect();
        if ids != data {
            return Err(Error::invalid(format!(
                "contexts {ids:?} do not match dataset contexts {data:?}"
            )));
        }
        for c in &contexts {
            if let Some(t) = c.description_tokens.iter().find(|&&t| t >= vocab.len()) {
                return Err(Error::invalid(format!(
                    "context `{}` uses unknown token {t}",
                    c.context_id
                )));
            }
        }
        Ok(TaskSuite {
            vocab,
            contexts,
            splits,
        })
    }

    /// Contexts for a dataset served by a remote worker. Descriptions are
    /// the in-vocabulary words of the context id.
    pub fn from_dataset(vocab: Vocabulary, splits: DatasetSplits) -> Result<Self> {
        let contexts = splits
            .context_ids()
            .map(|id| ContextDescriptor {
                context_id: id.to_string(),
                description_tokens: vocab.tokenize_lossy(&id.replace(['_', '-'], " ")),
                hidden: HiddenSpec::Opaque,
            })
            .collect();
        TaskSuite::new(vocab, contexts, splits)
    }

    pub fn context(&self, context_id: &str) -> Result<&ContextDescriptor> {
        self.contexts
            .iter()
            .find(|c| c.context_id == context_id)
            .ok_or_else(|| Error::invalid(format!("unknown context `{context_id}`")))
    }
}

pub trait Worker: Send + Sync {
    fn execute(&self, prompt: &PromptSequence, instance: &TaskInstance) -> Result<WorkerOutput>;

    /// Per-example score in `[0, 1]`.
    fn score(&self, output: &WorkerOutput, instance: &TaskInstance, prompt: &PromptSequence)
        -> f64;

    /// How many `execute` calls may run at once.
    fn max_in_flight(&self) -> usize {
        1
    }
}

/// Counts every `execute` invocation made through [`evaluate_grid`].
#[derive(Debug, Default)]
pub struct CallMeter(AtomicU64);

impl Clone for CallMeter {
    fn clone(&self) -> Self {
        CallMeter(AtomicU64::new(self.get()))
    }
}

impl CallMeter {
    pub fn new() -> Self {
        CallMeter::default()
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }

    fn bump(&self) {
        self.0.fetch_add(1, Ordering::SeqCst);
    }
}

/// One scored (prompt, instance) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub output: WorkerOutput,
    pub score: f64,
}

/// Runs every prompt on every instance. Results come back in
/// `[prompt][instance]` order regardless of scheduling.
pub fn evaluate_grid(
    worker: &dyn Worker,
    prompts: &[&PromptSequence],
    slice: &[TaskInstance],
    meter: &CallMeter,
) -> Result<Vec<Vec<Scored>>> {
    let jobs: Vec<(usize, usize)> = (0..prompts.len())
        .flat_map(|p| (0..slice.len()).map(move |i| (p, i)))
        .collect();
    let run = |&(p, i): &(usize, usize)| -> Result<Scored> {
        meter.bump();
        let output = worker.execute(prompts[p], &slice[i])?;
        let score = worker.score(&output, &slice[i], prompts[p]).clamp(0.0, 1.0);
        Ok(Scored { output, score })
    };

    let limit = worker.max_in_flight().max(1);
    let mut flat: Vec<Scored> = Vec::with_capacity(jobs.len());
    if limit == 1 {
        for job in &jobs {
            flat.push(run(job)?);
        }
    } else {
        for chunk in jobs.chunks(limit) {
            let results: Vec<Result<Scored>> = std::thread::scope(|s| {
                let handles: Vec<_> = chunk.iter().map(|job| s.spawn(move || run(job))).collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("worker thread panicked"))
                    .collect()
            });
            for r in results {
                flat.push(r?);
            }
        }
    }

    let mut grid = Vec::with_capacity(prompts.len());
    let mut it = flat.into_iter();
    for _ in prompts {
        grid.push(it.by_ref().take(slice.len()).collect());
    }
    Ok(grid)
}

/// Mean per-example score of `prompt` over `slice`.
pub fn aggregate_reward(
    worker: &dyn Worker,
    prompt: &PromptSequence,
    slice: &[TaskInstance],
    meter: &CallMeter,
) -> Result<f64> {
    if slice.is_empty() {
        return Err(Error::invalid("cannot aggregate over an empty slice"));
    }
    let grid = evaluate_grid(worker, &[prompt], slice, meter)?;
    Ok(mean_score(&grid[0]))
}

pub fn mean_score(row: &[Scored]) -> f64 {
    row.iter().map(|s| s.score).sum::<f64>() / row.len() as f64
}
