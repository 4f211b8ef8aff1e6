//! Metrics-stream records and the run report folded from them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::TokenId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchivedCandidate {
    pub context_id: String,
    pub prompt: Vec<TokenId>,
    pub validation_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextEval {
    pub context_id: String,
    pub reward: f64,
    /// Greedy prompt that earned `reward`.
    pub prompt: Vec<TokenId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: u64,
    /// Mean over contexts.
    pub reward: f64,
    pub per_context: Vec<ContextEval>,
    /// Most recent sampled candidates, in generation order.
    pub archive: Vec<ArchivedCandidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitRecord {
    pub context_rewards: Vec<(String, f64)>,
    pub buffer_sizes: Vec<(String, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: u64,
    pub context_id: String,
    /// History entries serialized into the prefix.
    pub history_len: usize,
    pub candidate_rewards: Vec<f64>,
    pub admitted: usize,
    pub buffer_sizes: Vec<(String, usize)>,
    pub loss: f64,
    pub kl: f64,
    pub update_rejected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedPrompt {
    pub context_id: String,
    pub prompt: Vec<TokenId>,
    pub validation_reward: f64,
    pub test_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalRecord {
    pub selected: Vec<SelectedPrompt>,
    pub steps_run: u64,
    /// `max_steps` of the run; censored steps-to-threshold report this.
    pub budget: u64,
    pub threshold: f64,
    /// Worker calls spent on initialization, training and validation.
    pub worker_calls: u64,
    /// Worker calls spent scoring the selected prompts on the test split.
    pub test_calls: u64,
    pub stopped_early: bool,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricsRecord {
    Init(InitRecord),
    Step(StepMetrics),
    Eval(EvalRecord),
    Final(FinalRecord),
}

/// True iff the best value has not strictly improved during the last
/// `patience` evaluations.
pub fn should_stop(evals: &[f64], patience: usize) -> bool {
    if patience == 0 || evals.len() < patience + 1 {
        return false;
    }
    let split = evals.len() - patience;
    let before = evals[..split]
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let recent = evals[split..]
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    recent <= before
}

/// Index of the peak evaluation (earliest on ties) and its archive ranked by
/// validation reward (generation order on ties), truncated to `k`.
pub fn select_top_prompts(
    evals: &[EvalRecord],
    k: usize,
) -> Result<(usize, Vec<ArchivedCandidate>)> {
    if evals.is_empty() {
        return Err(Error::invalid("no evaluations recorded"));
    }
    let mut best = 0;
    for (i, e) in evals.iter().enumerate() {
        if e.reward > evals[best].reward {
            best = i;
        }
    }
    let mut ranked: Vec<(usize, &ArchivedCandidate)> =
        evals[best].archive.iter().enumerate().collect();
    ranked.sort_by(|(i, a), (j, b)| {
        b.validation_reward
            .total_cmp(&a.validation_reward)
            .then(i.cmp(j))
    });
    Ok((
        best,
        ranked.into_iter().take(k).map(|(_, c)| c.clone()).collect(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub best_eval_step: u64,
    pub best_eval_reward: f64,
    pub top_prompts: Vec<SelectedPrompt>,
    pub mean_test_reward: f64,
    pub threshold: f64,
    /// First evaluation step at or above `threshold`; the budget if censored.
    pub steps_to_threshold: u64,
    pub censored: bool,
    pub steps_run: u64,
    pub worker_calls: u64,
    pub test_calls: u64,
    pub eval_curve: Vec<(u64, f64)>,
    pub stopped_early: bool,
    pub failure: Option<String>,
}

impl RunReport {
    /// Folds a complete metrics stream into its report.
    pub fn from_records(records: &[MetricsRecord]) -> Result<Self> {
        let evals: Vec<EvalRecord> = records
            .iter()
            .filter_map(|r| match r {
                MetricsRecord::Eval(e) => Some(e.clone()),
                _ => None,
            })
            .collect();
        let fin = records
            .iter()
            .rev()
            .find_map(|r| match r {
                MetricsRecord::Final(f) => Some(f),
                _ => None,
            })
            .ok_or_else(|| Error::invalid("metrics stream has no final record"))?;
        let (best, _) = select_top_prompts(&evals, usize::MAX)?;
        let reached = evals
            .iter()
            .find(|e| e.reward >= fin.threshold)
            .map(|e| e.step);
        let mean_test_reward = if fin.selected.is_empty() {
            0.0
        } else {
            fin.selected.iter().map(|s| s.test_reward).sum::<f64>() / fin.selected.len() as f64
        };
        Ok(RunReport {
            best_eval_step: evals[best].step,
            best_eval_reward: evals[best].reward,
            top_prompts: fin.selected.clone(),
            mean_test_reward,
            threshold: fin.threshold,
            steps_to_threshold: reached.unwrap_or(fin.budget),
            censored: reached.is_none(),
            steps_run: fin.steps_run,
            worker_calls: fin.worker_calls,
            test_calls: fin.test_calls,
            eval_curve: evals.iter().map(|e| (e.step, e.reward)).collect(),
            stopped_early: fin.stopped_early,
            failure: fin.failure.clone(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}
