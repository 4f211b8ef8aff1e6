//! Buffer vs scalar-only (and optionally evolutionary) runs across seeds.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{effective_config, execute_run, write_json, Mode, RunConfig, RunResult, Workbench};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    /// Censored runs report the step budget.
    pub steps_to_threshold: u64,
    pub censored: bool,
    pub mean_test_reward: f64,
    pub worker_calls: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedComparison {
    pub seed: u64,
    pub buffer: ArmResult,
    pub scalar_only: ArmResult,
    /// Evolutionary baseline at the buffer run's worker-call budget.
    pub evolutionary: Option<ArmResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceResult {
    pub task: String,
    pub scalar_only_steps: u64,
    pub buffer_steps: u64,
    pub relative_efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub threshold: f64,
    pub seeds: Vec<SeedComparison>,
    pub median_buffer_steps: Option<f64>,
    pub median_scalar_only_steps: Option<f64>,
    /// Scalar-only median over buffer median; above 1 means the buffer
    /// reaches the threshold sooner.
    pub relative_efficiency: Option<f64>,
    /// Published full-scale results with large language models, quoted
    /// for context. Desk-scale numbers are not expected to match.
    pub reference: Vec<ReferenceResult>,
    pub complete: bool,
}

pub fn reference_results() -> Vec<ReferenceResult> {
    vec![
        ReferenceResult {
            task: "Dyck Languages".into(),
            scalar_only_steps: 195,
            buffer_steps: 102,
            relative_efficiency: 1.91,
        },
        ReferenceResult {
            task: "DisambiguationQA".into(),
            scalar_only_steps: 180,
            buffer_steps: 75,
            relative_efficiency: 2.40,
        },
    ]
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    })
}

/// `median(scalar_only) / median(buffer)`.
pub fn relative_efficiency(buffer_steps: &[f64], scalar_only_steps: &[f64]) -> Option<f64> {
    let b = median(buffer_steps)?;
    let s = median(scalar_only_steps)?;
    (b > 0.0).then(|| s / b)
}

fn arm(result: &RunResult) -> ArmResult {
    match result {
        RunResult::Trainer(r) => ArmResult {
            steps_to_threshold: r.steps_to_threshold,
            censored: r.censored,
            mean_test_reward: r.mean_test_reward,
            worker_calls: r.worker_calls,
        },
        RunResult::Evolution(r) => ArmResult {
            steps_to_threshold: r.generations_run,
            censored: false,
            mean_test_reward: r.mean_test_reward,
            worker_calls: r.worker_calls,
        },
    }
}

impl ComparisonReport {
    fn new(threshold: f64, seeds: Vec<SeedComparison>, complete: bool) -> Self {
        let b: Vec<f64> = seeds
            .iter()
            .map(|s| s.buffer.steps_to_threshold as f64)
            .collect();
        let s: Vec<f64> = seeds
            .iter()
            .map(|s| s.scalar_only.steps_to_threshold as f64)
            .collect();
        ComparisonReport {
            threshold,
            median_buffer_steps: median(&b),
            median_scalar_only_steps: median(&s),
            relative_efficiency: relative_efficiency(&b, &s),
            seeds,
            reference: reference_results(),
            complete,
        }
    }
}

/// Runs `rl` and `rl_no_buffer` (and `evo` when asked) for every seed under
/// `out/<mode>-seed<N>/`, writing `out/comparison.json` after each seed.
pub fn cmd_compare(
    config_path: &Path,
    dataset: Option<&Path>,
    seeds: &[u64],
    with_evo: bool,
    out: &Path,
) -> Result<ComparisonReport> {
    if seeds.len() < 2 {
        return Err(Error::invalid("compare needs at least two seeds"));
    }
    let base = RunConfig::load(config_path)?;
    std::fs::create_dir_all(out)?;
    let mut done = Vec::new();
    let summary = out.join("comparison.json");
    for &seed in seeds {
        let outcome = (|| -> Result<SeedComparison> {
            let run = |mode: Mode, tweak: &dyn Fn(&mut RunConfig)| -> Result<RunResult> {
                let mut config = effective_config(&base, mode, Some(seed));
                tweak(&mut config);
                let bench = Workbench::build(&config, dataset)?;
                execute_run(
                    &config,
                    &bench,
                    mode,
                    &out.join(format!("{mode}-seed{seed}")),
                )
            };
            let buffer = run(Mode::Rl, &|_| {})?;
            let scalar = run(Mode::RlNoBuffer, &|_| {})?;
            let evolutionary = if with_evo {
                let budget = buffer.worker_calls();
                Some(arm(&run(Mode::Evo, &|c| {
                    c.evo.max_worker_calls.get_or_insert(budget);
                })?))
            } else {
                None
            };
            Ok(SeedComparison {
                seed,
                buffer: arm(&buffer),
                scalar_only: arm(&scalar),
                evolutionary,
            })
        })();
        match outcome {
            Ok(c) => {
                done.push(c);
                write_json(
                    &summary,
                    &ComparisonReport::new(base.trainer.threshold, done.clone(), false),
                )?;
            }
            Err(e) => {
                write_json(
                    &summary,
                    &ComparisonReport::new(base.trainer.threshold, done, false),
                )?;
                return Err(e);
            }
        }
    }
    let report = ComparisonReport::new(base.trainer.threshold, done, true);
    write_json(&summary, &report)?;
    Ok(report)
}
