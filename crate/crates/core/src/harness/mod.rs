//! Run directories, the `train`/`compare`/`inspect` commands and their
//! file formats.
//!
//! A run directory holds:
//!
//! | file | content |
//! |------|---------|
//! | `config.toml` | effective configuration (seed and mode applied) |
//! | `manifest.json` | [`RunManifest`] |
//! | `vocab.json` | prompter vocabulary |
//! | `metrics.jsonl` | one [`MetricsRecord`] (or evolution generation) per line |
//! | `buffers.jsonl` | final experience buffer, one [`BufferLine`] per line |
//! | `checkpoints/step_NNNNNN/` | parameters at each evaluation |
//! | `report.json` | [`RunReport`] or [`EvoReport`] |

mod compare;
mod config;
mod inspect;
mod workbench;

pub use compare::{
    cmd_compare, median, relative_efficiency, ArmResult, ComparisonReport, ReferenceResult,
    SeedComparison,
};
pub use config::{Environment, RunConfig};
pub use inspect::{cmd_inspect, Inspection};
pub use workbench::Workbench;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::buffer::ExperienceBuffer;
use crate::error::{Error, Result};
use crate::evo::{run_evolution, EvoReport};
use crate::policy::save_checkpoint;
use crate::trainer::{MetricsRecord, RunReport, Trainer};
use crate::vocab::{TokenId, Vocabulary};

pub const RUN_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Trainer with critiques and history.
    Rl,
    /// Trainer on scalar rewards only.
    RlNoBuffer,
    /// Evolutionary baseline.
    Evo,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Rl => "rl",
            Mode::RlNoBuffer => "rl_no_buffer",
            Mode::Evo => "evo",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "rl" => Some(Mode::Rl),
            "rl_no_buffer" => Some(Mode::RlNoBuffer),
            "evo" => Some(Mode::Evo),
            _ => None,
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub mean_test_reward: f64,
    /// Training steps, or generations for the evolutionary baseline.
    pub steps_run: u64,
    pub worker_calls: u64,
    pub test_calls: u64,
    pub steps_to_threshold: Option<u64>,
    pub censored: Option<bool>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub run_id: String,
    pub mode: Mode,
    /// SHA-256 of `config.toml` as written.
    pub config_hash: String,
    pub dataset_hash: String,
    pub vocab_hash: String,
    pub seed: u64,
    /// Unix seconds.
    pub started_at: u64,
    pub finished_at: u64,
    pub outcome: Option<Outcome>,
}

/// One buffered trajectory as persisted for inspection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferLine {
    pub context_id: String,
    pub step_created: u64,
    pub reward: f64,
    pub prompt: Vec<TokenId>,
    pub prompt_text: String,
    pub critiques: Vec<String>,
}

/// What a finished run produced.
#[derive(Debug, Clone)]
pub enum RunResult {
    Trainer(RunReport),
    Evolution(EvoReport),
}

impl RunResult {
    pub fn mean_test_reward(&self) -> f64 {
        match self {
            RunResult::Trainer(r) => r.mean_test_reward,
            RunResult::Evolution(r) => r.mean_test_reward,
        }
    }

    pub fn worker_calls(&self) -> u64 {
        match self {
            RunResult::Trainer(r) => r.worker_calls,
            RunResult::Evolution(r) => r.worker_calls,
        }
    }

    fn outcome(&self) -> Outcome {
        match self {
            RunResult::Trainer(r) => Outcome {
                mean_test_reward: r.mean_test_reward,
                steps_run: r.steps_run,
                worker_calls: r.worker_calls,
                test_calls: r.test_calls,
                steps_to_threshold: Some(r.steps_to_threshold),
                censored: Some(r.censored),
                failure: r.failure.clone(),
            },
            RunResult::Evolution(r) => Outcome {
                mean_test_reward: r.mean_test_reward,
                steps_run: r.generations_run,
                worker_calls: r.worker_calls,
                test_calls: r.test_calls,
                steps_to_threshold: None,
                censored: None,
                failure: None,
            },
        }
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

/// `config` with the seed override and the mode's trainer flags applied.
pub fn effective_config(config: &RunConfig, mode: Mode, seed: Option<u64>) -> RunConfig {
    let mut c = config.clone();
    if let Some(s) = seed {
        c.trainer.seed = s;
        c.evo.seed = s;
    }
    c.trainer.scalar_only = mode == Mode::RlNoBuffer;
    c
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_lines<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut out, &item).expect("record serializes");
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn buffer_lines(buffer: &ExperienceBuffer, vocab: &Vocabulary) -> Vec<BufferLine> {
    buffer
        .records()
        .map(|r| BufferLine {
            context_id: r.context_id.clone(),
            step_created: r.step_created,
            reward: r.reward,
            prompt: r.prompt.tokens().to_vec(),
            prompt_text: vocab.render(r.prompt.tokens()),
            critiques: r
                .critiques
                .entries
                .iter()
                .map(|c| c.feedback.summary(vocab))
                .collect(),
        })
        .collect()
}

/// Runs one optimizer under `config` (already effective) and persists
/// everything into `dir`. A run that fails mid-way still leaves its
/// metrics, a report carrying the failure, and a manifest.
pub fn execute_run(
    config: &RunConfig,
    bench: &Workbench,
    mode: Mode,
    dir: &Path,
) -> Result<RunResult> {
    let started_at = unix_now();
    fs::create_dir_all(dir)?;
    let checkpoints = dir.join("checkpoints");
    if checkpoints.exists() {
        fs::remove_dir_all(&checkpoints)?;
    }
    let config_text = config.to_toml();
    fs::write(dir.join("config.toml"), &config_text)?;
    write_json(&dir.join("vocab.json"), &bench.tasks.vocab)?;
    let vocab_hash = bench.tasks.vocab.hash();
    let config_hash = sha256_hex(config_text.as_bytes());
    let seed = if mode == Mode::Evo {
        config.evo.seed
    } else {
        config.trainer.seed
    };
    let mut manifest = RunManifest {
        format_version: RUN_FORMAT_VERSION,
        run_id: format!("{mode}-seed{seed}-{}", &config_hash[..8]),
        mode,
        config_hash,
        dataset_hash: bench.dataset_hash.clone(),
        vocab_hash: vocab_hash.clone(),
        seed,
        started_at,
        finished_at: started_at,
        outcome: None,
    };

    let trainer = Trainer::new(
        config.trainer.clone(),
        &bench.tasks,
        bench.worker.as_ref(),
        bench.critic.as_ref(),
    )?;
    let result = match mode {
        Mode::Rl | Mode::RlNoBuffer => trainer
            .run_with(|state, eval| {
                save_checkpoint(
                    &checkpoints.join(format!("step_{:06}", eval.step)),
                    &state.params,
                    &vocab_hash,
                )
            })
            .map(|outcome| {
                (
                    RunResult::Trainer(outcome.report.clone()),
                    Some(outcome.state.metrics),
                    Some(buffer_lines(&outcome.state.buffer, &bench.tasks.vocab)),
                )
            }),
        Mode::Evo => trainer.starter_prompts().and_then(|starters| {
            run_evolution(
                &config.evo,
                &bench.tasks,
                bench.worker.as_ref(),
                bench.critic.as_ref(),
                &starters,
            )
            .map(|r| (RunResult::Evolution(r), None, None))
        }),
    };
    let (result, metrics, buffers) = match result {
        Ok(r) => r,
        Err(e) => {
            manifest.finished_at = unix_now();
            manifest.outcome = Some(Outcome {
                mean_test_reward: 0.0,
                steps_run: 0,
                worker_calls: 0,
                test_calls: 0,
                steps_to_threshold: None,
                censored: None,
                failure: Some(e.to_string()),
            });
            write_json(&dir.join("manifest.json"), &manifest)?;
            return Err(e);
        }
    };

    match &result {
        RunResult::Trainer(report) => {
            write_lines(&dir.join("metrics.jsonl"), metrics.unwrap_or_default())?;
            write_lines(&dir.join("buffers.jsonl"), buffers.unwrap_or_default())?;
            fs::write(dir.join("report.json"), report.to_json())?;
        }
        RunResult::Evolution(report) => {
            write_lines(&dir.join("metrics.jsonl"), &report.trajectory)?;
            fs::write(dir.join("report.json"), report.to_json())?;
        }
    }
    manifest.finished_at = unix_now();
    manifest.outcome = Some(result.outcome());
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(result)
}

/// `train`: load, run, persist. Returns the run directory.
pub fn cmd_train(
    config_path: &Path,
    dataset: Option<&Path>,
    mode: Mode,
    seed: Option<u64>,
    out: &Path,
) -> Result<(PathBuf, RunResult)> {
    let config = effective_config(&RunConfig::load(config_path)?, mode, seed);
    let bench = Workbench::build(&config, dataset)?;
    let result = execute_run(&config, &bench, mode, out)?;
    Ok((out.to_path_buf(), result))
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Corrupt {
        file: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub(crate) fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_file(path)?).map_err(|e| Error::Corrupt {
        file: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub(crate) fn parse_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    read_file(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Corrupt {
                file: path.to_path_buf(),
                message: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

/// Rebuilds `report.json` of a trainer run from its metrics stream.
pub fn regenerate_report(dir: &Path) -> Result<String> {
    let records: Vec<MetricsRecord> = parse_lines(&dir.join("metrics.jsonl"))?;
    Ok(RunReport::from_records(&records)?.to_json())
}
