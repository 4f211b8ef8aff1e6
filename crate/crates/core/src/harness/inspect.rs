//! Read-only rendering of a run directory.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::Path;

use serde::Serialize;

use super::{parse_json, parse_lines, BufferLine, Mode, RunConfig, RunManifest};
use crate::error::{Error, Result};
use crate::evo::{EvoReport, GenerationRecord};
use crate::trainer::{select_top_prompts, EvalRecord, MetricsRecord};
use crate::vocab::{TokenId, Vocabulary};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopPrompt {
    pub context_id: String,
    pub prompt: Vec<TokenId>,
    pub validation_reward: f64,
    pub test_reward: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Inspection {
    pub manifest: RunManifest,
    #[serde(skip)]
    pub vocab: Vocabulary,
    /// Final buffer contents, grouped by context in buffer order.
    pub buffers: Vec<BufferLine>,
    pub top_prompts: Vec<TopPrompt>,
    /// `(step, validation reward)`; generations and best-ever fitness for
    /// evolutionary runs.
    pub curve: Vec<(u64, f64)>,
}

pub fn cmd_inspect(dir: &Path) -> Result<Inspection> {
    if !dir.is_dir() {
        return Err(Error::invalid(format!(
            "run directory {} does not exist",
            dir.display()
        )));
    }
    let manifest: RunManifest = parse_json(&dir.join("manifest.json"))?;
    let vocab: Vocabulary = parse_json(&dir.join("vocab.json"))?;
    if vocab.hash() != manifest.vocab_hash {
        return Err(Error::Corrupt {
            file: dir.join("vocab.json"),
            message: "vocabulary hash does not match the manifest".into(),
        });
    }
    let config_path = dir.join("config.toml");
    let config_text = super::read_file(&config_path)?;
    if super::sha256_hex(config_text.as_bytes()) != manifest.config_hash {
        return Err(Error::Corrupt {
            file: config_path,
            message: "config hash does not match the manifest".into(),
        });
    }
    let config = RunConfig::parse(&config_text).map_err(|e| Error::Corrupt {
        file: config_path.clone(),
        message: e.to_string(),
    })?;

    let (buffers, top_prompts, curve) = match manifest.mode {
        Mode::Rl | Mode::RlNoBuffer => {
            let records: Vec<MetricsRecord> = parse_lines(&dir.join("metrics.jsonl"))?;
            let buffers: Vec<BufferLine> = parse_lines(&dir.join("buffers.jsonl"))?;
            let evals: Vec<EvalRecord> = records
                .iter()
                .filter_map(|r| match r {
                    MetricsRecord::Eval(e) => Some(e.clone()),
                    _ => None,
                })
                .collect();
            let tested = records.iter().rev().find_map(|r| match r {
                MetricsRecord::Final(f) => Some(f.selected.clone()),
                _ => None,
            });
            let top = if evals.is_empty() {
                Vec::new()
            } else {
                select_top_prompts(&evals, config.trainer.top_k)?.1
            };
            let top_prompts = top
                .into_iter()
                .enumerate()
                .map(|(i, c)| TopPrompt {
                    test_reward: tested
                        .as_ref()
                        .and_then(|t| t.get(i))
                        .map(|s| s.test_reward),
                    context_id: c.context_id,
                    prompt: c.prompt,
                    validation_reward: c.validation_reward,
                })
                .collect();
            (
                buffers,
                top_prompts,
                evals.iter().map(|e| (e.step, e.reward)).collect(),
            )
        }
        Mode::Evo => {
            let generations: Vec<GenerationRecord> = parse_lines(&dir.join("metrics.jsonl"))?;
            let report: EvoReport = parse_json(&dir.join("report.json"))?;
            let mut by_gen: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
            for g in &generations {
                by_gen.entry(g.generation).or_default().push(g.best_ever);
            }
            let curve = by_gen
                .into_iter()
                .map(|(g, v)| (g, v.iter().sum::<f64>() / v.len() as f64))
                .collect();
            let top = report
                .per_context
                .into_iter()
                .map(|c| TopPrompt {
                    context_id: c.context_id,
                    prompt: c.best_prompt,
                    validation_reward: c.best_fitness,
                    test_reward: Some(c.test_reward),
                })
                .collect();
            (Vec::new(), top, curve)
        }
    };
    Ok(Inspection {
        manifest,
        vocab,
        buffers,
        top_prompts,
        curve,
    })
}

impl Inspection {
    /// Plot-ready `step,eval_reward` series.
    pub fn curve_csv(&self) -> String {
        let mut s = String::from("step,eval_reward\n");
        for (step, r) in &self.curve {
            let _ = writeln!(s, "{step},{r}");
        }
        s
    }

    pub fn render(&self) -> String {
        let m = &self.manifest;
        let mut s = String::new();
        let _ = writeln!(s, "run {} (mode {}, seed {})", m.run_id, m.mode, m.seed);
        if let Some(o) = &m.outcome {
            let _ = writeln!(
                s,
                "test reward {:.4}  steps {}  worker calls {}{}",
                o.mean_test_reward,
                o.steps_run,
                o.worker_calls,
                o.failure
                    .as_ref()
                    .map(|f| format!("  FAILED: {f}"))
                    .unwrap_or_default()
            );
        }

        if !self.buffers.is_empty() {
            let _ = writeln!(s, "\nbuffers");
            let mut current: Option<&str> = None;
            for b in &self.buffers {
                if current != Some(b.context_id.as_str()) {
                    let n = self
                        .buffers
                        .iter()
                        .filter(|x| x.context_id == b.context_id)
                        .count();
                    let _ = writeln!(s, "  {} ({n} records)", b.context_id);
                    current = Some(&b.context_id);
                }
                let _ = writeln!(
                    s,
                    "    step {:>5}  reward {:.3}  {}",
                    b.step_created, b.reward, b.prompt_text
                );
                for c in &b.critiques {
                    let _ = writeln!(s, "                 - {c}");
                }
            }
        }

        let _ = writeln!(s, "\ntop prompts");
        for (i, p) in self.top_prompts.iter().enumerate() {
            let test = p
                .test_reward
                .map(|t| format!("{t:.3}"))
                .unwrap_or_else(|| "-".into());
            let _ = writeln!(
                s,
                "  {:>2}. {}  validation {:.3}  test {}  {}",
                i + 1,
                p.context_id,
                p.validation_reward,
                test,
                self.vocab.render(&p.prompt)
            );
        }

        let _ = writeln!(s, "\neval curve");
        s.push_str(&self.curve_csv());
        s
    }
}
