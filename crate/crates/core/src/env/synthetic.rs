//! Seed-deterministic synthetic task families with known optimal prompts.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    ContextDescriptor, ContextSplits, DatasetSplits, HiddenSpec, KeywordSpec, KeywordWorker,
    OrderedProtocolWorker, OrderedSpec, TaskInstance, TaskSuite, Worker, DEFAULT_CATEGORY,
};
use crate::critique::RuleCritic;
use crate::error::{Error, Result};
use crate::policy::PromptSequence;
use crate::rng::stream_rng;
use crate::vocab::{TokenId, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Keyword,
    Ordered,
}

/// Inclusive integer range drawn uniformly per context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRange {
    pub min: usize,
    pub max: usize,
}

impl CountRange {
    pub const fn exactly(n: usize) -> Self {
        CountRange { min: n, max: n }
    }

    pub const fn between(min: usize, max: usize) -> Self {
        CountRange { min, max }
    }

    fn draw(&self, rng: &mut impl Rng) -> usize {
        rng.gen_range(self.min..=self.max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub kind: TaskKind,
    pub contexts: usize,
    pub control_tokens: usize,
    pub filler_tokens: usize,
    pub required: CountRange,
    pub forbidden: CountRange,
    pub categories: CountRange,
    /// Protocol length for ordered tasks.
    pub protocol_len: CountRange,
    pub train_size: usize,
    pub validation_size: usize,
    pub test_size: usize,
    /// Give each context a description token. Off means the fixed-prompt
    /// regime: an empty context description.
    pub describe_contexts: bool,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            kind: TaskKind::Keyword,
            contexts: 1,
            control_tokens: 8,
            filler_tokens: 24,
            required: CountRange::between(2, 4),
            forbidden: CountRange::between(1, 2),
            categories: CountRange::between(0, 2),
            protocol_len: CountRange::between(3, 4),
            train_size: 64,
            validation_size: 32,
            test_size: 32,
            describe_contexts: false,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: &str| {
            Err(Error::Config {
                key: key.into(),
                message: message.into(),
            })
        };
        if self.contexts == 0 {
            return bad("contexts", "must be positive");
        }
        for (key, r) in [
            ("required", self.required),
            ("forbidden", self.forbidden),
            ("categories", self.categories),
            ("protocol_len", self.protocol_len),
        ] {
            if r.min > r.max {
                return bad(key, "min exceeds max");
            }
        }
        match self.kind {
            TaskKind::Keyword => {
                if self.required.min == 0 {
                    return bad("required", "keyword tasks need at least one required token");
                }
                if self.required.max + self.forbidden.max + self.categories.max
                    > self.control_tokens
                {
                    return bad(
                        "control_tokens",
                        "too few control tokens for the requested task rules",
                    );
                }
            }
            TaskKind::Ordered => {
                if self.protocol_len.min == 0 || self.protocol_len.max > self.control_tokens {
                    return bad("protocol_len", "must lie in 1..=control_tokens");
                }
            }
        }
        if self.train_size == 0 || self.validation_size == 0 || self.test_size == 0 {
            return bad("train_size", "every split must be non-empty");
        }
        Ok(())
    }
}

/// A generated environment. `optimal` is for tests and reports only; the
/// trainer never reads it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSuite {
    pub config: SyntheticConfig,
    pub tasks: TaskSuite,
    pub optimal: Vec<(String, PromptSequence)>,
}

impl SyntheticSuite {
    pub fn generate(config: &SyntheticConfig) -> Result<Self> {
        config.validate()?;
        let n_desc = if config.describe_contexts {
            config.contexts
        } else {
            0
        };
        let vocab = Vocabulary::synthetic(config.control_tokens, config.filler_tokens, n_desc);
        let control: Vec<TokenId> = vocab.control_range().collect();

        let mut contexts = Vec::with_capacity(config.contexts);
        let mut split_data = Vec::with_capacity(config.contexts);
        let mut optimal = Vec::with_capacity(config.contexts);
        for c in 0..config.contexts {
            let context_id = format!("task{c}");
            let mut rng = stream_rng(config.seed, "env", c as u64);
            let mut pool = control.clone();
            pool.shuffle(&mut rng);

            let (hidden, best, tags) = match config.kind {
                TaskKind::Keyword => {
                    let n_req = config.required.draw(&mut rng);
                    let n_forb = config.forbidden.draw(&mut rng);
                    let n_cat = config.categories.draw(&mut rng);
                    let mut required = pool[..n_req].to_vec();
                    let mut forbidden = pool[n_req..n_req + n_forb].to_vec();
                    required.sort_unstable();
                    forbidden.sort_unstable();
                    let categories: Vec<(String, TokenId)> = pool
                        [n_req + n_forb..n_req + n_forb + n_cat]
                        .iter()
                        .enumerate()
                        .map(|(i, &t)| (format!("cat{i}"), t))
                        .collect();
                    let mut best: Vec<TokenId> = required
                        .iter()
                        .copied()
                        .chain(categories.iter().map(|(_, t)| *t))
                        .collect();
                    best.sort_unstable();
                    let mut tags = vec![DEFAULT_CATEGORY.to_string()];
                    tags.extend(categories.iter().map(|(tag, _)| tag.clone()));
                    (
                        HiddenSpec::Keyword(KeywordSpec {
                            required,
                            forbidden,
                            categories,
                        }),
                        best,
                        tags,
                    )
                }
                TaskKind::Ordered => {
                    let k = config.protocol_len.draw(&mut rng);
                    let sequence = pool[..k].to_vec();
                    (
                        HiddenSpec::Ordered(OrderedSpec {
                            sequence: sequence.clone(),
                        }),
                        sequence,
                        vec![DEFAULT_CATEGORY.to_string()],
                    )
                }
            };

            let description_tokens = if config.describe_contexts {
                vec![vocab.require(&format!("d{c}"))?]
            } else {
                Vec::new()
            };

            let mut make = |split: &str, n: usize| -> Vec<TaskInstance> {
                (0..n)
                    .map(|i| {
                        let tag = &tags[rng.gen_range(0..tags.len())];
                        TaskInstance {
                            context_id: context_id.clone(),
                            input: format!("{context_id}-{split}-{i}"),
                            target: format!("answer-{i}"),
                            category: (tag != DEFAULT_CATEGORY).then(|| tag.clone()),
                        }
                    })
                    .collect()
            };
            let train = make("train", config.train_size);
            let validation = make("validation", config.validation_size);
            let test = make("test", config.test_size);

            optimal.push((
                context_id.clone(),
                PromptSequence::from_content(best, vocab.eos())?,
            ));
            split_data.push(ContextSplits {
                context_id: context_id.clone(),
                train,
                validation,
                test,
            });
            contexts.push(ContextDescriptor {
                context_id,
                description_tokens,
                hidden,
            });
        }

        Ok(SyntheticSuite {
            config: config.clone(),
            tasks: TaskSuite::new(vocab, contexts, DatasetSplits::new(split_data)?)?,
            optimal,
        })
    }

    pub fn worker(&self) -> Box<dyn Worker> {
        match self.config.kind {
            TaskKind::Keyword => Box::new(self.keyword_worker()),
            TaskKind::Ordered => {
                let specs = self
                    .tasks
                    .contexts
                    .iter()
                    .filter_map(|c| match &c.hidden {
                        HiddenSpec::Ordered(s) => Some((c.context_id.clone(), s.clone())),
                        _ => None,
                    })
                    .collect();
                Box::new(OrderedProtocolWorker::new(specs))
            }
        }
    }

    pub fn keyword_worker(&self) -> KeywordWorker {
        let specs: HashMap<_, _> = self
            .tasks
            .contexts
            .iter()
            .filter_map(|c| match &c.hidden {
                HiddenSpec::Keyword(s) => Some((c.context_id.clone(), s.clone())),
                _ => None,
            })
            .collect();
        KeywordWorker::new(specs)
    }

    pub fn critic(&self) -> RuleCritic {
        RuleCritic::new(
            self.tasks
                .contexts
                .iter()
                .map(|c| (c.context_id.clone(), c.hidden.clone()))
                .collect(),
        )
    }

    pub fn optimal_prompt(&self, context_id: &str) -> Option<&PromptSequence> {
        self.optimal
            .iter()
            .find(|(c, _)| c == context_id)
            .map(|(_, p)| p)
    }

    pub fn context(&self, context_id: &str) -> Option<&ContextDescriptor> {
        self.tasks
            .contexts
            .iter()
            .find(|c| c.context_id == context_id)
    }
}
