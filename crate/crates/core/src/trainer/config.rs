use serde::{Deserialize, Serialize};

use crate::buffer::HistorySampling;
use crate::error::{Error, Result};

/// Learning rate suited to a billion-parameter prompter; the desk-scale
/// default is [`TrainerConfig::default`]'s `3e-3`.
pub const LARGE_PROMPTER_LEARNING_RATE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    /// Candidates per group (n).
    pub group_size: usize,
    /// KL anchor weight (α).
    pub kl_weight: f64,
    /// Buffer admission tolerance (ε).
    pub admit_tolerance: f64,
    /// Failed examples critiqued per candidate (K).
    pub critique_count: usize,
    /// History records per conditioning prefix (m).
    pub history_size: usize,
    pub slice_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub eval_every: usize,
    pub patience: usize,
    pub max_steps: usize,
    pub temperature: f64,
    pub seed: u64,
    pub max_prompt_len: usize,
    pub max_prefix_len: usize,
    pub d_embed: usize,
    pub d_hidden: usize,
    pub buffer_capacity: usize,
    pub history_sampling: HistorySampling,
    /// Scalar-reward ablation: empty history, no critiques.
    pub scalar_only: bool,
    pub top_k: usize,
    /// Validation reward that counts as converged for steps-to-threshold.
    pub threshold: f64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            group_size: 8,
            kl_weight: 0.05,
            admit_tolerance: 0.05,
            critique_count: 2,
            history_size: 3,
            slice_size: 16,
            learning_rate: 3e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            eval_every: 10,
            patience: 10,
            max_steps: 1500,
            temperature: 1.0,
            seed: 0,
            max_prompt_len: 12,
            max_prefix_len: 96,
            d_embed: 16,
            d_hidden: 32,
            buffer_capacity: 64,
            history_sampling: HistorySampling::Contrastive,
            scalar_only: false,
            top_k: 10,
            threshold: 0.9,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: &str| {
            Err(Error::Config {
                key: key.into(),
                message: message.into(),
            })
        };
        if self.group_size < 2 {
            return bad(
                "group_size",
                "group-relative advantages need at least 2 candidates",
            );
        }
        if !(self.kl_weight >= 0.0 && self.kl_weight.is_finite()) {
            return bad("kl_weight", "must be a non-negative number");
        }
        if !(self.admit_tolerance >= 0.0) {
            return bad("admit_tolerance", "must be non-negative");
        }
        if self.history_size == 0 {
            return bad("history_size", "must be at least 1");
        }
        if self.slice_size == 0 {
            return bad("slice_size", "must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", "must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam_beta1", "betas must lie in [0, 1)");
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps", "must be positive");
        }
        if self.eval_every == 0 {
            return bad("eval_every", "must be positive");
        }
        if self.patience == 0 {
            return bad("patience", "must be at least 1");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature", "must be positive");
        }
        if self.max_prompt_len == 0 {
            return bad("max_prompt_len", "must be positive");
        }
        if self.d_embed == 0 || self.d_hidden == 0 {
            return bad("d_hidden", "model dimensions must be positive");
        }
        if self.buffer_capacity == 0 {
            return bad("buffer_capacity", "must be positive");
        }
        if self.top_k == 0 {
            return bad("top_k", "must be positive");
        }
        Ok(())
    }
}
