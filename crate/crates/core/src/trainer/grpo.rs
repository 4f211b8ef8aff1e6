use crate::error::{Error, Result};
use crate::policy::{grad_kl_divergence, grad_log_prob, kl_divergence, PolicyParams};
use crate::vocab::TokenId;

const ADVANTAGE_DELTA: f64 = 1e-8;

/// `(r_i - mean) / (population_std + 1e-8)` within the group.
pub fn grpo_advantages(rewards: &[f64]) -> Result<Vec<f64>> {
    if rewards.len() < 2 {
        return Err(Error::invalid(
            "group-relative advantages need at least 2 rewards",
        ));
    }
    if rewards.iter().all(|r| *r == rewards[0]) {
        return Ok(vec![0.0; rewards.len()]);
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    Ok(rewards
        .iter()
        .map(|r| (r - mean) / (std + ADVANTAGE_DELTA))
        .collect())
}

#[derive(Debug, Clone)]
pub struct GrpoLoss {
    pub loss: f64,
    pub grads: PolicyParams,
    pub logprobs: Vec<f64>,
    /// Mean per-step KL of each candidate.
    pub kls: Vec<f64>,
}

impl GrpoLoss {
    pub fn mean_kl(&self) -> f64 {
        self.kls.iter().sum::<f64>() / self.kls.len() as f64
    }
}

/// `loss = -(1/n) Σ A_i·logp_i + α·(1/n) Σ KL_i` over a group sharing one
/// conditioning prefix, with its exact gradient.
///
/// Candidates with a zero advantage contribute nothing to the policy term,
/// so an all-equal group yields exactly the KL-only update.
pub fn grpo_loss(
    params: &PolicyParams,
    reference: &PolicyParams,
    conditioning: &[TokenId],
    prompts: &[&[TokenId]],
    advantages: &[f64],
    kl_weight: f64,
) -> Result<GrpoLoss> {
    if prompts.len() != advantages.len() || prompts.is_empty() {
        return Err(Error::invalid(
            "prompts and advantages must be aligned and non-empty",
        ));
    }
    let n = prompts.len() as f64;
    let mut grads = params.zeros_like();
    let mut logprobs = Vec::with_capacity(prompts.len());
    let mut kls = Vec::with_capacity(prompts.len());
    for (prompt, &adv) in prompts.iter().zip(advantages) {
        let kl = if kl_weight > 0.0 {
            let (kl, g) = grad_kl_divergence(params, reference, conditioning, prompt)?;
            grads.add_scaled(&g, kl_weight / n);
            kl
        } else {
            kl_divergence(params, reference, conditioning, prompt)?
        };
        let (lp, g) = grad_log_prob(params, conditioning, prompt)?;
        if adv != 0.0 {
            grads.add_scaled(&g, -adv / n);
        }
        logprobs.push(lp);
        kls.push(kl);
    }
    let pg: f64 = logprobs
        .iter()
        .zip(advantages)
        .map(|(lp, a)| a * lp)
        .sum::<f64>()
        / n;
    let loss = -pg + kl_weight * kls.iter().sum::<f64>() / n;
    Ok(GrpoLoss {
        loss,
        grads,
        logprobs,
        kls,
    })
}
