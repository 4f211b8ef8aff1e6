//! Shared helpers and independent oracles for the integration tests.
#![allow(dead_code)]

use promptforge::policy::{grad_log_prob, log_prob, Dims, PolicyParams};
use promptforge::rng::rng_from_seed;
use rand::Rng;

/// A random policy and a random conditioning/prompt pair over it.
pub struct GradCase {
    pub params: PolicyParams,
    pub conditioning: Vec<usize>,
    pub prompt: Vec<usize>,
}

pub fn random_case(seed: u64) -> GradCase {
    let mut rng = rng_from_seed(seed);
    let dims = Dims {
        vocab_size: rng.gen_range(2..=16),
        d_embed: rng.gen_range(1..=8),
        d_hidden: rng.gen_range(1..=12),
    };
    let mut params = PolicyParams::zeros(dims).unwrap();
    for t in params.tensors_mut() {
        for x in t.iter_mut() {
            *x = rng.gen_range(-0.8..0.8);
        }
    }
    let v = dims.vocab_size;
    let conditioning = (0..rng.gen_range(0..=6))
        .map(|_| rng.gen_range(0..v))
        .collect();
    let prompt = (0..rng.gen_range(1..=10))
        .map(|_| rng.gen_range(0..v))
        .collect();
    GradCase {
        params,
        conditioning,
        prompt,
    }
}

/// `|a - n| / max(|a|, |n|, 1e-6)`; the floor keeps coordinates whose true
/// derivative is essentially zero from dividing round-off by zero.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Central differences with step 1e-5 on `coords` random coordinates.
/// Returns the worst relative error seen.
pub fn fd_max_rel_err(case: &GradCase, coords: usize, seed: u64) -> f64 {
    let (_, grad) = grad_log_prob(&case.params, &case.conditioning, &case.prompt).unwrap();
    let n = case.params.len();
    let mut rng = rng_from_seed(seed);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..coords {
        let i = rng.gen_range(0..n);
        let mut p = case.params.clone();
        let x = p.get_flat(i);
        p.set_flat(i, x + h);
        let up = log_prob(&p, &case.conditioning, &case.prompt).unwrap();
        p.set_flat(i, x - h);
        let down = log_prob(&p, &case.conditioning, &case.prompt).unwrap();
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max(rel_err(grad.get_flat(i), numeric));
    }
    worst
}

/// Brute-force admission: every index whose reward is within `eps` of the
/// batch maximum.
pub fn admit_oracle(rewards: &[f64], eps: f64) -> Vec<usize> {
    let mut best = f64::NEG_INFINITY;
    for &r in rewards {
        if r > best {
            best = r;
        }
    }
    (0..rewards.len())
        .filter(|&i| rewards[i] >= best - eps)
        .collect()
}

/// Longest prefix of `seq` that is a subsequence of `prompt`, via the
/// classic subsequence table `ok[i][j]`: does `seq[..i]` embed in `prompt[..j]`.
pub fn prefix_dp_oracle(seq: &[usize], prompt: &[usize]) -> usize {
    let (k, n) = (seq.len(), prompt.len());
    let mut ok = vec![vec![false; n + 1]; k + 1];
    for j in 0..=n {
        ok[0][j] = true;
    }
    for i in 1..=k {
        for j in 1..=n {
            ok[i][j] = ok[i][j - 1] || (ok[i - 1][j - 1] && seq[i - 1] == prompt[j - 1]);
        }
    }
    (0..=k).rev().find(|&i| ok[i][n]).unwrap()
}
