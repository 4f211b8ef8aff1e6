//! Forward recurrence, sampling, exact log-probabilities, reverse-mode
//! gradients and KL to a reference, all for the single-cell prompter:
//!
//! ```text
//! h_0     = 0
//! h_{t+1} = tanh(recur_h·h_t + recur_x·embedding[x_t] + recur_b)
//! logits  = out_w·h + out_b
//! ```
//!
//! Conditioning tokens advance the state but are never scored. The first
//! emitted token is drawn from the state reached after the whole prefix.

use rand::Rng;

use super::params::PolicyParams;
use super::sequence::PromptSequence;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::vocab::TokenId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decoding {
    Sample {
        temperature: f64,
    },
    /// Argmax at every step; lowest index wins ties.
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeOptions {
    pub decoding: Decoding,
    /// Maximum prompt length including EOS.
    pub max_len: usize,
    pub eos: TokenId,
}

fn matvec_add(mat: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    for (row, o) in mat.chunks_exact(cols).zip(out.iter_mut()) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += matᵀ·x`
fn matvec_t_add(mat: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    for (row, &xi) in mat.chunks_exact(cols).zip(x) {
        if xi == 0.0 {
            continue;
        }
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * xi;
        }
    }
}

fn outer_add(out: &mut [f64], cols: usize, a: &[f64], b: &[f64]) {
    for (row, &ai) in out.chunks_exact_mut(cols).zip(a) {
        if ai == 0.0 {
            continue;
        }
        for (o, bj) in row.iter_mut().zip(b) {
            *o += ai * bj;
        }
    }
}

fn step(params: &PolicyParams, h: &[f64], token: TokenId, out: &mut [f64]) {
    let d_e = params.recur_x.ncols();
    let d_h = h.len();
    out.copy_from_slice(params.recur_b.as_slice().unwrap());
    matvec_add(params.recur_h.as_slice().unwrap(), d_h, h, out);
    let emb = &params.embedding.as_slice().unwrap()[token * d_e..(token + 1) * d_e];
    matvec_add(params.recur_x.as_slice().unwrap(), d_e, emb, out);
    for o in out.iter_mut() {
        *o = o.tanh();
    }
}

fn logits(params: &PolicyParams, h: &[f64], out: &mut [f64]) {
    out.copy_from_slice(params.out_b.as_slice().unwrap());
    matvec_add(params.out_w.as_slice().unwrap(), h.len(), h, out);
}

/// Writes log-softmax of `z` into `out`.
pub(crate) fn log_softmax(z: &[f64], out: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    for (o, v) in out.iter_mut().zip(z) {
        *o = v - lse;
    }
}

/// Hidden states `h_0..=h_T` for `inputs`, flattened.
fn unroll(params: &PolicyParams, inputs: &[TokenId]) -> Vec<f64> {
    let d_h = params.recur_h.nrows();
    let mut states = vec![0.0; (inputs.len() + 1) * d_h];
    for (t, &tok) in inputs.iter().enumerate() {
        let (prev, next) = states.split_at_mut((t + 1) * d_h);
        step(params, &prev[t * d_h..], tok, &mut next[..d_h]);
    }
    states
}

fn check_tokens(params: &PolicyParams, tokens: &[TokenId], what: &str) -> Result<()> {
    let v = params.out_b.len();
    match tokens.iter().find(|&&t| t >= v) {
        Some(t) => Err(Error::invalid(format!(
            "{what} token {t} outside vocabulary of {v}"
        ))),
        None => Ok(()),
    }
}

/// Scoring pass over a (conditioning, prompt) pair.
struct Scored {
    inputs: Vec<TokenId>,
    states: Vec<f64>,
    /// State index whose logits score prompt token `k` is `offset + k`.
    offset: usize,
}

fn score_pass(
    params: &PolicyParams,
    conditioning: &[TokenId],
    prompt: &[TokenId],
) -> Result<Scored> {
    if prompt.is_empty() {
        return Err(Error::invalid("empty prompt"));
    }
    check_tokens(params, conditioning, "conditioning")?;
    check_tokens(params, prompt, "prompt")?;
    let mut inputs = Vec::with_capacity(conditioning.len() + prompt.len());
    inputs.extend_from_slice(conditioning);
    inputs.extend_from_slice(&prompt[..prompt.len() - 1]);
    let states = unroll(params, &inputs);
    Ok(Scored {
        inputs,
        states,
        offset: conditioning.len(),
    })
}

/// Backpropagates per-position output-logit gradients through the head
/// and the recurrence, accumulating into `grads`.
fn backprop(
    params: &PolicyParams,
    scored: &Scored,
    dlogits: &[(usize, Vec<f64>)],
    grads: &mut PolicyParams,
) {
    let d_h = params.recur_h.nrows();
    let d_e = params.recur_x.ncols();
    let n_states = scored.inputs.len() + 1;
    let mut dh = vec![0.0; n_states * d_h];

    {
        let out_w = params.out_w.as_slice().unwrap();
        let [_, _, _, _, g_out_w, g_out_b] = grads.tensors_mut();
        for (s, dz) in dlogits {
            let h = &scored.states[s * d_h..(s + 1) * d_h];
            outer_add(g_out_w, d_h, dz, h);
            for (g, d) in g_out_b.iter_mut().zip(dz) {
                *g += d;
            }
            matvec_t_add(out_w, d_h, dz, &mut dh[s * d_h..(s + 1) * d_h]);
        }
    }

    let recur_h = params.recur_h.as_slice().unwrap();
    let recur_x = params.recur_x.as_slice().unwrap();
    let embedding = params.embedding.as_slice().unwrap();
    let [g_emb, g_rh, g_rx, g_rb, _, _] = grads.tensors_mut();
    let mut da = vec![0.0; d_h];
    for t in (1..n_states).rev() {
        let h_t = &scored.states[t * d_h..(t + 1) * d_h];
        let h_prev = &scored.states[(t - 1) * d_h..t * d_h];
        let mut any = false;
        for i in 0..d_h {
            da[i] = dh[t * d_h + i] * (1.0 - h_t[i] * h_t[i]);
            any |= da[i] != 0.0;
        }
        if !any {
            continue;
        }
        let tok = scored.inputs[t - 1];
        let emb = &embedding[tok * d_e..(tok + 1) * d_e];
        for (g, d) in g_rb.iter_mut().zip(&da) {
            *g += d;
        }
        outer_add(g_rh, d_h, &da, h_prev);
        outer_add(g_rx, d_e, &da, emb);
        matvec_t_add(recur_x, d_e, &da, &mut g_emb[tok * d_e..(tok + 1) * d_e]);
        let (before, _) = dh.split_at_mut(t * d_h);
        matvec_t_add(recur_h, d_h, &da, &mut before[(t - 1) * d_h..]);
    }
}

/// Samples a prompt autoregressively after consuming `conditioning`.
///
/// At `max_len` EOS is forced; its recorded log-probability is the model's
/// actual EOS log-probability at that step.
pub fn sample_prompt(
    params: &PolicyParams,
    conditioning: &[TokenId],
    seed: u64,
    opts: &DecodeOptions,
) -> Result<PromptSequence> {
    if let Decoding::Sample { temperature } = opts.decoding {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::invalid(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
    }
    if opts.max_len == 0 {
        return Err(Error::invalid("max_len must be at least 1"));
    }
    check_tokens(params, conditioning, "conditioning")?;
    check_tokens(params, &[opts.eos], "eos")?;

    let d_h = params.recur_h.nrows();
    let v = params.out_b.len();
    let mut h = vec![0.0; d_h];
    let mut next = vec![0.0; d_h];
    for &tok in conditioning {
        step(params, &h, tok, &mut next);
        std::mem::swap(&mut h, &mut next);
    }

    let mut rng = rng_from_seed(seed);
    let mut z = vec![0.0; v];
    let mut lp = vec![0.0; v];
    let mut tokens = Vec::new();
    let mut logprobs = Vec::new();
    let temperature = match opts.decoding {
        Decoding::Sample { temperature } => temperature,
        Decoding::Greedy => 1.0,
    };
    loop {
        logits(params, &h, &mut z);
        if temperature != 1.0 {
            for x in z.iter_mut() {
                *x /= temperature;
            }
        }
        log_softmax(&z, &mut lp);
        let tok = if tokens.len() + 1 == opts.max_len {
            opts.eos
        } else {
            match opts.decoding {
                Decoding::Greedy => argmax(&lp),
                Decoding::Sample { .. } => {
                    let u: f64 = rng.gen();
                    let mut acc = 0.0;
                    let mut pick = v - 1;
                    for (i, l) in lp.iter().enumerate() {
                        acc += l.exp();
                        if u < acc {
                            pick = i;
                            break;
                        }
                    }
                    pick
                }
            }
        };
        tokens.push(tok);
        logprobs.push(lp[tok]);
        if tok == opts.eos {
            break;
        }
        step(params, &h, tok, &mut next);
        std::mem::swap(&mut h, &mut next);
    }
    Ok(PromptSequence::new(tokens, opts.eos)?.with_logprobs(logprobs, temperature))
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

/// Sum of log-probabilities of every emitted token, EOS included.
pub fn log_prob(
    params: &PolicyParams,
    conditioning: &[TokenId],
    prompt: &[TokenId],
) -> Result<f64> {
    let scored = score_pass(params, conditioning, prompt)?;
    let d_h = params.recur_h.nrows();
    let mut z = vec![0.0; params.out_b.len()];
    let mut lp = vec![0.0; z.len()];
    let mut total = 0.0;
    for (k, &tok) in prompt.iter().enumerate() {
        let s = scored.offset + k;
        logits(params, &scored.states[s * d_h..(s + 1) * d_h], &mut z);
        log_softmax(&z, &mut lp);
        total += lp[tok];
    }
    Ok(total)
}

/// Log-probability and its exact gradient with respect to every tensor.
pub fn grad_log_prob(
    params: &PolicyParams,
    conditioning: &[TokenId],
    prompt: &[TokenId],
) -> Result<(f64, PolicyParams)> {
    let scored = score_pass(params, conditioning, prompt)?;
    let d_h = params.recur_h.nrows();
    let v = params.out_b.len();
    let mut z = vec![0.0; v];
    let mut total = 0.0;
    let mut dlogits = Vec::with_capacity(prompt.len());
    for (k, &tok) in prompt.iter().enumerate() {
        let s = scored.offset + k;
        logits(params, &scored.states[s * d_h..(s + 1) * d_h], &mut z);
        let mut lp = vec![0.0; v];
        log_softmax(&z, &mut lp);
        total += lp[tok];
        // d log p[tok] / dz = onehot(tok) - p
        let mut dz: Vec<f64> = lp.iter().map(|l| -l.exp()).collect();
        dz[tok] += 1.0;
        dlogits.push((s, dz));
    }
    let mut grads = params.zeros_like();
    backprop(params, &scored, &dlogits, &mut grads);
    Ok((total, grads))
}

fn check_pair(params: &PolicyParams, reference: &PolicyParams) -> Result<()> {
    if params.same_shape(reference) {
        Ok(())
    } else {
        Err(Error::invalid("policy and reference shapes differ"))
    }
}

/// Per-step categorical KL(π_θ ‖ π_ref) along the visited states, and the
/// θ-logit gradients of each step's KL.
fn kl_steps(
    params: &PolicyParams,
    reference: &PolicyParams,
    scored: &Scored,
    n_steps: usize,
    want_grad: bool,
) -> (Vec<f64>, Vec<(usize, Vec<f64>)>) {
    let d_h = params.recur_h.nrows();
    let v = params.out_b.len();
    let ref_states = unroll(reference, &scored.inputs);
    let (mut z, mut zr) = (vec![0.0; v], vec![0.0; v]);
    let (mut lp, mut lq) = (vec![0.0; v], vec![0.0; v]);
    let mut kls = Vec::with_capacity(n_steps);
    let mut dlogits = Vec::new();
    for k in 0..n_steps {
        let s = scored.offset + k;
        logits(params, &scored.states[s * d_h..(s + 1) * d_h], &mut z);
        logits(reference, &ref_states[s * d_h..(s + 1) * d_h], &mut zr);
        log_softmax(&z, &mut lp);
        log_softmax(&zr, &mut lq);
        let kl: f64 = lp.iter().zip(&lq).map(|(a, b)| a.exp() * (a - b)).sum();
        kls.push(kl.max(0.0));
        if want_grad {
            // dKL/dz_j = p_j (log p_j - log q_j - KL)
            let dz = lp
                .iter()
                .zip(&lq)
                .map(|(a, b)| a.exp() * (a - b - kl))
                .collect();
            dlogits.push((s, dz));
        }
    }
    (kls, dlogits)
}

/// Mean over emitted steps of the exact per-step KL(π_θ ‖ π_ref).
pub fn kl_divergence(
    params: &PolicyParams,
    reference: &PolicyParams,
    conditioning: &[TokenId],
    prompt: &[TokenId],
) -> Result<f64> {
    check_pair(params, reference)?;
    let scored = score_pass(params, conditioning, prompt)?;
    let (kls, _) = kl_steps(params, reference, &scored, prompt.len(), false);
    Ok(kls.iter().sum::<f64>() / prompt.len() as f64)
}

/// [`kl_divergence`] and its gradient with respect to θ (the reference is
/// held fixed; the visited tokens are treated as given).
pub fn grad_kl_divergence(
    params: &PolicyParams,
    reference: &PolicyParams,
    conditioning: &[TokenId],
    prompt: &[TokenId],
) -> Result<(f64, PolicyParams)> {
    check_pair(params, reference)?;
    let scored = score_pass(params, conditioning, prompt)?;
    let m = prompt.len() as f64;
    let (kls, mut dlogits) = kl_steps(params, reference, &scored, prompt.len(), true);
    for (_, dz) in dlogits.iter_mut() {
        for x in dz.iter_mut() {
            *x /= m;
        }
    }
    let mut grads = params.zeros_like();
    backprop(params, &scored, &dlogits, &mut grads);
    Ok((kls.iter().sum::<f64>() / m, grads))
}

/// Full next-token distribution after `prefix`, for inspection and tests.
pub fn next_token_probs(params: &PolicyParams, prefix: &[TokenId]) -> Result<Vec<f64>> {
    check_tokens(params, prefix, "prefix")?;
    let d_h = params.recur_h.nrows();
    let states = unroll(params, prefix);
    let mut z = vec![0.0; params.out_b.len()];
    logits(params, &states[prefix.len() * d_h..], &mut z);
    let mut lp = vec![0.0; z.len()];
    log_softmax(&z, &mut lp);
    Ok(lp.into_iter().map(f64::exp).collect())
}
