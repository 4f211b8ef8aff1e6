use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::PolicyParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// First and second moments plus the number of applied updates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: PolicyParams,
    pub v: PolicyParams,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &PolicyParams) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdamOutcome {
    Applied,
    /// Gradient had a non-finite entry; nothing changed.
    Rejected,
}

/// One bias-corrected Adam step descending `grads`.
pub fn apply_adam(
    params: &mut PolicyParams,
    grads: &PolicyParams,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<AdamOutcome> {
    if !params.same_shape(grads) || !params.same_shape(&state.m) {
        return Err(Error::invalid(
            "parameter, gradient and moment shapes differ",
        ));
    }
    if !grads.is_finite() {
        return Ok(AdamOutcome::Rejected);
    }
    state.t += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.t as i32);
    let AdamState { m, v, .. } = state;
    for (((p, g), m), v) in params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(m.tensors_mut())
        .zip(v.tensors_mut())
    {
        for i in 0..p.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(AdamOutcome::Applied)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{init_params, Dims};

    fn setup() -> (PolicyParams, AdamConfig) {
        let p = init_params(
            1,
            Dims {
                vocab_size: 5,
                d_embed: 3,
                d_hidden: 4,
            },
        )
        .unwrap();
        (
            p,
            AdamConfig {
                learning_rate: 0.01,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
            },
        )
    }

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        let (p0, cfg) = setup();
        let mut g = p0.zeros_like();
        for (i, x) in g.tensors_mut().into_iter().flatten().enumerate() {
            *x = if i % 2 == 0 { 3.0 } else { -0.5 };
        }
        let mut p = p0.clone();
        let mut st = AdamState::new(&p);
        assert_eq!(
            apply_adam(&mut p, &g, &mut st, &cfg).unwrap(),
            AdamOutcome::Applied
        );
        for i in 0..p.len() {
            let delta = p.get_flat(i) - p0.get_flat(i);
            let expected = -cfg.learning_rate * g.get_flat(i).signum();
            assert!((delta - expected).abs() < 1e-8, "{delta} vs {expected}");
        }
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let (p0, cfg) = setup();
        let mut p = p0.clone();
        let mut st = AdamState::new(&p);
        apply_adam(&mut p, &p0.zeros_like(), &mut st, &cfg).unwrap();
        assert_eq!(p, p0);
    }

    #[test]
    fn non_finite_rejected() {
        let (p0, cfg) = setup();
        let mut g = p0.zeros_like();
        g.out_b[0] = f64::NAN;
        let mut p = p0.clone();
        let mut st = AdamState::new(&p);
        assert_eq!(
            apply_adam(&mut p, &g, &mut st, &cfg).unwrap(),
            AdamOutcome::Rejected
        );
        assert_eq!(p, p0);
        assert_eq!(st.t, 0);
    }

    #[test]
    fn deterministic() {
        let (p0, cfg) = setup();
        let g = p0.clone();
        let run = || {
            let mut p = p0.clone();
            let mut st = AdamState::new(&p);
            apply_adam(&mut p, &g, &mut st, &cfg).unwrap();
            apply_adam(&mut p, &g, &mut st, &cfg).unwrap();
            (p, st)
        };
        assert_eq!(run(), run());
    }
}
