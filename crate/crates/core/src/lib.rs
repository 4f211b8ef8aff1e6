//! Reinforcement-learning prompt optimization.
//!
//! A small recurrent prompter writes system prompts token by token for a
//! frozen worker. It is trained with group-relative policy gradients, a KL
//! penalty toward its initial weights and a per-context buffer of its best
//! past prompts together with critiques of their failures, which is fed back
//! to it as conditioning. An evolutionary prompt search is included as a
//! cost-matched baseline.
//!
//! Workers and critics are either rule-based ([`env::synthetic`]) or models
//! behind a chat-completions endpoint ([`remote`]).
//!
//! Runnable examples, one per capability (`cargo run --release --example NAME`):
//!
//! - `gradient_check`: analytic vs finite-difference policy gradient
//! - `keyword_convergence`: single-context training curve
//! - `buffer_ablation`: steps to threshold with and without the buffer
//! - `multitask`: one prompter conditioned on four task descriptions
//! - `evo_vs_rl`: RL against the evolutionary baseline at equal worker calls
//! - `remote_endpoint`: training against an HTTP endpoint (local stand-in)
//! - `inspect_run`: writing a run directory and reading it back

pub mod buffer;
pub mod critique;
pub mod env;
pub mod error;
pub mod evo;
pub mod harness;
pub mod policy;
pub mod remote;
pub mod rng;
pub mod trainer;
pub mod vocab;

pub use error::{Error, Result};
