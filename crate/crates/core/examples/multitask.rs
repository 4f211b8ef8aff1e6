//! Task-conditional prompting: one shared prompter trained on four keyword
//! contexts, each announced by its own description token.
//!
//! ```text
//! cargo run --release --example multitask -- [seed] [--scalar-only]
//! ```

use promptforge::env::synthetic::{CountRange, SyntheticConfig, SyntheticSuite};
use promptforge::trainer::{Trainer, TrainerConfig};

fn main() -> promptforge::Result<()> {
    let seed: u64 = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(0);
    let env = SyntheticConfig {
        contexts: 4,
        describe_contexts: true,
        required: CountRange::exactly(3),
        forbidden: CountRange::exactly(1),
        seed,
        ..SyntheticConfig::default()
    };
    let suite = SyntheticSuite::generate(&env)?;
    let worker = suite.worker();
    let critic = suite.critic();
    let scalar_only = std::env::args().any(|a| a == "--scalar-only");
    let config = TrainerConfig {
        seed,
        scalar_only,
        max_steps: 4000,
        patience: 1000,
        ..TrainerConfig::default()
    };
    let trainer = Trainer::new(config, &suite.tasks, worker.as_ref(), &critic)?;
    let outcome = trainer.run()?;

    for e in outcome.state.eval_history.iter().step_by(10) {
        let per: Vec<String> = e
            .per_context
            .iter()
            .map(|c| format!("{:.2}", c.reward))
            .collect();
        println!(
            "step {:>5}  mean {:.3}  [{}]",
            e.step,
            e.reward,
            per.join(" ")
        );
    }
    let last = outcome.state.eval_history.last().expect("evaluated");
    for c in &last.per_context {
        println!(
            "{}  {:.3}  {}  (optimal: {})",
            c.context_id,
            c.reward,
            suite.tasks.vocab.render(&c.prompt),
            suite.tasks.vocab.render(
                suite
                    .optimal_prompt(&c.context_id)
                    .expect("context")
                    .content()
            )
        );
    }
    Ok(())
}
