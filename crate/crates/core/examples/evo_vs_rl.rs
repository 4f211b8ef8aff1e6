//! Cost-matched comparison on an ordered-protocol task: the RL trainer
//! (with buffer) against the evolutionary baseline given the same number
//! of worker calls and the same starter prompt.
//!
//! ```text
//! cargo run --release --example evo_vs_rl -- [seed]
//! ```

use promptforge::env::synthetic::{SyntheticConfig, SyntheticSuite, TaskKind};
use promptforge::evo::{run_evolution, EvoConfig};
use promptforge::trainer::{Trainer, TrainerConfig};

fn main() -> promptforge::Result<()> {
    let seed: u64 = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(0);
    let env = SyntheticConfig {
        kind: TaskKind::Ordered,
        seed,
        ..SyntheticConfig::default()
    };
    let suite = SyntheticSuite::generate(&env)?;
    let worker = suite.worker();
    let critic = suite.critic();

    let config = TrainerConfig {
        seed,
        top_k: 1,
        patience: 1000,
        ..TrainerConfig::default()
    };
    let trainer = Trainer::new(config.clone(), &suite.tasks, worker.as_ref(), &critic)?;
    let rl = trainer.run()?.report;

    let evo_config = EvoConfig {
        seed,
        max_worker_calls: Some(rl.worker_calls),
        generations: usize::MAX,
        slice_size: config.slice_size,
        max_prompt_len: config.max_prompt_len,
        ..EvoConfig::default()
    };
    let evo = run_evolution(
        &evo_config,
        &suite.tasks,
        worker.as_ref(),
        &critic,
        &trainer.starter_prompts()?,
    )?;

    println!(
        "protocol      {}",
        suite
            .tasks
            .vocab
            .render(suite.optimal_prompt("task0").expect("context").content())
    );
    println!(
        "rl   test {:.3}  calls {}",
        rl.mean_test_reward, rl.worker_calls
    );
    if let Some(p) = rl.top_prompts.first() {
        println!("     prompt   {}", suite.tasks.vocab.render(&p.prompt));
    }
    println!(
        "evo  test {:.3}  calls {}  generations {}",
        evo.mean_test_reward, evo.worker_calls, evo.generations_run
    );
    println!(
        "     prompt   {}",
        suite.tasks.vocab.render(&evo.per_context[0].best_prompt)
    );
    Ok(())
}
