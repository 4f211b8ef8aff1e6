//! Trains the prompter on a single-context keyword task and prints the
//! validation curve.
//!
//! ```text
//! cargo run --release --example keyword_convergence -- [seed] [--scalar-only]
//! ```

use promptforge::env::synthetic::{CountRange, SyntheticConfig, SyntheticSuite};
use promptforge::trainer::{Trainer, TrainerConfig};

fn main() -> promptforge::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let seed: u64 = args.iter().find_map(|a| a.parse().ok()).unwrap_or(0);
    let scalar_only = args.iter().any(|a| a == "--scalar-only");

    let env = SyntheticConfig {
        required: CountRange::exactly(3),
        forbidden: CountRange::exactly(1),
        seed,
        ..SyntheticConfig::default()
    };
    let suite = SyntheticSuite::generate(&env)?;
    let worker = suite.worker();
    let critic = suite.critic();
    let config = TrainerConfig {
        seed,
        scalar_only,
        patience: 1000,
        ..TrainerConfig::default()
    };
    let trainer = Trainer::new(config, &suite.tasks, worker.as_ref(), &critic)?;

    let started = std::time::Instant::now();
    let outcome = trainer.run()?;
    for (step, reward) in &outcome.report.eval_curve {
        println!("step {step:>5}  validation {reward:.3}");
    }
    let r = &outcome.report;
    println!(
        "steps to {:.2}: {}{}  test mean {:.3}  worker calls {}  ({:.1}s)",
        r.threshold,
        r.steps_to_threshold,
        if r.censored { " (censored)" } else { "" },
        r.mean_test_reward,
        r.worker_calls,
        started.elapsed().as_secs_f64()
    );
    if let Some(p) = r.top_prompts.first() {
        println!("best prompt: {}", suite.tasks.vocab.render(&p.prompt));
    }
    Ok(())
}
