//! Steps to reach 0.90 validation reward on the keyword task with and
//! without the critiqued experience buffer, over a handful of seeds.
//!
//! ```text
//! cargo run --release --example buffer_ablation -- [seeds]
//! ```

use promptforge::env::synthetic::{CountRange, SyntheticConfig, SyntheticSuite};
use promptforge::harness::median;
use promptforge::trainer::{Trainer, TrainerConfig};

fn main() -> promptforge::Result<()> {
    let seeds: u64 = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(5);
    let mut arms = [Vec::new(), Vec::new()];
    for seed in 0..seeds {
        let env = SyntheticConfig {
            required: CountRange::exactly(3),
            forbidden: CountRange::exactly(1),
            seed,
            ..SyntheticConfig::default()
        };
        let suite = SyntheticSuite::generate(&env)?;
        let worker = suite.worker();
        let critic = suite.critic();
        for (arm, scalar_only) in [false, true].into_iter().enumerate() {
            let config = TrainerConfig {
                seed,
                scalar_only,
                threshold: 0.90,
                patience: 1000,
                ..TrainerConfig::default()
            };
            let trainer = Trainer::new(config, &suite.tasks, worker.as_ref(), &critic)?;
            let r = trainer.run()?.report;
            println!(
                "seed {seed}  {:<11}  steps {:>5}{}  test mean {:.3}",
                if scalar_only { "scalar-only" } else { "buffer" },
                r.steps_to_threshold,
                if r.censored { " (censored)" } else { "" },
                r.mean_test_reward,
            );
            arms[arm].push(r.steps_to_threshold as f64);
        }
    }
    let (b, s) = (median(&arms[0]).unwrap(), median(&arms[1]).unwrap());
    println!(
        "median steps: buffer {b}, scalar-only {s}, ratio {:.2}",
        b / s
    );
    Ok(())
}
