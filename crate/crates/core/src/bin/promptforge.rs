use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use promptforge::harness::{cmd_compare, cmd_inspect, cmd_train, Mode, RunResult};

#[derive(Parser)]
#[command(
    name = "promptforge",
    version,
    about = "Train prompt-generating policies against frozen workers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Rl,
    RlNoBuffer,
    Evo,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Rl => Mode::Rl,
            ModeArg::RlNoBuffer => Mode::RlNoBuffer,
            ModeArg::Evo => Mode::Evo,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one optimizer and write a run directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// JSONL dataset (remote environments only).
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "rl")]
        mode: ModeArg,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Buffer vs scalar-only runs over several seeds.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        /// Also run the evolutionary baseline at the same worker-call budget.
        #[arg(long)]
        evo: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print buffers, top prompts and the evaluation curve of a run.
    Inspect {
        run: PathBuf,
        /// Print only the `step,eval_reward` series.
        #[arg(long)]
        csv: bool,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> promptforge::Result<()> {
    match cli.command {
        Command::Train {
            config,
            dataset,
            mode,
            seed,
            out,
        } => {
            let (dir, result) = cmd_train(&config, dataset.as_deref(), mode.into(), seed, &out)?;
            match &result {
                RunResult::Trainer(r) => {
                    println!(
                        "test reward {:.4}  best eval {:.4} at step {}  worker calls {}",
                        r.mean_test_reward, r.best_eval_reward, r.best_eval_step, r.worker_calls
                    );
                    if let Some(f) = &r.failure {
                        eprintln!("run ended early: {f}");
                    }
                }
                RunResult::Evolution(r) => println!(
                    "test reward {:.4}  generations {}  worker calls {}",
                    r.mean_test_reward, r.generations_run, r.worker_calls
                ),
            }
            println!("{}", dir.display());
        }
        Command::Compare {
            config,
            dataset,
            seeds,
            evo,
            out,
        } => {
            let report = cmd_compare(&config, dataset.as_deref(), &seeds, evo, &out)?;
            println!("seed  buffer  scalar-only");
            for s in &report.seeds {
                let mark = |censored: bool| if censored { "+" } else { "" };
                println!(
                    "{:>4}  {:>6}{:1}  {:>6}{:1}",
                    s.seed,
                    s.buffer.steps_to_threshold,
                    mark(s.buffer.censored),
                    s.scalar_only.steps_to_threshold,
                    mark(s.scalar_only.censored)
                );
            }
            match report.relative_efficiency {
                Some(r) => println!("relative efficiency {r:.2}x (+ = censored at budget)"),
                None => println!("relative efficiency undefined"),
            }
            for r in &report.reference {
                println!("reference {}: {:.2}x", r.task, r.relative_efficiency);
            }
        }
        Command::Inspect { run, csv } => {
            let inspection = cmd_inspect(&run)?;
            if csv {
                print!("{}", inspection.curve_csv());
            } else {
                print!("{}", inspection.render());
            }
        }
    }
    Ok(())
}
