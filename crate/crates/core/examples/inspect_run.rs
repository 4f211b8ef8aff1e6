//! Runs a short synthetic training job into a run directory, then reads the
//! directory back the way `promptforge inspect` does.
//!
//! ```text
//! cargo run --release --example inspect_run -- [out-dir]
//! ```

use std::path::PathBuf;

use promptforge::harness::{cmd_inspect, cmd_train, regenerate_report, Mode};

fn main() -> promptforge::Result<()> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| {
            std::env::temp_dir().join(format!("promptforge-inspect-{}", std::process::id()))
        });
    std::fs::create_dir_all(&out)?;
    let config = out.join("run.toml");
    std::fs::write(
        &config,
        "[trainer]\nmax_steps = 1500\neval_every = 50\npatience = 1000\n\n\
         [environment]\nsource = \"synthetic\"\nrequired = { min = 3, max = 3 }\nforbidden = { min = 1, max = 1 }\n",
    )?;
    let (run, _) = cmd_train(&config, None, Mode::Rl, Some(3), &out.join("rl"))?;

    let inspection = cmd_inspect(&run)?;
    println!("{}", inspection.render());
    // report.json is a pure function of metrics.jsonl.
    let regenerated = regenerate_report(&run)?;
    assert_eq!(
        regenerated,
        std::fs::read_to_string(run.join("report.json"))?
    );
    println!("run directory: {}", run.display());
    Ok(())
}
