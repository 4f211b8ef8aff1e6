//! Trains against a chat-completions endpoint. A local stand-in server plays
//! both the worker and the critic: it answers correctly only when the system
//! instruction contains both "exact" and "number", and its critique names
//! whichever is missing.
//! Point `[endpoint]` at a real server to use an actual model.
//!
//! ```text
//! cargo run --release --example remote_endpoint
//! ```

use promptforge::harness::{cmd_inspect, cmd_train, Mode};
use promptforge::remote::mock::{MockEndpoint, MockResponse};

fn main() -> promptforge::Result<()> {
    let server = MockEndpoint::start(|req| {
        let system = req.message("system").unwrap_or_default();
        let user = req.message("user").unwrap_or_default();
        if let Some(instruction) = user.split("System instruction:\n").nth(1) {
            let has = |w: &str| {
                instruction
                    .lines()
                    .next()
                    .unwrap_or("")
                    .split_whitespace()
                    .any(|t| t == w)
            };
            let missing = if has("exact") { "number" } else { "exact" };
            MockResponse::chat(&format!("The instruction should add the word {missing}."))
        } else if ["exact", "number"]
            .iter()
            .all(|w| system.split_whitespace().any(|t| t == *w))
        {
            MockResponse::chat(&format!("{}", user.len()))
        } else {
            MockResponse::chat("roughly some number")
        }
    })?;

    let dir = std::env::temp_dir().join(format!("promptforge-remote-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let mut lines = String::new();
    for (i, split) in [
        "train",
        "train",
        "train",
        "validation",
        "validation",
        "test",
        "test",
    ]
    .iter()
    .enumerate()
    {
        let input = "x".repeat(i + 3);
        lines.push_str(&format!(
            "{{\"context_id\":\"length\",\"input\":\"{input}\",\"target\":\"{}\",\"split\":\"{split}\"}}\n",
            input.len()
        ));
    }
    let dataset = dir.join("tasks.jsonl");
    std::fs::write(&dataset, lines)?;
    let config = dir.join("run.toml");
    std::fs::write(
        &config,
        format!(
            "[trainer]\nmax_steps = 150\neval_every = 10\npatience = 100\ngroup_size = 8\nslice_size = 3\nmax_prompt_len = 6\n\n\
             [environment]\nsource = \"remote\"\nvocabulary = [\"answer\", \"exact\", \"briefly\", \"number\", \"please\"]\n\n\
             [endpoint]\nbase_url = \"{}\"\nmodel = \"stand-in\"\n",
            server.base_url()
        ),
    )?;

    let (run, result) = cmd_train(&config, Some(&dataset), Mode::Rl, Some(0), &dir.join("run"))?;
    println!(
        "test reward {:.3} after {} worker calls",
        result.mean_test_reward(),
        result.worker_calls()
    );
    println!("{}", cmd_inspect(&run)?.render());
    println!("{} requests served", server.requests().len());
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
