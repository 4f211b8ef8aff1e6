//! Compares the analytic gradient of log πθ(p | c) with central finite
//! differences on a small random policy.
//!
//! ```text
//! cargo run --release --example gradient_check -- [seed]
//! ```

use promptforge::policy::{grad_log_prob, init_params, log_prob, Dims};

fn main() -> promptforge::Result<()> {
    let seed: u64 = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(0);
    let dims = Dims {
        vocab_size: 12,
        d_embed: 5,
        d_hidden: 8,
    };
    let params = init_params(seed, dims)?;
    let conditioning = [3, 7, 2];
    let prompt = [4, 9, 4, 1];

    let (lp, grad) = grad_log_prob(&params, &conditioning, &prompt)?;
    println!("log prob {lp:.6} over {} parameters", params.len());
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let mut p = params.clone();
        let x = p.get_flat(i);
        p.set_flat(i, x + h);
        let up = log_prob(&p, &conditioning, &prompt)?;
        p.set_flat(i, x - h);
        let down = log_prob(&p, &conditioning, &prompt)?;
        let numeric = (up - down) / (2.0 * h);
        let analytic = grad.get_flat(i);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    println!("worst relative error {worst:.3e}");
    Ok(())
}
