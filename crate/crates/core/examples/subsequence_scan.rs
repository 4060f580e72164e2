//! Scan Q-environments along a ladder of scales for blocks that dominate a
//! window (exponential event) and for windows of many comparable blocks
//! (Gaussian event).
//!
//! cargo run --release --example subsequence_scan

use rwre_lab::environment::{sample_q_environment, solve_s, OmegaDistribution};
use rwre_lab::subsequence::{scale_moments, scan, verify_report, DetectorConfig, ScaleLadder};

fn main() -> rwre_lab::Result<()> {
    let dist = OmegaDistribution::fixture();
    let s = solve_s(&dist)?.s;
    let ladder = ScaleLadder::geometric(16, 0.45, 50_000)?;
    let det = DetectorConfig::new(s);
    println!("scales n_k = {:?}, C = {}, eta = {}", ladder.counts(), det.c, det.eta);

    let last = ladder.n(ladder.len()) as usize;
    let mut total = 0;
    for seed in 0..40 {
        let q = sample_q_environment(&dist, last, ladder.context_needed(), seed)?;
        let out = scan(&q.env, &q.ladders, &ladder, &det, u64::MAX)?;
        for e in &out.events {
            let moments = scale_moments(&q.env, &q.ladders, &ladder, e.k)?;
            verify_report(e, &moments, &det)?;
            println!(
                "seed {seed:>2}: k = {} (d_k = {:>4}) {:?} at block {} with margin {:.3}",
                e.k, e.d_k, e.kind, e.witness, e.margin
            );
        }
        total += out.events.len();
    }
    println!("{total} events in 40 environments");
    Ok(())
}
