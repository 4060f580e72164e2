//! A block crossing as a geometric number of failed excursions followed by a
//! success: exact success probability and success time, and the Monte Carlo
//! counterpart.
//!
//! cargo run --release --example excursions

use rwre_lab::environment::{sample_q_environment, OmegaDistribution};
use rwre_lab::quenched::{expected_crossing, expected_success_time, success_probability, ReflectionPolicy};
use rwre_lab::walk::{excursion_samples, WalkConfig, Walker};

fn main() -> rwre_lab::Result<()> {
    let dist = OmegaDistribution::fixture();
    let q = sample_q_environment(&dist, 200, 0, 21)?;
    let k = (1..=200)
        .max_by(|&a, &b| {
            q.ladders
                .block_max(a)
                .unwrap()
                .total_cmp(&q.ladders.block_max(b).unwrap())
        })
        .expect("blocks");
    let block = q.ladders.block(k).expect("block");
    let range = block.start..block.end;

    let p = success_probability(&q.env, range.clone())?;
    let e_s = expected_success_time(&q.env, range.clone())?;
    let policy = ReflectionPolicy::Fixed {
        site: q.env.left_index(),
    };
    let mu = expected_crossing(&q.env, None, block.start, block.end, policy)?;
    let e_n = (1.0 - p) / p;
    println!("block {k}: {} sites, M = {:.2}", block.len(), block.max());
    println!("P(success) = {p:.6}, E N = {e_n:.3}, E S = {e_s:.3}, E T = {mu:.3}");

    let walker = Walker::new(&q.env, None, WalkConfig::new(policy, u64::MAX / 2))?;
    let samples = excursion_samples(&walker, range, 21, 0, 20_000)?;
    let n = samples.len() as f64;
    let failures: Vec<u64> = samples.iter().flat_map(|s| s.failure_times.iter().copied()).collect();
    let mean_n = samples.iter().map(|s| s.n_failures as f64).sum::<f64>() / n;
    let mean_s = samples.iter().map(|s| s.success_time as f64).sum::<f64>() / n;
    let mean_f = failures.iter().sum::<u64>() as f64 / failures.len().max(1) as f64;
    let mean_t = samples.iter().map(|s| s.total as f64).sum::<f64>() / n;
    println!("Monte Carlo: N {mean_n:.3}, S {mean_s:.3}, F {mean_f:.3}, T {mean_t:.3}");
    println!("E S + E N * mean F = {:.3}", e_s + e_n * mean_f);
    Ok(())
}
