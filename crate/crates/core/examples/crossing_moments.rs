//! Exact quenched mean and variance of block crossing times, checked against
//! a direct first-step solve, plus the Laplace bounds they imply.
//!
//! cargo run --release --example crossing_moments

use rwre_lab::environment::{sample_q_environment, OmegaDistribution};
use rwre_lab::quenched::{backtrack_depth, block_moments_range, laplace_bounds, oracle_moments, ReflectionPolicy};

fn main() -> rwre_lab::Result<()> {
    let dist = OmegaDistribution::fixture();
    let scale = 1024;
    let b = backtrack_depth(scale);
    let q = sample_q_environment(&dist, 40, b, 3)?;
    let policy = ReflectionPolicy::at_scale(scale);
    let moments = block_moments_range(&q.env, &q.ladders, 1, 40, policy)?;

    println!("reflection {b} blocks back at scale {scale}");
    println!("{:>5} {:>10} {:>12} {:>14} {:>8}", "k", "M", "mu", "sigma2", "p");
    for m in &moments {
        println!(
            "{:>5} {:>10.3} {:>12.3} {:>14.3} {:>8.4}",
            m.block_index, m.m, m.mu, m.sigma2, m.p_success
        );
    }

    let big = moments.iter().max_by(|a, b| a.m.total_cmp(&b.m)).expect("blocks");
    let k = big.block_index;
    let reflect = q.ladders.nu(k - 1 - b as i64).expect("context block");
    let (start, end) = (q.ladders.nu(k - 1).unwrap(), q.ladders.nu(k).unwrap());
    let (mean, var) = oracle_moments(&q.env, end, reflect, start)?;
    println!(
        "\nlargest block {k}: recurrences mu = {:.6}, first-step solve {:.6}",
        big.mu, mean
    );
    println!(
        "                 sigma2 = {:.6}, first-step solve {:.6}",
        big.sigma2, var
    );

    println!("\nLaplace transform bounds for E exp(-lambda T / mu) on block {k}:");
    for lambda in [0.1, 0.5, 1.0, 2.0] {
        let lb = laplace_bounds(big, lambda)?;
        println!(
            "  lambda {lambda:>4}: [{:.4}, {:.4}]  exponential {:.4}",
            lb.lower,
            lb.upper,
            1.0 / (1.0 + lambda)
        );
    }
    Ok(())
}
