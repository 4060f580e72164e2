//! Monte Carlo walks: the law of large numbers for the position and crossing
//! times against their exact means.
//!
//! cargo run --release --example simulate_walk

use rayon::prelude::*;
use rwre_lab::environment::{sample_environment, solve_s, OmegaDistribution};
use rwre_lab::quenched::{expected_crossing, ReflectionPolicy};
use rwre_lab::rng::{derive_seed, stream, Domain};
use rwre_lab::walk::{hitting_times, simulate_position, WalkConfig, Walker};

fn main() -> rwre_lab::Result<()> {
    let dist = OmegaDistribution::fixture();
    let v = solve_s(&dist)?.v_p.expect("positive speed");
    let (t, paths, seed) = (200_000u64, 64u64, 5);

    let ratios: Vec<f64> = (0..paths)
        .into_par_iter()
        .map(|i| {
            let env = sample_environment(&dist, -1000, t as i64, derive_seed(seed, i))?;
            let cfg = WalkConfig::new(ReflectionPolicy::None, u64::MAX / 2);
            let mut rng = stream(seed, Domain::Walk, i);
            Ok(simulate_position(&env, None, t, cfg, &mut rng)?.x as f64 / t as f64)
        })
        .collect::<rwre_lab::Result<_>>()?;
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    println!("X_t / t over {paths} environments at t = {t}: {mean:.5} (v_P = {v:.5})");

    // Quenched: one environment, many walks.
    let env = sample_environment(&dist, 0, 400, 9)?;
    let walker = Walker::new(&env, None, WalkConfig::new(ReflectionPolicy::None, u64::MAX / 2))?;
    let exact = expected_crossing(&env, None, 0, 400, ReflectionPolicy::None)?;
    let hits = hitting_times(&walker, 0, 400, 9, 0, 20_000)?;
    let mc = hits.iter().map(|h| h.steps as f64).sum::<f64>() / hits.len() as f64;
    println!("E T_400 reflected at 0: exact {exact:.2}, Monte Carlo {mc:.2}");
    Ok(())
}
