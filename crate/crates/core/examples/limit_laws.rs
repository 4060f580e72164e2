//! Stable distribution functions, goodness of fit and tail index estimation.
//!
//! cargo run --release --example limit_laws

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Pareto};
use rwre_lab::limits::{exp_cdf, hill_estimator, ks_critical_value, ks_distance, EmpiricalCdf, StableSpec};

fn main() -> rwre_lab::Result<()> {
    let law = StableSpec::new(0.75, 1.0)?;
    println!("totally skewed stable, index 0.75");
    for x in [0.1, 1.0, 10.0, 100.0, 1e4] {
        println!("  F({x:>7}) = {:.6}, 1 - F = {:.3e}", law.cdf(x)?, 1.0 - law.cdf(x)?);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let draws: Vec<f64> = (0..2000).map(|_| Exp1.sample(&mut rng)).collect();
    let ks = ks_distance(&EmpiricalCdf::new(draws)?, exp_cdf);
    println!(
        "Exp(1) sample of 2000: KS {ks:.4} (5% critical value {:.4})",
        ks_critical_value(2000, 0.05)
    );

    let pareto = Pareto::new(1.0, 1.5).expect("valid Pareto");
    let xs: Vec<f64> = (0..100_000).map(|_| pareto.sample(&mut rng)).collect();
    for k in [100, 1000, 10_000] {
        println!("Hill on Pareto(1.5), k = {k:>5}: {:.4}", hill_estimator(&xs, k)?);
    }

    let law = StableSpec::new(0.75, 4.0)?;
    let ys: Vec<f64> = (0..2000)
        .map(|_| law.quantile(rng.random()))
        .collect::<rwre_lab::Result<_>>()?;
    let sample = EmpiricalCdf::new(ys)?;
    let fitted = StableSpec::fit_median(0.75, sample.median())?;
    let ks = ks_distance(&sample, |x| fitted.cdf(x).unwrap_or(f64::NAN));
    println!("stable(0.75, b = 4) sample: median fit b = {:.4}, KS {ks:.4}", fitted.b);
    Ok(())
}
