use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::report::{Artifact, Check, Findings};
use super::{csv_bytes, ks_of};
use crate::environment::{sample_q_environment, solve_s, OmegaDistribution, QEnvironment};
use crate::error::{Error, Result};
use crate::limits::{exp_cdf, hill_estimator, EmpiricalCdf, StableSpec};
use crate::quenched::{backtrack_depth, crossing_moments, truncation_bound, ReflectionPolicy};
use crate::rng::derive_seed;
use crate::walk::{hitting_times, WalkConfig, Walker};

/// Blocks per search chunk of [`verify_block_exponential`].
const SEARCH_CHUNK: usize = 10_000;
/// Chunks sampled per parallel round of the search.
const SEARCH_ROUND: usize = 8;

#[derive(Serialize)]
struct BigBlock {
    chunk: u64,
    block_index: i64,
    #[serde(rename = "M")]
    m: f64,
    mu: f64,
    sigma2: f64,
    mean_ratio: f64,
    censored: usize,
}

/// Crossing times of large blocks against Exp(1).
///
/// Q-environments of 10^4 blocks (chunk `j` seeded by `derive_seed(seed, j)`)
/// are searched in order for blocks with `M > n^{(1-epsilon)/s}` until
/// `blocks` are found. Each is crossed `paths` times under reflection at
/// depth `b_n`, and the pooled `T / mu` is compared with Exp(1). With
/// `paths = 0` nothing is simulated and the report carries no KS distance.
pub fn verify_block_exponential(
    dist: &OmegaDistribution,
    epsilon: f64,
    n: u64,
    blocks: usize,
    paths: usize,
    max_search_blocks: u64,
    seed: u64,
    ks_tol: f64,
) -> Result<Findings> {
    let s = solve_s(dist)?.s;
    let threshold = (n as f64).powf((1.0 - epsilon) / s);
    let b = backtrack_depth(n);
    let policy = ReflectionPolicy::Blocks { b };
    let max_chunks = max_search_blocks.div_ceil(SEARCH_CHUNK as u64);

    let mut found: Vec<(u64, QEnvironment, i64)> = Vec::new();
    let mut next = 0u64;
    while found.len() < blocks {
        if next >= max_chunks {
            return Err(Error::Numerical(format!(
                "found {} of {blocks} blocks with M > {threshold} in {} blocks",
                found.len(),
                next * SEARCH_CHUNK as u64
            )));
        }
        let round: Vec<u64> = (next..(next + SEARCH_ROUND as u64).min(max_chunks)).collect();
        next += round.len() as u64;
        let hits: Vec<Vec<(u64, QEnvironment, i64)>> = round
            .into_par_iter()
            .map(|j| {
                let q = sample_q_environment(dist, SEARCH_CHUNK, b, derive_seed(seed, j))?;
                let ks: Vec<i64> = q
                    .ladders
                    .blocks()
                    .filter(|blk| blk.max() > threshold)
                    .map(|blk| blk.index)
                    .collect();
                Ok(ks.into_iter().map(|k| (j, q.clone(), k)).collect())
            })
            .collect::<Result<_>>()?;
        found.extend(hits.into_iter().flatten());
    }
    found.truncate(blocks);

    let results: Vec<(BigBlock, Vec<f64>)> = found
        .iter()
        .enumerate()
        .map(|(idx, (chunk, q, k))| {
            let blk = q.ladders.block(*k).expect("block exists");
            let c = crossing_moments(&q.env, Some(&q.ladders), blk.start, blk.end, policy)?;
            let walker = Walker::new(&q.env, Some(&q.ladders), WalkConfig::new(policy, u64::MAX / 2))?;
            let hits = hitting_times(&walker, blk.start, blk.end, seed, (idx as u64) << 32, paths)?;
            let ratios: Vec<f64> = hits.iter().map(|h| h.steps as f64 / c.mean).collect();
            let mean_ratio = ratios.iter().sum::<f64>() / ratios.len().max(1) as f64;
            let row = BigBlock {
                chunk: *chunk,
                block_index: *k,
                m: blk.max(),
                mu: c.mean,
                sigma2: c.variance,
                mean_ratio,
                censored: hits.iter().filter(|h| h.censored).count(),
            };
            Ok((row, ratios))
        })
        .collect::<Result<_>>()?;
    let (rows, ratios): (Vec<BigBlock>, Vec<Vec<f64>>) = results.into_iter().unzip();
    let pooled = ratios.concat();
    let censored: usize = rows.iter().map(|r| r.censored).sum();
    let ks = ks_of(pooled.clone(), exp_cdf)?;
    let checks = ks
        .map(|d| vec![Check::at_most("ks_exp", d, ks_tol)])
        .unwrap_or_default();
    Ok(Findings {
        n_samples: pooled.len(),
        ks,
        censored_rate: if pooled.is_empty() {
            0.0
        } else {
            censored as f64 / pooled.len() as f64
        },
        checks,
        details: json!({
            "s": s,
            "threshold": threshold,
            "reflection_blocks": b,
            "blocks_searched": next * SEARCH_CHUNK as u64,
        }),
        artifacts: vec![Artifact::new("blocks.csv", csv_bytes(&rows)?)],
        ..Findings::default()
    })
}

#[derive(Serialize)]
struct QqRow {
    p: f64,
    empirical: f64,
    model: f64,
}

/// Tail of `Var T / n^{2/s}` for the crossing of `n` Q-blocks reflected at
/// depth `b_n`, over `reps` environments (replicate `i` seeded by
/// `derive_seed(seed, i)`). The Hill index of the top `hill_fraction` is
/// compared with `s / 2`, and the sample with the stable law of index `s / 2`
/// whose median matches.
pub fn verify_variance_stable(
    dist: &OmegaDistribution,
    n: u64,
    reps: usize,
    hill_fraction: f64,
    seed: u64,
    hill_tol: f64,
    ks_tol: f64,
) -> Result<Findings> {
    let params = solve_s(dist)?;
    let s = params.s;
    let b = backtrack_depth(n);
    let policy = ReflectionPolicy::Blocks { b };
    let norm = (n as f64).powf(2.0 / s);
    let v: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|i| {
            let q = sample_q_environment(dist, n as usize, b, derive_seed(seed, i))?;
            let end = q.ladders.nu(n as i64).expect("n blocks sampled");
            Ok(crossing_moments(&q.env, Some(&q.ladders), 0, end, policy)?.variance / norm)
        })
        .collect::<Result<_>>()?;
    let k = ((hill_fraction * reps as f64).round() as usize).clamp(1, reps.saturating_sub(1).max(1));
    let hill = hill_estimator(&v, k)?;
    let ecdf = EmpiricalCdf::new(v.clone())?;
    let fit = StableSpec::fit_median(s / 2.0, ecdf.median())?;
    let ks = ks_of(v, |x| fit.cdf(x).unwrap_or(f64::NAN))?.unwrap_or(f64::NAN);
    let qq: Vec<QqRow> = (1..100)
        .map(|i| {
            let p = i as f64 / 100.0;
            Ok(QqRow {
                p,
                empirical: ecdf.quantile(p),
                model: fit.quantile(p)?,
            })
        })
        .collect::<Result<_>>()?;
    let monotone = qq
        .windows(2)
        .all(|w| w[1].model >= w[0].model && w[1].empirical >= w[0].empirical);
    Ok(Findings {
        n_samples: reps,
        ks: Some(ks),
        hill: Some(hill),
        fitted_b: Some(fit.b),
        checks: vec![
            Check::at_most("hill_abs_err", (hill - s / 2.0).abs(), hill_tol),
            Check::at_most("ks_stable", ks, ks_tol),
            Check::at_least("qq_monotone", monotone as u8 as f64, 1.0),
        ],
        details: json!({
            "s": s,
            "target_index": s / 2.0,
            "hill_k": k,
            "reflection_blocks": b,
            "truncation_bound": truncation_bound(params.e_rho, b),
        }),
        artifacts: vec![Artifact::new("qq.csv", csv_bytes(&qq)?)],
        ..Findings::default()
    })
}
