use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::csv_bytes;
use super::report::{Artifact, Check, Findings};
use crate::environment::{sample_environment, sample_p_block, solve_s, OmegaDistribution, RUNAWAY_BLOCK_CAP};
use crate::error::Result;
use crate::limits::hill_estimator;
use crate::quenched::{crossing_moments, oracle_moments, ReflectionPolicy};
use crate::rng::{derive_seed, stream, Domain};

#[derive(Serialize)]
struct MomentRow {
    env: usize,
    lo: i64,
    target: i64,
    policy: &'static str,
    mean: f64,
    oracle_mean: f64,
    variance: f64,
    oracle_variance: f64,
    rel_err: f64,
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Exact crossing moments against the tridiagonal first-step oracle.
///
/// Environment `i` spans `[-depth, len)` with `depth <= max_depth` and
/// `len <= max_len` drawn at random; the walk crosses from 0 to a random
/// target, reflected at the left edge.
pub fn moments_check(
    dist: &OmegaDistribution,
    environments: usize,
    max_len: usize,
    max_depth: usize,
    seed: u64,
    rel_tol: f64,
) -> Result<Findings> {
    let rows: Vec<MomentRow> = (0..environments)
        .into_par_iter()
        .map(|i| -> Result<Vec<MomentRow>> {
            let mut rng = stream(seed, Domain::Auxiliary, i as u64);
            let depth = rng.random_range(0..=max_depth) as i64;
            let len = rng.random_range(1..=max_len.max(1)) as i64;
            let target = rng.random_range(1..=len);
            let env = sample_environment(dist, -depth, len, derive_seed(seed, i as u64))?;
            let (om, ov) = oracle_moments(&env, target, -depth, 0)?;
            [
                ("none", ReflectionPolicy::None),
                ("fixed", ReflectionPolicy::Fixed { site: -depth }),
            ]
            .into_iter()
            .map(|(name, policy)| {
                let c = crossing_moments(&env, None, 0, target, policy)?;
                Ok(MomentRow {
                    env: i,
                    lo: -depth,
                    target,
                    policy: name,
                    mean: c.mean,
                    oracle_mean: om,
                    variance: c.variance,
                    oracle_variance: ov,
                    rel_err: rel(c.mean, om).max(rel(c.variance, ov)),
                })
            })
            .collect()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let worst = rows.iter().map(|r| r.rel_err).fold(0.0, f64::max);
    Ok(Findings {
        n_samples: rows.len(),
        checks: vec![Check::at_most("max_rel_err", worst, rel_tol)],
        details: json!({ "max_rel_err": worst }),
        artifacts: vec![Artifact::new("moments.csv", csv_bytes(&rows)?)],
        ..Findings::default()
    })
}

const TAIL_CHUNK: usize = 10_000;

/// `log M` of `blocks` i.i.d. blocks; chunk `j` of 10^4 blocks is drawn from
/// stream `(seed, Environment, j)`.
pub(crate) fn sample_log_maxima(dist: &OmegaDistribution, blocks: usize, seed: u64) -> Result<Vec<f64>> {
    dist.check_transient()?;
    let sampler = dist.sampler()?;
    let chunks = blocks.div_ceil(TAIL_CHUNK);
    let out: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream(seed, Domain::Environment, j as u64);
            let count = TAIL_CHUNK.min(blocks - j * TAIL_CHUNK);
            let mut buf = Vec::new();
            (0..count)
                .map(|_| {
                    buf.clear();
                    sample_p_block(&sampler, &mut rng, &mut buf, RUNAWAY_BLOCK_CAP)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(out.concat())
}

#[derive(Serialize)]
struct TailRow {
    x: f64,
    survival: f64,
    scaled: f64,
}

/// Hill estimate of the tail index of block maxima from the `k` largest of
/// `blocks`, against `s`. Also tabulates `x^s P(M > x)`, whose plateau
/// estimates the tail constant.
pub fn m_tail(dist: &OmegaDistribution, blocks: usize, k: usize, seed: u64, hill_tol: f64) -> Result<Findings> {
    let s = solve_s(dist)?.s;
    let mut m: Vec<f64> = sample_log_maxima(dist, blocks, seed)?
        .into_iter()
        .map(f64::exp)
        .collect();
    let hill = hill_estimator(&m, k)?;
    m.sort_by(f64::total_cmp);
    let n = m.len() as f64;
    let table: Vec<TailRow> = (0..=40)
        .map(|i| {
            let x = 10f64.powf(i as f64 / 10.0);
            let above = m.len() - m.partition_point(|&v| v <= x);
            let survival = above as f64 / n;
            TailRow {
                x,
                survival,
                scaled: survival * x.powf(s),
            }
        })
        .collect();
    // Plateau estimate from the thresholds with at least k exceedances.
    let plateau: Vec<f64> = table
        .iter()
        .filter(|r| r.survival * n >= k as f64 && r.x >= 10.0)
        .map(|r| r.scaled)
        .collect();
    let c3 = (!plateau.is_empty()).then(|| plateau.iter().sum::<f64>() / plateau.len() as f64);
    Ok(Findings {
        n_samples: m.len(),
        hill: Some(hill),
        checks: vec![Check::at_most("hill_abs_err", (hill - s).abs(), hill_tol)],
        details: json!({ "s": s, "k": k, "tail_constant_estimate": c3 }),
        artifacts: vec![Artifact::new("tail.csv", csv_bytes(&table)?)],
        ..Findings::default()
    })
}
