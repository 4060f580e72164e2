use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::report::{Artifact, Check, Findings};
use super::{csv_bytes, ks_of, mean_sd};
use crate::environment::{sample_environment, sample_q_environment, solve_s, OmegaDistribution};
use crate::error::{Error, Result};
use crate::limits::{EmpiricalCdf, StableSpec};
use crate::quenched::{
    backtrack_depth, block_moments_range, conditioned_environment, laplace_bounds, variance_crossing, ReflectionPolicy,
};
use crate::rng::{derive_seed, stream, Domain};
use crate::walk::{excursion_samples, SampleKind, SampleRow, WalkConfig, Walker};

/// Effectively unbounded step budget for walks whose mean is known.
const NO_CENSORING: u64 = u64::MAX / 2;

/// `X_t / t` over `paths` walks, each in a fresh environment on
/// `[-left_context, t]` reflected at its left edge, against the speed.
pub fn speed(
    dist: &OmegaDistribution,
    t: u64,
    paths: usize,
    left_context: usize,
    seed: u64,
    rel_tol: f64,
) -> Result<Findings> {
    let v = dist
        .speed()
        .ok_or_else(|| Error::Config("the speed is zero for this distribution".into()))?;
    let cfg = WalkConfig::new(ReflectionPolicy::None, NO_CENSORING);
    let xs: Vec<i64> = (0..paths as u64)
        .into_par_iter()
        .map(|i| {
            let env = sample_environment(dist, -(left_context as i64), t as i64, derive_seed(seed, i))?;
            let walker = Walker::new(&env, None, cfg)?;
            Ok(walker.position(t, &mut stream(seed, Domain::Walk, i))?.x)
        })
        .collect::<Result<_>>()?;
    let ratios: Vec<f64> = xs.iter().map(|&x| x as f64 / t as f64).collect();
    let (mean, sd) = mean_sd(&ratios);
    let rel_err = (mean - v).abs() / v;
    let rows: Vec<SampleRow> = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| SampleRow {
            path_id: i as u64,
            kind: SampleKind::X,
            value: x,
            censored: false,
        })
        .collect();
    Ok(Findings {
        n_samples: paths,
        checks: vec![Check::at_most("speed_rel_err", rel_err, rel_tol)],
        details: json!({
            "v_exact": v,
            "v_estimate": mean,
            "standard_error": sd / (paths as f64).sqrt(),
            "t": t,
        }),
        artifacts: vec![Artifact::new("samples.csv", csv_bytes(&rows)?)],
        ..Findings::default()
    })
}

/// `(T_n - n / v) / n^{1/s}` over `reps` fresh environments on `[-n, n]`,
/// against the stable law of index `s` with median-fitted scale. Reported
/// without a gate.
pub fn annealed_stable(dist: &OmegaDistribution, n: u64, reps: usize, seed: u64) -> Result<Findings> {
    let params = solve_s(dist)?;
    let v = params
        .v_p
        .ok_or_else(|| Error::Config("the speed is zero for this distribution".into()))?;
    let cfg = WalkConfig::new(ReflectionPolicy::None, NO_CENSORING);
    let n_i = n as i64;
    let times: Vec<u64> = (0..reps as u64)
        .into_par_iter()
        .map(|i| {
            let env = sample_environment(dist, -n_i, n_i, derive_seed(seed, i))?;
            let walker = Walker::new(&env, None, cfg)?;
            Ok(walker.hitting_time(0, n_i, &mut stream(seed, Domain::Walk, i))?.steps)
        })
        .collect::<Result<_>>()?;
    let scale = (n as f64).powf(1.0 / params.s);
    let centre = n as f64 / v;
    let z: Vec<f64> = times.iter().map(|&t| (t as f64 - centre) / scale).collect();
    let ecdf = EmpiricalCdf::new(z.clone())?;
    let fit = StableSpec::fit_median(params.s, ecdf.median())?;
    let ks = ks_of(z, |x| fit.cdf(x).unwrap_or(f64::NAN))?;
    let rows: Vec<SampleRow> = times
        .iter()
        .enumerate()
        .map(|(i, &t)| SampleRow {
            path_id: i as u64,
            kind: SampleKind::T,
            value: t as i64,
            censored: false,
        })
        .collect();
    Ok(Findings {
        n_samples: reps,
        ks,
        fitted_b: Some(fit.b),
        details: json!({ "s": params.s, "v_p": v, "n": n }),
        artifacts: vec![Artifact::new("samples.csv", csv_bytes(&rows)?)],
        ..Findings::default()
    })
}

#[derive(Serialize)]
struct LaplaceRow {
    block_index: i64,
    lambda: f64,
    lower: f64,
    upper: f64,
    estimate: Option<f64>,
    standard_error: Option<f64>,
    covered: Option<bool>,
}

/// Laplace-transform bounds of `blocks` Q-blocks reflected at the depth of
/// `scale`: `lower <= upper` everywhere, and for the `mc_blocks` largest
/// blocks the Monte Carlo estimate of `E exp(-lambda T / mu)` lies within
/// `[lower - z se, upper + z se]` in at least a `coverage` fraction of cases.
#[allow(clippy::too_many_arguments)]
pub fn laplace_sandwich(
    dist: &OmegaDistribution,
    blocks: usize,
    scale: u64,
    mc_blocks: usize,
    samples: usize,
    lambdas: &[f64],
    seed: u64,
    z_tol: f64,
    coverage_tol: f64,
) -> Result<Findings> {
    let b = backtrack_depth(scale);
    let policy = ReflectionPolicy::Blocks { b };
    let q = sample_q_environment(dist, blocks, b, seed)?;
    let moments = block_moments_range(&q.env, &q.ladders, 1, blocks as i64, policy)?;
    let mut order: Vec<usize> = (0..moments.len()).collect();
    order.sort_by(|&i, &j| moments[j].m.total_cmp(&moments[i].m).then(i.cmp(&j)));
    let mut chosen = order[..mc_blocks.min(order.len())].to_vec();
    chosen.sort_unstable();

    let walker = Walker::new(&q.env, Some(&q.ladders), WalkConfig::new(policy, NO_CENSORING))?;
    let mc: Vec<Vec<f64>> = chosen
        .iter()
        .map(|&i| {
            let blk = q.ladders.block(moments[i].block_index).expect("block exists");
            let runs = excursion_samples(&walker, blk.start..blk.end, seed, (i as u64) << 32, samples)?;
            Ok(runs.iter().map(|r| r.total as f64 / moments[i].mu).collect())
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut ordered_violations = 0usize;
    let (mut covered, mut compared) = (0usize, 0usize);
    for (i, m) in moments.iter().enumerate() {
        let sim = chosen.binary_search(&i).ok().map(|c| &mc[c]);
        for &lambda in lambdas {
            let bounds = laplace_bounds(m, lambda)?;
            if bounds.upper.is_finite() && bounds.lower > bounds.upper {
                ordered_violations += 1;
            }
            let (estimate, se, ok) = match sim {
                Some(t) => {
                    let e: Vec<f64> = t.iter().map(|x| (-lambda * x).exp()).collect();
                    let (mean, sd) = mean_sd(&e);
                    let se = sd / (e.len() as f64).sqrt();
                    let ok = mean >= bounds.lower - z_tol * se && mean <= bounds.upper + z_tol * se;
                    compared += 1;
                    covered += ok as usize;
                    (Some(mean), Some(se), Some(ok))
                }
                None => (None, None, None),
            };
            rows.push(LaplaceRow {
                block_index: m.block_index,
                lambda,
                lower: bounds.lower,
                upper: bounds.upper,
                estimate,
                standard_error: se,
                covered: ok,
            });
        }
    }
    let coverage = if compared == 0 {
        1.0
    } else {
        covered as f64 / compared as f64
    };
    Ok(Findings {
        n_samples: chosen.len() * samples,
        checks: vec![
            Check::at_most("lower_above_upper", ordered_violations as f64, 0.0),
            Check::at_least("mc_coverage", coverage, coverage_tol),
        ],
        details: json!({
            "reflection_blocks": b,
            "mc_blocks": chosen.iter().map(|&i| moments[i].block_index).collect::<Vec<_>>(),
            "compared": compared,
        }),
        artifacts: vec![Artifact::new("laplace.csv", csv_bytes(&rows)?)],
        ..Findings::default()
    })
}

#[derive(Serialize)]
struct IdentityRow {
    block_index: i64,
    #[serde(rename = "M")]
    m: f64,
    mu: f64,
    #[serde(rename = "E_S")]
    e_s: f64,
    #[serde(rename = "E_N")]
    e_n: f64,
    failures: usize,
    mean_failure: f64,
    predicted_mean: f64,
    z_mean: f64,
    sigma2: f64,
    predicted_variance: f64,
    variance_rel_diff: f64,
}

/// `E T = E S + E N * E F` on `blocks` Q-blocks, with `E T`, `E S` and `E N`
/// exact and `E F` averaged over the failed excursions of `samples`
/// simulated crossings. Also reports the matching variance decomposition
/// `Var T = E N Var F + (E F)^2 Var N + Var S`.
pub fn excursion_identity(
    dist: &OmegaDistribution,
    blocks: usize,
    scale: u64,
    samples: usize,
    seed: u64,
    z_tol: f64,
) -> Result<Findings> {
    let b = backtrack_depth(scale);
    let policy = ReflectionPolicy::Blocks { b };
    let q = sample_q_environment(dist, blocks, b, seed)?;
    let moments = block_moments_range(&q.env, &q.ladders, 1, blocks as i64, policy)?;
    let walker = Walker::new(&q.env, Some(&q.ladders), WalkConfig::new(policy, NO_CENSORING))?;
    let rows: Vec<IdentityRow> = moments
        .iter()
        .map(|m| {
            let blk = q.ladders.block(m.block_index).expect("block exists");
            let offset = (m.block_index as u64) << 32;
            let runs = excursion_samples(&walker, blk.start..blk.end, seed, offset, samples)?;
            let f: Vec<f64> = runs
                .iter()
                .flat_map(|r| r.failure_times.iter().map(|&t| t as f64))
                .collect();
            let e_n = m.expected_failures();
            let var_n = e_n / m.p_success;
            let bar = conditioned_environment(&q.env, blk.start..blk.end)?;
            let var_s = variance_crossing(
                &bar,
                None,
                blk.start,
                blk.end,
                ReflectionPolicy::Fixed { site: blk.start },
            )?;
            let (mean_f, sd_f) = if f.len() >= 2 {
                mean_sd(&f)
            } else {
                (f64::NAN, f64::NAN)
            };
            let predicted_mean = m.e_s + e_n * mean_f;
            let se = e_n * sd_f / (f.len() as f64).sqrt();
            let predicted_variance = e_n * sd_f * sd_f + mean_f * mean_f * var_n + var_s;
            Ok(IdentityRow {
                block_index: m.block_index,
                m: m.m,
                mu: m.mu,
                e_s: m.e_s,
                e_n,
                failures: f.len(),
                mean_failure: mean_f,
                predicted_mean,
                z_mean: (m.mu - predicted_mean) / se,
                sigma2: m.sigma2,
                predicted_variance,
                variance_rel_diff: (predicted_variance - m.sigma2) / m.sigma2,
            })
        })
        .collect::<Result<_>>()?;
    let usable: Vec<&IdentityRow> = rows.iter().filter(|r| r.z_mean.is_finite()).collect();
    let max_z = usable.iter().map(|r| r.z_mean.abs()).fold(0.0, f64::max);
    let max_var = usable.iter().map(|r| r.variance_rel_diff.abs()).fold(0.0, f64::max);
    Ok(Findings {
        n_samples: blocks * samples,
        checks: vec![Check::at_most("max_abs_z", max_z, z_tol)],
        details: json!({
            "reflection_blocks": b,
            "blocks_compared": usable.len(),
            "blocks_without_failures": rows.len() - usable.len(),
            "max_variance_rel_diff": max_var,
        }),
        artifacts: vec![Artifact::new("identity.csv", csv_bytes(&rows)?)],
        ..Findings::default()
    })
}
