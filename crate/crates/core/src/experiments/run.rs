use serde_json::json;

use super::config::{ExperimentConfig, ExperimentSpec};
use super::exact::{m_tail, moments_check};
use super::laws::{verify_block_exponential, verify_variance_stable};
use super::report::{ArtifactDigest, ExperimentReport, Findings, Outcome};
use super::subseq::{clt_subsequence, exp_subsequence, scan_experiment};
use super::walks::{annealed_stable, excursion_identity, laplace_sandwich, speed};
use crate::error::{Error, Result};

/// Worker threads: `explicit` if given, else `RWRE_WORKERS`, else all cores.
pub fn worker_count(explicit: Option<usize>) -> Result<usize> {
    if let Some(n) = explicit {
        return if n == 0 {
            Err(Error::Config("--workers must be positive".into()))
        } else {
            Ok(n)
        };
    }
    match std::env::var("RWRE_WORKERS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Config(format!(
                "RWRE_WORKERS must be a positive integer, got `{v}`"
            ))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Runs `cfg` on a pool of `workers` threads.
pub fn run_with_workers(cfg: &ExperimentConfig, workers: usize) -> Result<Outcome> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run(cfg))
}

/// Runs `cfg` on the current thread pool.
pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    let findings = dispatch(cfg)?;
    let digests = findings
        .artifacts
        .iter()
        .map(|a| ArtifactDigest {
            name: a.name.clone(),
            sha256: a.sha256(),
        })
        .collect();
    let report = ExperimentReport {
        experiment: cfg.experiment.name().into(),
        config_hash: cfg.hash(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.seed,
        params: json!({ "distribution": cfg.distribution, "experiment": cfg.experiment }),
        n_samples: findings.n_samples,
        ks: findings.ks,
        hill: findings.hill,
        fitted_b: findings.fitted_b,
        censored_rate: findings.censored_rate,
        passed: findings.checks.iter().all(|c| c.passed),
        checks: findings.checks,
        artifacts: digests,
        details: findings.details,
    };
    Ok(Outcome {
        report,
        artifacts: findings.artifacts,
    })
}

fn dispatch(cfg: &ExperimentConfig) -> Result<Findings> {
    let dist = &cfg.distribution;
    let seed = cfg.seed;
    let tol = &cfg.tolerances;
    match &cfg.experiment {
        ExperimentSpec::MomentsCheck {
            environments,
            max_len,
            max_depth,
        } => moments_check(dist, *environments, *max_len, *max_depth, seed, tol.rel.unwrap_or(1e-9)),
        ExperimentSpec::MTail { blocks, k } => m_tail(dist, *blocks, *k, seed, tol.hill.unwrap_or(0.15)),
        ExperimentSpec::Speed { t, paths, left_context } => {
            speed(dist, *t, *paths, *left_context, seed, tol.rel.unwrap_or(0.01))
        }
        ExperimentSpec::BlockExponential {
            n,
            epsilon,
            blocks,
            paths,
            max_search_blocks,
        } => verify_block_exponential(
            dist,
            *epsilon,
            *n,
            *blocks,
            *paths,
            *max_search_blocks,
            seed,
            tol.ks.unwrap_or(0.05),
        ),
        ExperimentSpec::VarianceStable { n, reps, hill_fraction } => verify_variance_stable(
            dist,
            *n,
            *reps,
            *hill_fraction,
            seed,
            tol.hill.unwrap_or(0.15),
            tol.ks.unwrap_or(0.08),
        ),
        ExperimentSpec::Scan {
            counts,
            delta,
            detectors,
            budget,
        } => scan_experiment(dist, counts, *delta, detectors, *budget, seed),
        ExperimentSpec::CltSubsequence {
            counts,
            delta,
            a,
            eta,
            paths,
            plant,
            max_environments,
        } => clt_subsequence(
            dist,
            counts,
            *delta,
            *a,
            *eta,
            *paths,
            plant.as_ref(),
            *max_environments,
            seed,
            tol.ks.unwrap_or(0.05),
        ),
        ExperimentSpec::ExpSubsequence {
            counts,
            delta,
            c,
            eta,
            paths,
            max_environments,
        } => exp_subsequence(
            dist,
            counts,
            *delta,
            *c,
            *eta,
            *paths,
            *max_environments,
            seed,
            tol.ks.unwrap_or(0.07),
        ),
        ExperimentSpec::AnnealedStable { n, reps } => annealed_stable(dist, *n, *reps, seed),
        ExperimentSpec::LaplaceSandwich {
            blocks,
            scale,
            mc_blocks,
            samples,
            lambdas,
        } => laplace_sandwich(
            dist,
            *blocks,
            *scale,
            *mc_blocks,
            *samples,
            lambdas,
            seed,
            tol.z.unwrap_or(3.0),
            tol.coverage.unwrap_or(0.95),
        ),
        ExperimentSpec::ExcursionIdentity { blocks, scale, samples } => {
            excursion_identity(dist, *blocks, *scale, *samples, seed, tol.z.unwrap_or(3.0))
        }
    }
}
