use rand::Rng;
use rayon::prelude::*;
use serde_json::json;

use super::config::{DetectorParams, PlantSpec};
use super::report::{Artifact, Check, Findings};
use super::{csv_bytes, ks_of, mean_sd};
use crate::environment::{
    sample_p_block, sample_q_environment, solve_s, Environment, OmegaDistribution, QEnvironment, SiteSampler,
    RUNAWAY_BLOCK_CAP,
};
use crate::error::{Error, Result};
use crate::io::write_env_text;
use crate::limits::{normal_cdf, shifted_exp_cdf};
use crate::quenched::{crossing_moments, expected_crossing, BlockMoments, ReflectionPolicy};
use crate::rng::{derive_seed, stream, Domain};
use crate::subsequence::{
    detect_exponential_event, detect_gaussian_event, gaussian_slack, scale_moments, scan, verify_report, write_events,
    DetectorConfig, EventKind, EventReport, GaussianSlack, ScaleLadder,
};
use crate::walk::{hitting_times, SampleKind, SampleRow, WalkConfig, Walker};

/// Environments tried per parallel round of a natural search.
const SEARCH_ROUND: usize = 8;
/// Rejection-sampling attempts allowed per planted block.
const MAX_BLOCK_TRIES: usize = 10_000_000;
const PLANT_TRIES: usize = 100_000;

pub(crate) fn detector(s: f64, p: &DetectorParams) -> DetectorConfig {
    DetectorConfig {
        s,
        c: p.c,
        eta: p.eta,
        a: p.a,
        exponential: p.exponential,
        gaussian: p.gaussian,
    }
}

fn events_bytes(rows: &[EventReport]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_events(&mut buf, rows)?;
    Ok(buf)
}

fn env_bytes(q: &QEnvironment) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_env_text(&mut buf, &q.env)?;
    Ok(buf)
}

/// The Q-environment a scan of `ladder` runs on: `n_last` blocks plus the
/// left context the deepest reflection needs.
pub fn scan_environment(dist: &OmegaDistribution, ladder: &ScaleLadder, seed: u64) -> Result<QEnvironment> {
    sample_q_environment(dist, ladder.n(ladder.len()) as usize, ladder.context_needed(), seed)
}

/// Runs the detectors along a scale ladder on one Q-environment and
/// re-verifies every event from the raw moments.
pub fn scan_experiment(
    dist: &OmegaDistribution,
    counts: &[u64],
    delta: f64,
    params: &DetectorParams,
    budget: u64,
    seed: u64,
) -> Result<Findings> {
    let s = solve_s(dist)?.s;
    let ladder = ScaleLadder::from_counts(counts.to_vec(), delta)?;
    let det = detector(s, params);
    let q = scan_environment(dist, &ladder, seed)?;
    let out = scan(&q.env, &q.ladders, &ladder, &det, budget)?;
    let mut unverified = 0usize;
    for e in &out.events {
        let moments = scale_moments(&q.env, &q.ladders, &ladder, e.k)?;
        unverified += verify_report(e, &moments, &det).is_err() as usize;
    }
    Ok(Findings {
        n_samples: out.events.len(),
        checks: vec![Check::at_most("unverified_events", unverified as f64, 0.0)],
        details: json!({
            "s": s,
            "scales_done": out.scales_done,
            "partial": out.partial,
            "context_blocks": ladder.context_needed(),
        }),
        artifacts: vec![Artifact::new("events.csv", events_bytes(&out.events)?)],
        ..Findings::default()
    })
}

/// Draws up to `tries` blocks until `accept(block, log M)` holds.
fn block_where<R, F>(sampler: &SiteSampler, rng: &mut R, tries: usize, accept: F) -> Result<Option<Vec<f64>>>
where
    R: Rng + ?Sized,
    F: Fn(&[f64], f64) -> Result<bool>,
{
    let mut b = Vec::new();
    for _ in 0..tries {
        b.clear();
        let m = sample_p_block(sampler, rng, &mut b, RUNAWAY_BLOCK_CAP)?;
        if accept(&b, m)? {
            return Ok(Some(b));
        }
    }
    Ok(None)
}

fn block_where_or_fail<R, F>(sampler: &SiteSampler, rng: &mut R, accept: F) -> Result<Vec<f64>>
where
    R: Rng + ?Sized,
    F: Fn(&[f64], f64) -> Result<bool>,
{
    block_where(sampler, rng, MAX_BLOCK_TRIES, accept)?
        .ok_or_else(|| Error::Numerical(format!("no acceptable block in {MAX_BLOCK_TRIES} draws")))
}

/// Crossing mean of `block` appended after `prev`, reflected at the start of
/// `prev`.
fn mean_after(prev: &[Vec<f64>], block: &[f64]) -> Result<f64> {
    let mut sites: Vec<f64> = prev.concat();
    let from = sites.len() as i64;
    sites.extend_from_slice(block);
    let to = sites.len() as i64;
    expected_crossing(&Environment::new(0, sites)?, None, from, to, ReflectionPolicy::None)
}

/// One planted environment for the last scale of `ladder`; see [`PlantSpec`].
/// `None` when the blocks already drawn leave no attainable crossing mean in
/// `[mu_lo, mu_hi]` for a planted position.
fn planted_environment(
    dist: &OmegaDistribution,
    ladder: &ScaleLadder,
    a: usize,
    eta: f64,
    plant: &PlantSpec,
    seed: u64,
    attempt: u64,
) -> Result<Option<QEnvironment>> {
    let sampler = dist.sampler()?;
    let mut rng = stream(seed, Domain::Search, attempt);
    let k = ladder.len();
    let before = ladder.n(k - 1) as usize;
    let d = ladder.d(k) as usize;
    let head = ((eta * d as f64).floor() as usize).min(d);
    if head < 2 * a {
        return Err(Error::Config(format!(
            "cannot plant {} blocks in a head of {head}",
            2 * a
        )));
    }
    let planted: Vec<usize> = (0..2 * a)
        .map(|j| ((j as f64 + 0.5) * head as f64 / (2 * a) as f64) as usize)
        .collect();
    let log_cap = plant.m_cap.ln();
    let depth = ladder.b(k);
    let mut natural = || block_where_or_fail(&sampler, &mut rng, |_, _| Ok(true));
    let context: Vec<Vec<f64>> = (0..ladder.context_needed()).map(|_| natural()).collect::<Result<_>>()?;
    let mut right: Vec<Vec<f64>> = (0..before).map(|_| natural()).collect::<Result<_>>()?;
    for w in 0..d {
        let b = if planted.binary_search(&w).is_ok() {
            let found = block_where(&sampler, &mut rng, PLANT_TRIES, |b, _| {
                let mu = mean_after(&right[right.len() - depth..], b)?;
                Ok(mu >= plant.mu_lo && mu <= plant.mu_hi)
            })?;
            match found {
                Some(b) => b,
                None => return Ok(None),
            }
        } else {
            block_where_or_fail(&sampler, &mut rng, |_, m| Ok(m <= log_cap))?
        };
        right.push(b);
    }
    QEnvironment::assemble(&context, &right).map(Some)
}

/// Natural search: environment `i` is `scan_environment(derive_seed(seed, i))`;
/// returns the first (in `i`) whose last-scale moments satisfy `hit`.
fn natural_search<F>(
    dist: &OmegaDistribution,
    ladder: &ScaleLadder,
    max_environments: usize,
    seed: u64,
    hit: F,
) -> Result<(u64, QEnvironment, Vec<BlockMoments>)>
where
    F: Fn(&[BlockMoments]) -> bool + Sync,
{
    let k = ladder.len();
    let mut next = 0u64;
    while next < max_environments as u64 {
        let round: Vec<u64> = (next..(next + SEARCH_ROUND as u64).min(max_environments as u64)).collect();
        next += round.len() as u64;
        let found: Vec<Option<(u64, QEnvironment, Vec<BlockMoments>)>> = round
            .into_par_iter()
            .map(|i| {
                let q = scan_environment(dist, ladder, derive_seed(seed, i))?;
                let m = scale_moments(&q.env, &q.ladders, ladder, k)?;
                Ok(hit(&m).then_some((i, q, m)))
            })
            .collect::<Result<_>>()?;
        if let Some(f) = found.into_iter().flatten().next() {
            return Ok(f);
        }
    }
    Err(Error::Numerical(format!(
        "no environment among {max_environments} satisfies the event"
    )))
}

struct Segment {
    z: Vec<f64>,
    rows: Vec<SampleRow>,
    mean: f64,
    variance: f64,
    censored: usize,
}

/// `(T - E T) / sqrt(Var T)` for the crossing of the last scale's window.
fn segment_samples(q: &QEnvironment, ladder: &ScaleLadder, paths: usize, seed: u64) -> Result<Segment> {
    let k = ladder.len();
    let policy = ReflectionPolicy::at_scale(ladder.d(k));
    let from = q.ladders.nu(ladder.n(k - 1) as i64).expect("window sampled");
    let to = q.ladders.nu(ladder.n(k) as i64).expect("window sampled");
    let c = crossing_moments(&q.env, Some(&q.ladders), from, to, policy)?;
    let walker = Walker::new(&q.env, Some(&q.ladders), WalkConfig::new(policy, u64::MAX / 2))?;
    let hits = hitting_times(&walker, from, to, seed, 0, paths)?;
    let sd = c.variance.sqrt();
    Ok(Segment {
        z: hits.iter().map(|h| (h.steps as f64 - c.mean) / sd).collect(),
        rows: hits
            .iter()
            .enumerate()
            .map(|(i, h)| SampleRow {
                path_id: i as u64,
                kind: SampleKind::T,
                value: h.steps as i64,
                censored: h.censored,
            })
            .collect(),
        mean: c.mean,
        variance: c.variance,
        censored: hits.iter().filter(|h| h.censored).count(),
    })
}

fn event(kind: EventKind, ladder: &ScaleLadder, s: f64, witness: i64, margin: f64) -> EventReport {
    let k = ladder.len();
    EventReport {
        k,
        kind,
        witness,
        margin,
        n_k: ladder.n(k),
        d_k: ladder.d(k),
        s,
    }
}

fn segment_findings(
    q: &QEnvironment,
    ladder: &ScaleLadder,
    ev: EventReport,
    seg: Segment,
    ks: Option<f64>,
    ks_tol: f64,
    extra: serde_json::Value,
) -> Result<Findings> {
    let (mean_z, sd_z) = mean_sd(&seg.z);
    let n = seg.z.len();
    let mut details = json!({
        "s": ev.s,
        "segment_mean": seg.mean,
        "segment_variance": seg.variance,
        "sample_mean_z": mean_z,
        "sample_sd_z": sd_z,
        "context_blocks": ladder.context_needed(),
    });
    if let (Some(d), Some(e)) = (details.as_object_mut(), extra.as_object()) {
        d.extend(e.clone());
    }
    Ok(Findings {
        n_samples: n,
        ks,
        censored_rate: seg.censored as f64 / n as f64,
        checks: ks.map(|d| vec![Check::at_most("ks", d, ks_tol)]).unwrap_or_default(),
        details,
        artifacts: vec![
            Artifact::new("events.csv", events_bytes(&[ev])?),
            Artifact::new("env.txt", env_bytes(q)?),
            Artifact::new("samples.csv", csv_bytes(&seg.rows)?),
        ],
        ..Findings::default()
    })
}

/// Crossing of the last window of `counts` on an environment where the
/// Gaussian event holds, normalized by its exact mean and variance, against
/// the standard normal. The environment is planted when `plant` is given and
/// searched for naturally otherwise.
#[allow(clippy::too_many_arguments)]
pub fn clt_subsequence(
    dist: &OmegaDistribution,
    counts: &[u64],
    delta: f64,
    a: usize,
    eta: f64,
    paths: usize,
    plant: Option<&PlantSpec>,
    max_environments: usize,
    seed: u64,
    ks_tol: f64,
) -> Result<Findings> {
    let s = solve_s(dist)?.s;
    let ladder = ScaleLadder::from_counts(counts.to_vec(), delta)?;
    let k = ladder.len();
    let (attempt, q, moments) = match plant {
        Some(p) => {
            let mut hit = None;
            let mut best: Option<GaussianSlack> = None;
            for attempt in 0..p.max_attempts as u64 {
                let Some(q) = planted_environment(dist, &ladder, a, eta, p, seed, attempt)? else {
                    continue;
                };
                let m = scale_moments(&q.env, &q.ladders, &ladder, k)?;
                let slack = gaussian_slack(&m, s, a, eta).expect("nonempty head");
                if slack.holds() {
                    hit = Some((attempt, q, m));
                    break;
                }
                if best.is_none_or(|b| slack.margin() > b.margin()) {
                    best = Some(slack);
                }
            }
            hit.ok_or_else(|| {
                Error::Numerical(format!(
                    "Gaussian event not planted in {} attempts; closest slack {best:?}",
                    p.max_attempts
                ))
            })?
        }
        None => natural_search(dist, &ladder, max_environments, seed, |m| {
            detect_gaussian_event(m, s, a, eta).is_some()
        })?,
    };
    let d = detect_gaussian_event(&moments, s, a, eta).expect("event holds");
    let ev = event(EventKind::Gaussian, &ladder, s, d.witness, d.margin);
    let seg = segment_samples(&q, &ladder, paths, seed)?;
    let ks = ks_of(seg.z.clone(), normal_cdf)?;
    let extra = json!({ "planted": plant.is_some(), "attempt": attempt, "a": a, "eta": eta });
    segment_findings(&q, &ladder, ev, seg, ks, ks_tol, extra)
}

/// Crossing of the last window of `counts` on the first searched
/// environment where the exponential event holds with constant `c`,
/// normalized by its exact mean and variance, against `Psi(x + 1)`.
#[allow(clippy::too_many_arguments)]
pub fn exp_subsequence(
    dist: &OmegaDistribution,
    counts: &[u64],
    delta: f64,
    c: f64,
    eta: f64,
    paths: usize,
    max_environments: usize,
    seed: u64,
    ks_tol: f64,
) -> Result<Findings> {
    let s = solve_s(dist)?.s;
    let ladder = ScaleLadder::from_counts(counts.to_vec(), delta)?;
    let (attempt, q, moments) = natural_search(dist, &ladder, max_environments, seed, |m| {
        detect_exponential_event(m, c, eta).is_some()
    })?;
    let d = detect_exponential_event(&moments, c, eta).expect("event holds");
    let ev = event(EventKind::Exponential, &ladder, s, d.witness, d.margin);
    let seg = segment_samples(&q, &ladder, paths, seed)?;
    let ks = ks_of(seg.z.clone(), shifted_exp_cdf)?;
    let extra = json!({ "environment": attempt, "c": c, "eta": eta });
    segment_findings(&q, &ladder, ev, seg, ks, ks_tol, extra)
}
