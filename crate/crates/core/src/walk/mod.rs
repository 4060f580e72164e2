//! Monte Carlo simulation of quenched walks: hitting times, positions and the
//! excursion decomposition of a block crossing.

use std::io::Write;
use std::ops::Range;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{Environment, LadderDecomposition};
use crate::error::{Error, Result};
use crate::quenched::{csv_err, ReflectionPolicy};
use crate::rng::{self, Domain};

const ONE: u64 = 1 << 53;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkConfig {
    pub reflection: ReflectionPolicy,
    /// Paths still running after this many steps are returned censored.
    pub max_steps: u64,
    #[serde(default)]
    pub record_running_max: bool,
}

impl WalkConfig {
    pub fn new(reflection: ReflectionPolicy, max_steps: u64) -> Self {
        Self {
            reflection,
            max_steps,
            record_running_max: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be positive".into()));
        }
        Ok(())
    }
}

/// Steps taken to reach the target, or `max_steps` with `censored` set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HitOutcome {
    pub steps: u64,
    pub censored: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionOutcome {
    pub x: i64,
    pub running_max: i64,
}

/// One block crossing split at its visits to the block start:
/// `total = success_time + sum(failure_times)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcursionSample {
    pub n_failures: u64,
    pub failure_times: Vec<u64>,
    pub success_time: u64,
    pub total: u64,
    pub censored: bool,
}

/// An environment prepared for repeated simulation: right-step probabilities
/// are stored as 53-bit thresholds, and the reflection policy is resolved
/// whenever the running maximum advances.
pub struct Walker<'a> {
    env: &'a Environment,
    ladders: Option<&'a LadderDecomposition>,
    cfg: WalkConfig,
    thresholds: Vec<u64>,
}

struct State {
    x: i64,
    max: i64,
    cutoff: i64,
    steps: u64,
}

impl<'a> Walker<'a> {
    pub fn new(env: &'a Environment, ladders: Option<&'a LadderDecomposition>, cfg: WalkConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.reflection.needs_ladders() && ladders.is_none() {
            return Err(Error::Config("block reflection needs a ladder decomposition".into()));
        }
        let thresholds = env
            .omegas()
            .iter()
            .map(|&w| if w >= 1.0 { ONE } else { (w * ONE as f64) as u64 })
            .collect();
        Ok(Self {
            env,
            ladders,
            cfg,
            thresholds,
        })
    }

    pub fn config(&self) -> &WalkConfig {
        &self.cfg
    }

    fn start(&self, x: i64) -> Result<State> {
        Ok(State {
            x,
            max: x,
            cutoff: self.cfg.reflection.cutoff(self.env, self.ladders, x)?,
            steps: 0,
        })
    }

    /// One step. Returns `true` when the walk moved to a new maximum.
    #[inline(always)]
    fn step<R: RngCore + ?Sized>(&self, st: &mut State, rng: &mut R) -> Result<bool> {
        let left = self.env.left_index();
        let right = st.x == st.cutoff || (rng.next_u64() >> 11) < self.thresholds[(st.x - left) as usize];
        st.steps += 1;
        if right {
            st.x += 1;
            if st.x > st.max {
                st.max = st.x;
                return Ok(true);
            }
        } else {
            st.x -= 1;
        }
        Ok(false)
    }

    fn exhausted(&self, needed: i64) -> Error {
        Error::WindowExhausted {
            lo: self.env.left_index(),
            hi: needed,
        }
    }

    /// Re-resolve the cutoff after a new maximum that is not the target.
    #[inline]
    fn advance_max(&self, st: &mut State) -> Result<()> {
        if st.x >= self.env.right_end() {
            return Err(self.exhausted(st.x + 1));
        }
        st.cutoff = self.cfg.reflection.cutoff(self.env, self.ladders, st.x)?;
        Ok(())
    }

    pub fn hitting_time<R: RngCore + ?Sized>(&self, start: i64, target: i64, rng: &mut R) -> Result<HitOutcome> {
        if start > target {
            return Err(Error::EmptyRange { i: start, j: target });
        }
        if start == target {
            return Ok(HitOutcome {
                steps: 0,
                censored: false,
            });
        }
        self.env.offset(start)?;
        if target > self.env.right_end() {
            return Err(self.exhausted(target));
        }
        let mut st = self.start(start)?;
        while st.steps < self.cfg.max_steps {
            if self.step(&mut st, rng)? {
                if st.x == target {
                    return Ok(HitOutcome {
                        steps: st.steps,
                        censored: false,
                    });
                }
                self.advance_max(&mut st)?;
            }
        }
        Ok(HitOutcome {
            steps: st.steps,
            censored: true,
        })
    }

    /// Position and running maximum after `t` steps from 0.
    pub fn position<R: RngCore + ?Sized>(&self, t: u64, rng: &mut R) -> Result<PositionOutcome> {
        let mut st = self.start(0)?;
        if t > 0 && self.env.right_end() <= 0 {
            return Err(self.exhausted(1));
        }
        while st.steps < t {
            if self.step(&mut st, rng)? {
                self.advance_max(&mut st)?;
            }
        }
        Ok(PositionOutcome {
            x: st.x,
            running_max: st.max,
        })
    }

    /// Crossing of `block` split into failed excursions (returns to
    /// `block.start`) and the final successful one.
    pub fn excursions<R: RngCore + ?Sized>(&self, block: Range<i64>, rng: &mut R) -> Result<ExcursionSample> {
        if block.start >= block.end {
            return Err(Error::EmptyRange {
                i: block.start,
                j: block.end,
            });
        }
        self.env.offset(block.start)?;
        if block.end > self.env.right_end() {
            return Err(self.exhausted(block.end));
        }
        let mut st = self.start(block.start)?;
        let mut failure_times = Vec::new();
        let mut departed_at = 0;
        let done = |st: &State, failure_times: Vec<u64>, departed_at: u64, censored: bool| ExcursionSample {
            n_failures: failure_times.len() as u64,
            success_time: st.steps - departed_at,
            total: st.steps,
            failure_times,
            censored,
        };
        while st.steps < self.cfg.max_steps {
            if self.step(&mut st, rng)? {
                if st.x == block.end {
                    return Ok(done(&st, failure_times, departed_at, false));
                }
                self.advance_max(&mut st)?;
            } else if st.x == block.start {
                failure_times.push(st.steps - departed_at);
                departed_at = st.steps;
            }
        }
        Ok(done(&st, failure_times, departed_at, true))
    }
}

pub fn simulate_hitting_time<R: RngCore + ?Sized>(
    env: &Environment,
    ladders: Option<&LadderDecomposition>,
    start: i64,
    target: i64,
    cfg: WalkConfig,
    rng: &mut R,
) -> Result<HitOutcome> {
    Walker::new(env, ladders, cfg)?.hitting_time(start, target, rng)
}

pub fn simulate_position<R: RngCore + ?Sized>(
    env: &Environment,
    ladders: Option<&LadderDecomposition>,
    t: u64,
    cfg: WalkConfig,
    rng: &mut R,
) -> Result<PositionOutcome> {
    Walker::new(env, ladders, cfg)?.position(t, rng)
}

pub fn simulate_excursions<R: RngCore + ?Sized>(
    env: &Environment,
    ladders: Option<&LadderDecomposition>,
    block: Range<i64>,
    cfg: WalkConfig,
    rng: &mut R,
) -> Result<ExcursionSample> {
    Walker::new(env, ladders, cfg)?.excursions(block, rng)
}

/// `paths` independent hitting times, path `i` driven by stream
/// `(seed, Walk, stream_offset + i)`; results in path order.
pub fn hitting_times(
    walker: &Walker<'_>,
    start: i64,
    target: i64,
    seed: u64,
    stream_offset: u64,
    paths: usize,
) -> Result<Vec<HitOutcome>> {
    (0..paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, Domain::Walk, stream_offset + i);
            walker.hitting_time(start, target, &mut rng)
        })
        .collect()
}

/// Like [`hitting_times`] for excursion samples, on stream domain `Excursion`.
pub fn excursion_samples(
    walker: &Walker<'_>,
    block: Range<i64>,
    seed: u64,
    stream_offset: u64,
    paths: usize,
) -> Result<Vec<ExcursionSample>> {
    (0..paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, Domain::Excursion, stream_offset + i);
            walker.excursions(block.clone(), &mut rng)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleKind {
    T,
    X,
    #[serde(rename = "excursion")]
    Excursion,
}

/// One row of a sample dump.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub path_id: u64,
    pub kind: SampleKind,
    pub value: i64,
    pub censored: bool,
}

pub fn write_samples<W: Write>(out: W, rows: &[SampleRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{sample_environment, sample_q_environment, OmegaDistribution};
    use crate::quenched::{crossing_moments, success_probability};

    fn mean_and_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (v / n).sqrt())
    }

    #[test]
    fn deterministic_environment() {
        let env = Environment::homogeneous(0, 10, 1.0).unwrap();
        let cfg = WalkConfig::new(ReflectionPolicy::None, 100);
        let mut rng = rng::stream(1, Domain::Walk, 0);
        assert_eq!(simulate_hitting_time(&env, None, 0, 5, cfg, &mut rng).unwrap().steps, 5);
        let p = simulate_position(&env, None, 7, cfg, &mut rng).unwrap();
        assert_eq!((p.x, p.running_max), (7, 7));
        assert_eq!(
            simulate_position(&env, None, 0, cfg, &mut rng).unwrap(),
            PositionOutcome { x: 0, running_max: 0 }
        );
        let e = simulate_excursions(&env, None, 0..1, cfg, &mut rng).unwrap();
        assert_eq!((e.n_failures, e.success_time, e.total), (0, 1, 1));
    }

    #[test]
    fn timeouts_are_censored() {
        let env = Environment::homogeneous(-50, 100, 0.2).unwrap();
        let cfg = WalkConfig::new(ReflectionPolicy::None, 50);
        let mut rng = rng::stream(1, Domain::Walk, 0);
        let h = simulate_hitting_time(&env, None, 0, 40, cfg, &mut rng).unwrap();
        assert_eq!(
            h,
            HitOutcome {
                steps: 50,
                censored: true
            }
        );
    }

    #[test]
    fn leaving_the_window_is_an_error() {
        let env = Environment::homogeneous(0, 10, 1.0).unwrap();
        let cfg = WalkConfig::new(ReflectionPolicy::None, 100);
        let mut rng = rng::stream(1, Domain::Walk, 0);
        assert!(matches!(
            simulate_position(&env, None, 20, cfg, &mut rng),
            Err(Error::WindowExhausted { .. })
        ));
    }

    #[test]
    fn homogeneous_single_step_mean_is_three() {
        let env = Environment::homogeneous(-200, 202, 2.0 / 3.0).unwrap();
        let w = Walker::new(&env, None, WalkConfig::new(ReflectionPolicy::None, 1 << 40)).unwrap();
        let t: Vec<f64> = hitting_times(&w, 0, 1, 5, 0, 200_000)
            .unwrap()
            .iter()
            .map(|h| h.steps as f64)
            .collect();
        let (m, se) = mean_and_se(&t);
        assert!((m - 3.0).abs() < 3.0 * se, "{m} +- {se}");
    }

    #[test]
    fn hitting_time_moments_match_exact_formulas() {
        let dist = OmegaDistribution::fixture();
        for seed in 0..3 {
            let env = sample_environment(&dist, -30, 30, seed).unwrap();
            let policy = ReflectionPolicy::Distance { b: 10 };
            let exact = crossing_moments(&env, None, 0, 20, policy).unwrap();
            let w = Walker::new(&env, None, WalkConfig::new(policy, 1 << 40)).unwrap();
            let t: Vec<f64> = hitting_times(&w, 0, 20, seed, 0, 100_000)
                .unwrap()
                .iter()
                .map(|h| h.steps as f64)
                .collect();
            let (m, se) = mean_and_se(&t);
            assert!(
                (m - exact.mean).abs() < 3.5 * se,
                "mean {m} vs {} (se {se})",
                exact.mean
            );
            // Sample variance: standard error from the fourth central moment.
            let n = t.len() as f64;
            let m2 = t.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
            let m4 = t.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
            let se_v = ((m4 - m2 * m2) / n).sqrt();
            assert!(
                (m2 - exact.variance).abs() < 3.5 * se_v,
                "var {m2} vs {} (se {se_v})",
                exact.variance
            );
        }
    }

    #[test]
    fn block_reflection_matches_exact_formulas() {
        let q = sample_q_environment(&OmegaDistribution::fixture(), 8, 3, 12).unwrap();
        let policy = ReflectionPolicy::Blocks { b: 2 };
        let to = q.ladders.nu(8).unwrap();
        let exact = crossing_moments(&q.env, Some(&q.ladders), 0, to, policy).unwrap();
        let w = Walker::new(&q.env, Some(&q.ladders), WalkConfig::new(policy, 1 << 40)).unwrap();
        let t: Vec<f64> = hitting_times(&w, 0, to, 3, 0, 100_000)
            .unwrap()
            .iter()
            .map(|h| h.steps as f64)
            .collect();
        let (m, se) = mean_and_se(&t);
        assert!(
            (m - exact.mean).abs() < 3.5 * se,
            "mean {m} vs {} (se {se})",
            exact.mean
        );
    }

    #[test]
    fn excursion_totals_decompose_and_fail_at_rate() {
        let q = sample_q_environment(&OmegaDistribution::fixture(), 40, 10, 21).unwrap();
        let b = q.ladders.blocks().max_by_key(|b| b.len()).unwrap();
        let policy = ReflectionPolicy::Blocks { b: 5 };
        let w = Walker::new(&q.env, Some(&q.ladders), WalkConfig::new(policy, 1 << 40)).unwrap();
        let samples = excursion_samples(&w, b.start..b.end, 4, 0, 50_000).unwrap();
        let mut excursions = 0u64;
        let mut failures = 0u64;
        for s in &samples {
            assert_eq!(s.total, s.success_time + s.failure_times.iter().sum::<u64>());
            assert_eq!(s.n_failures as usize, s.failure_times.len());
            assert!(s.failure_times.iter().all(|&f| f >= 2));
            excursions += s.n_failures + 1;
            failures += s.n_failures;
        }
        let p = success_probability(&q.env, b.start..b.end).unwrap();
        let frac = failures as f64 / excursions as f64;
        let se = (p * (1.0 - p) / excursions as f64).sqrt();
        assert!((frac - (1.0 - p)).abs() < 3.5 * se, "{frac} vs {}", 1.0 - p);
    }

    #[test]
    fn streams_are_reproducible() {
        let env = sample_environment(&OmegaDistribution::fixture(), -50, 200, 2).unwrap();
        let w = Walker::new(&env, None, WalkConfig::new(ReflectionPolicy::None, 1 << 30)).unwrap();
        let a = hitting_times(&w, 0, 100, 8, 0, 64).unwrap();
        let b = hitting_times(&w, 0, 100, 8, 0, 64).unwrap();
        assert_eq!(a, b);
        let c = hitting_times(&w, 0, 100, 8, 32, 32).unwrap();
        assert_eq!(&a[32..], &c[..]);
    }

    #[test]
    fn sample_dump_format() {
        let mut buf = Vec::new();
        write_samples(
            &mut buf,
            &[
                SampleRow {
                    path_id: 0,
                    kind: SampleKind::T,
                    value: 12,
                    censored: false,
                },
                SampleRow {
                    path_id: 1,
                    kind: SampleKind::Excursion,
                    value: 3,
                    censored: true,
                },
            ],
        )
        .unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "path_id,kind,value,censored\n0,T,12,false\n1,excursion,3,true\n"
        );
    }
}
