//! Scale ladders and the environment events that pick out Gaussian and
//! exponential crossing-time behaviour along them.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::environment::{Environment, LadderDecomposition};
use crate::error::{Error, Result};
use crate::quenched::{backtrack_depth, block_moments_range, csv_err, BlockMoments, ReflectionPolicy};

/// Increasing block counts `n_0 < n_1 < ...`; scale `k >= 1` is the window of
/// blocks `(n_{k-1}, n_k]` of size `d_k = n_k - n_{k-1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleLadder {
    n: Vec<u64>,
}

impl ScaleLadder {
    /// `n_k = 2^{2^k}` while that is at most `16` doublings deep and below `cap`,
    /// then `n_k = ceil(n_{k-1}^{1+delta})` up to `cap`.
    pub fn doubly_exponential(delta: f64, cap: u64) -> Result<Self> {
        check_delta(delta)?;
        let mut n = vec![2u64];
        for k in 1..=4 {
            let next = 1u64 << (1u64 << k);
            if next > cap {
                break;
            }
            n.push(next);
        }
        extend_geometric(&mut n, delta, cap);
        Ok(Self { n })
    }

    /// `n_0 = first`, then `n_k = ceil(n_{k-1}^{1+delta})` up to `cap`.
    pub fn geometric(first: u64, delta: f64, cap: u64) -> Result<Self> {
        check_delta(delta)?;
        if first < 2 {
            return Err(Error::Config("ladder must start at 2 or more blocks".into()));
        }
        let mut n = vec![first];
        extend_geometric(&mut n, delta, cap);
        Ok(Self { n })
    }

    /// Explicit counts; each must satisfy `n_k >= n_{k-1}^{1+delta}`.
    pub fn from_counts(n: Vec<u64>, delta: f64) -> Result<Self> {
        check_delta(delta)?;
        if n.len() < 2 {
            return Err(Error::Config("a scale ladder needs at least two counts".into()));
        }
        for w in n.windows(2) {
            if w[1] <= w[0] || (w[1] as f64) < (w[0] as f64).powf(1.0 + delta) {
                return Err(Error::Config(format!(
                    "ladder step {} -> {} violates n_k >= n_(k-1)^(1+{delta})",
                    w[0], w[1]
                )));
            }
        }
        Ok(Self { n })
    }

    /// Number of scales `k = 1..=len()`.
    pub fn len(&self) -> usize {
        self.n.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn counts(&self) -> &[u64] {
        &self.n
    }

    /// `n_k` for `0 <= k <= len()`.
    pub fn n(&self, k: usize) -> u64 {
        self.n[k]
    }

    /// `d_k = n_k - n_{k-1}` for `k >= 1`.
    pub fn d(&self, k: usize) -> u64 {
        self.n[k] - self.n[k - 1]
    }

    /// `b_{d_k}`.
    pub fn b(&self, k: usize) -> usize {
        backtrack_depth(self.d(k))
    }

    /// `a_k = floor(ln ln k) ∨ 1`.
    pub fn a(k: usize) -> usize {
        if k < 3 {
            return 1;
        }
        ((k as f64).ln().ln().floor() as usize).max(1)
    }

    /// Left-context blocks needed before block 1 to reflect every scale.
    pub fn context_needed(&self) -> usize {
        (1..=self.len())
            .map(|k| self.b(k).saturating_sub(self.n(k - 1) as usize))
            .max()
            .unwrap_or(0)
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Config(format!("delta must lie in (0, 1], got {delta}")));
    }
    Ok(())
}

fn extend_geometric(n: &mut Vec<u64>, delta: f64, cap: u64) {
    loop {
        let last = *n.last().expect("nonempty");
        let next = ((last as f64).powf(1.0 + delta).ceil() as u64).max(last + 1);
        if next > cap {
            break;
        }
        n.push(next);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Gaussian,
    Exponential,
}

/// One detected event at scale `k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventReport {
    pub k: usize,
    pub kind: EventKind,
    /// Exponential: the dominant block. Gaussian: the first block of the
    /// distinguished window.
    pub witness: i64,
    pub margin: f64,
    pub n_k: u64,
    pub d_k: u64,
    pub s: f64,
}

/// A detector hit before it is tied to a scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub witness: i64,
    pub margin: f64,
}

fn window_len(d: usize, eta: f64) -> usize {
    ((eta * d as f64).floor() as usize).min(d)
}

/// First block `i` among the first `floor(eta d)` with
/// `M_i^2 >= c * sum_{j != i} sigma2_j`; `margin = M_i^2 / (c * sum)`.
pub fn detect_exponential_event(moments: &[BlockMoments], c: f64, eta: f64) -> Option<Detection> {
    let total: f64 = moments.iter().map(|m| m.sigma2).sum();
    moments[..window_len(moments.len(), eta)].iter().find_map(|m| {
        let rest = c * (total - m.sigma2).max(0.0);
        let m2 = m.m * m.m;
        (m2 >= rest).then(|| Detection {
            witness: m.block_index,
            margin: m2 / rest,
        })
    })
}

/// Slack ratios of the Gaussian event at one window; the event holds when
/// all three are at least 1 and `tail > 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianSlack {
    /// `tau / max_{i <= beta} mu_i^2`.
    pub max: f64,
    /// `sum_{i <= beta} mu_i^2 / (a tau)`.
    pub sum: f64,
    /// `tau / sum_{i > beta} sigma2_i`.
    pub tail: f64,
}

impl GaussianSlack {
    pub fn holds(&self) -> bool {
        self.max >= 1.0 && self.sum >= 1.0 && self.tail > 1.0
    }

    pub fn margin(&self) -> f64 {
        self.max.min(self.sum).min(self.tail)
    }
}

/// With `tau = 2 d^{2/s}` and the window split at `beta = floor(eta d)`:
/// `max_{i <= beta} mu_i^2 <= tau`, `(1/a) sum_{i <= beta} mu_i^2 >= tau` and
/// `sum_{i > beta} sigma2_i < tau`. `None` when the head is empty.
pub fn gaussian_slack(moments: &[BlockMoments], s: f64, a: usize, eta: f64) -> Option<GaussianSlack> {
    let d = moments.len();
    let beta = window_len(d, eta);
    if beta == 0 {
        return None;
    }
    let tau = 2.0 * (d as f64).powf(2.0 / s);
    let (head, tail) = moments.split_at(beta);
    let max_mu2 = head.iter().map(|m| m.mu * m.mu).fold(0.0, f64::max);
    let sum_mu2: f64 = head.iter().map(|m| m.mu * m.mu).sum();
    let tail_var: f64 = tail.iter().map(|m| m.sigma2).sum();
    Some(GaussianSlack {
        max: tau / max_mu2,
        sum: sum_mu2 / (a as f64 * tau),
        tail: tau / tail_var,
    })
}

/// The Gaussian event of [`gaussian_slack`]; the witness is the first block
/// of the window and the margin the smallest slack ratio.
pub fn detect_gaussian_event(moments: &[BlockMoments], s: f64, a: usize, eta: f64) -> Option<Detection> {
    let slack = gaussian_slack(moments, s, a, eta)?;
    slack.holds().then(|| Detection {
        witness: moments[0].block_index,
        margin: slack.margin(),
    })
}

/// Which detectors to run and their parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub s: f64,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Fixed `a`; `a_k` from the scale index when absent.
    #[serde(default)]
    pub a: Option<usize>,
    #[serde(default = "yes")]
    pub exponential: bool,
    #[serde(default = "yes")]
    pub gaussian: bool,
}

fn default_c() -> f64 {
    2.0
}
fn default_eta() -> f64 {
    0.5
}
fn yes() -> bool {
    true
}

impl DetectorConfig {
    pub fn new(s: f64) -> Self {
        Self {
            s,
            c: default_c(),
            eta: default_eta(),
            a: None,
            exponential: true,
            gaussian: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 1.0) {
            return Err(Error::Config(format!("C must exceed 1, got {}", self.c)));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::Config(format!("eta must lie in (0, 1), got {}", self.eta)));
        }
        if !(self.s > 1.0 && self.s < 2.0) {
            return Err(Error::Config(format!("s must lie in (1, 2), got {}", self.s)));
        }
        if self.a == Some(0) {
            return Err(Error::Config("a must be positive".into()));
        }
        Ok(())
    }

    pub fn a_for(&self, k: usize) -> usize {
        self.a.unwrap_or_else(|| ScaleLadder::a(k))
    }
}

/// Runs the enabled detectors on the moments of one scale window.
pub fn scan_window(moments: &[BlockMoments], k: usize, n_k: u64, det: &DetectorConfig) -> Vec<EventReport> {
    let report = |kind, d: Detection| EventReport {
        k,
        kind,
        witness: d.witness,
        margin: d.margin,
        n_k,
        d_k: moments.len() as u64,
        s: det.s,
    };
    let mut out = Vec::new();
    if moments.is_empty() {
        return out;
    }
    if det.gaussian {
        if let Some(d) = detect_gaussian_event(moments, det.s, det.a_for(k), det.eta) {
            out.push(report(EventKind::Gaussian, d));
        }
    }
    if det.exponential {
        if let Some(d) = detect_exponential_event(moments, det.c, det.eta) {
            out.push(report(EventKind::Exponential, d));
        }
    }
    out
}

/// Exact reflected moments of the blocks of scale `k`.
pub fn scale_moments(
    env: &Environment,
    ladders: &LadderDecomposition,
    ladder: &ScaleLadder,
    k: usize,
) -> Result<Vec<BlockMoments>> {
    block_moments_range(
        env,
        ladders,
        ladder.n(k - 1) as i64 + 1,
        ladder.n(k) as i64,
        ReflectionPolicy::at_scale(ladder.d(k)),
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanOutcome {
    pub events: Vec<EventReport>,
    pub scales_done: usize,
    /// Set when the block budget stopped the scan before the last scale.
    pub partial: bool,
}

/// Scans scales `1..=len()` in order while the total number of blocks
/// processed stays within `budget`.
pub fn scan(
    env: &Environment,
    ladders: &LadderDecomposition,
    ladder: &ScaleLadder,
    det: &DetectorConfig,
    budget: u64,
) -> Result<ScanOutcome> {
    det.validate()?;
    let mut events = Vec::new();
    let mut used = 0u64;
    for k in 1..=ladder.len() {
        if used + ladder.d(k) > budget {
            return Ok(ScanOutcome {
                events,
                scales_done: k - 1,
                partial: true,
            });
        }
        used += ladder.d(k);
        let moments = scale_moments(env, ladders, ladder, k)?;
        events.extend(scan_window(&moments, k, ladder.n(k), det));
    }
    Ok(ScanOutcome {
        events,
        scales_done: ladder.len(),
        partial: false,
    })
}

/// Recomputes the margin of `report` from the raw moments of its window.
pub fn verify_report(report: &EventReport, moments: &[BlockMoments], det: &DetectorConfig) -> Result<()> {
    let redo = match report.kind {
        EventKind::Exponential => detect_exponential_event(moments, det.c, det.eta),
        EventKind::Gaussian => detect_gaussian_event(moments, det.s, det.a_for(report.k), det.eta),
    };
    match redo {
        Some(d) if d.witness == report.witness && (d.margin - report.margin).abs() <= 1e-12 * d.margin.abs() => Ok(()),
        other => Err(Error::Numerical(format!(
            "event at scale {} does not re-verify: recomputed {other:?}",
            report.k
        ))),
    }
}

pub fn write_events<W: Write>(out: W, rows: &[EventReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(["k", "kind", "witness", "margin", "n_k", "d_k", "s"])
            .map_err(csv_err)?;
    }
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_events<R: Read>(input: R) -> Result<Vec<EventReport>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(csv_err))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{sample_q_environment, OmegaDistribution};
    use proptest::prelude::*;

    fn synthetic(mu2: &[f64], sigma2: &[f64], m: &[f64]) -> Vec<BlockMoments> {
        (0..mu2.len())
            .map(|i| BlockMoments {
                block_index: i as i64 + 1,
                nu_len: 1,
                m: m[i],
                mu: mu2[i].sqrt(),
                sigma2: sigma2[i],
                p_success: 0.5,
                e_s: 1.0,
                m_minus: 1.0,
                m_plus: 1.0,
            })
            .collect()
    }

    #[test]
    fn one_huge_block_is_an_exponential_witness() {
        let mut sigma2 = vec![1.0; 10];
        let mut m = vec![1.0; 10];
        m[2] = (10.0f64 * 9.0).sqrt();
        sigma2[2] = m[2] * m[2];
        let rows = synthetic(&[1.0; 10], &sigma2, &m);
        let d = detect_exponential_event(&rows, 2.0, 0.5).unwrap();
        assert_eq!(d.witness, 3);
        assert!((d.margin - 5.0).abs() < 1e-12);
    }

    #[test]
    fn identical_blocks_have_no_exponential_witness() {
        let rows = synthetic(&[4.0; 5], &[4.0; 5], &[2.0; 5]);
        assert!(detect_exponential_event(&rows, 2.0, 0.5).is_none());
    }

    #[test]
    fn gaussian_event_by_hand() {
        let (d, s, a) = (64usize, 1.5, 3usize);
        let unit = (d as f64).powf(2.0 / s);
        let mut mu2 = vec![1e-6; d];
        for x in mu2.iter_mut().take(2 * a) {
            *x = 1.5 * unit;
        }
        let rows = synthetic(&mu2, &vec![1e-6; d], &vec![1.0; d]);
        let hit = detect_gaussian_event(&rows, s, a, 0.5).unwrap();
        // (1/a) * 2a * 1.5 unit = 3 unit against tau = 2 unit.
        let expect = (2.0 / 1.5f64).min(1.5);
        assert!((hit.margin - expect).abs() < 1e-12);
        assert!(detect_gaussian_event(&rows, s, 2 * a, 0.5).is_none());

        let mut big = mu2.clone();
        big[0] = 3.0 * unit;
        assert!(detect_gaussian_event(&synthetic(&big, &vec![1e-6; d], &vec![1.0; d]), s, a, 0.5).is_none());
    }

    #[test]
    fn ladders() {
        let l = ScaleLadder::doubly_exponential(0.5, 1 << 20).unwrap();
        assert_eq!(&l.counts()[..5], &[2, 4, 16, 256, 65536]);
        assert!(l.counts().windows(2).all(|w| (w[1] as f64) >= (w[0] as f64).powf(1.5)));
        assert!(ScaleLadder::from_counts(vec![128, 1152], 0.45).is_ok());
        assert!(ScaleLadder::from_counts(vec![128, 1152], 0.5).is_err());
        assert_eq!(ScaleLadder::a(1), 1);
        assert_eq!(ScaleLadder::a(16), 1);
        assert_eq!(ScaleLadder::a(16_000), 2);
        let g = ScaleLadder::geometric(64, 0.5, 1 << 16).unwrap();
        let ratio: Vec<f64> = (1..=g.len()).map(|k| g.d(k) as f64 / g.n(k) as f64).collect();
        assert!(ratio.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn scan_is_deterministic_and_reverifies() {
        let dist = OmegaDistribution::fixture();
        let ladder = ScaleLadder::from_counts(vec![16, 128, 2048], 0.5).unwrap();
        let det = DetectorConfig::new(1.5);
        assert_eq!(
            ScaleLadder::from_counts(vec![16, 128, 2048], 0.5)
                .unwrap()
                .context_needed(),
            6
        );
        let q = sample_q_environment(&dist, 2048, ladder.context_needed(), 5).unwrap();
        let a = scan(&q.env, &q.ladders, &ladder, &det, u64::MAX).unwrap();
        let b = scan(&q.env, &q.ladders, &ladder, &det, u64::MAX).unwrap();
        assert_eq!(a, b);
        assert!(!a.partial);
        for e in &a.events {
            let moments = scale_moments(&q.env, &q.ladders, &ladder, e.k).unwrap();
            verify_report(e, &moments, &det).unwrap();
            assert!(e.witness > ladder.n(e.k - 1) as i64);
            assert!(e.witness <= ladder.n(e.k - 1) as i64 + (det.eta * e.d_k as f64) as i64);
        }
        let none = scan(&q.env, &q.ladders, &ladder, &det, 0).unwrap();
        assert!(none.events.is_empty() && none.partial);
    }

    #[test]
    fn events_csv_roundtrip() {
        let rows = vec![EventReport {
            k: 2,
            kind: EventKind::Exponential,
            witness: 130,
            margin: 1.25,
            n_k: 2048,
            d_k: 1920,
            s: 1.5,
        }];
        let mut buf = Vec::new();
        write_events(&mut buf, &rows).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "k,kind,witness,margin,n_k,d_k,s\n2,exponential,130,1.25,2048,1920,1.5\n"
        );
        assert_eq!(read_events(&buf[..]).unwrap(), rows);
    }

    proptest! {
        #[test]
        fn raising_thresholds_only_removes_witnesses(
            raw in proptest::collection::vec((0.1f64..100.0, 0.1f64..100.0), 4..60),
            c in 1.1f64..50.0,
            a in 1usize..8,
        ) {
            let mu2: Vec<f64> = raw.iter().map(|r| r.0).collect();
            let m: Vec<f64> = raw.iter().map(|r| r.1).collect();
            let sigma2: Vec<f64> = raw.iter().map(|r| r.1 * r.1 * 1.1).collect();
            let rows = synthetic(&mu2, &sigma2, &m);
            if detect_exponential_event(&rows, c * 1.5, 0.5).is_some() {
                prop_assert!(detect_exponential_event(&rows, c, 0.5).is_some());
            }
            if detect_gaussian_event(&rows, 1.5, a + 1, 0.5).is_some() {
                prop_assert!(detect_gaussian_event(&rows, 1.5, a, 0.5).is_some());
            }
        }
    }
}
