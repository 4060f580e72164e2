use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{Environment, LadderDecomposition};
use crate::error::{Error, Result};

use super::crossing::crossing_moments;
use super::excursion::{expected_success_time, m_extremes, success_probability};
use super::policy::ReflectionPolicy;

/// Exact quenched quantities of one ladder block under a reflection policy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockMoments {
    pub block_index: i64,
    pub nu_len: usize,
    #[serde(rename = "M")]
    pub m: f64,
    pub mu: f64,
    pub sigma2: f64,
    pub p_success: f64,
    #[serde(rename = "E_S")]
    pub e_s: f64,
    pub m_minus: f64,
    pub m_plus: f64,
}

impl BlockMoments {
    /// `E N = (1 - p) / p`, the mean number of failed excursions.
    pub fn expected_failures(&self) -> f64 {
        (1.0 - self.p_success) / self.p_success
    }
}

/// Moments of block `k`, crossing from `nu_{k-1}` to `nu_k`.
pub fn block_moments(
    env: &Environment,
    ladders: &LadderDecomposition,
    k: i64,
    policy: ReflectionPolicy,
) -> Result<BlockMoments> {
    let b = ladders.block(k).ok_or(Error::Index {
        site: k,
        lo: ladders.first_location() + 1,
        hi: ladders.len() as i64 + 1,
    })?;
    let c = crossing_moments(env, Some(ladders), b.start, b.end, policy)?;
    let ext = m_extremes(env, b.start..b.end)?;
    Ok(BlockMoments {
        block_index: k,
        nu_len: b.len(),
        m: b.max(),
        mu: c.mean,
        sigma2: c.variance,
        p_success: success_probability(env, b.start..b.end)?,
        e_s: expected_success_time(env, b.start..b.end)?,
        m_minus: ext.m_minus,
        m_plus: ext.m_plus,
    })
}

/// Moments of blocks `first..=last`, computed in parallel, in block order.
pub fn block_moments_range(
    env: &Environment,
    ladders: &LadderDecomposition,
    first: i64,
    last: i64,
    policy: ReflectionPolicy,
) -> Result<Vec<BlockMoments>> {
    (first..=last)
        .into_par_iter()
        .map(|k| block_moments(env, ladders, k, policy))
        .collect()
}

/// Sum of the reflected block variances over blocks `(after, last]` at the
/// backtracking depth of scale `scale`.
pub fn v_k(env: &Environment, ladders: &LadderDecomposition, after: i64, last: i64, scale: u64) -> Result<f64> {
    if after >= last {
        return Err(Error::EmptyRange { i: after + 1, j: last });
    }
    let from = ladders.nu(after).ok_or(Error::Index {
        site: after,
        lo: ladders.first_location(),
        hi: ladders.len() as i64,
    })?;
    let to = ladders.nu(last).ok_or(Error::Index {
        site: last,
        lo: ladders.first_location(),
        hi: ladders.len() as i64,
    })?;
    Ok(crossing_moments(env, Some(ladders), from, to, ReflectionPolicy::at_scale(scale))?.variance)
}

/// Bounds on `E exp(-lambda T / mu)` for a block crossing time `T` from its
/// exact mean `mu`, variance `sigma2` and mean success time `E S`.
///
/// `upper` is `f64::INFINITY` where the bound is vacuous (non-positive
/// denominator).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LaplaceBounds {
    pub lower: f64,
    pub upper: f64,
}

pub fn laplace_bounds(m: &BlockMoments, lambda: f64) -> Result<LaplaceBounds> {
    laplace_bounds_from(m.mu, m.sigma2, m.e_s, lambda)
}

pub fn laplace_bounds_from(mu: f64, sigma2: f64, e_s: f64, lambda: f64) -> Result<LaplaceBounds> {
    if !(lambda >= 0.0) {
        return Err(Error::Domain(format!("lambda must be nonnegative, got {lambda}")));
    }
    let r = e_s / mu;
    let lower = (1.0 - lambda * r) / (1.0 + lambda);
    let denom = 1.0 + lambda - (lambda + lambda * lambda) * r - 0.5 * lambda * lambda * (sigma2 / (mu * mu) - 1.0);
    let upper = if denom > 0.0 { 1.0 / denom } else { f64::INFINITY };
    Ok(LaplaceBounds { lower, upper })
}

pub fn write_block_moments<W: Write>(out: W, rows: &[BlockMoments]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_block_moments<R: Read>(input: R) -> Result<Vec<BlockMoments>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(csv_err))
        .collect()
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{sample_q_environment, OmegaDistribution};
    use approx::assert_relative_eq;

    #[test]
    fn laplace_bounds_edge_cases() {
        let b = laplace_bounds_from(5.0, 30.0, 1.0, 0.0).unwrap();
        assert_eq!((b.lower, b.upper), (1.0, 1.0));
        let b = laplace_bounds_from(4.0, 16.0, 0.0, 1.5).unwrap();
        assert_eq!(b.lower, 1.0 / 2.5);
        assert_eq!(b.upper, 1.0 / 2.5);
        assert!(laplace_bounds_from(4.0, 16.0, 0.0, -1.0).is_err());
        let b = laplace_bounds_from(1.0, 100.0, 0.5, 4.0).unwrap();
        assert_eq!(b.upper, f64::INFINITY);
    }

    #[test]
    fn block_invariants_and_additivity() {
        let q = sample_q_environment(&OmegaDistribution::fixture(), 120, 48, 6).unwrap();
        let rows = block_moments_range(&q.env, &q.ladders, 1, 120, ReflectionPolicy::at_scale(1024)).unwrap();
        for r in &rows {
            assert!(r.mu >= r.m && r.sigma2 >= r.m * r.m * (1.0 - 1e-12));
            assert!(r.p_success > 0.0 && r.p_success <= 1.0);
            for l in [0.1, 0.5, 1.0, 2.0, 4.0] {
                let lb = laplace_bounds(r, l).unwrap();
                assert!(lb.lower <= lb.upper);
            }
        }
        let total: f64 = rows.iter().map(|r| r.sigma2).sum();
        assert_relative_eq!(
            v_k(&q.env, &q.ladders, 0, 120, 1024).unwrap(),
            total,
            max_relative = 1e-12
        );
        let split = v_k(&q.env, &q.ladders, 0, 50, 1024).unwrap() + v_k(&q.env, &q.ladders, 50, 120, 1024).unwrap();
        assert_relative_eq!(split, total, max_relative = 1e-12);
        let vmax = rows.iter().map(|r| r.m * r.m).fold(0.0, f64::max);
        assert!(total >= vmax);
        assert_relative_eq!(
            v_k(&q.env, &q.ladders, 6, 7, 1024).unwrap(),
            rows[6].sigma2,
            max_relative = 1e-14
        );
    }

    #[test]
    fn missing_context_names_extra_blocks() {
        let q = sample_q_environment(&OmegaDistribution::fixture(), 10, 40, 6).unwrap();
        match v_k(&q.env, &q.ladders, 0, 10, 1024) {
            Err(Error::InsufficientContext { extra_blocks, .. }) => assert_eq!(extra_blocks, Some(8)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let q = sample_q_environment(&OmegaDistribution::fixture(), 30, 0, 8).unwrap();
        let rows = block_moments_range(&q.env, &q.ladders, 1, 30, ReflectionPolicy::Fixed { site: 0 }).unwrap();
        let mut buf = Vec::new();
        write_block_moments(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("block_index,nu_len,M,mu,sigma2,p_success,E_S,m_minus,m_plus\n"));
        assert_eq!(read_block_moments(&buf[..]).unwrap(), rows);
    }
}
