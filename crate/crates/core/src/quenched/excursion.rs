use std::ops::Range;

use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::numerics::LogSum;

use super::crossing::expected_crossing;
use super::policy::ReflectionPolicy;

fn check_block(env: &Environment, block: &Range<i64>) -> Result<()> {
    if block.start >= block.end {
        return Err(Error::EmptyRange {
            i: block.start,
            j: block.end - 1,
        });
    }
    env.offset(block.start)?;
    env.offset(block.end - 1)?;
    Ok(())
}

/// `ln R'_i = ln sum_{j=0}^{i} Pi_{1,j}` for `i in [0, nu)`, relative to the
/// block start and with `Pi_{1,0} = 1`.
fn log_r(env: &Environment, block: &Range<i64>) -> Vec<f64> {
    let lo = env.offset(block.start).expect("checked");
    let omegas = &env.omegas()[lo..lo + (block.end - block.start) as usize];
    let mut out = Vec::with_capacity(omegas.len());
    let mut acc = LogSum::new();
    let mut log_pi = 0.0;
    acc.add(0.0);
    out.push(acc.ln());
    for w in &omegas[1..] {
        log_pi += ((1.0 - w) / w).ln();
        acc.add(log_pi);
        out.push(acc.ln());
    }
    out
}

/// `p = P^{start}(T_end < T_start^+) = omega_start / sum_{j=0}^{nu-1} Pi_{1,j}`
/// (indices relative to the block start).
pub fn success_probability(env: &Environment, block: Range<i64>) -> Result<f64> {
    check_block(env, &block)?;
    let w0 = env.omega(block.start)?;
    let lr = log_r(env, &block);
    Ok(w0 * (-lr[lr.len() - 1]).exp())
}

/// The block environment of the walk conditioned to reach `block.end` before
/// returning to `block.start`: `omega_0 = omega_1 = 1` and, for `2 <= i < nu`,
/// `rho_bar_i = rho_i R'_{i-2} / R'_i`.
pub fn conditioned_environment(env: &Environment, block: Range<i64>) -> Result<Environment> {
    check_block(env, &block)?;
    let lr = log_r(env, &block);
    let lo = env.offset(block.start)?;
    let omegas = &env.omegas()[lo..lo + lr.len()];
    let bar = (0..lr.len())
        .map(|i| {
            if i < 2 {
                return 1.0;
            }
            let w = omegas[i];
            let log_rho_bar = ((1.0 - w) / w).ln() + lr[i - 2] - lr[i];
            1.0 / (1.0 + log_rho_bar.exp())
        })
        .collect();
    Environment::new(block.start, bar)
}

/// `E S`, the mean duration of the successful excursion: the crossing time of
/// the conditioned environment, which never returns to the block start.
pub fn expected_success_time(env: &Environment, block: Range<i64>) -> Result<f64> {
    let bar = conditioned_environment(env, block.clone())?;
    expected_crossing(
        &bar,
        None,
        block.start,
        block.end,
        ReflectionPolicy::Fixed { site: block.start },
    )
}

/// Largest and smallest products over sub-intervals of `log_rhos`, via
/// running maximum/minimum subarray sums. Empty input gives `None`.
fn extreme_interval_sums(log_rhos: &[f64]) -> Option<(f64, f64)> {
    let mut it = log_rhos.iter();
    let &first = it.next()?;
    let (mut best_min, mut best_max) = (first, first);
    let (mut cur_min, mut cur_max) = (first, first);
    for &x in it {
        cur_min = x + cur_min.min(0.0);
        cur_max = x + cur_max.max(0.0);
        best_min = best_min.min(cur_min);
        best_max = best_max.max(cur_max);
    }
    Some((best_min, best_max))
}

/// Extremes of a block used to bound the conditioned environment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockExtremes {
    /// `min { Pi_{i,j} : 0 < i <= j < tau } ∧ 1`.
    pub m_minus: f64,
    /// `max { Pi_{i,j} : tau < i <= j < nu } ∨ 1`.
    pub m_plus: f64,
    /// `max { k in [1, nu] : Pi_{0,k-1} = M }`, relative to the block start.
    pub tau: usize,
}

pub fn m_extremes(env: &Environment, block: Range<i64>) -> Result<BlockExtremes> {
    check_block(env, &block)?;
    let lo = env.offset(block.start)?;
    let nu = (block.end - block.start) as usize;
    let lr: Vec<f64> = env.log_rhos()[lo..lo + nu].to_vec();
    let mut prefix = 0.0;
    let mut best = f64::NEG_INFINITY;
    let mut tau = 1;
    for (k, x) in lr.iter().enumerate() {
        prefix += x;
        if prefix >= best {
            best = prefix;
            tau = k + 1;
        }
    }
    let m_minus = extreme_interval_sums(&lr[1.min(tau)..tau]).map_or(1.0, |(mn, _)| mn.exp().min(1.0));
    let m_plus = extreme_interval_sums(lr.get(tau + 1..).unwrap_or(&[])).map_or(1.0, |(_, mx)| mx.exp().max(1.0));
    Ok(BlockExtremes { m_minus, m_plus, tau })
}

/// `max { Pi_bar_{i,j} : 0 <= i <= j < nu }` of the conditioned environment
/// (zero when `nu <= 2`, since `rho_bar_0 = rho_bar_1 = 0`).
pub fn conditioned_block_max(env: &Environment, block: Range<i64>) -> Result<f64> {
    let bar = conditioned_environment(env, block)?;
    let lr = bar.log_rhos();
    Ok(extreme_interval_sums(&lr[2.min(lr.len())..]).map_or(0.0, |(_, mx)| mx.exp()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{sample_q_blocks, OmegaDistribution};
    use crate::quenched::{oracle_hitting_probabilities, oracle_moments};
    use approx::assert_relative_eq;

    fn random_blocks(n: usize, seed: u64) -> Vec<(Environment, Range<i64>)> {
        let q = sample_q_blocks(&OmegaDistribution::fixture(), n, seed).unwrap();
        q.ladders.blocks().map(|b| (q.env.clone(), b.start..b.end)).collect()
    }

    #[test]
    fn single_site_block_succeeds_with_omega_0() {
        let env = Environment::new(0, vec![0.8]).unwrap();
        assert_relative_eq!(success_probability(&env, 0..1).unwrap(), 0.8);
        assert_eq!(expected_success_time(&env, 0..1).unwrap(), 1.0);
        let e = m_extremes(&env, 0..1).unwrap();
        assert_eq!((e.m_minus, e.m_plus, e.tau), (1.0, 1.0, 1));
    }

    #[test]
    fn homogeneous_two_site_block() {
        let env = Environment::homogeneous(0, 2, 2.0 / 3.0).unwrap();
        assert_relative_eq!(
            success_probability(&env, 0..2).unwrap(),
            4.0 / 9.0,
            max_relative = 1e-14
        );
        assert_eq!(conditioned_environment(&env, 0..2).unwrap().omegas(), &[1.0, 1.0]);
    }

    #[test]
    fn success_probability_matches_harmonic_oracle() {
        for (env, b) in random_blocks(200, 1) {
            let h = oracle_hitting_probabilities(&env, b.start, b.end).unwrap();
            let w0 = env.omega(b.start).unwrap();
            let p = success_probability(&env, b.clone()).unwrap();
            assert_relative_eq!(p, w0 * h[1], max_relative = 1e-12);
            assert!(p > 0.0 && p <= w0);
        }
    }

    #[test]
    fn conditioned_environment_is_the_doob_transform() {
        for (env, b) in random_blocks(200, 2) {
            let h = oracle_hitting_probabilities(&env, b.start, b.end).unwrap();
            let bar = conditioned_environment(&env, b.clone()).unwrap();
            for i in 1..h.len() - 1 {
                let site = b.start + i as i64;
                let expect = env.omega(site).unwrap() * h[i + 1] / h[i];
                assert_relative_eq!(bar.omega(site).unwrap(), expect, max_relative = 1e-10);
                assert!(bar.omega(site).unwrap() >= env.omega(site).unwrap());
            }
            for i in b.start + 2..b.end {
                for j in i..b.end {
                    assert!(bar.log_pi(i, j).unwrap() <= env.log_pi(i, j).unwrap() + 1e-12);
                }
            }
        }
    }

    #[test]
    fn success_time_matches_oracle_and_bound() {
        for (env, b) in random_blocks(200, 3) {
            let es = expected_success_time(&env, b.clone()).unwrap();
            let bar = conditioned_environment(&env, b.clone()).unwrap();
            let (om, _) = oracle_moments(&bar, b.end, b.start, b.start).unwrap();
            assert_relative_eq!(es, om, max_relative = 1e-10);
            let nu = (b.end - b.start) as f64;
            let mbar = conditioned_block_max(&env, b.clone()).unwrap();
            assert!(es <= nu + 2.0 * nu * nu * mbar + 1e-9);
            let e = m_extremes(&env, b).unwrap();
            assert!(mbar <= nu * nu * e.m_plus / e.m_minus.powi(3) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn extremes_match_brute_force() {
        for (env, b) in random_blocks(300, 4) {
            let e = m_extremes(&env, b.clone()).unwrap();
            let nu = (b.end - b.start) as usize;
            let pi = |i: usize, j: usize| env.log_pi(b.start + i as i64, b.start + j as i64).unwrap();
            let m = (0..nu).map(|j| pi(0, j)).fold(f64::NEG_INFINITY, f64::max);
            let tau = (1..=nu).filter(|&k| pi(0, k - 1) == m).max().unwrap();
            let mut lo: f64 = 0.0;
            let mut hi: f64 = 0.0;
            for i in 1..nu {
                for j in i..nu {
                    if j < tau {
                        lo = lo.min(pi(i, j));
                    }
                    if i > tau {
                        hi = hi.max(pi(i, j));
                    }
                }
            }
            assert_eq!(e.tau, tau);
            assert_relative_eq!(e.m_minus, lo.exp(), max_relative = 1e-12);
            assert_relative_eq!(e.m_plus, hi.exp(), max_relative = 1e-12);
        }
    }

    #[test]
    fn descending_block_has_tau_one() {
        let env = Environment::new(0, vec![0.7, 0.8, 0.6]).unwrap();
        let e = m_extremes(&env, 0..3).unwrap();
        assert_eq!((e.tau, e.m_minus), (1, 1.0));
    }
}
