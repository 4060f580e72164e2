use crate::environment::{Environment, LadderDecomposition};
use crate::error::{Error, Result};

use super::policy::ReflectionPolicy;

/// Quenched mean and variance of a crossing time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrossingMoments {
    pub mean: f64,
    pub variance: f64,
}

/// Running state of `W_j` and `A_j = sum_{i<j} Pi_{i+1,j} (W_i + W_i^2)` for
/// a fixed reflecting site `c` (`W_c = A_c = 0`), advanced one site at a time:
///
/// `A_j = rho_j (A_{j-1} + W_{j-1} + W_{j-1}^2)`, `W_j = rho_j (1 + W_{j-1})`.
///
/// Crossing `j -> j+1` then has mean `1 + 2 W_j` and variance
/// `4 (W_j + W_j^2) + 8 A_j`.
#[derive(Clone, Copy, Debug)]
struct Recurrence {
    cutoff: i64,
    site: i64,
    w: f64,
    a: f64,
}

impl Recurrence {
    fn start(cutoff: i64) -> Self {
        Self {
            cutoff,
            site: cutoff,
            w: 0.0,
            a: 0.0,
        }
    }

    fn advance(&mut self, rho: f64) {
        self.a = rho * (self.a + self.w + self.w * self.w);
        self.w = rho * (1.0 + self.w);
        self.site += 1;
    }

    fn run_to(&mut self, omegas: &[f64], left: i64, j: i64) {
        while self.site < j {
            let w = omegas[(self.site + 1 - left) as usize];
            self.advance((1.0 - w) / w);
        }
    }
}

/// Exact quenched mean and variance of the hitting time of `to` from `from`,
/// with the reflecting site re-resolved at every step per `policy`.
///
/// Steps that share a cutoff reuse one running recurrence, so block and fixed
/// reflection cost O(to - cutoff); distance reflection costs O(b) per step.
pub fn crossing_moments(
    env: &Environment,
    ladders: Option<&LadderDecomposition>,
    from: i64,
    to: i64,
    policy: ReflectionPolicy,
) -> Result<CrossingMoments> {
    if from > to {
        return Err(Error::EmptyRange { i: from, j: to });
    }
    if from == to {
        return Ok(CrossingMoments {
            mean: 0.0,
            variance: 0.0,
        });
    }
    if !env.contains(from) || !env.contains(to - 1) {
        return Err(Error::Index {
            site: if env.contains(from) { to - 1 } else { from },
            lo: env.left_index(),
            hi: env.right_end(),
        });
    }
    let omegas = env.omegas();
    let left = env.left_index();
    let mut mean = 0.0;
    let mut variance = 0.0;
    let mut rec: Option<Recurrence> = None;
    for j in from..to {
        let c = policy.cutoff(env, ladders, j)?;
        let r = match rec.as_mut() {
            Some(r) if r.cutoff == c && r.site <= j => r,
            _ => rec.insert(Recurrence::start(c)),
        };
        r.run_to(omegas, left, j);
        mean += 1.0 + 2.0 * r.w;
        variance += 4.0 * (r.w + r.w * r.w) + 8.0 * r.a;
    }
    Ok(CrossingMoments { mean, variance })
}

pub fn expected_crossing(
    env: &Environment,
    ladders: Option<&LadderDecomposition>,
    from: i64,
    to: i64,
    policy: ReflectionPolicy,
) -> Result<f64> {
    Ok(crossing_moments(env, ladders, from, to, policy)?.mean)
}

pub fn variance_crossing(
    env: &Environment,
    ladders: Option<&LadderDecomposition>,
    from: i64,
    to: i64,
    policy: ReflectionPolicy,
) -> Result<f64> {
    Ok(crossing_moments(env, ladders, from, to, policy)?.variance)
}
