use serde::{Deserialize, Serialize};

use crate::environment::{Environment, LadderDecomposition};
use crate::error::{Error, Result};

/// `b_n = floor(ln(n)^2)`, the backtracking allowance at scale `n`.
pub fn backtrack_depth(n: u64) -> usize {
    if n <= 1 {
        return 0;
    }
    let l = (n as f64).ln();
    (l * l).floor() as usize
}

/// Where the walk is reflected (`omega := 1`) while it crosses a given step.
///
/// The cutoff for the step `j -> j+1` is the reflecting site in force once the
/// walk has first reached `j`:
/// * `None`: the left edge of the environment window (an approximation of the
///   unreflected walk; see [`truncation_bound`]).
/// * `Blocks { b }`: `nu_{k-1-b}` when `j` lies in block `k`, i.e. the walk
///   may backtrack `b` whole blocks behind the block it is crossing.
/// * `Distance { b }`: `j - b`.
/// * `Fixed { site }`: one reflecting site throughout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReflectionPolicy {
    None,
    Blocks { b: usize },
    Distance { b: usize },
    Fixed { site: i64 },
}

impl ReflectionPolicy {
    /// Block reflection at the backtracking depth of scale `n`.
    pub fn at_scale(n: u64) -> Self {
        Self::Blocks { b: backtrack_depth(n) }
    }

    pub fn needs_ladders(&self) -> bool {
        matches!(self, Self::Blocks { .. })
    }

    /// Reflecting site for the step `j -> j+1`.
    pub fn cutoff(&self, env: &Environment, ladders: Option<&LadderDecomposition>, j: i64) -> Result<i64> {
        let lo = env.left_index();
        let c = match *self {
            Self::None => lo,
            Self::Fixed { site } => {
                if site > j {
                    return Err(Error::Domain(format!(
                        "reflecting site {site} lies right of the walk at {j}"
                    )));
                }
                site
            }
            Self::Distance { b } => j - b as i64,
            Self::Blocks { b } => {
                let l = ladders.ok_or_else(|| Error::Config("block reflection needs a ladder decomposition".into()))?;
                let k = l.block_containing(j).ok_or(Error::Index {
                    site: j,
                    lo: l.nu(l.first_location()).unwrap_or(0),
                    hi: l.nu(l.len() as i64).unwrap_or(0),
                })?;
                let target = k - 1 - b as i64;
                match l.nu(target) {
                    Some(site) => site,
                    None => {
                        return Err(Error::InsufficientContext {
                            needed: target,
                            available: l.first_location(),
                            extra_blocks: Some((l.first_location() - target) as usize),
                        })
                    }
                }
            }
        };
        if c < lo {
            return Err(Error::InsufficientContext {
                needed: c,
                available: lo,
                extra_blocks: None,
            });
        }
        Ok(c)
    }
}

/// Bound on the annealed error of cutting the walk off `depth` sites behind
/// the current position when `E rho < 1`: `2 (E rho)^(depth+1) / (1 - E rho)`.
pub fn truncation_bound(mean_rho: f64, depth: usize) -> f64 {
    if mean_rho >= 1.0 {
        return f64::INFINITY;
    }
    2.0 * mean_rho.powi(depth as i32 + 1) / (1.0 - mean_rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{sample_q_environment, OmegaDistribution};

    #[test]
    fn depths() {
        assert_eq!(backtrack_depth(1024), 48);
        assert_eq!(backtrack_depth(4096), 69);
        assert_eq!(backtrack_depth(1), 0);
    }

    #[test]
    fn block_cutoffs() {
        let q = sample_q_environment(&OmegaDistribution::fixture(), 10, 3, 2).unwrap();
        let l = &q.ladders;
        let p = ReflectionPolicy::Blocks { b: 2 };
        // Block 1 starts at 0, reflection two blocks further back.
        assert_eq!(p.cutoff(&q.env, Some(l), 0).unwrap(), l.nu(-2).unwrap());
        let j = l.nu(4).unwrap();
        assert_eq!(p.cutoff(&q.env, Some(l), j).unwrap(), l.nu(2).unwrap());
        match (ReflectionPolicy::Blocks { b: 4 }).cutoff(&q.env, Some(l), 0) {
            Err(Error::InsufficientContext { extra_blocks, .. }) => assert_eq!(extra_blocks, Some(1)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn distance_cutoff_checks_window() {
        let env = Environment::homogeneous(-5, 20, 0.7).unwrap();
        let p = ReflectionPolicy::Distance { b: 5 };
        assert_eq!(p.cutoff(&env, None, 3).unwrap(), -2);
        assert!(matches!(
            p.cutoff(&env, None, -1),
            Err(Error::InsufficientContext {
                needed: -6,
                available: -5,
                ..
            })
        ));
    }

    #[test]
    fn serde_form() {
        let p: ReflectionPolicy = serde_json::from_str(r#"{"kind":"blocks","b":48}"#).unwrap();
        assert_eq!(p, ReflectionPolicy::at_scale(1024));
    }
}
