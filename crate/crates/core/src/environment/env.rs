use serde::{Deserialize, Serialize};

use super::distribution::OmegaDistribution;
use crate::error::{Error, Result};
use crate::numerics::softplus;
use crate::rng::{self, Domain};

/// A realized finite window `omega_i`, `left_index <= i < left_index + len`.
///
/// `omega_i = 1` marks a reflection site (`rho_i = 0`); every other entry lies
/// strictly inside `(0, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    left_index: i64,
    omegas: Vec<f64>,
}

impl Environment {
    pub fn new(left_index: i64, omegas: Vec<f64>) -> Result<Self> {
        if let Some((k, w)) = omegas.iter().enumerate().find(|(_, w)| !(**w > 0.0 && **w <= 1.0)) {
            return Err(Error::Config(format!(
                "omega at site {} is {w}; entries must lie in (0, 1]",
                left_index + k as i64
            )));
        }
        Ok(Self { left_index, omegas })
    }

    pub fn homogeneous(left_index: i64, len: usize, omega: f64) -> Result<Self> {
        Self::new(left_index, vec![omega; len])
    }

    pub fn left_index(&self) -> i64 {
        self.left_index
    }

    /// One past the last site.
    pub fn right_end(&self) -> i64 {
        self.left_index + self.omegas.len() as i64
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn contains(&self, site: i64) -> bool {
        site >= self.left_index && site < self.right_end()
    }

    #[inline]
    pub(crate) fn offset(&self, site: i64) -> Result<usize> {
        if self.contains(site) {
            Ok((site - self.left_index) as usize)
        } else {
            Err(Error::Index {
                site,
                lo: self.left_index,
                hi: self.right_end(),
            })
        }
    }

    pub fn omega(&self, site: i64) -> Result<f64> {
        Ok(self.omegas[self.offset(site)?])
    }

    /// `rho_i = (1 - omega_i) / omega_i`.
    pub fn rho(&self, site: i64) -> Result<f64> {
        let w = self.omega(site)?;
        Ok((1.0 - w) / w)
    }

    pub fn log_rho(&self, site: i64) -> Result<f64> {
        Ok(self.rho(site)?.ln())
    }

    /// `log rho` for every site of the window, in order.
    pub fn log_rhos(&self) -> Vec<f64> {
        self.omegas.iter().map(|w| ((1.0 - w) / w).ln()).collect()
    }

    /// `log Pi_{i,j} = sum_{k=i}^{j} log rho_k`.
    pub fn log_pi(&self, i: i64, j: i64) -> Result<f64> {
        if i > j {
            return Err(Error::EmptyRange { i, j });
        }
        let (a, b) = (self.offset(i)?, self.offset(j)?);
        Ok(self.omegas[a..=b].iter().map(|w| ((1.0 - w) / w).ln()).sum())
    }

    pub fn pi(&self, i: i64, j: i64) -> Result<f64> {
        Ok(self.log_pi(i, j)?.exp())
    }

    /// `log W_{i,j} = log sum_{k=i}^{j} Pi_{k,j}`, via `W_{i,k} = rho_k (1 + W_{i,k-1})`.
    pub fn log_w_sum(&self, i: i64, j: i64) -> Result<f64> {
        if i > j {
            return Err(Error::EmptyRange { i, j });
        }
        let (a, b) = (self.offset(i)?, self.offset(j)?);
        let mut lw = f64::NEG_INFINITY;
        for w in &self.omegas[a..=b] {
            lw = ((1.0 - w) / w).ln() + softplus(lw);
        }
        Ok(lw)
    }

    pub fn w_sum(&self, i: i64, j: i64) -> Result<f64> {
        Ok(self.log_w_sum(i, j)?.exp())
    }

    /// `W_j` of the environment with `rho_cutoff := 0`, i.e. `W_{cutoff+1, j}`
    /// (zero when `cutoff == j`).
    pub fn w_tail(&self, j: i64, cutoff: i64) -> Result<f64> {
        if cutoff > j {
            return Err(Error::EmptyRange { i: cutoff, j });
        }
        self.offset(cutoff)?;
        if cutoff == j {
            return Ok(0.0);
        }
        self.w_sum(cutoff + 1, j)
    }

    /// Copy with `omega_site = 1`.
    pub fn with_reflection(&self, site: i64) -> Result<Self> {
        let k = self.offset(site)?;
        let mut out = self.clone();
        out.omegas[k] = 1.0;
        Ok(out)
    }

    /// Sub-window `[lo, hi)`.
    pub fn slice(&self, lo: i64, hi: i64) -> Result<Self> {
        let a = self.offset(lo)?;
        if hi < lo || hi > self.right_end() {
            return Err(Error::Index {
                site: hi,
                lo: self.left_index,
                hi: self.right_end(),
            });
        }
        Ok(Self {
            left_index: lo,
            omegas: self.omegas[a..a + (hi - lo) as usize].to_vec(),
        })
    }
}

/// Samples sites `lo..=hi` i.i.d. from `dist`, deterministically in `seed`.
pub fn sample_environment(dist: &OmegaDistribution, lo: i64, hi: i64, seed: u64) -> Result<Environment> {
    if lo > hi {
        return Err(Error::Config(format!("empty site range [{lo}, {hi}]")));
    }
    let sampler = dist.sampler()?;
    let mut rng = rng::stream(seed, Domain::Environment, 0);
    let omegas = (lo..=hi).map(|_| sampler.sample(&mut rng)).collect();
    Environment::new(lo, omegas)
}
