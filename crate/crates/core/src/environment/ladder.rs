use rand::Rng;
use serde::{Deserialize, Serialize};

use super::distribution::{OmegaDistribution, SiteSampler};
use super::env::Environment;
use crate::error::{Error, Result};
use crate::rng::{self, Domain};

/// Hard cap on a single block's length when sampling. Block lengths have
/// exponential tails, so hitting this means the distribution is misconfigured.
pub const RUNAWAY_BLOCK_CAP: usize = 100_000;

/// Ladder locations `nu_k` and per-block maxima
/// `M_k = max { Pi_{nu_{k-1}, j} : nu_{k-1} <= j < nu_k }`.
///
/// Block `k` is the stretch `[nu_{k-1}, nu_k)`, with `nu_0 = 0`. Blocks with
/// `k >= 1` lie right of the origin; blocks with `k <= 0` are left context
/// (present only for environments sampled with context).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderDecomposition {
    nu: Vec<i64>,
    origin: usize,
    log_block_max: Vec<f64>,
}

/// One block of a [`LadderDecomposition`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Block {
    pub index: i64,
    pub start: i64,
    pub end: i64,
    pub log_max: f64,
}

impl Block {
    pub fn len(&self) -> usize {
        (self.end - self.start) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn max(&self) -> f64 {
        self.log_max.exp()
    }
}

struct ScanOutcome {
    boundaries: Vec<i64>,
    log_max: Vec<f64>,
    complete: bool,
}

/// Running-minimum scan: from each ladder location, accumulate `log rho` until
/// the partial product first drops below 1.
fn scan(log_rhos: &[f64], first_site: i64, start: usize, max_blocks: usize) -> ScanOutcome {
    let mut boundaries = vec![first_site + start as i64];
    let mut log_max = Vec::new();
    let mut pos = start;
    while log_max.len() < max_blocks {
        let mut sum = 0.0;
        let mut best = f64::NEG_INFINITY;
        let mut found = false;
        while pos < log_rhos.len() {
            sum += log_rhos[pos];
            pos += 1;
            best = best.max(sum);
            if sum < 0.0 {
                found = true;
                break;
            }
        }
        if !found {
            return ScanOutcome {
                boundaries,
                log_max,
                complete: false,
            };
        }
        boundaries.push(first_site + pos as i64);
        log_max.push(best);
    }
    ScanOutcome {
        boundaries,
        log_max,
        complete: true,
    }
}

impl LadderDecomposition {
    fn from_parts(nu: Vec<i64>, origin: usize, log_block_max: Vec<f64>) -> Self {
        debug_assert_eq!(nu.len(), log_block_max.len() + 1);
        debug_assert_eq!(nu[origin], 0);
        Self {
            nu,
            origin,
            log_block_max,
        }
    }

    /// `nu_k`, if known.
    pub fn nu(&self, k: i64) -> Option<i64> {
        let idx = self.origin as i64 + k;
        (idx >= 0 && (idx as usize) < self.nu.len()).then(|| self.nu[idx as usize])
    }

    /// Ladder locations `nu_0 = 0, nu_1, ...` right of the origin.
    pub fn locations(&self) -> &[i64] {
        &self.nu[self.origin..]
    }

    /// Number of complete blocks right of the origin.
    pub fn len(&self) -> usize {
        self.nu.len() - 1 - self.origin
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of left-context blocks (indices `0, -1, ...`).
    pub fn context_blocks(&self) -> usize {
        self.origin
    }

    /// Smallest `k` with `nu_k` known.
    pub fn first_location(&self) -> i64 {
        -(self.origin as i64)
    }

    pub fn block(&self, k: i64) -> Option<Block> {
        let idx = self.origin as i64 + k - 1;
        if idx < 0 || idx as usize >= self.log_block_max.len() {
            return None;
        }
        let idx = idx as usize;
        Some(Block {
            index: k,
            start: self.nu[idx],
            end: self.nu[idx + 1],
            log_max: self.log_block_max[idx],
        })
    }

    /// `M_k`.
    pub fn block_max(&self, k: i64) -> Option<f64> {
        self.block(k).map(|b| b.max())
    }

    /// `nu_k - nu_{k-1}`.
    pub fn block_len(&self, k: i64) -> Option<usize> {
        self.block(k).map(|b| b.len())
    }

    /// Blocks `1..=len()`.
    pub fn blocks(&self) -> impl Iterator<Item = Block> + '_ {
        (1..=self.len() as i64).filter_map(|k| self.block(k))
    }

    /// Index `k` of the block with `nu_{k-1} <= site < nu_k`.
    pub fn block_containing(&self, site: i64) -> Option<i64> {
        if site < self.nu[0] || site >= *self.nu.last()? {
            return None;
        }
        let idx = self.nu.partition_point(|&x| x <= site);
        Some(idx as i64 - self.origin as i64)
    }
}

/// First `max_blocks` ladder locations right of site 0.
///
/// Fails with [`Error::PartialLadder`] (carrying the blocks found) when the
/// window ends first.
pub fn ladder_locations(env: &Environment, max_blocks: usize) -> Result<LadderDecomposition> {
    let start = env.offset(0)?;
    let log_rhos = env.log_rhos();
    let out = scan(&log_rhos, env.left_index(), start, max_blocks);
    let found = out.log_max.len();
    let ladders = LadderDecomposition::from_parts(out.boundaries, 0, out.log_max);
    if out.complete {
        Ok(ladders)
    } else {
        Err(Error::PartialLadder {
            found,
            wanted: max_blocks,
            partial: Box::new(ladders),
        })
    }
}

/// Ladder decomposition of a window built from concatenated blocks that
/// starts at a ladder location at or left of 0; every complete block is kept,
/// and site 0 must be one of the boundaries.
pub fn ladders_with_context(env: &Environment) -> Result<LadderDecomposition> {
    let log_rhos = env.log_rhos();
    let out = scan(&log_rhos, env.left_index(), 0, usize::MAX);
    let origin = out
        .boundaries
        .iter()
        .position(|&x| x == 0)
        .ok_or_else(|| Error::Config("site 0 is not a ladder location of this window".to_string()))?;
    Ok(LadderDecomposition::from_parts(out.boundaries, origin, out.log_max))
}

/// An environment built from whole ladder blocks, with its decomposition.
#[derive(Clone, Debug, PartialEq)]
pub struct QEnvironment {
    pub env: Environment,
    pub ladders: LadderDecomposition,
}

/// Draws sites until the running sum of `log rho` first turns negative,
/// appending them to `out`; returns the block's `log M`.
pub fn sample_p_block<R: Rng + ?Sized>(
    sampler: &SiteSampler,
    rng: &mut R,
    out: &mut Vec<f64>,
    cap: usize,
) -> Result<f64> {
    let mut sum = 0.0;
    let mut best = f64::NEG_INFINITY;
    for _ in 0..cap {
        let w = sampler.sample(rng);
        out.push(w);
        sum += ((1.0 - w) / w).ln();
        best = best.max(sum);
        if sum < 0.0 {
            return Ok(best);
        }
    }
    Err(Error::RunawayBlock { cap })
}

impl QEnvironment {
    /// Lays blocks end to end: `right` from site 0 rightwards, `context`
    /// leftwards from site 0 (nearest block first). Each block must end at its
    /// first ladder location.
    pub fn assemble(context: &[Vec<f64>], right: &[Vec<f64>]) -> Result<Self> {
        let ctx_len: usize = context.iter().map(Vec::len).sum();
        let mut omegas = Vec::with_capacity(ctx_len + right.iter().map(Vec::len).sum::<usize>());
        for b in context.iter().rev().chain(right) {
            omegas.extend_from_slice(b);
        }
        let env = Environment::new(-(ctx_len as i64), omegas)?;
        let ladders = ladders_with_context(&env)?;
        if ladders.context_blocks() != context.len() || ladders.len() != right.len() {
            return Err(Error::Config("blocks do not end at their first ladder location".into()));
        }
        Ok(Self { env, ladders })
    }
}

/// `n_blocks` i.i.d. blocks cut at their first ladder location, laid end to
/// end from site 0: the nonnegative part of an environment under `Q`.
pub fn sample_q_blocks(dist: &OmegaDistribution, n_blocks: usize, seed: u64) -> Result<QEnvironment> {
    sample_q_environment(dist, n_blocks, 0, seed)
}

/// Like [`sample_q_blocks`], plus `context_blocks` i.i.d. blocks left of the
/// origin (block 0 adjacent to it). Right blocks do not depend on the amount
/// of context.
pub fn sample_q_environment(
    dist: &OmegaDistribution,
    n_blocks: usize,
    context_blocks: usize,
    seed: u64,
) -> Result<QEnvironment> {
    sample_q_environment_capped(dist, n_blocks, context_blocks, seed, RUNAWAY_BLOCK_CAP)
}

pub fn sample_q_environment_capped(
    dist: &OmegaDistribution,
    n_blocks: usize,
    context_blocks: usize,
    seed: u64,
    cap: usize,
) -> Result<QEnvironment> {
    dist.check_transient()?;
    let sampler = dist.sampler()?;
    let draw = |domain, count| -> Result<Vec<Vec<f64>>> {
        let mut rng = rng::stream(seed, domain, 0);
        (0..count)
            .map(|_| {
                let mut b = Vec::new();
                sample_p_block(&sampler, &mut rng, &mut b, cap)?;
                Ok(b)
            })
            .collect()
    };
    let right = draw(Domain::Environment, n_blocks)?;
    let context = draw(Domain::Context, context_blocks)?;
    QEnvironment::assemble(&context, &right)
}
