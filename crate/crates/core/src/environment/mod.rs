//! Site distributions, sampled environments and the deterministic functionals
//! built on them (`rho`, `Pi`, `W`, ladder locations, block maxima).

mod distribution;
mod env;
mod ladder;

pub use distribution::{solve_s, OmegaDistribution, SiteSampler, StabilityParams, ELLIPTICITY_FLOOR};
pub use env::{sample_environment, Environment};
pub use ladder::{
    ladder_locations, ladders_with_context, sample_p_block, sample_q_blocks, sample_q_environment,
    sample_q_environment_capped, Block, LadderDecomposition, QEnvironment, RUNAWAY_BLOCK_CAP,
};
