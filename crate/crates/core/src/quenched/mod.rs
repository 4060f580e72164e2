//! Exact quenched moments of crossing times, excursion quantities of single
//! blocks and the linear-system oracle they are checked against.

mod block;
mod crossing;
mod excursion;
mod oracle;
mod policy;

pub(crate) use block::csv_err;
pub use block::{
    block_moments, block_moments_range, laplace_bounds, laplace_bounds_from, read_block_moments, v_k,
    write_block_moments, BlockMoments, LaplaceBounds,
};
pub use crossing::{crossing_moments, expected_crossing, variance_crossing, CrossingMoments};
pub use excursion::{
    conditioned_block_max, conditioned_environment, expected_success_time, m_extremes, success_probability,
    BlockExtremes,
};
pub use oracle::{oracle_hitting_probabilities, oracle_moments, solve_tridiagonal};
pub use policy::{backtrack_depth, truncation_bound, ReflectionPolicy};
