//! Reference distribution functions, goodness-of-fit statistics and tail
//! index estimation.

mod cdf;
mod stable;
mod tail;

pub use crate::experiments::{verify_block_exponential, verify_variance_stable};
pub use cdf::{
    exp_cdf, ks_critical_value, ks_distance, normal_cdf, shifted_exp_cdf, two_sample_ks, two_sample_ks_critical_value,
    EmpiricalCdf,
};
pub use stable::StableSpec;
pub use tail::hill_estimator;
