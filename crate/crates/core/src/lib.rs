//! Quenched analysis of one-dimensional random walks in i.i.d. random
//! environments that are transient to the right with stability index
//! `s in (1, 2)`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod environment;
pub mod error;
pub mod experiments;
pub mod io;
pub mod limits;
pub mod numerics;
pub mod quenched;
pub mod rng;
pub mod subsequence;
pub mod walk;

pub use error::{Error, Result};
