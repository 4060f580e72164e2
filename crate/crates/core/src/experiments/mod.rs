//! Experiment drivers: each takes a distribution, its parameters and a seed
//! and returns a report plus its CSV artifacts. Results do not depend on the
//! number of worker threads.

mod config;
mod exact;
mod laws;
mod report;
mod run;
mod subseq;
mod walks;

pub use config::{DetectorParams, ExperimentConfig, ExperimentSpec, PlantSpec, Tolerances};
pub use exact::{m_tail, moments_check};
pub use laws::{verify_block_exponential, verify_variance_stable};
pub use report::{Artifact, ArtifactDigest, Check, ExperimentReport, Findings, Outcome};
pub use run::{run, run_with_workers, worker_count};
pub use subseq::{clt_subsequence, exp_subsequence, scan_environment, scan_experiment};
pub use walks::{annealed_stable, excursion_identity, laplace_sandwich, speed};

use crate::error::{Error, Result};
use crate::limits::{ks_distance, EmpiricalCdf};

pub(crate) fn csv_bytes<T: serde::Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(crate::quenched::csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub(crate) fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// KS distance of `samples` against `cdf`, or `None` with fewer than two.
pub(crate) fn ks_of<F: Fn(f64) -> f64>(samples: Vec<f64>, cdf: F) -> Result<Option<f64>> {
    if samples.len() < 2 {
        return Ok(None);
    }
    Ok(Some(ks_distance(&EmpiricalCdf::new(samples)?, cdf)))
}
