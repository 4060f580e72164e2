use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::Result;

/// One pass/fail comparison of a measured value against its threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    /// `true` when `value <= threshold` is the passing direction.
    pub at_most: bool,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            at_most: true,
            passed: value <= threshold,
        }
    }

    pub fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            at_most: false,
            passed: value >= threshold,
        }
    }
}

/// A named output file.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn new(name: &str, bytes: Vec<u8>) -> Self {
        Self {
            name: name.into(),
            bytes,
        }
    }

    pub fn sha256(&self) -> String {
        hex(&Sha256::digest(&self.bytes))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArtifactDigest {
    pub name: String,
    pub sha256: String,
}

/// What an experiment measured, before it is tied to a config.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Findings {
    pub n_samples: usize,
    pub ks: Option<f64>,
    pub hill: Option<f64>,
    pub fitted_b: Option<f64>,
    pub censored_rate: f64,
    pub checks: Vec<Check>,
    pub details: Value,
    pub artifacts: Vec<Artifact>,
}

/// The JSON summary of one run. It holds no timing information, so reruns
/// with the same config are byte-identical.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub config_hash: String,
    pub version: String,
    pub seed: u64,
    pub params: Value,
    pub n_samples: usize,
    pub ks: Option<f64>,
    pub hill: Option<f64>,
    pub fitted_b: Option<f64>,
    pub censored_rate: f64,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub artifacts: Vec<ArtifactDigest>,
    pub details: Value,
}

impl ExperimentReport {
    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// A report together with the files it describes.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub report: ExperimentReport,
    pub artifacts: Vec<Artifact>,
}

impl Outcome {
    pub fn artifact(&self, name: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.name == name)
    }

    /// Writes every artifact and `report.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for a in &self.artifacts {
            fs::write(dir.join(&a.name), &a.bytes)?;
        }
        fs::write(dir.join("report.json"), self.report.to_json())?;
        Ok(())
    }
}
