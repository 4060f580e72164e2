use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::environment::OmegaDistribution;
use crate::error::{Error, Result};

/// A complete experiment description, as read from a JSON config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub distribution: OmegaDistribution,
    pub experiment: ExperimentSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Output directory; the CLI's `--out` takes precedence.
    #[serde(default)]
    pub out: Option<PathBuf>,
}

/// Gate overrides. Unset fields keep each experiment's default threshold.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Relative error (oracle agreement, speed).
    pub rel: Option<f64>,
    /// Largest acceptable KS distance.
    pub ks: Option<f64>,
    /// Largest acceptable |Hill estimate - target|.
    pub hill: Option<f64>,
    /// Largest acceptable |z| for Monte Carlo agreement.
    pub z: Option<f64>,
    /// Smallest acceptable fraction of Monte Carlo checks inside their bands.
    pub coverage: Option<f64>,
}

/// Detector parameters; `s` comes from the distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorParams {
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default)]
    pub a: Option<usize>,
    #[serde(default = "yes")]
    pub exponential: bool,
    #[serde(default = "yes")]
    pub gaussian: bool,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            c: default_c(),
            eta: default_eta(),
            a: None,
            exponential: true,
            gaussian: true,
        }
    }
}

/// How the Gaussian configuration of a CLT-subsequence run is planted.
///
/// The first `floor(eta d)` blocks of the window get `2a` blocks at evenly
/// spaced positions whose exact crossing mean at that scale lies in
/// `[mu_lo, mu_hi]`; every other block of the window is drawn conditioned
/// on `M <= m_cap`. Blocks before the window are unconditioned. Environments
/// are redrawn until the Gaussian detector fires.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    pub mu_lo: f64,
    pub mu_hi: f64,
    pub m_cap: f64,
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
}

fn default_attempts() -> usize {
    100
}
fn default_c() -> f64 {
    2.0
}
fn default_eta() -> f64 {
    0.5
}
fn yes() -> bool {
    true
}
fn default_lambdas() -> Vec<f64> {
    (1..=40).map(|i| i as f64 / 10.0).collect()
}

macro_rules! defaults {
    ($($name:ident: $ty:ty = $val:expr;)*) => {
        $(fn $name() -> $ty { $val })*
    };
}

defaults! {
    d_environments: usize = 100;
    d_max_len: usize = 40;
    d_max_depth: usize = 20;
    d_t: u64 = 1_000_000;
    d_paths_speed: usize = 200;
    d_left_context: usize = 2_000;
    d_n_exp: u64 = 4096;
    d_epsilon: f64 = 0.1;
    d_blocks_exp: usize = 50;
    d_paths_2000: usize = 2000;
    d_max_search: u64 = 50_000_000;
    d_n_var: u64 = 1024;
    d_reps: usize = 2000;
    d_hill_fraction: f64 = 0.1;
    d_budget: u64 = u64::MAX;
    d_counts: Vec<u64> = vec![128, 1152];
    d_delta_sub: f64 = 0.45;
    d_paths_5000: usize = 5000;
    d_max_envs: usize = 20_000;
    d_c_exp: f64 = 20.0;
    d_blocks_laplace: usize = 500;
    d_scale: u64 = 4096;
    d_mc_blocks: usize = 50;
    d_samples: usize = 10_000;
    d_samples_identity: usize = 100_000;
    d_blocks_exc: usize = 100;
    d_n_annealed: u64 = 4096;
    d_blocks_tail: usize = 1_000_000;
    d_k_tail: usize = 10_000;
    d_reps_annealed: usize = 2000;
}

/// Experiment kind and its parameters; every field has a default matching
/// the standard run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExperimentSpec {
    /// Exact crossing moments against the first-step oracle on random
    /// windows of at most `max_len` sites with reflection `<= max_depth`
    /// sites behind the start.
    MomentsCheck {
        #[serde(default = "d_environments")]
        environments: usize,
        #[serde(default = "d_max_len")]
        max_len: usize,
        #[serde(default = "d_max_depth")]
        max_depth: usize,
    },
    /// Hill estimate of the block-maximum tail index over `blocks` i.i.d.
    /// blocks, from the `k` largest.
    MTail {
        #[serde(default = "d_blocks_tail")]
        blocks: usize,
        #[serde(default = "d_k_tail")]
        k: usize,
    },
    /// `X_t / t` against the speed, one fresh environment per path.
    Speed {
        #[serde(default = "d_t")]
        t: u64,
        #[serde(default = "d_paths_speed")]
        paths: usize,
        #[serde(default = "d_left_context")]
        left_context: usize,
    },
    /// Normalized crossing times of blocks with `M > n^{(1-epsilon)/s}`
    /// against Exp(1).
    BlockExponential {
        #[serde(default = "d_n_exp")]
        n: u64,
        #[serde(default = "d_epsilon")]
        epsilon: f64,
        #[serde(default = "d_blocks_exp")]
        blocks: usize,
        #[serde(default = "d_paths_2000")]
        paths: usize,
        #[serde(default = "d_max_search")]
        max_search_blocks: u64,
    },
    /// Tail of the reflected crossing variance of `n` blocks.
    VarianceStable {
        #[serde(default = "d_n_var")]
        n: u64,
        #[serde(default = "d_reps")]
        reps: usize,
        #[serde(default = "d_hill_fraction")]
        hill_fraction: f64,
    },
    /// Detector scan of one Q-environment along a scale ladder.
    Scan {
        #[serde(default = "d_counts")]
        counts: Vec<u64>,
        #[serde(default = "d_delta_sub")]
        delta: f64,
        #[serde(default)]
        detectors: DetectorParams,
        #[serde(default = "d_budget")]
        budget: u64,
    },
    /// Crossing of a window where the Gaussian event holds, against Phi.
    CltSubsequence {
        #[serde(default = "d_counts")]
        counts: Vec<u64>,
        #[serde(default = "d_delta_sub")]
        delta: f64,
        a: usize,
        #[serde(default = "default_eta")]
        eta: f64,
        #[serde(default = "d_paths_5000")]
        paths: usize,
        /// Plant the configuration instead of waiting for a natural one.
        #[serde(default)]
        plant: Option<PlantSpec>,
        #[serde(default = "d_max_envs")]
        max_environments: usize,
    },
    /// Crossing of a window where the exponential event holds, against
    /// `Psi(x + 1)`.
    ExpSubsequence {
        #[serde(default = "d_counts")]
        counts: Vec<u64>,
        #[serde(default = "d_delta_sub")]
        delta: f64,
        #[serde(default = "d_c_exp")]
        c: f64,
        #[serde(default = "default_eta")]
        eta: f64,
        #[serde(default = "d_paths_5000")]
        paths: usize,
        #[serde(default = "d_max_envs")]
        max_environments: usize,
    },
    /// `(T_n - n / v) / n^{1/s}` over fresh environments, against a fitted
    /// stable law. Reported only; there is no gate.
    AnnealedStable {
        #[serde(default = "d_n_annealed")]
        n: u64,
        #[serde(default = "d_reps_annealed")]
        reps: usize,
    },
    /// Laplace-transform bounds against excursion Monte Carlo.
    LaplaceSandwich {
        #[serde(default = "d_blocks_laplace")]
        blocks: usize,
        #[serde(default = "d_scale")]
        scale: u64,
        #[serde(default = "d_mc_blocks")]
        mc_blocks: usize,
        #[serde(default = "d_samples")]
        samples: usize,
        #[serde(default = "default_lambdas")]
        lambdas: Vec<f64>,
    },
    /// `E T = E S + E N * E F` with `E F` from Monte Carlo.
    ExcursionIdentity {
        #[serde(default = "d_blocks_exc")]
        blocks: usize,
        #[serde(default = "d_scale")]
        scale: u64,
        #[serde(default = "d_samples_identity")]
        samples: usize,
    },
}

impl ExperimentSpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::MomentsCheck { .. } => "moments-check",
            Self::MTail { .. } => "m-tail",
            Self::Speed { .. } => "speed",
            Self::BlockExponential { .. } => "block-exponential",
            Self::VarianceStable { .. } => "variance-stable",
            Self::Scan { .. } => "scan",
            Self::CltSubsequence { .. } => "clt-subsequence",
            Self::ExpSubsequence { .. } => "exp-subsequence",
            Self::AnnealedStable { .. } => "annealed-stable",
            Self::LaplaceSandwich { .. } => "laplace-sandwich",
            Self::ExcursionIdentity { .. } => "excursion-identity",
        }
    }

    /// The spec with every defaulted field filled in, from `{"kind": name}`.
    pub fn default_for(kind: &str) -> Result<Self> {
        let v = serde_json::json!({ "kind": kind });
        serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Tagged enums lose the field path on error; find the offending field by
/// deserializing the tag with one field at a time.
fn culprit<T: serde::de::DeserializeOwned>(text: &str, key: &str) -> Option<String> {
    let v: serde_json::Value = serde_json::from_str(text).ok()?;
    let obj = v.get(key)?.as_object()?;
    let kind = obj.get("kind")?;
    obj.iter().filter(|(k, _)| k.as_str() != "kind").find_map(|(k, val)| {
        let probe = serde_json::json!({ "kind": kind, k.as_str(): val });
        match serde_json::from_value::<T>(probe) {
            Err(e) if !e.to_string().starts_with("missing field") => Some(k.clone()),
            _ => None,
        }
    })
}

impl ExperimentConfig {
    pub fn new(distribution: OmegaDistribution, experiment: ExperimentSpec, seed: u64) -> Self {
        Self {
            distribution,
            experiment,
            seed,
            tolerances: Tolerances::default(),
            out: None,
        }
    }

    /// Parses a JSON config; errors name the offending field path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let msg = e.into_inner().to_string();
            let field = match path.as_str() {
                "experiment" => culprit::<ExperimentSpec>(text, "experiment"),
                "distribution" => culprit::<OmegaDistribution>(text, "distribution"),
                _ => None,
            };
            match field {
                Some(f) => Error::Config(format!("at `{path}.{f}`: {msg}")),
                None => Error::Config(format!("at `{path}`: {msg}")),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.distribution.validate()?;
        let positive = |name: &str, v: u64| {
            if v == 0 {
                Err(Error::Config(format!("`{name}` must be positive")))
            } else {
                Ok(())
            }
        };
        match &self.experiment {
            ExperimentSpec::MomentsCheck {
                environments, max_len, ..
            } => {
                positive("environments", *environments as u64)?;
                positive("max_len", *max_len as u64)?;
            }
            ExperimentSpec::MTail { blocks, k } => {
                if !(*k > 0 && k < blocks) {
                    return Err(Error::Config("need 0 < `k` < `blocks`".into()));
                }
            }
            ExperimentSpec::Speed { t, paths, .. } => {
                positive("t", *t)?;
                positive("paths", *paths as u64)?;
            }
            ExperimentSpec::BlockExponential { n, epsilon, blocks, .. } => {
                positive("n", *n)?;
                positive("blocks", *blocks as u64)?;
                if !(*epsilon > 0.0 && *epsilon < 1.0) {
                    return Err(Error::Config("`epsilon` must lie in (0, 1)".into()));
                }
            }
            ExperimentSpec::VarianceStable { n, reps, hill_fraction } => {
                positive("n", *n)?;
                positive("reps", *reps as u64)?;
                if !(*hill_fraction > 0.0 && *hill_fraction < 1.0) {
                    return Err(Error::Config("`hill_fraction` must lie in (0, 1)".into()));
                }
            }
            ExperimentSpec::Scan { counts, .. } => positive("counts", counts.len() as u64)?,
            ExperimentSpec::CltSubsequence { a, paths, plant, .. } => {
                positive("a", *a as u64)?;
                positive("paths", *paths as u64)?;
                if let Some(p) = plant {
                    if !(p.mu_lo > 0.0 && p.mu_lo <= p.mu_hi) {
                        return Err(Error::Config("plant needs 0 < mu_lo <= mu_hi".into()));
                    }
                    if !(p.m_cap > 0.0) {
                        return Err(Error::Config("plant needs m_cap > 0".into()));
                    }
                    positive("plant.max_attempts", p.max_attempts as u64)?;
                }
            }
            ExperimentSpec::ExpSubsequence { paths, c, .. } => {
                positive("paths", *paths as u64)?;
                if !(*c > 1.0) {
                    return Err(Error::Config("`c` must exceed 1".into()));
                }
            }
            ExperimentSpec::AnnealedStable { n, reps } => {
                positive("n", *n)?;
                positive("reps", *reps as u64)?;
            }
            ExperimentSpec::LaplaceSandwich {
                blocks,
                samples,
                lambdas,
                ..
            } => {
                positive("blocks", *blocks as u64)?;
                positive("samples", *samples as u64)?;
                if lambdas.iter().any(|l| !(*l >= 0.0)) {
                    return Err(Error::Config("`lambdas` must be nonnegative".into()));
                }
            }
            ExperimentSpec::ExcursionIdentity { blocks, samples, .. } => {
                positive("blocks", *blocks as u64)?;
                positive("samples", *samples as u64)?;
            }
        }
        Ok(())
    }

    /// SHA-256 of the config re-serialized with sorted keys and every default
    /// filled in; the output directory is not part of the hash.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = v.as_object_mut() {
            map.remove("out");
        }
        super::report::hex(&Sha256::digest(v.to_string().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_in() {
        let cfg = ExperimentConfig::from_json(
            r#"{"distribution": {"kind": "two_point", "omega_a": 0.6, "omega_b": 0.3, "q": 0.9},
                "experiment": {"kind": "speed"}, "seed": 4}"#,
        )
        .unwrap();
        assert_eq!(
            cfg.experiment,
            ExperimentSpec::Speed {
                t: 1_000_000,
                paths: 200,
                left_context: 2000
            }
        );
        assert_eq!(cfg.experiment.name(), "speed");
    }

    #[test]
    fn hash_ignores_field_order_and_explicit_defaults() {
        let a = ExperimentConfig::from_json(
            r#"{"seed": 1, "experiment": {"kind": "variance-stable", "reps": 20},
                "distribution": {"kind": "beta", "alpha": 5, "beta": 2}}"#,
        )
        .unwrap();
        let b = ExperimentConfig::from_json(
            r#"{"distribution": {"beta": 2, "alpha": 5, "kind": "beta"},
                "experiment": {"reps": 20, "kind": "variance-stable", "n": 1024}, "seed": 1, "out": "x"}"#,
        )
        .unwrap();
        assert_eq!(a.hash(), b.hash());
        let mut c = a.clone();
        c.seed = 2;
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn errors_name_the_field() {
        let err = ExperimentConfig::from_json(
            r#"{"distribution": {"kind": "beta", "alpha": 5, "beta": 2},
                "experiment": {"kind": "speed", "paths": "many"}}"#,
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("experiment.paths"), "{err}");
        let err = ExperimentConfig::from_json(
            r#"{"distribution": {"kind": "beta", "alpha": 5, "beta": 2},
                "experiment": {"kind": "telepathy"}}"#,
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("telepathy"), "{err}");
        assert!(ExperimentConfig::from_json(
            r#"{"distribution": {"kind": "beta", "alpha": 5, "beta": 2},
                "experiment": {"kind": "speed", "paths": 0}}"#
        )
        .is_err());
    }

    #[test]
    fn every_kind_has_defaults() {
        for kind in [
            "moments-check",
            "m-tail",
            "speed",
            "block-exponential",
            "variance-stable",
            "scan",
            "exp-subsequence",
            "annealed-stable",
            "laplace-sandwich",
            "excursion-identity",
        ] {
            assert_eq!(ExperimentSpec::default_for(kind).unwrap().name(), kind);
        }
        assert!(ExperimentSpec::default_for("clt-subsequence").is_err());
    }
}
