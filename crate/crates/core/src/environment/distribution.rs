use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;
use statrs::function::gamma::digamma;

use crate::error::{Error, Result};
use crate::numerics::bisect;

/// Sampled sites are kept inside `[ELLIPTICITY_FLOOR, 1 - ELLIPTICITY_FLOOR]`.
pub const ELLIPTICITY_FLOOR: f64 = 1e-9;

/// Law of a single site probability `omega_0` (probability of a step right).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OmegaDistribution {
    /// `omega_a` with probability `q`, otherwise `omega_b`.
    TwoPoint {
        omega_a: f64,
        omega_b: f64,
        q: f64,
    },
    Beta {
        alpha: f64,
        beta: f64,
    },
    /// Atoms `(omega, weight)`.
    Discrete {
        atoms: Vec<(f64, f64)>,
    },
}

fn rho_of(omega: f64) -> f64 {
    (1.0 - omega) / omega
}

fn check_open_unit(what: &str, x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("`{what}` = {x} must lie strictly inside (0, 1)")))
    }
}

impl OmegaDistribution {
    /// Point mass at `omega`.
    pub fn homogeneous(omega: f64) -> Self {
        OmegaDistribution::TwoPoint {
            omega_a: omega,
            omega_b: omega,
            q: 1.0,
        }
    }

    /// Two-point law on `rho in {rho_a, rho_b}` with the weight chosen so that
    /// `E[rho^s] = 1` holds for the requested `s`.
    pub fn two_point_with_index(rho_a: f64, rho_b: f64, s: f64) -> Result<Self> {
        let (a, b) = (rho_a.powf(s), rho_b.powf(s));
        let q = (1.0 - b) / (a - b);
        let dist = OmegaDistribution::TwoPoint {
            omega_a: 1.0 / (1.0 + rho_a),
            omega_b: 1.0 / (1.0 + rho_b),
            q,
        };
        dist.validate()?;
        Ok(dist)
    }

    /// The non-lattice `s = 3/2` law used throughout the tests and examples:
    /// `rho in {4, 3/20}`.
    pub fn fixture() -> Self {
        Self::two_point_with_index(4.0, 0.15, 1.5).expect("fixture is valid")
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            OmegaDistribution::TwoPoint { omega_a, omega_b, q } => {
                check_open_unit("omega_a", *omega_a)?;
                check_open_unit("omega_b", *omega_b)?;
                if !(0.0..=1.0).contains(q) {
                    return Err(Error::Config(format!("`q` = {q} is not a probability")));
                }
            }
            OmegaDistribution::Beta { alpha, beta } => {
                for (name, v) in [("alpha", alpha), ("beta", beta)] {
                    if !(*v > 0.0 && v.is_finite()) {
                        return Err(Error::Config(format!("`{name}` = {v} must be positive and finite")));
                    }
                }
            }
            OmegaDistribution::Discrete { atoms } => {
                if atoms.is_empty() {
                    return Err(Error::Config("discrete distribution has no atoms".into()));
                }
                let mut total = 0.0;
                for &(omega, w) in atoms {
                    check_open_unit("atom", omega)?;
                    if !(0.0..=1.0).contains(&w) {
                        return Err(Error::Config(format!("atom weight {w} is not a probability")));
                    }
                    total += w;
                }
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::Config(format!("atom weights sum to {total}, not 1")));
                }
            }
        }
        Ok(())
    }

    /// `E_P[rho^gamma]`; `+inf` where the moment diverges.
    pub fn moment_rho(&self, gamma: f64) -> f64 {
        match self {
            OmegaDistribution::TwoPoint { omega_a, omega_b, q } => {
                q * rho_of(*omega_a).powf(gamma) + (1.0 - q) * rho_of(*omega_b).powf(gamma)
            }
            OmegaDistribution::Beta { alpha, beta } => {
                // rho^g w^(a-1) (1-w)^(b-1) = w^(a-g-1) (1-w)^(b+g-1)
                if gamma >= *alpha || gamma <= -*beta {
                    f64::INFINITY
                } else {
                    (ln_beta(alpha - gamma, beta + gamma) - ln_beta(*alpha, *beta)).exp()
                }
            }
            OmegaDistribution::Discrete { atoms } => {
                atoms.iter().map(|&(omega, w)| w * rho_of(omega).powf(gamma)).sum()
            }
        }
    }

    pub fn mean_rho(&self) -> f64 {
        self.moment_rho(1.0)
    }

    /// `E_P[log rho]`.
    pub fn mean_log_rho(&self) -> f64 {
        match self {
            OmegaDistribution::TwoPoint { omega_a, omega_b, q } => {
                q * rho_of(*omega_a).ln() + (1.0 - q) * rho_of(*omega_b).ln()
            }
            OmegaDistribution::Beta { alpha, beta } => digamma(*beta) - digamma(*alpha),
            OmegaDistribution::Discrete { atoms } => atoms.iter().map(|&(omega, w)| w * rho_of(omega).ln()).sum(),
        }
    }

    /// `Var_P[log rho]`, used for sampling tolerances.
    pub fn var_log_rho(&self) -> f64 {
        let m = self.mean_log_rho();
        match self {
            OmegaDistribution::TwoPoint { omega_a, omega_b, q } => {
                let (a, b) = (rho_of(*omega_a).ln() - m, rho_of(*omega_b).ln() - m);
                q * a * a + (1.0 - q) * b * b
            }
            OmegaDistribution::Beta { alpha, beta } => trigamma(*alpha) + trigamma(*beta),
            OmegaDistribution::Discrete { atoms } => atoms
                .iter()
                .map(|&(omega, w)| w * (rho_of(omega).ln() - m).powi(2))
                .sum(),
        }
    }

    /// Checks that the walk is transient to the right: `E_P[log rho] < 0`.
    pub fn check_transient(&self) -> Result<()> {
        self.validate()?;
        let m = self.mean_log_rho();
        if m < -1e-10 {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "E[log rho] = {m} is not negative; the walk is not transient to the right"
            )))
        }
    }

    /// Asymptotic speed `v_P = (1 - E rho) / (1 + E rho)` when `E rho < 1`.
    pub fn speed(&self) -> Option<f64> {
        let e = self.mean_rho();
        (e < 1.0).then(|| 1.0 / (1.0 + 2.0 * e / (1.0 - e)))
    }

    pub fn sampler(&self) -> Result<SiteSampler> {
        self.validate()?;
        Ok(match self {
            OmegaDistribution::TwoPoint { omega_a, omega_b, q } => SiteSampler::TwoPoint {
                omega_a: *omega_a,
                omega_b: *omega_b,
                q: *q,
            },
            OmegaDistribution::Beta { alpha, beta } => {
                SiteSampler::Beta(Beta::new(*alpha, *beta).map_err(|e| Error::Config(e.to_string()))?)
            }
            OmegaDistribution::Discrete { atoms } => {
                let mut cumulative = Vec::with_capacity(atoms.len());
                let mut acc = 0.0;
                for &(omega, w) in atoms {
                    acc += w;
                    cumulative.push((acc, omega));
                }
                SiteSampler::Discrete(cumulative)
            }
        })
    }
}

/// Trigamma by recurrence plus the asymptotic series.
fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 6.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    acc + 1.0 / x + x2 / 2.0 + (1.0 / x) * x2 * (1.0 / 6.0 - x2 * (1.0 / 30.0 - x2 / 42.0))
}

/// Prepared sampler for one [`OmegaDistribution`].
#[derive(Clone, Debug)]
pub enum SiteSampler {
    TwoPoint { omega_a: f64, omega_b: f64, q: f64 },
    Beta(Beta<f64>),
    Discrete(Vec<(f64, f64)>),
}

impl SiteSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let omega = match self {
            SiteSampler::TwoPoint { omega_a, omega_b, q } => {
                if *q >= 1.0 || rng.random::<f64>() < *q {
                    *omega_a
                } else {
                    *omega_b
                }
            }
            SiteSampler::Beta(b) => b.sample(rng),
            SiteSampler::Discrete(cumulative) => {
                let u: f64 = rng.random();
                cumulative
                    .iter()
                    .find(|(c, _)| u < *c)
                    .or(cumulative.last())
                    .map(|&(_, omega)| omega)
                    .expect("non-empty atoms")
            }
        };
        omega.clamp(ELLIPTICITY_FLOOR, 1.0 - ELLIPTICITY_FLOOR)
    }
}

/// Index and speed of a transient-right law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityParams {
    /// Root of `E_P[rho^s] = 1`.
    pub s: f64,
    /// `None` when `E_P rho >= 1` (zero speed).
    pub v_p: Option<f64>,
    pub e_rho: f64,
    pub e_log_rho: f64,
}

const ROOT_LO: f64 = 1e-6;
const ROOT_HI: f64 = 64.0;

/// Solves `E_P[rho^gamma] = 1` for the unique positive root.
///
/// `gamma -> E_P[rho^gamma]` is convex and starts below 1 (the log-moment is
/// negative), so the root is bracketed by scanning a geometric grid for the
/// first point above 1 and then bisected.
pub fn solve_s(dist: &OmegaDistribution) -> Result<StabilityParams> {
    dist.check_transient()?;
    let f = |g: f64| dist.moment_rho(g) - 1.0;
    let mut lo = ROOT_LO;
    if f(lo) >= 0.0 {
        return Err(Error::NoRoot {
            lo: ROOT_LO,
            hi: ROOT_HI,
        });
    }
    let mut hi = None;
    let mut g = lo;
    while g < ROOT_HI {
        let next = (g * 1.25).min(ROOT_HI);
        if f(next) > 0.0 {
            hi = Some(next);
            break;
        }
        lo = next;
        g = next;
    }
    let hi = hi.ok_or(Error::NoRoot {
        lo: ROOT_LO,
        hi: ROOT_HI,
    })?;
    let s = bisect(
        |g| {
            let v = f(g);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        },
        lo,
        hi,
    );
    let residual = f(s);
    if residual.abs() >= 1e-10 {
        return Err(Error::Numerical(format!(
            "root bracket for s collapsed at {s} with residual {residual}"
        )));
    }
    Ok(StabilityParams {
        s,
        v_p: dist.speed(),
        e_rho: dist.mean_rho(),
        e_log_rho: dist.mean_log_rho(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn recovers_planted_index_for_lattice_two_point() {
        // q 2^s + (1 - q) 4^-s = 1 at s = 3/2 gives q = (1 - 1/8) / (2^1.5 - 1/8).
        let q = (1.0 - 0.125) / (2f64.powf(1.5) - 0.125);
        let dist = OmegaDistribution::TwoPoint {
            omega_a: 1.0 / 3.0,
            omega_b: 0.8,
            q,
        };
        let params = solve_s(&dist).unwrap();
        assert!((params.s - 1.5).abs() < 1e-8, "s = {}", params.s);
        assert!((dist.moment_rho(params.s) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn homogeneous_drift_has_no_root() {
        let dist = OmegaDistribution::homogeneous(2.0 / 3.0);
        assert!(matches!(solve_s(&dist), Err(Error::NoRoot { .. })));
    }

    #[test]
    fn homogeneous_speed_is_two_p_minus_one() {
        let dist = OmegaDistribution::homogeneous(2.0 / 3.0);
        assert_relative_eq!(dist.mean_rho(), 0.5, max_relative = 1e-15);
        assert_relative_eq!(dist.speed().unwrap(), 1.0 / 3.0, max_relative = 1e-15);
    }

    #[test]
    fn convexity_brackets_the_root() {
        for dist in [
            OmegaDistribution::fixture(),
            OmegaDistribution::Beta { alpha: 5.0, beta: 2.0 },
        ] {
            let s = solve_s(&dist).unwrap().s;
            assert!(dist.moment_rho(s - 0.1) < 1.0);
            assert!(dist.moment_rho(s + 0.1) > 1.0);
        }
    }

    #[test]
    fn beta_moments_match_quadrature() {
        // Gauss-Legendre on w in (0,1) for a smooth integrand (alpha - gamma > 1).
        let (alpha, beta) = (5.0, 2.0);
        let dist = OmegaDistribution::Beta { alpha, beta };
        let (x, w) = crate::numerics::gauss_legendre(64);
        let norm = ln_beta(alpha, beta).exp();
        let quad = |f: &dyn Fn(f64) -> f64| -> f64 {
            x.iter()
                .zip(&w)
                .map(|(&x, &w)| {
                    let t = 0.5 * (x + 1.0);
                    0.5 * w * f(t) * t.powf(alpha - 1.0) * (1.0 - t).powf(beta - 1.0) / norm
                })
                .sum()
        };
        assert_relative_eq!(
            dist.moment_rho(1.5),
            quad(&|t| ((1.0 - t) / t).powf(1.5)),
            max_relative = 1e-10
        );
        // log rho has integrable log singularities; 64 points give ~1e-6.
        assert_relative_eq!(
            dist.mean_log_rho(),
            quad(&|t| ((1.0 - t) / t).ln()),
            max_relative = 1e-4
        );
    }

    #[test]
    fn discrete_weights_must_sum_to_one() {
        let bad = OmegaDistribution::Discrete {
            atoms: vec![(0.3, 0.5), (0.8, 0.4)],
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let good = OmegaDistribution::Discrete {
            atoms: vec![(0.3, 0.5), (0.8, 0.5)],
        };
        good.validate().unwrap();
    }

    #[test]
    fn boundary_atoms_are_rejected() {
        let dist = OmegaDistribution::TwoPoint {
            omega_a: 1.0,
            omega_b: 0.5,
            q: 0.5,
        };
        assert!(dist.validate().is_err());
    }

    #[test]
    fn config_roundtrip_uses_kind_tag() {
        let json = r#"{"kind":"beta","alpha":5.0,"beta":2.0}"#;
        let dist: OmegaDistribution = serde_json::from_str(json).unwrap();
        assert_eq!(dist, OmegaDistribution::Beta { alpha: 5.0, beta: 2.0 });
    }
}
