use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::gauss_legendre;

/// Totally skewed stable law with characteristic function
/// `exp(-b |t|^index (1 - i sgn(t) tan(pi index / 2)))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StableSpec {
    pub index: f64,
    pub b: f64,
}

#[derive(Clone, Copy, Debug)]
struct C64 {
    re: f64,
    im: f64,
}

impl C64 {
    fn polar(r: f64, arg: f64) -> Self {
        Self {
            re: r * arg.cos(),
            im: r * arg.sin(),
        }
    }

    fn exp(self) -> Self {
        Self::polar(self.re.exp(), self.im)
    }
}

const PANEL_NODES: usize = 12;
const MAX_PANELS: usize = 200_000;
/// Integrand terms below `e^-DEAD` are dropped.
const DEAD: f64 = 42.0;

fn panel_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(PANEL_NODES))
}

impl StableSpec {
    pub fn new(index: f64, b: f64) -> Result<Self> {
        if !(index > 0.0 && index < 2.0) || (index - 1.0).abs() < 1e-9 {
            return Err(Error::Domain(format!(
                "stable index must lie in (0,1) or (1,2), got {index}"
            )));
        }
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::Domain(format!("stable scale must be positive, got {b}")));
        }
        Ok(Self { index, b })
    }

    /// `F(x) = F_1(x / b^{1/index})`.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        standard_cdf(self.index, x / self.b.powf(1.0 / self.index))
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        Ok(standard_quantile(self.index, p)? * self.b.powf(1.0 / self.index))
    }

    /// Scale `b` whose median equals `sample_median`.
    pub fn fit_median(index: f64, sample_median: f64) -> Result<Self> {
        let m1 = Self::new(index, 1.0)?.quantile(0.5)?;
        if !(sample_median / m1 > 0.0) {
            return Err(Error::Domain(format!(
                "median {sample_median} incompatible with standard median {m1}"
            )));
        }
        Self::new(index, (sample_median / m1).powf(index))
    }
}

/// Gil-Pelaez inversion `F(x) = 1/2 - (1/pi) int_0^inf Im[e^{-itx} phi(t)] / t dt`
/// for `b = 1`.
///
/// Since `Im[e^{-t}] = 0` on the real line, the integral equals
/// `Im int_0^inf (e^{-itx} phi(t) - e^{-t}) dt / t`, whose integrand is
/// analytic in `t` away from 0 and vanishes at 0. The path is rotated to the
/// ray `t = r e^{i psi}` on which `e^{-itx}` decays as well, which turns the
/// oscillatory tail into an exponentially damped one, and integrated in
/// `y = ln r` with Gauss-Legendre panels sized to the local phase rate.
fn standard_cdf(alpha: f64, x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::Domain("stable CDF at NaN".into()));
    }
    if x == f64::INFINITY {
        return Ok(1.0);
    }
    if x == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    let half = alpha * FRAC_PI_2;
    // 1 - i tan(pi a/2) = e^{-i pi a/2} / cos(pi a/2).
    let coef_mod = 1.0 / half.cos().abs();
    let coef_arg = if half.cos() > 0.0 { -half } else { PI - half };
    let psi = if x >= 0.0 {
        let lim = if alpha < 1.0 {
            PI / (2.0 * alpha) - FRAC_PI_2
        } else {
            3.0 * PI / (2.0 * alpha) - FRAC_PI_2
        };
        -0.5 * lim.min(FRAC_PI_2)
    } else {
        let lim = if alpha < 1.0 {
            FRAC_PI_2
        } else {
            FRAC_PI_2 - PI / (2.0 * alpha)
        };
        0.5 * lim
    };
    // Along the ray: t^a (1 - i c) = r^a kappa e^{i phase}.
    let kappa_c = C64::polar(coef_mod, coef_arg + alpha * psi);
    if kappa_c.re <= 0.0 {
        return Err(Error::Numerical(format!("no decaying contour for index {alpha}")));
    }
    let eipsi = C64::polar(1.0, psi);
    let ax = x.abs();

    let integrand = |y: f64| -> (f64, f64) {
        let r = y.exp();
        let ra = (alpha * y).exp();
        // E = -t^a (1 - i c) - i t x
        let t = C64::polar(r, psi);
        let e = C64 {
            re: -ra * kappa_c.re + x * t.im,
            im: -ra * kappa_c.im - x * t.re,
        };
        let h = C64 { re: -t.re, im: -t.im };
        let g_live = e.re > -DEAD;
        let h_live = h.re > -DEAD;
        let mut val = 0.0;
        if g_live {
            val += e.exp().im;
        }
        if h_live {
            val -= h.exp().im;
        }
        // Phase rate d/dy of the live terms, for panel sizing.
        let mut rate: f64 = 0.0;
        if g_live {
            rate = rate.max(alpha * ra * coef_mod + ax * r);
        }
        if h_live {
            rate = rate.max(r);
        }
        (val, rate)
    };

    let y_lo = ((1e-17 / coef_mod).ln() / alpha).min((1e-17 / (ax + 1.0)).ln());
    let y_hi = (DEAD / eipsi.re).ln().max((DEAD / kappa_c.re).ln() / alpha) + 0.5;
    let (nodes, weights) = panel_rule();
    let mut acc = 0.0;
    let mut y = y_lo;
    let mut panels = 0;
    while y < y_hi {
        let (_, rate) = integrand(y);
        let h = (0.5f64).min(2.0 / rate.max(1e-300)).min(y_hi - y);
        let mid = y + 0.5 * h;
        let mut s = 0.0;
        for (u, w) in nodes.iter().zip(weights) {
            s += w * integrand(mid + 0.5 * h * u).0;
        }
        acc += 0.5 * h * s;
        y += h;
        panels += 1;
        if panels > MAX_PANELS {
            return Err(Error::Numerical(format!(
                "stable CDF quadrature did not finish within {MAX_PANELS} panels at x = {x}, y = {y}"
            )));
        }
    }
    Ok((0.5 - acc / PI).clamp(0.0, 1.0))
}

fn standard_quantile(alpha: f64, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("quantile level must lie in (0,1), got {p}")));
    }
    let f = |x: f64| standard_cdf(alpha, x).map(|v| v - p);
    let (mut lo, mut hi) = (-1.0, 1.0);
    while f(lo)? > 0.0 {
        lo *= 2.0;
        if lo < -1e12 {
            return Err(Error::Numerical("quantile bracket diverged".into()));
        }
    }
    while f(hi)? < 0.0 {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Numerical("quantile bracket diverged".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo < 1e-12 * (1.0 + mid.abs()) {
            break;
        }
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use libm::erfc;

    /// Zolotarev's single-integral form (Nolan's parametrization), an
    /// independent route to the same distribution function for `b = 1`.
    fn zolotarev_cdf(alpha: f64, beta: f64, x: f64) -> f64 {
        if x < 0.0 {
            return 1.0 - zolotarev_cdf(alpha, -beta, -x);
        }
        let theta0 = (beta * (PI * alpha / 2.0).tan()).atan() / alpha;
        let c1 = if alpha < 1.0 { (FRAC_PI_2 - theta0) / PI } else { 1.0 };
        if x == 0.0 {
            return (FRAC_PI_2 - theta0) / PI;
        }
        let v = |th: f64| {
            (alpha * theta0).cos().powf(1.0 / (alpha - 1.0))
                * (th.cos() / (alpha * (theta0 + th)).sin()).powf(alpha / (alpha - 1.0))
                * (alpha * theta0 + (alpha - 1.0) * th).cos()
                / th.cos()
        };
        let (nodes, weights) = gauss_legendre(64);
        let (a, b) = (-theta0, FRAC_PI_2);
        let panels = 64;
        let width = (b - a) / panels as f64;
        let mut s = 0.0;
        for p in 0..panels {
            let mid = a + (p as f64 + 0.5) * width;
            for (u, w) in nodes.iter().zip(&weights) {
                let th = mid + 0.5 * width * u;
                let val = (-x.powf(alpha / (alpha - 1.0)) * v(th)).exp();
                if val.is_finite() {
                    s += 0.5 * width * w * val;
                }
            }
        }
        c1 + (1.0 - alpha).signum() / PI * s
    }

    #[test]
    fn levy_closed_form() {
        for b in [0.5, 1.0, 2.3] {
            let spec = StableSpec::new(0.5, b).unwrap();
            for x in [0.01, 0.1, 0.5, 1.0, 3.0, 10.0, 100.0, 1e4] {
                let levy = erfc(b / (2.0f64 * x).sqrt());
                assert!((spec.cdf(x).unwrap() - levy).abs() < 1e-9, "b {b} x {x}");
            }
            assert!(spec.cdf(-1.0).unwrap().abs() < 1e-9);
        }
    }

    #[test]
    fn matches_zolotarev_integral() {
        for alpha in [0.75, 1.5, 1.2, 0.4] {
            for x in [-5.0, -1.5, -0.3, 0.0, 0.2, 0.7, 1.0, 2.5, 8.0, 40.0, 500.0] {
                if alpha < 1.0 && x <= 0.0 {
                    continue;
                }
                let ours = standard_cdf(alpha, x).unwrap();
                let zol = zolotarev_cdf(alpha, 1.0, x);
                assert!((ours - zol).abs() < 1e-7, "alpha {alpha} x {x}: {ours} vs {zol}");
            }
        }
    }

    #[test]
    fn monotone_and_bounded() {
        for alpha in [0.75, 1.5] {
            let spec = StableSpec::new(alpha, 1.3).unwrap();
            let grid: Vec<f64> = (0..100).map(|i| -20.0 + 0.4 * i as f64).collect();
            let vals: Vec<f64> = grid.iter().map(|&x| spec.cdf(x).unwrap()).collect();
            assert!(vals.windows(2).all(|w| w[1] >= w[0] - 1e-10));
            assert!(spec.cdf(-1e6).unwrap() < 1e-6);
            assert!(spec.cdf(1e6).unwrap() > 1.0 - 1e-3f64.min(1e6f64.powf(-alpha) * 10.0));
        }
    }

    #[test]
    fn tail_slope_matches_index() {
        let alpha = 0.75;
        let spec = StableSpec::new(alpha, 1.0).unwrap();
        let t1 = 1.0 - spec.cdf(1e2).unwrap();
        let t2 = 1.0 - spec.cdf(1e4).unwrap();
        let slope = (t2.ln() - t1.ln()) / (1e4f64.ln() - 1e2f64.ln());
        assert!((slope + alpha).abs() < 0.05, "{slope}");
    }

    #[test]
    fn median_fit_inverts_scaling() {
        let spec = StableSpec::new(0.75, 2.7).unwrap();
        let med = spec.quantile(0.5).unwrap();
        assert_relative_eq!(spec.cdf(med).unwrap(), 0.5, epsilon = 1e-9);
        let fit = StableSpec::fit_median(0.75, med).unwrap();
        assert_relative_eq!(fit.b, 2.7, max_relative = 1e-8);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(StableSpec::new(1.0, 1.0).is_err());
        assert!(StableSpec::new(2.0, 1.0).is_err());
        assert!(StableSpec::new(0.75, 0.0).is_err());
    }
}
