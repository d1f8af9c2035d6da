//! Linear stochastic transitivity models.
//!
//! Every model is described by a zero-symmetric CDF `F`, so that item `i`
//! beats item `j` with probability `F(theta_i - theta_j)`. Besides `F`, the
//! estimator needs the density `f`, the log-CDF, the ratio `g = f / F` and its
//! derivative `g'`. All of them are computed here in forms that stay finite far
//! into the tails.

use std::f64::consts::{LN_2, PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use libm::erfc;

use crate::error::{Error, Result};

/// Below this point the Thurstone log-CDF switches to the asymptotic Mills-ratio series.
const TM_TAIL: f64 = -8.0;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ComparisonModel {
    /// Bradley-Terry-Luce: logistic CDF.
    #[default]
    Btl,
    /// Thurstone-Mosteller: standard normal CDF.
    Tm,
    /// Dawkins' threshold model: Laplace(0, scale) CDF.
    Dt { scale: f64 },
}

impl ComparisonModel {
    pub fn dt(scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Domain(format!("DT scale must be positive, got {scale}")));
        }
        Ok(ComparisonModel::Dt { scale })
    }

    pub fn token(&self) -> &'static str {
        match self {
            ComparisonModel::Btl => "btl",
            ComparisonModel::Tm => "tm",
            ComparisonModel::Dt { .. } => "dt",
        }
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        finite(x).map(|x| self.cdf_at(x))
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        finite(x).map(|x| self.pdf_at(x))
    }

    pub fn log_cdf(&self, x: f64) -> Result<f64> {
        finite(x).map(|x| self.log_cdf_at(x))
    }

    pub fn g(&self, x: f64) -> Result<f64> {
        finite(x).map(|x| self.g_at(x))
    }

    pub fn g_prime(&self, x: f64) -> Result<f64> {
        finite(x).map(|x| self.g_prime_at(x))
    }

    pub(crate) fn cdf_at(&self, x: f64) -> f64 {
        match *self {
            ComparisonModel::Btl => logistic(x),
            ComparisonModel::Tm => {
                if x > 0.0 {
                    1.0 - 0.5 * erfc(x / SQRT_2)
                } else {
                    0.5 * erfc(-x / SQRT_2)
                }
            }
            ComparisonModel::Dt { scale } => {
                if x < 0.0 {
                    0.5 * (x / scale).exp()
                } else {
                    1.0 - 0.5 * (-x / scale).exp()
                }
            }
        }
    }

    pub(crate) fn pdf_at(&self, x: f64) -> f64 {
        match *self {
            ComparisonModel::Btl => logistic(x) * logistic(-x),
            ComparisonModel::Tm => (-0.5 * x * x).exp() / (2.0 * PI).sqrt(),
            ComparisonModel::Dt { scale } => (-x.abs() / scale).exp() / (2.0 * scale),
        }
    }

    pub(crate) fn log_cdf_at(&self, x: f64) -> f64 {
        match *self {
            // log F(x) = -softplus(-x)
            ComparisonModel::Btl => {
                if x >= 0.0 {
                    -(-x).exp().ln_1p()
                } else {
                    x - x.exp().ln_1p()
                }
            }
            ComparisonModel::Tm => {
                if x < TM_TAIL {
                    normal_log_pdf(x) + mills_ratio_lower(-x).ln()
                } else if x > 0.0 {
                    (-0.5 * erfc(x / SQRT_2)).ln_1p()
                } else {
                    (0.5 * erfc(-x / SQRT_2)).ln()
                }
            }
            ComparisonModel::Dt { scale } => {
                if x < 0.0 {
                    x / scale - LN_2
                } else {
                    (-0.5 * (-x / scale).exp()).ln_1p()
                }
            }
        }
    }

    /// `log(1 - F(x))`, using the zero-symmetry of `F`.
    pub(crate) fn log_sf_at(&self, x: f64) -> f64 {
        self.log_cdf_at(-x)
    }

    pub(crate) fn g_at(&self, x: f64) -> f64 {
        match *self {
            ComparisonModel::Btl => logistic(-x),
            ComparisonModel::Tm => {
                if x < TM_TAIL {
                    1.0 / mills_ratio_lower(-x)
                } else {
                    (normal_log_pdf(x) - self.log_cdf_at(x)).exp()
                }
            }
            ComparisonModel::Dt { scale } => {
                if x < 0.0 {
                    1.0 / scale
                } else {
                    1.0 / (scale * (2.0 * (x / scale).exp() - 1.0))
                }
            }
        }
    }

    pub(crate) fn g_prime_at(&self, x: f64) -> f64 {
        match *self {
            ComparisonModel::Btl => -logistic(x) * logistic(-x),
            ComparisonModel::Tm => {
                if x < TM_TAIL {
                    // x + g = t (1 - S) / S with S the series sum, t = -x
                    let t = -x;
                    let tail = mills_series_tail(t);
                    let s = 1.0 + tail;
                    let g = t / s;
                    g * t * tail / s
                } else {
                    let g = self.g_at(x);
                    -g * (x + g)
                }
            }
            ComparisonModel::Dt { scale } => {
                // g is constant on the negative half-line; the right derivative is used at 0.
                if x < 0.0 {
                    0.0
                } else {
                    let e = (x / scale).exp();
                    let d = 2.0 * e - 1.0;
                    -2.0 * e / (scale * scale * d * d)
                }
            }
        }
    }
}

impl fmt::Display for ComparisonModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ComparisonModel::Dt { scale } if *scale != 1.0 => write!(f, "dt:{scale}"),
            other => f.write_str(other.token()),
        }
    }
}

impl FromStr for ComparisonModel {
    type Err = Error;

    /// Accepts `btl`, `tm`, `dt`, or `dt:<scale>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "btl" => Ok(ComparisonModel::Btl),
            "tm" => Ok(ComparisonModel::Tm),
            "dt" => Ok(ComparisonModel::Dt { scale: 1.0 }),
            other => match other.strip_prefix("dt:") {
                Some(scale) => {
                    let scale: f64 = scale
                        .parse()
                        .map_err(|_| Error::Validation(format!("bad DT scale `{scale}`")))?;
                    ComparisonModel::dt(scale)
                }
                None => Err(Error::Validation(format!(
                    "unknown model `{other}` (expected btl, tm or dt)"
                ))),
            },
        }
    }
}

fn finite(x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Domain(format!("argument must be finite, got {x}")))
    }
}

pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn normal_log_pdf(x: f64) -> f64 {
    -0.5 * x * x - 0.5 * (2.0 * PI).ln()
}

/// Mills ratio `Phi(-t) / phi(t)` for large positive `t`, from the asymptotic series
/// `1/t * sum_k (-1)^k (2k-1)!! / t^(2k)`, truncated at its smallest term.
fn mills_ratio_lower(t: f64) -> f64 {
    (1.0 + mills_series_tail(t)) / t
}

// Sum of the asymptotic series terms after the leading 1.
fn mills_series_tail(t: f64) -> f64 {
    let inv_t2 = 1.0 / (t * t);
    let mut term = 1.0;
    let mut sum = 0.0;
    for k in 1..40 {
        let next = -term * (2 * k - 1) as f64 * inv_t2;
        if next.abs() >= term.abs() || next.abs() < 1e-18 {
            break;
        }
        term = next;
        sum += term;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const ALL: [ComparisonModel; 3] = [
        ComparisonModel::Btl,
        ComparisonModel::Tm,
        ComparisonModel::Dt { scale: 1.0 },
    ];

    fn grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
        (0..=n).map(move |k| lo + (hi - lo) * k as f64 / n as f64)
    }

    #[test]
    fn btl_values() {
        let m = ComparisonModel::Btl;
        assert_eq!(m.cdf(0.0).unwrap(), 0.5);
        assert_relative_eq!(m.cdf(2f64.ln()).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(m.pdf(0.0).unwrap(), 0.25);
        assert_relative_eq!(m.log_cdf(0.0).unwrap(), -LN_2, epsilon = 1e-15);
        assert_eq!(m.g(0.0).unwrap(), 0.5);
    }

    #[test]
    fn tm_cdf_matches_integrated_density() {
        // composite Simpson rule on the normal density, from deep in the left tail
        let (a, b, n) = (-12.0f64, 1.96f64, 20_000usize);
        let h = (b - a) / n as f64;
        let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
        let mut s = phi(a) + phi(b);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * phi(a + k as f64 * h);
        }
        let integral = s * h / 3.0;
        let cdf = ComparisonModel::Tm.cdf(1.96).unwrap();
        assert!((integral - 0.975).abs() < 1e-3);
        assert!((cdf - integral).abs() < 1e-9, "{cdf} vs {integral}");
    }

    #[test]
    fn non_finite_input_is_domain_error() {
        for m in ALL {
            assert!(matches!(m.cdf(f64::NAN), Err(Error::Domain(_))));
            assert!(matches!(m.pdf(f64::INFINITY), Err(Error::Domain(_))));
            assert!(matches!(m.log_cdf(f64::NEG_INFINITY), Err(Error::Domain(_))));
            assert!(m.g(f64::NAN).is_err());
            assert!(m.g_prime(f64::NAN).is_err());
        }
    }

    #[test]
    fn zero_symmetry_and_monotonicity() {
        for m in ALL {
            let mut prev = 0.0;
            let mut prev_log = f64::NEG_INFINITY;
            for x in grid(-10.0, 10.0, 400) {
                let fx = m.cdf(x).unwrap();
                assert!((fx + m.cdf(-x).unwrap() - 1.0).abs() <= 1e-12, "{m} at {x}");
                assert!((0.0..=1.0).contains(&fx));
                assert!(fx >= prev, "{m} decreasing at {x}");
                prev = fx;
                // the upper tail rounds to 1 in F itself, so strictness is checked on log F(-|x|)
                if x <= 0.0 {
                    let lx = m.log_cdf(x).unwrap();
                    assert!(lx > prev_log, "{m} not increasing at {x}");
                    prev_log = lx;
                }
                assert_relative_eq!(m.pdf(x).unwrap(), m.pdf(-x).unwrap(), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn pdf_matches_central_difference_of_cdf() {
        let h = 1e-5;
        for m in ALL {
            for x in [-2.0, 0.5, 1.0, 3.0, -4.5] {
                let fd = (m.cdf(x + h).unwrap() - m.cdf(x - h).unwrap()) / (2.0 * h);
                let pdf = m.pdf(x).unwrap();
                assert!(((fd - pdf) / pdf).abs() <= 1e-5, "{m} at {x}: {fd} vs {pdf}");
            }
        }
        // TM at 0 as well; DT has a kink there
        let fd = (ComparisonModel::Tm.cdf(1e-5).unwrap() - ComparisonModel::Tm.cdf(-1e-5).unwrap()) / 2e-5;
        assert_relative_eq!(fd, ComparisonModel::Tm.pdf(0.0).unwrap(), max_relative = 1e-5);
    }

    #[test]
    fn g_prime_matches_central_difference_of_g() {
        let h = 1e-5;
        for m in ALL {
            for x in grid(-9.75, 9.75, 78) {
                if matches!(m, ComparisonModel::Dt { .. }) && x.abs() < 2.0 * h {
                    continue;
                }
                let fd = (m.g(x + h).unwrap() - m.g(x - h).unwrap()) / (2.0 * h);
                let gp = m.g_prime(x).unwrap();
                let err = if gp == 0.0 { fd.abs() } else { ((fd - gp) / gp).abs() };
                assert!(err <= 1e-5, "{m} at {x}: fd {fd} vs {gp}");
            }
        }
    }

    #[test]
    fn log_concavity() {
        for x in grid(-5.0, 5.0, 100) {
            assert!(ComparisonModel::Btl.g_prime(x).unwrap() < 0.0);
        }
        for x in grid(-10.0, 10.0, 200) {
            assert!(ComparisonModel::Tm.g_prime(x).unwrap() < 0.0);
            let dt = ComparisonModel::Dt { scale: 1.0 }.g_prime(x).unwrap();
            assert!(dt <= 0.0);
            if x >= 0.0 {
                assert!(dt < 0.0);
            }
        }
    }

    #[test]
    fn tm_tail_is_finite_and_continuous() {
        let m = ComparisonModel::Tm;
        let below = m.log_cdf_at(TM_TAIL - 1e-9);
        let above = m.log_cdf_at(TM_TAIL + 1e-9);
        assert_relative_eq!(below, above, max_relative = 1e-9);
        assert_relative_eq!(m.g_at(TM_TAIL - 1e-9), m.g_at(TM_TAIL + 1e-9), max_relative = 1e-9);
        let deep = m.log_cdf_at(-60.0);
        assert!(deep.is_finite());
        // log Phi(-60) ~ -1800 - log(60) - log(sqrt(2 pi))
        assert_relative_eq!(deep, -1800.0 - 60f64.ln() - 0.5 * (2.0 * PI).ln(), max_relative = 1e-6);
        assert!(m.g_at(-60.0) > 60.0);
    }

    #[test]
    fn log_cdf_matches_direct_log_in_bulk() {
        for m in ALL {
            for x in grid(-7.0, 7.0, 56) {
                assert_relative_eq!(
                    m.log_cdf(x).unwrap(),
                    m.cdf(x).unwrap().ln(),
                    max_relative = 1e-10,
                    epsilon = 1e-14
                );
            }
        }
    }

    #[test]
    fn dt_scale_is_respected() {
        let m = ComparisonModel::dt(2.0).unwrap();
        assert_relative_eq!(m.cdf(-2.0).unwrap(), 0.5 * (-1f64).exp(), epsilon = 1e-15);
        assert!(ComparisonModel::dt(0.0).is_err());
    }

    #[test]
    fn tokens_round_trip() {
        for m in ALL {
            assert_eq!(m.to_string().parse::<ComparisonModel>().unwrap(), m);
        }
        assert_eq!("dt:2.5".parse::<ComparisonModel>().unwrap(), ComparisonModel::Dt { scale: 2.5 });
        assert!("probit".parse::<ComparisonModel>().is_err());
    }
}
