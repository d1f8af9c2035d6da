//! Randomized response, its debiased and adaptively weighted variant, the
//! Laplace baseline and per-user budget bookkeeping.
//!
//! Privacy budgets are plain `f64`s. `f64::INFINITY` stands for "no privacy":
//! the flip probability is zero, the retention factor is one and debiasing is
//! the identity.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};

/// Budget value that disables privatization.
pub const NO_PRIVACY: f64 = f64::INFINITY;

/// Probability `1 / (e^eps + 1)` that randomized response flips a bit.
pub fn flip_probability(epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    Ok(1.0 / (epsilon.exp() + 1.0))
}

/// `(e^eps - 1) / (e^eps + 1)`, the fraction of signal that survives randomized response.
pub fn retention(epsilon: f64) -> f64 {
    (0.5 * epsilon).tanh()
}

/// Releases `y` with probability `1 - p_eps`, otherwise its complement.
pub fn randomized_response<R: Rng + ?Sized>(y: bool, epsilon: f64, rng: &mut R) -> Result<bool> {
    let p = flip_probability(epsilon)?;
    Ok(if p > 0.0 && rng.random::<f64>() < p { !y } else { y })
}

/// Unbiased surrogate `((e^eps + 1) y~ - 1) / (e^eps - 1)` for a randomized bit.
pub fn debias(y_tilde: bool, epsilon: f64) -> Result<f64> {
    check_positive(epsilon)?;
    // written with expm1 so that large and infinite budgets stay exact
    Ok(if y_tilde {
        1.0 / -(-epsilon).exp_m1()
    } else {
        -1.0 / epsilon.exp_m1()
    })
}

/// Variance of the debiased value when the underlying bit is Bernoulli(`f_value`).
pub fn debias_variance(epsilon: f64, f_value: f64) -> Result<f64> {
    check_positive(epsilon)?;
    if !(f_value > 0.0 && f_value < 1.0) {
        return Err(Error::Domain(format!("probability must lie in (0,1), got {f_value}")));
    }
    let inv_t = 1.0 / retention(epsilon);
    let signal = 2.0 * f_value - 1.0;
    Ok(0.25 * (inv_t * inv_t - signal * signal))
}

/// Weights `t_l^2 / sum_k t_k^2` with `t_l = (e^eps_l - 1) / (e^eps_l + 1)`.
pub fn adaptive_weights(epsilons: &[f64]) -> Result<Vec<f64>> {
    let mut squares = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        check_positive(eps)?;
        let t = retention(eps);
        squares.push(t * t);
    }
    let total: f64 = squares.iter().sum();
    Ok(squares.into_iter().map(|s| s / total).collect())
}

/// Adds Laplace(0, 1/eps) noise to a bit.
pub fn laplace_perturb<R: Rng + ?Sized>(y: bool, epsilon: f64, rng: &mut R) -> Result<f64> {
    check_positive(epsilon)?;
    Ok(f64::from(u8::from(y)) + sample_laplace(1.0 / epsilon, rng))
}

/// Inverse-CDF draw from Laplace(0, scale).
pub(crate) fn sample_laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    if scale == 0.0 {
        return 0.0;
    }
    let u: f64 = rng.random::<f64>() - 0.5;
    -scale * u.signum() * (-2.0 * u.abs()).ln_1p()
}

/// Central-DP budget `max_l S_l * eps_l` implied by running randomized response
/// independently on each of user `l`'s `S_l` released comparisons.
pub fn central_dp_epsilon(profile: &PrivacyProfile, counts: &[usize]) -> Result<f64> {
    if counts.len() != profile.len() {
        return Err(Error::Validation(format!(
            "{} counts for a profile of {} users",
            counts.len(),
            profile.len()
        )));
    }
    Ok(profile
        .epsilons()
        .iter()
        .zip(counts)
        .map(|(&eps, &s)| if s == 0 { 0.0 } else { s as f64 * eps })
        .fold(0.0, f64::max))
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(Error::Domain(format!("privacy budget must be >= 0, got {epsilon}")));
    }
    Ok(())
}

fn check_positive(epsilon: f64) -> Result<()> {
    check_epsilon(epsilon)?;
    if epsilon == 0.0 {
        return Err(Error::Mechanism("debias undefined at eps=0".into()));
    }
    Ok(())
}

/// Per-user privacy budgets together with the derived information averages.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyProfile {
    epsilons: Vec<f64>,
    b: f64,
}

impl PrivacyProfile {
    /// Budgets must be non-negative. A zero budget is allowed for plain randomized
    /// response; the weighted mechanism rejects it.
    pub fn new(epsilons: Vec<f64>) -> Result<Self> {
        for &eps in &epsilons {
            check_epsilon(eps)?;
        }
        let b = if epsilons.is_empty() {
            0.0
        } else {
            epsilons.iter().map(|&e| retention(e).powi(2)).sum::<f64>() / epsilons.len() as f64
        };
        Ok(PrivacyProfile { epsilons, b })
    }

    pub fn uniform(users: usize, epsilon: f64) -> Result<Self> {
        Self::new(vec![epsilon; users])
    }

    pub fn epsilons(&self) -> &[f64] {
        &self.epsilons
    }

    pub fn len(&self) -> usize {
        self.epsilons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epsilons.is_empty()
    }

    /// Adaptive weights; fails if any budget is zero.
    pub fn weights(&self) -> Result<Vec<f64>> {
        adaptive_weights(&self.epsilons)
    }

    /// `B(eps)`: mean squared retention across users.
    pub fn b(&self) -> f64 {
        self.b
    }

    /// `G(eps) = L * B(eps)`.
    pub fn g(&self) -> f64 {
        self.b * self.epsilons.len() as f64
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path)?;
        Self::from_reader(file)
    }

    /// Parses `user_id,epsilon` rows. User ids are 1-based and must cover `1..=L`.
    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "user_id" || &headers[1] != "epsilon" {
            return Err(Error::Parse { line: 1, message: "expected header `user_id,epsilon`".into() });
        }
        let mut rows: Vec<(usize, f64)> = Vec::new();
        for (idx, record) in rdr.records().enumerate() {
            let line = idx + 2;
            let record = record?;
            let parse_err = |message: String| Error::Parse { line, message };
            if record.len() != 2 {
                return Err(parse_err(format!("expected 2 fields, found {}", record.len())));
            }
            let user: usize = record[0]
                .parse()
                .map_err(|_| parse_err(format!("bad user_id `{}`", &record[0])))?;
            let eps: f64 = record[1]
                .parse()
                .map_err(|_| parse_err(format!("bad epsilon `{}`", &record[1])))?;
            if user == 0 {
                return Err(parse_err("user ids are 1-based".into()));
            }
            rows.push((user, eps));
        }
        let n = rows.len();
        let mut eps = vec![f64::NAN; n];
        for (user, e) in rows {
            if user > n {
                return Err(Error::Validation(format!("user_id {user} exceeds user count {n}")));
            }
            if !eps[user - 1].is_nan() {
                return Err(Error::Validation(format!("duplicate user_id {user}")));
            }
            eps[user - 1] = e;
        }
        Self::new(eps)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = File::create(path)?;
        self.write_to(&mut file)
    }

    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "user_id,epsilon")?;
        for (l, eps) in self.epsilons.iter().enumerate() {
            if eps.is_infinite() {
                writeln!(out, "{},inf", l + 1)?;
            } else {
                writeln!(out, "{},{}", l + 1, eps)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ComparisonModel;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn flip_probability_values() {
        assert_eq!(flip_probability(0.0).unwrap(), 0.5);
        assert_relative_eq!(flip_probability(2f64.ln()).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        assert!(flip_probability(20.0).unwrap() < 1e-8);
        assert_eq!(flip_probability(NO_PRIVACY).unwrap(), 0.0);
        assert!(matches!(flip_probability(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn no_privacy_leaves_bits_untouched() {
        let mut r = rng(1);
        for k in 0..1000 {
            let y = k % 3 == 0;
            assert_eq!(randomized_response(y, NO_PRIVACY, &mut r).unwrap(), y);
        }
    }

    #[test]
    fn debias_values() {
        let eps = 3f64.ln();
        assert_relative_eq!(debias(true, eps).unwrap(), 1.5, epsilon = 1e-14);
        assert_relative_eq!(debias(false, eps).unwrap(), -0.5, epsilon = 1e-14);
        assert_eq!(debias(true, NO_PRIVACY).unwrap(), 1.0);
        assert_eq!(debias(false, NO_PRIVACY).unwrap(), 0.0);
        assert!((debias(true, 40.0).unwrap() - 1.0).abs() < 1e-15);
        let err = debias(true, 0.0).unwrap_err();
        assert!(err.to_string().contains("debias undefined at eps=0"));
    }

    #[test]
    fn debias_variance_values() {
        // the leading term dominates: ratio of first to second term is about 19 at eps=1, F=0.75
        let e = 1f64.exp();
        let ratio = ((e + 1.0) / (e - 1.0)).powi(2) / 0.5f64.powi(2);
        assert!((ratio - 19.0).abs() < 0.5, "{ratio}");
        assert_relative_eq!(debias_variance(NO_PRIVACY, 0.5).unwrap(), 0.25);
        assert!(debias_variance(1.0, 1.0).is_err());
        assert!(debias_variance(0.0, 0.5).is_err());
    }

    #[test]
    fn debias_is_unbiased_with_closed_form_variance() {
        // BTL gap log 2 gives F = 2/3
        let f = ComparisonModel::Btl.cdf(2f64.ln()).unwrap();
        let eps = 1.0;
        let n = 1_000_000;
        let mut r = rng(7);
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let y = r.random::<f64>() < f;
            let z = debias(randomized_response(y, eps, &mut r).unwrap(), eps).unwrap();
            s += z;
            s2 += z * z;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        let expected_var = debias_variance(eps, f).unwrap();
        assert!((mean - f).abs() < 4.0 * (expected_var / n as f64).sqrt());
        assert!(((var - expected_var) / expected_var).abs() < 0.05);
    }

    #[test]
    fn adaptive_weight_values() {
        let w = adaptive_weights(&[0.7; 5]).unwrap();
        for wl in &w {
            assert_relative_eq!(*wl, 0.2, epsilon = 1e-15);
        }
        let w = adaptive_weights(&[3f64.ln(), NO_PRIVACY]).unwrap();
        assert_relative_eq!(w[0], 0.2, epsilon = 1e-14);
        assert_relative_eq!(w[1], 0.8, epsilon = 1e-14);

        let eps = [0.2, 2.0, 1.0];
        let oracle: Vec<f64> = {
            let sq: Vec<f64> = eps
                .iter()
                .map(|e: &f64| ((e.exp() - 1.0) / (e.exp() + 1.0)).powi(2))
                .collect();
            let tot: f64 = sq.iter().sum();
            sq.iter().map(|s| s / tot).collect()
        };
        for (a, b) in adaptive_weights(&eps).unwrap().iter().zip(&oracle) {
            assert_relative_eq!(a, b, epsilon = 1e-14);
        }
        assert!(adaptive_weights(&[1.0, 0.0]).is_err());
        assert!(adaptive_weights(&[1.0, -1.0]).is_err());
    }

    #[test]
    fn weights_halve_when_profile_is_doubled() {
        let eps = [0.3, 1.2, 4.0, NO_PRIVACY];
        let w = adaptive_weights(&eps).unwrap();
        let doubled: Vec<f64> = eps.iter().chain(eps.iter()).copied().collect();
        let w2 = adaptive_weights(&doubled).unwrap();
        for (k, wk) in w2.iter().enumerate() {
            assert_relative_eq!(*wk, w[k % eps.len()] / 2.0, epsilon = 1e-15);
        }
        assert_relative_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn laplace_moments_and_tails() {
        let n = 100_000;
        let eps = 1.5;
        let mut r = rng(11);
        let draws: Vec<f64> = (0..n).map(|_| laplace_perturb(true, eps, &mut r).unwrap()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let true_var = 2.0 / (eps * eps);
        assert!((mean - 1.0).abs() < 3.0 * (true_var / n as f64).sqrt());
        assert!(((var - true_var) / true_var).abs() < 0.05);

        // P(|xi| >= 3) = exp(-30) at eps = 10
        let far = (0..n)
            .filter(|_| (laplace_perturb(false, 10.0, &mut r).unwrap()).abs() >= 3.0)
            .count();
        assert!((far as f64) / (n as f64) <= 0.001);
    }

    #[test]
    fn central_budget_is_max_product() {
        let p = PrivacyProfile::new(vec![0.5]).unwrap();
        assert_eq!(central_dp_epsilon(&p, &[10]).unwrap(), 5.0);
        let p = PrivacyProfile::new(vec![0.2, 2.0]).unwrap();
        assert_eq!(central_dp_epsilon(&p, &[0, 0]).unwrap(), 0.0);
        assert_relative_eq!(central_dp_epsilon(&p, &[45, 45]).unwrap(), 90.0, epsilon = 1e-12);
        let p = PrivacyProfile::new(vec![NO_PRIVACY]).unwrap();
        assert_eq!(central_dp_epsilon(&p, &[0]).unwrap(), 0.0);
        assert!(central_dp_epsilon(&p, &[1, 2]).is_err());
    }

    #[test]
    fn profile_averages() {
        let p = PrivacyProfile::new(vec![NO_PRIVACY; 4]).unwrap();
        assert_eq!(p.b(), 1.0);
        assert_eq!(p.g(), 4.0);
        let p = PrivacyProfile::new(vec![3f64.ln(); 4]).unwrap();
        assert_relative_eq!(p.b(), 0.25, epsilon = 1e-15);
        assert!(PrivacyProfile::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn profile_csv_round_trip() {
        let p = PrivacyProfile::new(vec![0.25, NO_PRIVACY, 3.0]).unwrap();
        let mut buf = Vec::new();
        p.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("2,inf"));
        assert_eq!(PrivacyProfile::from_reader(buf.as_slice()).unwrap(), p);
    }

    #[test]
    fn profile_csv_errors() {
        let bad = "user_id,epsilon\n1,0.5\n2,abc\n";
        match PrivacyProfile::from_reader(bad.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let dup = "user_id,epsilon\n1,0.5\n1,0.7\n";
        assert!(matches!(PrivacyProfile::from_reader(dup.as_bytes()), Err(Error::Validation(_))));
    }
}
