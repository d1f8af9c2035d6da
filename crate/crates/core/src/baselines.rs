//! Competing private pipelines: the win-count ranking on randomized-response
//! output, and likelihood fits on classic-RR or Laplace-perturbed data that
//! treat the released values as if they were raw comparisons.

use rand::Rng;

use crate::dataset::{privatize, Mechanism, PairwiseDataset};
use crate::error::{Error, Result};
use crate::estimator::{self, Estimate, EstimatorConfig};
use crate::metrics::{rank_of, RankPermutation};
use crate::models::ComparisonModel;
use crate::privacy::PrivacyProfile;

/// Privatized win totals per item.
#[derive(Debug, Clone, PartialEq)]
pub struct CountScores(Vec<f64>);

impl CountScores {
    pub fn scores(&self) -> &[f64] {
        &self.0
    }

    pub fn ranking(&self) -> RankPermutation {
        rank_of(&self.0)
    }
}

/// Each record `(l, i, j, y)` credits `y` to item `i` and `1 - y` to item `j`.
///
/// Intended for randomized-response output; raw binary data are accepted as
/// the no-privacy case.
pub fn count_scores(dataset: &PairwiseDataset) -> Result<CountScores> {
    if !dataset.kind().is_binary() {
        return Err(Error::Validation(format!(
            "count method needs binary comparisons, got {}",
            dataset.kind()
        )));
    }
    let mut scores = vec![0.0; dataset.items()];
    for r in dataset.records() {
        scores[r.i] += r.value;
        scores[r.j] += 1.0 - r.value;
    }
    Ok(CountScores(scores))
}

/// Laplace-perturbs every comparison with its user's budget, then fits the
/// perturbed values with uniform weights `1/L` (noise is zero-mean, so the
/// surrogate stays unbiased).
pub fn fit_laplace_baseline<R: Rng + ?Sized>(
    raw: &PairwiseDataset,
    profile: &PrivacyProfile,
    model: &ComparisonModel,
    config: &EstimatorConfig,
    rng: &mut R,
) -> Result<Estimate> {
    let noisy = privatize(raw, profile, Mechanism::Laplace, rng)?;
    estimator::fit(&noisy, model, config)
}

/// Fits classic randomized-response output as though it were raw data.
pub fn fit_classic_rr_baseline<R: Rng + ?Sized>(
    raw: &PairwiseDataset,
    profile: &PrivacyProfile,
    model: &ComparisonModel,
    config: &EstimatorConfig,
    rng: &mut R,
) -> Result<Estimate> {
    let flipped = privatize(raw, profile, Mechanism::ClassicRr, rng)?;
    estimator::fit(&flipped, model, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate, Comparison, PreferenceVector, ValueKind};
    use crate::privacy::NO_PRIVACY;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn single_record() {
        let d = PairwiseDataset::new(2, 1, ValueKind::RrBinary, vec![Comparison { user: 0, i: 0, j: 1, value: 1.0 }])
            .unwrap();
        assert_eq!(count_scores(&d).unwrap().scores(), &[1.0, 0.0]);
    }

    #[test]
    fn matches_brute_force_tally() {
        let mut r = rng(1);
        let theta = PreferenceVector::sample_uniform(3, &mut r);
        let raw = generate(&theta, &ComparisonModel::Btl, 25, 0.7, &mut r).unwrap();
        let rr = privatize(&raw, &PrivacyProfile::uniform(25, 1.0).unwrap(), Mechanism::ClassicRr, &mut r).unwrap();
        // independent tally: for each item, count records it won
        let mut tally = [0.0; 3];
        for item in 0..3 {
            for rec in rr.records() {
                let winner = if rec.value == 1.0 { rec.i } else { rec.j };
                if winner == item {
                    tally[item] += 1.0;
                }
            }
        }
        let scores = count_scores(&rr).unwrap();
        assert_eq!(scores.scores(), &tally);
        assert_eq!(scores.scores().iter().sum::<f64>(), rr.len() as f64);
        assert_eq!(scores.ranking(), rank_of(&tally));
    }

    #[test]
    fn coin_flips_carry_no_signal() {
        let mut r = rng(2);
        let theta = PreferenceVector::centered(vec![1.0, 0.5, -0.5, -1.0]);
        let users = 4000;
        let raw = generate(&theta, &ComparisonModel::Btl, users, 0.5, &mut r).unwrap();
        let rr = privatize(&raw, &PrivacyProfile::uniform(users, 0.0).unwrap(), Mechanism::ClassicRr, &mut r).unwrap();
        let scores = count_scores(&rr).unwrap();
        let denom = users as f64 * 3.0 * 0.5;
        for s in scores.scores() {
            // sd of s/denom is about 0.5/sqrt(denom)
            assert!((s / denom - 0.5).abs() < 4.0 * 0.5 / denom.sqrt() + 0.02, "{}", s / denom);
        }
    }

    #[test]
    fn relabeling_items_permutes_scores() {
        let d = PairwiseDataset::new(
            3,
            2,
            ValueKind::RrBinary,
            vec![
                Comparison { user: 0, i: 0, j: 1, value: 1.0 },
                Comparison { user: 0, i: 1, j: 2, value: 0.0 },
                Comparison { user: 1, i: 0, j: 2, value: 1.0 },
            ],
        )
        .unwrap();
        // swap items 0 and 2: (0,1,y) -> (1,2,1-y); (1,2,y) -> (0,1,1-y); (0,2,y) -> (0,2,1-y)
        let swapped = PairwiseDataset::new(
            3,
            2,
            ValueKind::RrBinary,
            vec![
                Comparison { user: 0, i: 1, j: 2, value: 0.0 },
                Comparison { user: 0, i: 0, j: 1, value: 1.0 },
                Comparison { user: 1, i: 0, j: 2, value: 0.0 },
            ],
        )
        .unwrap();
        let a = count_scores(&d).unwrap();
        let b = count_scores(&swapped).unwrap();
        assert_eq!(a.scores()[0], b.scores()[2]);
        assert_eq!(a.scores()[1], b.scores()[1]);
        assert_eq!(a.scores()[2], b.scores()[0]);
    }

    #[test]
    fn real_valued_data_is_rejected() {
        let mut r = rng(3);
        let raw = generate(&[0.2, -0.2], &ComparisonModel::Btl, 3, 1.0, &mut r).unwrap();
        let lap = privatize(&raw, &PrivacyProfile::uniform(3, 1.0).unwrap(), Mechanism::Laplace, &mut r).unwrap();
        assert!(count_scores(&lap).is_err());
    }

    #[test]
    fn laplace_with_huge_budgets_matches_raw_fit() {
        let mut r = rng(4);
        let theta = PreferenceVector::sample_uniform(6, &mut r);
        let raw = generate(&theta, &ComparisonModel::Btl, 50, 0.8, &mut r).unwrap();
        let cfg = EstimatorConfig::with_lambda(0.02);
        let base = estimator::fit(&raw, &ComparisonModel::Btl, &cfg).unwrap();
        let lap = fit_laplace_baseline(
            &raw,
            &PrivacyProfile::uniform(50, 1e7).unwrap(),
            &ComparisonModel::Btl,
            &cfg,
            &mut r,
        )
        .unwrap();
        for (a, b) in base.theta_hat.iter().zip(lap.theta_hat.iter()) {
            assert!((a - b).abs() < 1e-4);
        }
        let inf = fit_laplace_baseline(
            &raw,
            &PrivacyProfile::uniform(50, NO_PRIVACY).unwrap(),
            &ComparisonModel::Btl,
            &cfg,
            &mut r,
        )
        .unwrap();
        assert_eq!(inf.theta_hat, base.theta_hat);
    }

    #[test]
    fn laplace_values_are_unbiased_per_pair() {
        let mut r = rng(5);
        let theta = [0.6, -0.6];
        let users = 100_000;
        let raw = generate(&theta, &ComparisonModel::Btl, users, 1.0, &mut r).unwrap();
        let eps = 2.0;
        let lap = privatize(&raw, &PrivacyProfile::uniform(users, eps).unwrap(), Mechanism::Laplace, &mut r).unwrap();
        let mean = lap.records().iter().map(|c| c.value).sum::<f64>() / users as f64;
        let f = ComparisonModel::Btl.cdf(1.2).unwrap();
        let sd = ((f * (1.0 - f) + 2.0 / (eps * eps)) / users as f64).sqrt();
        assert!((mean - f).abs() < 4.0 * sd, "{mean} vs {f}");
    }
}
