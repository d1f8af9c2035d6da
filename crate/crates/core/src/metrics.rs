//! Rank permutations and ranking-error functionals.

use crate::error::{Error, Result};

/// `sigma[i] = k` means item `i` holds the `k`-th largest score (1-based).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankPermutation(Vec<usize>);

impl RankPermutation {
    pub fn ranks(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Items ordered from best to worst.
    pub fn order(&self) -> Vec<usize> {
        let mut order = vec![0; self.0.len()];
        for (item, &rank) in self.0.iter().enumerate() {
            order[rank - 1] = item;
        }
        order
    }

    /// Items ranked in the top `k`.
    pub fn top(&self, k: usize) -> Vec<bool> {
        self.0.iter().map(|&r| r <= k).collect()
    }
}

/// Descending ranks; equal scores rank the lower item index first.
pub fn rank_of(theta: &[f64]) -> RankPermutation {
    let mut order: Vec<usize> = (0..theta.len()).collect();
    order.sort_by(|&a, &b| theta[b].total_cmp(&theta[a]).then(a.cmp(&b)));
    let mut sigma = vec![0; theta.len()];
    for (pos, &item) in order.iter().enumerate() {
        sigma[item] = pos + 1;
    }
    RankPermutation(sigma)
}

/// Normalized top-K Hamming error: half the symmetric difference of the two
/// top-K sets, divided by K.
pub fn topk_hamming(theta_hat: &[f64], theta_star: &[f64], k: usize) -> Result<f64> {
    let m = same_len(theta_hat, theta_star)?;
    if k == 0 || k >= m {
        return Err(Error::Validation(format!("K must lie in 1..={}, got {k}", m.saturating_sub(1))));
    }
    let a = rank_of(theta_hat).top(k);
    let b = rank_of(theta_star).top(k);
    let diff = a.iter().zip(&b).filter(|(x, y)| x != y).count();
    Ok(diff as f64 / (2 * k) as f64)
}

/// Fraction of item pairs ordered differently by the two rankings.
pub fn kendall(theta_hat: &[f64], theta_star: &[f64]) -> Result<f64> {
    let m = same_len(theta_hat, theta_star)?;
    if m < 2 {
        return Err(Error::Validation("Kendall distance needs at least 2 items".into()));
    }
    Ok(kendall_ranks(rank_of(theta_hat).ranks(), rank_of(theta_star).ranks()))
}

/// `(2 / m^2) * sum_i |sigma_hat(i) - sigma_star(i)|`.
pub fn spearman_footrule(theta_hat: &[f64], theta_star: &[f64]) -> Result<f64> {
    let m = same_len(theta_hat, theta_star)?;
    if m < 2 {
        return Err(Error::Validation("footrule needs at least 2 items".into()));
    }
    Ok(footrule_ranks(rank_of(theta_hat).ranks(), rank_of(theta_star).ranks()))
}

pub(crate) fn kendall_ranks(a: &[usize], b: &[usize]) -> f64 {
    let m = a.len();
    let mut discordant = 0usize;
    for i in 0..m {
        for j in i + 1..m {
            let da = a[i] as i64 - a[j] as i64;
            let db = b[i] as i64 - b[j] as i64;
            if da * db < 0 {
                discordant += 1;
            }
        }
    }
    2.0 * discordant as f64 / (m * (m - 1)) as f64
}

pub(crate) fn footrule_ranks(a: &[usize], b: &[usize]) -> f64 {
    let m = a.len();
    let total: usize = a.iter().zip(b).map(|(&x, &y)| x.abs_diff(y)).sum();
    2.0 * total as f64 / (m * m) as f64
}

fn same_len(a: &[f64], b: &[f64]) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::Validation(format!("score vectors differ in length ({} vs {})", a.len(), b.len())));
    }
    Ok(a.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ranks() {
        assert_eq!(rank_of(&[3.0, 1.0, 2.0]).ranks(), &[1, 3, 2]);
        assert_eq!(rank_of(&[0.0, 0.0]).ranks(), &[1, 2]);
        assert_eq!(rank_of(&[3.0, 1.0, 2.0]).order(), vec![0, 2, 1]);
    }

    #[test]
    fn topk_examples() {
        let star = [4.0, 3.0, 2.0, 1.0];
        assert_eq!(topk_hamming(&star, &star, 2).unwrap(), 0.0);
        assert_eq!(topk_hamming(&[4.0, 1.0, 2.0, 3.0], &star, 2).unwrap(), 0.5);
        assert_eq!(topk_hamming(&[1.0, 2.0, 3.0, 4.0], &star, 2).unwrap(), 1.0);
        assert!(topk_hamming(&star, &star, 0).is_err());
        assert!(topk_hamming(&star, &star, 4).is_err());
    }

    #[test]
    fn kendall_and_footrule_examples() {
        let a = [3.0, 2.0, 1.0];
        assert_eq!(kendall(&a, &a).unwrap(), 0.0);
        assert_eq!(spearman_footrule(&a, &a).unwrap(), 0.0);
        assert!((kendall(&[2.0, 3.0, 1.0], &a).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let star = [4.0, 3.0, 2.0, 1.0];
        let rev = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(kendall(&rev, &star).unwrap(), 1.0);
        assert_eq!(spearman_footrule(&rev, &star).unwrap(), 1.0);
        assert!(kendall(&[1.0], &[1.0]).is_err());
        assert!(kendall(&[1.0, 2.0], &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn metrics_depend_only_on_order(
            (hat, star) in (3usize..25).prop_flat_map(|m| (
                prop::collection::vec(-5.0f64..5.0, m),
                prop::collection::vec(-5.0f64..5.0, m),
            ))
        ) {
            let f = |v: &[f64]| v.iter().map(|x| 2.0 * x + 1.0).collect::<Vec<_>>();
            let g = |v: &[f64]| v.iter().map(|x| x.exp()).collect::<Vec<_>>();
            let k = hat.len() / 2;
            prop_assert_eq!(rank_of(&hat), rank_of(&f(&hat)));
            prop_assert_eq!(kendall(&hat, &star).unwrap(), kendall(&f(&hat), &g(&star)).unwrap());
            prop_assert_eq!(
                spearman_footrule(&hat, &star).unwrap(),
                spearman_footrule(&g(&hat), &f(&star)).unwrap()
            );
            prop_assert_eq!(topk_hamming(&hat, &star, k).unwrap(), topk_hamming(&f(&hat), &g(&star), k).unwrap());
        }

        #[test]
        fn metric_ranges_and_hamming_symmetry(
            (hat, star, k) in (3usize..25).prop_flat_map(|m| (
                prop::collection::vec(-5.0f64..5.0, m),
                prop::collection::vec(-5.0f64..5.0, m),
                1..m,
            ))
        ) {
            let kd = kendall(&hat, &star).unwrap();
            let sf = spearman_footrule(&hat, &star).unwrap();
            let hk = topk_hamming(&hat, &star, k).unwrap();
            for v in [kd, sf, hk] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert!(sf <= 2.0 * kd + 1e-12);
            let top_hat = rank_of(&hat).top(k);
            let top_star = rank_of(&star).top(k);
            let missed = top_star.iter().zip(&top_hat).filter(|(s, h)| **s && !**h).count();
            let extra = top_hat.iter().zip(&top_star).filter(|(h, s)| **h && !**s).count();
            prop_assert_eq!(missed, extra);
            prop_assert!((hk - missed as f64 / k as f64).abs() < 1e-15);
        }
    }
}
