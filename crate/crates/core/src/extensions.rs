//! Mixed-effects BTL estimation, likelihood-based model selection and
//! privacy-budget guidance.

use rand::Rng;

use crate::dataset::{Comparison, PairwiseDataset, PreferenceVector, ValueKind};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

use crate::estimator::{self, descend, DescentOptions, DescentOutcome, EstimatorConfig, WeightedData};
use crate::models::{logistic, ComparisonModel};
use crate::privacy::retention;

#[derive(Debug, Clone, PartialEq)]
pub struct MixedEffectsEstimate {
    pub theta_hat: PreferenceVector,
    /// Per-user additive effects.
    pub gamma_hat: Vec<f64>,
    /// Sample standard deviation of `gamma_hat` (denominator `L - 1`).
    pub sigma_hat: f64,
    pub iterations: usize,
    pub final_grad_norm: f64,
}

/// Raw BTL data with a per-user offset: `P(y = 1) = F(gamma_l + theta_i - theta_j)`.
pub fn generate_with_user_effects<R: Rng + ?Sized>(
    theta_star: &[f64],
    gamma: &[f64],
    p: f64,
    rng: &mut R,
) -> Result<PairwiseDataset> {
    let m = theta_star.len();
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Validation(format!("observation probability must be in (0,1], got {p}")));
    }
    if gamma.is_empty() || m < 2 {
        return Err(Error::Validation("need at least 1 user and 2 items".into()));
    }
    let mut records = Vec::new();
    for (user, g) in gamma.iter().enumerate() {
        for i in 0..m {
            for j in i + 1..m {
                if p < 1.0 && rng.random::<f64>() >= p {
                    continue;
                }
                let win = rng.random::<f64>() < logistic(g + theta_star[i] - theta_star[j]);
                records.push(Comparison { user, i, j, value: f64::from(u8::from(win)) });
            }
        }
    }
    PairwiseDataset::new(m, gamma.len(), ValueKind::RawBinary, records)
}

/// Joint objective `sum [ -y (gamma_l + theta_i - theta_j) + log(1 + exp(gamma_l + theta_i - theta_j)) ] + lambda |theta|^2`.
/// Parameters are packed as `[theta (m), gamma (L)]`.
pub fn mixed_effects_objective(raw: &PairwiseDataset, params: &[f64], lambda: f64) -> f64 {
    let m = raw.items();
    let (theta, gamma) = params.split_at(m);
    let nll: f64 = raw
        .records()
        .iter()
        .map(|r| {
            let eta = gamma[r.user] + theta[r.i] - theta[r.j];
            softplus(eta) - r.value * eta
        })
        .sum();
    nll + lambda * theta.iter().map(|t| t * t).sum::<f64>()
}

pub fn mixed_effects_gradient(raw: &PairwiseDataset, params: &[f64], lambda: f64, out: &mut [f64]) {
    let m = raw.items();
    out.iter_mut().for_each(|o| *o = 0.0);
    for r in raw.records() {
        let eta = params[m + r.user] + params[r.i] - params[r.j];
        let resid = logistic(eta) - r.value;
        out[m + r.user] += resid;
        out[r.i] += resid;
        out[r.j] -= resid;
    }
    for k in 0..m {
        out[k] += 2.0 * lambda * params[k];
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Two-step estimator: jointly fit `(theta, gamma)` treating user effects as
/// fixed, then take the sample standard deviation of the fitted effects.
///
/// Small problems are solved by damped Newton steps. Above
/// `NEWTON_MAX_PARAMS` parameters it falls back to gradient descent with a
/// diagonal step scaling from the logistic curvature bound (`1/4` per comparison).
pub fn fit_mixed_effects(raw: &PairwiseDataset, lambda: f64, config: &EstimatorConfig) -> Result<MixedEffectsEstimate> {
    if raw.kind() != ValueKind::RawBinary {
        return Err(Error::Validation(format!("mixed effects needs raw_binary data, got {}", raw.kind())));
    }
    if raw.is_empty() {
        return Err(Error::Validation("cannot fit an empty dataset".into()));
    }
    let config = EstimatorConfig { lambda, ..config.clone() };
    config.validate()?;
    let (m, users) = (raw.items(), raw.users());
    let f = |x: &[f64]| mixed_effects_objective(raw, x, lambda);
    let g = |x: &[f64], out: &mut [f64]| mixed_effects_gradient(raw, x, lambda, out);
    let outcome = if m + users <= NEWTON_MAX_PARAMS {
        newton(raw, lambda, &config)?
    } else {
        let mut curvature = vec![0.0; m + users];
        for r in raw.records() {
            curvature[r.i] += 0.25;
            curvature[r.j] += 0.25;
            curvature[m + r.user] += 0.25;
        }
        let scale: Vec<f64> = curvature
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let c = if k < m { c + 2.0 * lambda } else { *c };
                if c > 0.0 { 1.0 / c } else { 1.0 }
            })
            .collect();
        descend(vec![0.0; m + users], &f, &g, Some(&scale), &DescentOptions::from(&config))?
    };

    let gamma_hat = outcome.x[m..].to_vec();
    let sigma_hat = sample_sd(&gamma_hat);
    Ok(MixedEffectsEstimate {
        theta_hat: PreferenceVector::new(outcome.x[..m].to_vec()),
        gamma_hat,
        sigma_hat,
        iterations: outcome.iterations,
        final_grad_norm: outcome.grad_norm,
    })
}

pub const NEWTON_MAX_PARAMS: usize = 2000;

fn newton(raw: &PairwiseDataset, lambda: f64, config: &EstimatorConfig) -> Result<DescentOutcome> {
    let m = raw.items();
    let n = m + raw.users();
    let mut x = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut value = mixed_effects_objective(raw, &x, lambda);
    let mut trace = Vec::new();
    for iteration in 0..=config.max_iters {
        mixed_effects_gradient(raw, &x, lambda, &mut g);
        let grad_norm = g.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if !grad_norm.is_finite() {
            return Err(Error::NotConverged { iterations: iteration, grad_norm });
        }
        if grad_norm <= config.grad_tol {
            return Ok(DescentOutcome { x, value, grad_norm, iterations: iteration, trace });
        }
        if iteration == config.max_iters {
            return Err(Error::NotConverged { iterations: iteration, grad_norm });
        }
        let mut h = DMatrix::<f64>::zeros(n, n);
        for r in raw.records() {
            let eta = x[m + r.user] + x[r.i] - x[r.j];
            let w = logistic(eta) * logistic(-eta);
            let idx = [(m + r.user, 1.0), (r.i, 1.0), (r.j, -1.0)];
            for &(a, sa) in &idx {
                for &(b, sb) in &idx {
                    h[(a, b)] += w * sa * sb;
                }
            }
        }
        for k in 0..m {
            h[(k, k)] += 2.0 * lambda;
        }
        // users whose effect is pinned at the boundary make H singular
        let floor = 1e-10 * (0..n).fold(1.0f64, |a, k| a.max(h[(k, k)]));
        for k in 0..n {
            h[(k, k)] += floor;
        }
        let rhs = DVector::from_iterator(n, g.iter().map(|v| -v));
        let step = match h.cholesky() {
            Some(c) => c.solve(&rhs),
            None => rhs,
        };
        let slope: f64 = step.iter().zip(&g).map(|(d, gk)| d * gk).sum();
        let slack = 8.0 * f64::EPSILON * value.abs().max(1.0);
        let mut t = 1.0;
        loop {
            for k in 0..n {
                trial[k] = x[k] + t * step[k];
            }
            let candidate = mixed_effects_objective(raw, &trial, lambda);
            if candidate.is_finite() && candidate <= value + 1e-4 * t * slope + slack {
                std::mem::swap(&mut x, &mut trial);
                value = candidate;
                break;
            }
            t *= 0.5;
            if t < 1e-12 {
                return Err(Error::LineSearch { iteration, grad_norm });
            }
        }
        if config.keep_trace {
            trace.push(value);
        }
    }
    unreachable!("loop returns on its last iteration")
}

fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSelection {
    pub chosen: ComparisonModel,
    /// Unpenalized negative log-likelihood at each candidate's fit, in candidate order.
    pub scores: Vec<(ComparisonModel, f64)>,
}

/// Fits every candidate and keeps the one with the smallest unpenalized
/// negative log-likelihood at its own optimum. Earlier candidates win ties.
pub fn select_model(
    dataset: &PairwiseDataset,
    candidates: &[ComparisonModel],
    lambda: f64,
    config: &EstimatorConfig,
) -> Result<ModelSelection> {
    let first = *candidates
        .first()
        .ok_or_else(|| Error::Validation("model selection needs at least one candidate".into()))?;
    if candidates.len() == 1 {
        return Ok(ModelSelection { chosen: first, scores: vec![] });
    }
    let data = WeightedData::from_dataset(dataset)?;
    let config = EstimatorConfig { lambda, ..config.clone() };
    let mut scores = Vec::with_capacity(candidates.len());
    for model in candidates {
        let est = estimator::fit_weighted(&data, model, &config).map_err(|e| Error::Candidate {
            candidate: model.to_string(),
            source: Box::new(e),
        })?;
        scores.push((*model, data.nll(&est.theta_hat, model)));
    }
    let mut best = 0;
    for (k, (_, v)) in scores.iter().enumerate() {
        if *v < scores[best].1 {
            best = k;
        }
    }
    Ok(ModelSelection { chosen: scores[best].0, scores })
}

/// Total retained information `G = sum_l t_l^2` and whether it exceeds `alpha_threshold`.
pub fn budget_check(epsilons: &[f64], alpha_threshold: f64) -> Result<(f64, bool)> {
    if !(alpha_threshold > 0.0) {
        return Err(Error::Validation(format!("threshold must be positive, got {alpha_threshold}")));
    }
    let mut g = 0.0;
    for &eps in epsilons {
        if !(eps > 0.0) {
            return Err(Error::Domain(format!("privacy budgets must be > 0, got {eps}")));
        }
        g += retention(eps).powi(2);
    }
    Ok((g, g > alpha_threshold))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate;
    use crate::privacy::NO_PRIVACY;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn budget_examples() {
        assert_eq!(budget_check(&[NO_PRIVACY; 10], 5.0).unwrap(), (10.0, true));
        assert_eq!(budget_check(&[], 1.0).unwrap(), (0.0, false));
        let (g, ok) = budget_check(&[3f64.ln(); 4], 0.9).unwrap();
        assert_relative_eq!(g, 1.0, epsilon = 1e-14);
        assert!(ok);
        assert!(budget_check(&[1.0, 0.0], 1.0).is_err());
        assert!(budget_check(&[1.0], 0.0).is_err());
    }

    #[test]
    fn budget_is_monotone_and_additive() {
        let eps = [0.3, 1.0, 2.5, 0.05];
        let (g, _) = budget_check(&eps, 1.0).unwrap();
        let (a, _) = budget_check(&eps[..2], 1.0).unwrap();
        let (b, _) = budget_check(&eps[2..], 1.0).unwrap();
        assert_relative_eq!(g, a + b, epsilon = 1e-15);
        for k in 0..eps.len() {
            let mut bigger = eps;
            bigger[k] += 0.5;
            assert!(budget_check(&bigger, 1.0).unwrap().0 >= g);
        }
    }

    #[test]
    fn mixed_gradient_matches_finite_differences() {
        let mut r = rng(1);
        let theta = PreferenceVector::sample_uniform(5, &mut r);
        let gamma: Vec<f64> = (0..6).map(|_| StandardNormal.sample(&mut r)).collect();
        let raw = generate_with_user_effects(&theta, &gamma, 0.8, &mut r).unwrap();
        let params: Vec<f64> = (0..11).map(|_| r.random_range(-1.0..1.0)).collect();
        let lambda = 0.3;
        let mut grad = vec![0.0; 11];
        mixed_effects_gradient(&raw, &params, lambda, &mut grad);
        let h = 1e-6;
        for k in 0..11 {
            let mut up = params.clone();
            let mut dn = params.clone();
            up[k] += h;
            dn[k] -= h;
            let fd = (mixed_effects_objective(&raw, &up, lambda) - mixed_effects_objective(&raw, &dn, lambda)) / (2.0 * h);
            let rel = (fd - grad[k]).abs() / grad[k].abs().max(1e-3);
            assert!(rel <= 1e-6, "coordinate {k}: {fd} vs {}", grad[k]);
        }
    }

    #[test]
    fn no_user_effect_gives_small_sigma() {
        let mut r = rng(2);
        let theta = PreferenceVector::sample_uniform(20, &mut r);
        let raw = generate_with_user_effects(&theta, &vec![0.0; 60], 1.0, &mut r).unwrap();
        let est = fit_mixed_effects(&raw, 1.0, &EstimatorConfig::default()).unwrap();
        assert!(est.sigma_hat < 0.2, "{}", est.sigma_hat);
        assert!(est.theta_hat.sum().abs() < 1e-8);
        let err = est.theta_hat.iter().zip(theta.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err / 20f64.sqrt() < 0.1);
    }

    #[test]
    fn mixed_effects_rejects_private_data() {
        let d = PairwiseDataset::new(2, 1, ValueKind::RrBinary, vec![Comparison { user: 0, i: 0, j: 1, value: 1.0 }])
            .unwrap();
        assert!(fit_mixed_effects(&d, 1.0, &EstimatorConfig::default()).is_err());
    }

    #[test]
    fn selection_tie_and_single_candidate_rules() {
        let mut r = rng(3);
        let theta = PreferenceVector::sample_uniform(6, &mut r);
        let raw = generate(&theta, &ComparisonModel::Btl, 30, 0.6, &mut r).unwrap();
        let cfg = EstimatorConfig::default();
        let one = select_model(&raw, &[ComparisonModel::Tm], 0.03, &cfg).unwrap();
        assert_eq!(one.chosen, ComparisonModel::Tm);
        let dup = select_model(&raw, &[ComparisonModel::Dt { scale: 1.0 }, ComparisonModel::Dt { scale: 1.0 }], 0.03, &cfg)
            .unwrap();
        assert_eq!(dup.scores[0].1, dup.scores[1].1);
        assert_eq!(dup.chosen, ComparisonModel::Dt { scale: 1.0 });
        assert!(select_model(&raw, &[], 0.03, &cfg).is_err());
    }

    #[test]
    fn selection_prefers_generating_model_with_lots_of_data() {
        let mut r = rng(4);
        let theta = PreferenceVector::centered((0..10).map(|i| 0.4 * i as f64).collect());
        for truth in [ComparisonModel::Btl, ComparisonModel::Tm] {
            let raw = generate(&theta, &truth, 2000, 1.0, &mut r).unwrap();
            let sel = select_model(&raw, &[ComparisonModel::Btl, ComparisonModel::Tm], 1.0 / 2000.0, &EstimatorConfig::default())
                .unwrap();
            assert_eq!(sel.chosen, truth);
        }
    }
}
