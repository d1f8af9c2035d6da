//! Regularized weighted maximum likelihood for LST models.
//!
//! The negative log-likelihood
//!
//! ```text
//! L_0(theta) = - sum_l sum_{i<j observed} [ z log F(theta_i - theta_j) + (w_l - z) log(1 - F(theta_i - theta_j)) ]
//! ```
//!
//! only depends on the data through the per-pair sums `Z_ij = sum_l z` and
//! `W_ij = sum_l w_l`, so the data are reduced to those before optimizing.
//! The fitted vector minimizes `L_0(theta) + lambda * |theta|^2` and is found by
//! gradient descent from zero.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{PairwiseDataset, PreferenceVector, ValueKind};
use crate::error::{Error, Result};
use crate::models::ComparisonModel;
use crate::privacy::PrivacyProfile;

/// Score gaps are clipped to this magnitude inside the log-likelihood.
pub const GAP_CLIP: f64 = 36.0;

/// Largest item count accepted by the dense Hessian diagnostic.
pub const HESSIAN_MAX_ITEMS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    /// Backtracking Armijo line search.
    Auto,
    /// Constant step, no line search.
    Fixed(f64),
}

impl FromStr for StepSize {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("auto") {
            return Ok(StepSize::Auto);
        }
        match s.trim().parse::<f64>() {
            Ok(a) if a > 0.0 && a.is_finite() => Ok(StepSize::Fixed(a)),
            _ => Err(Error::Validation(format!("step size must be `auto` or a positive number, got `{s}`"))),
        }
    }
}

impl fmt::Display for StepSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepSize::Auto => f.write_str("auto"),
            StepSize::Fixed(a) => write!(f, "{a}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub lambda: f64,
    pub step_size: StepSize,
    /// Stop once the gradient infinity-norm falls to this value.
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Seeds the perturbed restart after a failed line search.
    pub seed: u64,
    /// Record the objective value after every accepted step.
    pub keep_trace: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            lambda: 0.0,
            step_size: StepSize::Auto,
            grad_tol: 1e-8,
            max_iters: 50_000,
            seed: 0,
            keep_trace: false,
        }
    }
}

impl EstimatorConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        EstimatorConfig { lambda, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Validation(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::Validation(format!("grad_tol must be > 0, got {}", self.grad_tol)));
        }
        if let StepSize::Fixed(a) = self.step_size {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::Validation(format!("fixed step must be > 0, got {a}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub theta_hat: PreferenceVector,
    pub iterations: usize,
    pub final_grad_norm: f64,
    pub objective_value: f64,
    /// Whether the optimizer had to restart from a perturbed point.
    pub restarted: bool,
    pub trace: Vec<f64>,
}

impl Estimate {
    /// One-line `key=value` summary of the optimizer run.
    pub fn log_line(&self, model: &ComparisonModel) -> String {
        format!(
            "fit model={} items={} iterations={} final_grad_norm={:.3e} objective={:.12} restarted={}",
            model,
            self.theta_hat.len(),
            self.iterations,
            self.final_grad_norm,
            self.objective_value,
            self.restarted
        )
    }
}

/// `c / (L * B(eps))`.
pub fn default_lambda(profile: &PrivacyProfile, c: f64) -> Result<f64> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Validation(format!("lambda constant must be positive, got {c}")));
    }
    let g = profile.g();
    if !(g > 0.0) {
        return Err(Error::Validation("profile carries no information (L * B = 0)".into()));
    }
    Ok(c / g)
}

/// Aggregated sufficient statistics of one item pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairStat {
    pub i: usize,
    pub j: usize,
    /// Sum of weighted surrogates `z`.
    pub z: f64,
    /// Sum of user weights `w_l` over the users who compared the pair.
    pub w: f64,
}

/// A dataset in the weighted form `(z, w_l)` the likelihood is written in.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedData {
    items: usize,
    pairs: Vec<PairStat>,
}

impl WeightedData {
    /// Weighted datasets use the adaptive weights of their attached profile.
    /// Every other kind is embedded with uniform weights `1/L` and `z = value / L`.
    pub fn from_dataset(dataset: &PairwiseDataset) -> Result<Self> {
        let users = dataset.users();
        let weights: Vec<f64> = match dataset.kind() {
            ValueKind::DebiasedWeighted => {
                let profile = dataset.profile().ok_or_else(|| {
                    Error::Validation("debiased_weighted data needs its privacy profile to be fitted".into())
                })?;
                profile.weights()?
            }
            _ => vec![1.0 / users.max(1) as f64; users],
        };
        let scale_z = dataset.kind() != ValueKind::DebiasedWeighted;
        let m = dataset.items();
        // row-major upper triangle; `seen` separates unobserved pairs from zero sums
        let mut acc = vec![(0.0f64, 0.0f64, false); m * m];
        for r in dataset.records() {
            let w = weights[r.user];
            let z = if scale_z { r.value * w } else { r.value };
            let e = &mut acc[r.i * m + r.j];
            e.0 += z;
            e.1 += w;
            e.2 = true;
        }
        let pairs = acc
            .into_iter()
            .enumerate()
            .filter(|(_, e)| e.2)
            .map(|(k, (z, w, _))| PairStat { i: k / m, j: k % m, z, w })
            .collect();
        Ok(WeightedData { items: dataset.items(), pairs })
    }

    pub fn from_pairs(items: usize, pairs: Vec<PairStat>) -> Result<Self> {
        for p in &pairs {
            if p.i >= p.j || p.j >= items {
                return Err(Error::Validation(format!("pair ({}, {}) out of range", p.i, p.j)));
            }
        }
        Ok(WeightedData { items, pairs })
    }

    pub fn items(&self) -> usize {
        self.items
    }

    pub fn pairs(&self) -> &[PairStat] {
        &self.pairs
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.items {
            return Err(Error::Validation(format!(
                "theta has {} entries for {} items",
                theta.len(),
                self.items
            )));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::Domain("theta must be finite".into()));
        }
        Ok(())
    }

    /// Unpenalized negative log-likelihood `L_0`.
    pub fn nll(&self, theta: &[f64], model: &ComparisonModel) -> f64 {
        self.pairs
            .iter()
            .map(|p| {
                let gap = (theta[p.i] - theta[p.j]).clamp(-GAP_CLIP, GAP_CLIP);
                let mut v = 0.0;
                if p.z != 0.0 {
                    v -= p.z * model.log_cdf_at(gap);
                }
                if p.w != p.z {
                    v -= (p.w - p.z) * model.log_sf_at(gap);
                }
                v
            })
            .sum()
    }

    pub fn objective(&self, theta: &[f64], model: &ComparisonModel, lambda: f64) -> f64 {
        self.nll(theta, model) + lambda * theta.iter().map(|t| t * t).sum::<f64>()
    }

    pub fn gradient_into(&self, theta: &[f64], model: &ComparisonModel, lambda: f64, out: &mut [f64]) {
        for (o, t) in out.iter_mut().zip(theta) {
            *o = 2.0 * lambda * t;
        }
        for p in &self.pairs {
            let gap = (theta[p.i] - theta[p.j]).clamp(-GAP_CLIP, GAP_CLIP);
            // d/d gap of -[z log F(gap) + (w - z) log F(-gap)]
            let d = -(p.z * model.g_at(gap) - (p.w - p.z) * model.g_at(-gap));
            out[p.i] += d;
            out[p.j] -= d;
        }
    }

    pub fn gradient(&self, theta: &[f64], model: &ComparisonModel, lambda: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.items];
        self.gradient_into(theta, model, lambda, &mut out);
        out
    }

    /// Hessian of `L_0`. Rows sum to zero.
    pub fn hessian(&self, theta: &[f64], model: &ComparisonModel) -> DMatrix<f64> {
        let m = self.items;
        let mut h = DMatrix::<f64>::zeros(m, m);
        for p in &self.pairs {
            let gap = (theta[p.i] - theta[p.j]).clamp(-GAP_CLIP, GAP_CLIP);
            let off = p.z * model.g_prime_at(gap) + (p.w - p.z) * model.g_prime_at(-gap);
            h[(p.i, p.j)] += off;
            h[(p.j, p.i)] += off;
            h[(p.i, p.i)] -= off;
            h[(p.j, p.j)] -= off;
        }
        h
    }
}

pub fn objective(theta: &[f64], dataset: &PairwiseDataset, model: &ComparisonModel, lambda: f64) -> Result<f64> {
    let data = WeightedData::from_dataset(dataset)?;
    data.check_theta(theta)?;
    Ok(data.objective(theta, model, lambda))
}

pub fn gradient(
    theta: &[f64],
    dataset: &PairwiseDataset,
    model: &ComparisonModel,
    lambda: f64,
) -> Result<Vec<f64>> {
    let data = WeightedData::from_dataset(dataset)?;
    data.check_theta(theta)?;
    Ok(data.gradient(theta, model, lambda))
}

/// Smallest eigenvalue of the `L_0` Hessian restricted to vectors orthogonal to all-ones.
pub fn hessian_min_nonzero_eigenvalue(
    theta: &[f64],
    dataset: &PairwiseDataset,
    model: &ComparisonModel,
) -> Result<f64> {
    let data = WeightedData::from_dataset(dataset)?;
    data.check_theta(theta)?;
    min_nonzero_eigenvalue(&data.hessian(theta, model))
}

pub(crate) fn min_nonzero_eigenvalue(h: &DMatrix<f64>) -> Result<f64> {
    let m = h.nrows();
    if m > HESSIAN_MAX_ITEMS {
        return Err(Error::Validation(format!(
            "Hessian diagnostic is limited to {HESSIAN_MAX_ITEMS} items, got {m}"
        )));
    }
    if m < 2 {
        return Err(Error::Validation("Hessian diagnostic needs at least 2 items".into()));
    }
    let basis = helmert_basis(m);
    let projected = basis.transpose() * h * &basis;
    let eig = SymmetricEigen::new(projected);
    Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Orthonormal basis (columns) of the complement of the all-ones vector.
fn helmert_basis(m: usize) -> DMatrix<f64> {
    let mut q = DMatrix::<f64>::zeros(m, m - 1);
    for k in 1..m {
        let norm = ((k * (k + 1)) as f64).sqrt();
        for r in 0..k {
            q[(r, k - 1)] = 1.0 / norm;
        }
        q[(k, k - 1)] = -(k as f64) / norm;
    }
    q
}

/// Fits `theta_hat = argmin L_0 + lambda |theta|^2` by gradient descent from zero.
pub fn fit(dataset: &PairwiseDataset, model: &ComparisonModel, config: &EstimatorConfig) -> Result<Estimate> {
    if dataset.is_empty() {
        return Err(Error::Validation("cannot fit an empty dataset".into()));
    }
    let isolated = dataset.isolated_items();
    if !isolated.is_empty() {
        log::warn!(
            "items {:?} appear in no comparison; their estimates are set by the penalty alone",
            isolated.iter().map(|i| i + 1).collect::<Vec<_>>()
        );
    }
    let data = WeightedData::from_dataset(dataset)?;
    fit_weighted(&data, model, config)
}

pub fn fit_weighted(data: &WeightedData, model: &ComparisonModel, config: &EstimatorConfig) -> Result<Estimate> {
    config.validate()?;
    let m = data.items();
    let lambda = config.lambda;
    let f = |x: &[f64]| data.objective(x, model, lambda);
    let g = |x: &[f64], out: &mut [f64]| data.gradient_into(x, model, lambda, out);

    let opts = DescentOptions { center: true, ..DescentOptions::from(config) };
    let first = descend(vec![0.0; m], &f, &g, None, &opts);
    let (outcome, restarted) = match first {
        Err(Error::LineSearch { .. }) => {
            // the sample objective need not be convex for non-logistic F; retry once
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let start = PreferenceVector::centered((0..m).map(|_| 1e-3 * rng.random_range(-1.0..1.0)).collect());
            log::warn!("line search failed; restarting from a perturbed point");
            (descend(start.into_inner(), &f, &g, None, &opts)?, true)
        }
        other => (other?, false),
    };
    Ok(Estimate {
        theta_hat: PreferenceVector::new(outcome.x),
        iterations: outcome.iterations,
        final_grad_norm: outcome.grad_norm,
        objective_value: outcome.value,
        restarted,
        trace: outcome.trace,
    })
}

#[derive(Debug, Clone)]
pub(crate) struct DescentOptions {
    pub step: StepSize,
    pub grad_tol: f64,
    pub max_iters: usize,
    pub keep_trace: bool,
    /// Project iterates onto `sum(x) = 0` after every step.
    pub center: bool,
}

impl From<&EstimatorConfig> for DescentOptions {
    fn from(c: &EstimatorConfig) -> Self {
        DescentOptions {
            step: c.step_size,
            grad_tol: c.grad_tol,
            max_iters: c.max_iters,
            keep_trace: c.keep_trace,
            center: false,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct DescentOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub trace: Vec<f64>,
}

const ARMIJO_C: f64 = 1e-4;
const MIN_STEP: f64 = 1e-18;

/// Gradient descent with backtracking line search. `scale`, when given, is a
/// per-coordinate step multiplier (diagonal preconditioner).
///
/// The sufficient-decrease test allows a slack of a few ulps of the objective,
/// otherwise steps near the optimum are rejected on rounding noise alone.
pub(crate) fn descend<F, G>(
    mut x: Vec<f64>,
    f: &F,
    grad: &G,
    scale: Option<&[f64]>,
    opts: &DescentOptions,
) -> Result<DescentOutcome>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64], &mut [f64]),
{
    let n = x.len();
    let mut g = vec![0.0; n];
    let mut dir = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut g_trial = vec![0.0; n];
    let mut value = f(&x);
    grad(&x, &mut g);
    let mut alpha = match opts.step {
        StepSize::Auto => 1.0,
        StepSize::Fixed(a) => a,
    };
    let mut trace = Vec::new();
    if opts.keep_trace {
        trace.push(value);
    }
    let inf_norm = |v: &[f64]| v.iter().fold(0.0f64, |a, b| a.max(b.abs()));

    for iteration in 0..=opts.max_iters {
        let grad_norm = inf_norm(&g);
        if !grad_norm.is_finite() || !value.is_finite() {
            return Err(Error::NotConverged { iterations: iteration, grad_norm });
        }
        if grad_norm <= opts.grad_tol {
            return Ok(DescentOutcome { x, value, grad_norm, iterations: iteration, trace });
        }
        if iteration == opts.max_iters {
            return Err(Error::NotConverged { iterations: iteration, grad_norm });
        }
        for k in 0..n {
            dir[k] = -g[k] * scale.map_or(1.0, |s| s[k]);
        }
        let slope: f64 = dir.iter().zip(&g).map(|(d, gk)| d * gk).sum();

        match opts.step {
            StepSize::Fixed(a) => {
                for k in 0..n {
                    x[k] += a * dir[k];
                }
                value = f(&x);
            }
            StepSize::Auto => {
                let slack = 8.0 * f64::EPSILON * value.abs().max(1.0);
                loop {
                    for k in 0..n {
                        trial[k] = x[k] + alpha * dir[k];
                    }
                    let candidate = f(&trial);
                    let decrease = -ARMIJO_C * alpha * slope;
                    if decrease > slack && candidate <= value - decrease {
                        std::mem::swap(&mut x, &mut trial);
                        value = candidate;
                        break;
                    }
                    // near the optimum f is flat to rounding; fall back on the gradient
                    if decrease <= slack && candidate <= value + slack {
                        grad(&trial, &mut g_trial);
                        if inf_norm(&g_trial) < grad_norm {
                            std::mem::swap(&mut x, &mut trial);
                            value = candidate;
                            break;
                        }
                    }
                    alpha *= 0.5;
                    if alpha < MIN_STEP {
                        return Err(Error::LineSearch { iteration, grad_norm });
                    }
                }
                alpha = (alpha * 2.0).min(1e6);
            }
        }
        if opts.center {
            // rounding drift along the all-ones direction only feels the ridge term
            let mean = x.iter().sum::<f64>() / n as f64;
            x.iter_mut().for_each(|v| *v -= mean);
            value = f(&x);
        }
        if opts.keep_trace {
            trace.push(value);
        }
        grad(&x, &mut g);
    }
    unreachable!("loop returns on its last iteration")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate, privatize, Comparison, Mechanism};
    use crate::privacy::NO_PRIVACY;
    use approx::assert_relative_eq;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn weighted_instance(m: usize, users: usize, p: f64, model: ComparisonModel, seed: u64) -> PairwiseDataset {
        let mut r = rng(seed);
        let theta = PreferenceVector::sample_uniform(m, &mut r);
        let raw = generate(&theta, &model, users, p, &mut r).unwrap();
        let eps: Vec<f64> = (0..users).map(|_| r.random_range(0.5..3.0)).collect();
        privatize(&raw, &PrivacyProfile::new(eps).unwrap(), Mechanism::Adrr, &mut r).unwrap()
    }

    #[test]
    fn objective_at_zero_is_log2_times_weight_mass() {
        let d = weighted_instance(6, 8, 0.6, ComparisonModel::Tm, 1);
        let w = d.profile().unwrap().weights().unwrap();
        let counts = d.per_user_counts();
        let expected: f64 = 2f64.ln() * counts.iter().zip(&w).map(|(&n, w)| n as f64 * w).sum::<f64>();
        for model in [ComparisonModel::Btl, ComparisonModel::Tm, ComparisonModel::Dt { scale: 1.0 }] {
            let v = objective(&[0.0; 6], &d, &model, 3.0).unwrap();
            assert_relative_eq!(v, expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn empty_data_leaves_only_the_penalty() {
        let d = PairwiseDataset::new(3, 2, ValueKind::RawBinary, vec![]).unwrap();
        let theta = [0.5, -0.2, 0.1];
        let v = objective(&theta, &d, &ComparisonModel::Btl, 0.7).unwrap();
        assert_relative_eq!(v, 0.7 * (0.25 + 0.04 + 0.01), epsilon = 1e-15);
        assert_eq!(gradient(&[0.0; 3], &d, &ComparisonModel::Btl, 0.7).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn weighted_data_without_profile_is_rejected() {
        let d = weighted_instance(4, 3, 1.0, ComparisonModel::Btl, 2);
        let mut buf = Vec::new();
        d.write_to(&mut buf).unwrap();
        let bare = PairwiseDataset::from_reader(buf.as_slice()).unwrap();
        assert!(objective(&[0.0; 4], &bare, &ComparisonModel::Btl, 0.0).is_err());
        assert!(objective(&[0.0; 3], &d, &ComparisonModel::Btl, 0.0).is_err());
    }

    #[test]
    fn hessian_rows_sum_to_zero() {
        let d = weighted_instance(7, 5, 0.8, ComparisonModel::Tm, 3);
        let data = WeightedData::from_dataset(&d).unwrap();
        let theta = PreferenceVector::sample_uniform(7, &mut rng(4));
        let h = data.hessian(&theta, &ComparisonModel::Tm);
        for r in 0..7 {
            assert!(h.row(r).sum().abs() < 1e-15);
        }
    }

    #[test]
    fn hessian_matches_gradient_differences() {
        let d = weighted_instance(5, 6, 1.0, ComparisonModel::Btl, 5);
        let data = WeightedData::from_dataset(&d).unwrap();
        let theta = PreferenceVector::sample_uniform(5, &mut rng(6));
        let model = ComparisonModel::Tm;
        let h = data.hessian(&theta, &model);
        let eps = 1e-6;
        for k in 0..5 {
            let mut up = theta.to_vec();
            let mut dn = theta.to_vec();
            up[k] += eps;
            dn[k] -= eps;
            let gu = data.gradient(&up, &model, 0.0);
            let gd = data.gradient(&dn, &model, 0.0);
            for r in 0..5 {
                let fd = (gu[r] - gd[r]) / (2.0 * eps);
                assert!((fd - h[(r, k)]).abs() < 1e-6, "({r},{k}) {fd} vs {}", h[(r, k)]);
            }
        }
    }

    #[test]
    fn two_item_fit_inverts_the_cdf() {
        // item 0 wins 70 of 100 comparisons
        let records: Vec<Comparison> =
            (0..100).map(|u| Comparison { user: u, i: 0, j: 1, value: f64::from(u8::from(u < 70)) }).collect();
        let d = PairwiseDataset::new(2, 100, ValueKind::RawBinary, records).unwrap();
        for model in [ComparisonModel::Btl, ComparisonModel::Tm] {
            let cfg = EstimatorConfig { lambda: 1e-10, grad_tol: 1e-12, ..Default::default() };
            let est = fit(&d, &model, &cfg).unwrap();
            let gap = est.theta_hat[0] - est.theta_hat[1];
            // oracle: bisection for F(x) = 0.7
            let (mut lo, mut hi) = (-10.0, 10.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if model.cdf(mid).unwrap() < 0.7 { lo = mid } else { hi = mid }
            }
            assert!((gap - lo).abs() < 1e-6, "{model}: {gap} vs {lo}");
            assert!(est.theta_hat.sum().abs() < 1e-10);
        }
    }

    #[test]
    fn ties_give_zero_scores() {
        let mut records = Vec::new();
        let mut user = 0;
        for i in 0..4 {
            for j in i + 1..4 {
                records.push(Comparison { user, i, j, value: 1.0 });
                records.push(Comparison { user: user + 1, i, j, value: 0.0 });
            }
        }
        user += 2;
        let d = PairwiseDataset::new(4, user, ValueKind::RawBinary, records).unwrap();
        let est = fit(&d, &ComparisonModel::Btl, &EstimatorConfig::with_lambda(0.01)).unwrap();
        assert!(est.theta_hat.iter().all(|t| t.abs() < 1e-9));
        assert_eq!(est.iterations, 0);
    }

    #[test]
    fn non_private_limit_matches_raw_fit() {
        let mut r = rng(7);
        let theta = PreferenceVector::sample_uniform(8, &mut r);
        let raw = generate(&theta, &ComparisonModel::Btl, 40, 0.5, &mut r).unwrap();
        let adrr = privatize(&raw, &PrivacyProfile::uniform(40, NO_PRIVACY).unwrap(), Mechanism::Adrr, &mut r).unwrap();
        let cfg = EstimatorConfig { lambda: 0.025, grad_tol: 1e-11, ..Default::default() };
        let a = fit(&raw, &ComparisonModel::Btl, &cfg).unwrap();
        let b = fit(&adrr, &ComparisonModel::Btl, &cfg).unwrap();
        for (x, y) in a.theta_hat.iter().zip(b.theta_hat.iter()) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn descent_is_monotone() {
        let d = weighted_instance(10, 30, 0.5, ComparisonModel::Tm, 8);
        let cfg = EstimatorConfig { lambda: 0.05, keep_trace: true, ..Default::default() };
        let est = fit(&d, &ComparisonModel::Tm, &cfg).unwrap();
        assert!(est.trace.len() > 2);
        for w in est.trace.windows(2) {
            assert!(w[1] <= w[0] + 8.0 * f64::EPSILON * w[0].abs().max(1.0));
        }
        assert!(est.final_grad_norm <= 1e-8);
        assert!(est.theta_hat.sum().abs() <= 1e-8);
    }

    #[test]
    fn fixed_step_mode_converges_with_small_step() {
        let d = weighted_instance(6, 20, 1.0, ComparisonModel::Btl, 9);
        let auto = fit(&d, &ComparisonModel::Btl, &EstimatorConfig::with_lambda(0.05)).unwrap();
        let cfg = EstimatorConfig { lambda: 0.05, step_size: StepSize::Fixed(0.5), ..Default::default() };
        let fixed = fit(&d, &ComparisonModel::Btl, &cfg).unwrap();
        for (a, b) in auto.theta_hat.iter().zip(fixed.theta_hat.iter()) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn iteration_cap_reports_gradient() {
        let d = weighted_instance(6, 20, 1.0, ComparisonModel::Btl, 10);
        let cfg = EstimatorConfig { lambda: 0.05, max_iters: 1, grad_tol: 1e-14, ..Default::default() };
        match fit(&d, &ComparisonModel::Btl, &cfg) {
            Err(Error::NotConverged { iterations, grad_norm }) => {
                assert_eq!(iterations, 1);
                assert!(grad_norm > 0.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn default_lambda_values() {
        let p = PrivacyProfile::uniform(100, NO_PRIVACY).unwrap();
        assert_relative_eq!(default_lambda(&p, 1.0).unwrap(), 0.01);
        let p = PrivacyProfile::uniform(200, ((1.0 + 0.5f64.sqrt()) / (1.0 - 0.5f64.sqrt())).ln()).unwrap();
        // tanh(eps/2)^2 = 0.5
        assert_relative_eq!(p.b(), 0.5, epsilon = 1e-12);
        assert_relative_eq!(default_lambda(&p, 1.0).unwrap(), 0.01, epsilon = 1e-12);
        let eps = [0.2, 2.0, 1.0];
        let p = PrivacyProfile::new(eps.to_vec()).unwrap();
        let hand: f64 = eps.iter().map(|e: &f64| ((e.exp() - 1.0) / (e.exp() + 1.0)).powi(2)).sum();
        assert_relative_eq!(default_lambda(&p, 2.0).unwrap(), 2.0 / hand, epsilon = 1e-12);
        assert!(default_lambda(&PrivacyProfile::uniform(3, 0.0).unwrap(), 1.0).is_err());
    }

    #[test]
    fn hessian_cap_is_enforced() {
        let h = DMatrix::<f64>::zeros(HESSIAN_MAX_ITEMS + 1, HESSIAN_MAX_ITEMS + 1);
        assert!(min_nonzero_eigenvalue(&h).is_err());
    }

    #[test]
    fn step_size_tokens() {
        assert_eq!("auto".parse::<StepSize>().unwrap(), StepSize::Auto);
        assert_eq!("0.25".parse::<StepSize>().unwrap(), StepSize::Fixed(0.25));
        assert!("-1".parse::<StepSize>().is_err());
    }
}
