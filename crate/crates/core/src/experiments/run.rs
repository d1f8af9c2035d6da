//! Replicated simulation runs and their tidy/aggregate CSV output.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::spec::{replicate_seed, Cell, EpsScheme, EpsilonLaw, Scenario, ScenarioSpec};
use super::stats::{linear_fit, mean, sample_sd, LinearFit};
use crate::baselines::count_scores;
use crate::dataset::{generate, privatize, Mechanism, PreferenceVector};
use crate::error::{Error, Result};
use crate::estimator::{default_lambda, fit, EstimatorConfig};
use crate::metrics::{kendall, spearman_footrule, topk_hamming};
use crate::models::ComparisonModel;
use crate::privacy::{PrivacyProfile, NO_PRIVACY};

/// A cell is flagged when more than this fraction of its replicates failed.
pub const FAILURE_FLAG_RATE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Adrr,
    ClassicRr,
    Laplace,
    Count,
}

impl Method {
    pub fn token(self) -> &'static str {
        match self {
            Method::Adrr => "adrr",
            Method::ClassicRr => "classic_rr",
            Method::Laplace => "laplace",
            Method::Count => "count",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    /// `||theta_hat - theta*||_2 / sqrt(m)`
    L2,
    LInf,
    /// Top-K Hamming error with `K = floor(m/2)`.
    TopK,
    Kendall,
    Footrule,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::L2, Metric::LInf, Metric::TopK, Metric::Kendall, Metric::Footrule];

    pub fn token(self) -> &'static str {
        match self {
            Metric::L2 => "l2",
            Metric::LInf => "linf",
            Metric::TopK => "topk",
            Metric::Kendall => "kendall",
            Metric::Footrule => "footrule",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Errors of one method in one replicate. Score-only methods have no
/// `L2`/`LInf` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Errors(pub Vec<(Metric, f64)>);

impl Errors {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        self.0.iter().find(|(m, _)| *m == metric).map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub method: Method,
    pub result: std::result::Result<Errors, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateResult {
    pub cell: usize,
    pub replicate: usize,
    pub users: usize,
    pub items: usize,
    /// `1 / sqrt(B(eps))` of the drawn budgets.
    pub inv_sqrt_b: f64,
    pub outcomes: Vec<MethodOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub cell: usize,
    pub method: Method,
    pub metric: Metric,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailures {
    pub cell: usize,
    pub method: Method,
    pub failed: usize,
    pub total: usize,
}

impl CellFailures {
    pub fn flagged(&self) -> bool {
        self.failed as f64 > FAILURE_FLAG_RATE * self.total as f64
    }
}

/// Scenario II: error against `1/sqrt(B)` in one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct TrendFit {
    pub cell: usize,
    pub metric: Metric,
    pub fit: LinearFit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankReport {
    pub spec: ScenarioSpec,
    pub cells: Vec<Cell>,
    pub replicates: Vec<ReplicateResult>,
    pub summaries: Vec<CellSummary>,
    pub failures: Vec<CellFailures>,
    pub trends: Vec<TrendFit>,
}

pub fn methods_for(scenario: Scenario) -> &'static [Method] {
    match scenario {
        Scenario::V => &[Method::Adrr, Method::ClassicRr, Method::Laplace, Method::Count],
        _ => &[Method::Adrr],
    }
}

pub fn run_scenario(spec: &ScenarioSpec) -> Result<RankReport> {
    spec.validate()?;
    if spec.scenario == Scenario::RealData {
        return Err(Error::Validation("the real-data pipeline is run through real_data_pipeline".into()));
    }
    let cells = spec.cells();
    let jobs: Vec<(usize, usize)> =
        cells.iter().flat_map(|c| (0..spec.replicates).map(move |r| (c.index, r))).collect();
    // rayon's indexed collect keeps job order, so output does not depend on scheduling
    let replicates: Vec<ReplicateResult> =
        jobs.par_iter().map(|&(c, r)| run_replicate(spec, &cells[c], r)).collect::<Result<_>>()?;

    let methods = methods_for(spec.scenario);
    let mut summaries = Vec::new();
    let mut failures = Vec::new();
    let mut trends = Vec::new();
    for cell in &cells {
        let reps: Vec<&ReplicateResult> = replicates.iter().filter(|r| r.cell == cell.index).collect();
        for &method in methods {
            let outcomes: Vec<(&ReplicateResult, &MethodOutcome)> = reps
                .iter()
                .filter_map(|r| r.outcomes.iter().find(|o| o.method == method).map(|o| (*r, o)))
                .collect();
            let failed = outcomes.iter().filter(|(_, o)| o.result.is_err()).count();
            failures.push(CellFailures { cell: cell.index, method, failed, total: outcomes.len() });
            for metric in Metric::ALL {
                let values: Vec<f64> =
                    outcomes.iter().filter_map(|(_, o)| o.result.as_ref().ok()?.get(metric)).collect();
                if values.is_empty() {
                    continue;
                }
                summaries.push(CellSummary {
                    cell: cell.index,
                    method,
                    metric,
                    n: values.len(),
                    mean: mean(&values),
                    sd: sample_sd(&values),
                });
            }
            if spec.scenario == Scenario::II && method == Method::Adrr {
                for metric in [Metric::LInf, Metric::L2] {
                    let (x, y): (Vec<f64>, Vec<f64>) = outcomes
                        .iter()
                        .filter_map(|(r, o)| Some((r.inv_sqrt_b, o.result.as_ref().ok()?.get(metric)?)))
                        .unzip();
                    if let Ok(fit) = linear_fit(&x, &y) {
                        trends.push(TrendFit { cell: cell.index, metric, fit });
                    }
                }
            }
        }
    }
    for f in failures.iter().filter(|f| f.flagged()) {
        log::warn!("cell {} method {}: {} of {} replicates failed", f.cell, f.method, f.failed, f.total);
    }
    Ok(RankReport { spec: spec.clone(), cells, replicates, summaries, failures, trends })
}

fn run_replicate(spec: &ScenarioSpec, cell: &Cell, rep: usize) -> Result<ReplicateResult> {
    let seed = replicate_seed(spec.base_seed, cell.index, rep);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let users = cell.users.sample(&mut rng);
    let items = cell.items.sample(&mut rng);
    let theta = match cell.delta {
        Some(d) => PreferenceVector::evenly_spaced(items, d),
        None => PreferenceVector::sample_uniform(items, &mut rng),
    };
    let profile = PrivacyProfile::new(cell.epsilon.sample(items, users, &mut rng))?;
    let raw = generate(&theta, &cell.model, users, cell.p, &mut rng)?;
    let adrr = privatize(&raw, &profile, Mechanism::Adrr, &mut rng)?;
    let mut outcomes = Vec::new();

    let config = |lambda: f64| EstimatorConfig { lambda, seed, ..Default::default() };
    let lambda = default_lambda(&profile, spec.lambda_c)?;
    let score = |est: Result<crate::estimator::Estimate>| -> std::result::Result<Errors, String> {
        let est = est.map_err(|e| e.to_string())?;
        parameter_errors(&est.theta_hat, &theta).map_err(|e| e.to_string())
    };
    outcomes.push(MethodOutcome { method: Method::Adrr, result: score(fit(&adrr, &cell.model, &config(lambda))) });

    if spec.scenario == Scenario::V {
        let flipped = privatize(&raw, &profile, Mechanism::ClassicRr, &mut rng)?;
        let noisy = privatize(&raw, &profile, Mechanism::Laplace, &mut rng)?;
        // the baselines ignore the budgets when weighting, so they get the unweighted ridge c / L
        let plain = default_lambda(&PrivacyProfile::uniform(users, NO_PRIVACY)?, spec.lambda_c)?;
        outcomes.push(MethodOutcome {
            method: Method::ClassicRr,
            result: score(fit(&flipped, &cell.model, &config(plain))),
        });
        outcomes.push(MethodOutcome { method: Method::Laplace, result: score(fit(&noisy, &cell.model, &config(plain))) });
        let counts = count_scores(&flipped).and_then(|c| ranking_errors(c.scores(), &theta));
        outcomes.push(MethodOutcome { method: Method::Count, result: counts.map_err(|e| e.to_string()) });
    }

    Ok(ReplicateResult { cell: cell.index, replicate: rep, users, items, inv_sqrt_b: 1.0 / profile.b().sqrt(), outcomes })
}

/// All five errors of an estimate against the truth.
pub fn parameter_errors(theta_hat: &[f64], theta_star: &[f64]) -> Result<Errors> {
    let m = theta_star.len();
    let diff: Vec<f64> = theta_hat.iter().zip(theta_star).map(|(a, b)| a - b).collect();
    let l2 = diff.iter().map(|d| d * d).sum::<f64>().sqrt() / (m as f64).sqrt();
    let linf = diff.iter().fold(0.0f64, |a, d| a.max(d.abs()));
    let mut errors = vec![(Metric::L2, l2), (Metric::LInf, linf)];
    errors.extend(ranking_errors(theta_hat, theta_star)?.0);
    Ok(Errors(errors))
}

/// Rank-only errors, for methods that produce scores rather than estimates.
pub fn ranking_errors(scores: &[f64], theta_star: &[f64]) -> Result<Errors> {
    let k = theta_star.len() / 2;
    Ok(Errors(vec![
        (Metric::TopK, topk_hamming(scores, theta_star, k)?),
        (Metric::Kendall, kendall(scores, theta_star)?),
        (Metric::Footrule, spearman_footrule(scores, theta_star)?),
    ]))
}

impl RankReport {
    pub fn summary(&self, cell: usize, method: Method, metric: Metric) -> Option<&CellSummary> {
        self.summaries.iter().find(|s| s.cell == cell && s.method == method && s.metric == metric)
    }

    /// Per-replicate values of one metric in one cell, failures skipped.
    pub fn values(&self, cell: usize, method: Method, metric: Metric) -> Vec<f64> {
        self.replicates
            .iter()
            .filter(|r| r.cell == cell)
            .filter_map(|r| r.outcomes.iter().find(|o| o.method == method)?.result.as_ref().ok()?.get(metric))
            .collect()
    }

    /// First cell matching the model and fixed sizes.
    pub fn find_cell(&self, model: ComparisonModel, users: usize, items: usize) -> Option<&Cell> {
        use super::spec::Size;
        self.cells.iter().find(|c| c.model == model && c.users == Size::Fixed(users) && c.items == Size::Fixed(items))
    }

    fn cell_columns(&self, cell: &Cell) -> String {
        let delta = cell.delta.map(|d| d.to_string()).unwrap_or_default();
        format!("{},{},{},{},{},{},{}", cell.index, cell.model, cell.users, cell.items, cell.p, delta, cell.epsilon)
    }

    /// `cell,model,users,items,p,delta,epsilon,replicate,replicate_users,replicate_items,method,metric,value`.
    /// Failed fits appear as a single `failed` row.
    pub fn write_tidy<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(
            out,
            "cell,model,users,items,p,delta,epsilon,replicate,replicate_users,replicate_items,method,metric,value"
        )?;
        for r in &self.replicates {
            let prefix = format!(
                "{},{},{},{}",
                self.cell_columns(&self.cells[r.cell]),
                r.replicate,
                r.users,
                r.items
            );
            if self.spec.scenario == Scenario::II {
                writeln!(out, "{prefix},adrr,inv_sqrt_b,{}", r.inv_sqrt_b)?;
            }
            for o in &r.outcomes {
                match &o.result {
                    Ok(errors) => {
                        for (metric, value) in &errors.0 {
                            writeln!(out, "{prefix},{},{},{}", o.method, metric, value)?;
                        }
                    }
                    Err(_) => writeln!(out, "{prefix},{},failed,1", o.method)?,
                }
            }
        }
        Ok(())
    }

    /// `cell,model,users,items,p,delta,epsilon,method,metric,n,mean,sd,failure_rate,flagged`.
    pub fn write_summary<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "cell,model,users,items,p,delta,epsilon,method,metric,n,mean,sd,failure_rate,flagged")?;
        for s in &self.summaries {
            let f = self
                .failures
                .iter()
                .find(|f| f.cell == s.cell && f.method == s.method)
                .expect("every summarized method has a failure count");
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                self.cell_columns(&self.cells[s.cell]),
                s.method,
                s.metric,
                s.n,
                s.mean,
                s.sd,
                f.failed as f64 / f.total as f64,
                f.flagged()
            )?;
        }
        Ok(())
    }

    /// `cell,model,metric,n,slope,intercept,correlation`.
    pub fn write_trends<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "cell,model,metric,n,slope,intercept,correlation")?;
        for t in &self.trends {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                t.cell, self.cells[t.cell].model, t.metric, t.fit.n, t.fit.slope, t.fit.intercept, t.fit.correlation
            )?;
        }
        Ok(())
    }

    /// The scenario settings as `key=value` lines plus notes on seeding and budget anchoring.
    pub fn write_metadata<W: Write>(&self, out: &mut W) -> Result<()> {
        out.write_all(self.spec.to_config().as_bytes())?;
        writeln!(out, "seed_scheme=splitmix64(seed ^ splitmix64((cell << 32) | replicate))")?;
        writeln!(out, "rng=ChaCha8")?;
        writeln!(out, "topk=floor(m/2)")?;
        if self.spec.scenario == Scenario::III {
            let (m, l) = EpsScheme::ANCHOR;
            writeln!(out, "scheme_anchor=eps(m={m},L={l})=1")?;
        }
        if self.spec.scenario == Scenario::V {
            writeln!(out, "baseline_lambda=lambda_c/L")?;
        }
        if let EpsilonLaw::Shifted { .. } = self.spec.epsilon {
            writeln!(out, "shift_draw=once_per_replicate")?;
        }
        Ok(())
    }

    /// Writes `scenario<N>_tidy.csv`, `scenario<N>_summary.csv`,
    /// `scenario<N>_meta.txt` and, for Scenario II, `scenario<N>_trend.csv`.
    pub fn write_all(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let stem = format!("scenario{}", self.spec.scenario);
        let mut written = Vec::new();
        let mut emit = |suffix: &str, f: &dyn Fn(&mut BufWriter<File>) -> Result<()>| -> Result<()> {
            let path = dir.join(format!("{stem}_{suffix}"));
            let mut w = BufWriter::new(File::create(&path)?);
            f(&mut w)?;
            w.flush()?;
            written.push(path);
            Ok(())
        };
        emit("tidy.csv", &|w| self.write_tidy(w))?;
        emit("summary.csv", &|w| self.write_summary(w))?;
        if self.spec.scenario == Scenario::II {
            emit("trend.csv", &|w| self.write_trends(w))?;
        }
        emit("meta.txt", &|w| self.write_metadata(w))?;
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(scenario: Scenario) -> ScenarioSpec {
        let mut s = ScenarioSpec::for_scenario(scenario);
        s.models = vec![ComparisonModel::Btl];
        s.replicates = 3;
        s.base_seed = 5;
        s.users = s.users.iter().take(2).map(|_| 40).collect::<Vec<_>>();
        s.users.dedup();
        s.items = vec![6];
        s.users_range = (30, 40);
        s.items_range = (5, 7);
        if scenario == Scenario::IV {
            s.deltas = vec![0.2];
        }
        if scenario == Scenario::III {
            s.schemes = vec![EpsScheme::LogSquared];
        }
        s
    }

    #[test]
    fn every_scenario_runs_and_reports_legal_errors() {
        for scenario in [Scenario::I, Scenario::II, Scenario::III, Scenario::IV, Scenario::V] {
            let report = run_scenario(&small(scenario)).unwrap();
            assert_eq!(report.replicates.len(), report.cells.len() * 3);
            for r in &report.replicates {
                assert_eq!(r.outcomes.len(), methods_for(scenario).len());
                for o in &r.outcomes {
                    let e = o.result.as_ref().unwrap();
                    for (metric, v) in &e.0 {
                        assert!(v.is_finite() && *v >= 0.0);
                        if matches!(metric, Metric::TopK | Metric::Kendall | Metric::Footrule) {
                            assert!(*v <= 1.0);
                        }
                    }
                    if o.method == Method::Count {
                        assert!(e.get(Metric::L2).is_none());
                    }
                }
            }
            assert!(report.failures.iter().all(|f| f.failed == 0 && !f.flagged()));
        }
    }

    #[test]
    fn scenario_v_draws_sizes_in_range() {
        let report = run_scenario(&small(Scenario::V)).unwrap();
        for r in &report.replicates {
            assert!((30..=40).contains(&r.users));
            assert!((5..=7).contains(&r.items));
        }
    }

    #[test]
    fn summary_matches_replicates() {
        let report = run_scenario(&small(Scenario::I)).unwrap();
        let values = report.values(0, Method::Adrr, Metric::L2);
        let s = report.summary(0, Method::Adrr, Metric::L2).unwrap();
        assert_eq!(s.n, 3);
        assert_eq!(s.mean, mean(&values));
        assert_eq!(s.sd, sample_sd(&values));
    }

    #[test]
    fn output_is_deterministic() {
        let spec = small(Scenario::II);
        let render = || {
            let r = run_scenario(&spec).unwrap();
            let mut buf = Vec::new();
            r.write_tidy(&mut buf).unwrap();
            r.write_summary(&mut buf).unwrap();
            r.write_trends(&mut buf).unwrap();
            buf
        };
        assert_eq!(render(), render());
        let mut other = spec.clone();
        other.base_seed = 6;
        let r = run_scenario(&other).unwrap();
        let mut buf = Vec::new();
        r.write_tidy(&mut buf).unwrap();
        assert_ne!(buf, render());
    }

    #[test]
    fn failure_flag_threshold() {
        let f = CellFailures { cell: 0, method: Method::Adrr, failed: 1, total: 20 };
        assert!(!f.flagged());
        let f = CellFailures { cell: 0, method: Method::Adrr, failed: 2, total: 20 };
        assert!(f.flagged());
    }

    #[test]
    fn parameter_errors_by_hand() {
        let e = parameter_errors(&[0.5, 0.0, -0.5], &[0.3, 0.1, -0.4]).unwrap();
        let l2 = (0.04f64 + 0.01 + 0.01).sqrt() / 3f64.sqrt();
        assert!((e.get(Metric::L2).unwrap() - l2).abs() < 1e-15);
        assert!((e.get(Metric::LInf).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(e.get(Metric::Kendall), Some(0.0));
    }
}
