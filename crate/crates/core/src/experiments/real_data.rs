//! Car-preference pipeline: non-private ground truth, then repeated
//! privatization and full-ranking comparison across mechanisms.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::spec::{replicate_seed, EpsilonLaw};
use super::stats::{mean, paired_t_test, sample_sd, PairedTTest};
use crate::baselines::count_scores;
use crate::dataset::{privatize, Comparison, Mechanism, PairwiseDataset, ValueKind};
use crate::error::{Error, Result};
use crate::estimator::{default_lambda, fit, EstimatorConfig};
use crate::metrics::{kendall_ranks, rank_of, RankPermutation};
use crate::models::ComparisonModel;
use crate::privacy::{PrivacyProfile, NO_PRIVACY};

pub const CAR_HEADER: [&str; 4] = ["user_id", "item_i", "item_j", "choice"];

const CONVERTER_NOTE: &str = "convert the car-preference data to a CSV with header \
user_id,item_i,item_j,choice (1-based ids, choice = id of the preferred car, control \
questions removed) and pass its path";

/// Reads `user_id,item_i,item_j,choice`, where `choice` is the preferred item.
pub fn load_car_csv(path: impl AsRef<Path>) -> Result<PairwiseDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingData(format!("{} not found; {CONVERTER_NOTE}", path.display()))
        } else {
            Error::Io(e)
        }
    })?;
    car_from_reader(file)
}

pub fn car_from_reader<R: Read>(reader: R) -> Result<PairwiseDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(reader);
    if rdr.headers()?.iter().collect::<Vec<_>>() != CAR_HEADER {
        return Err(Error::Parse { line: 1, message: format!("expected header `{}`", CAR_HEADER.join(",")) });
    }
    let (mut items, mut users) = (0, 0);
    let mut records = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let line = idx + 2;
        let rec = rec?;
        let err = |message: String| Error::Parse { line, message };
        if rec.len() != 4 {
            return Err(err(format!("expected 4 fields, found {}", rec.len())));
        }
        let mut ids = [0usize; 4];
        for (k, name) in CAR_HEADER.iter().enumerate() {
            ids[k] = rec[k].parse().ok().filter(|&v| v >= 1).ok_or_else(|| err(format!("bad {name} `{}`", &rec[k])))?;
        }
        let [user, a, b, choice] = ids;
        if a == b {
            return Err(err("item_i equals item_j".into()));
        }
        if choice != a && choice != b {
            return Err(err(format!("choice {choice} is neither {a} nor {b}")));
        }
        let (i, j) = (a.min(b), a.max(b));
        items = items.max(j);
        users = users.max(user);
        records.push(Comparison { user: user - 1, i: i - 1, j: j - 1, value: f64::from(u8::from(choice == i)) });
    }
    PairwiseDataset::new(items, users, ValueKind::RawBinary, records)
}

/// Competitors in report order.
pub const METHODS: [&str; 7] =
    ["adrr_btl", "classic_rr_btl", "laplace_btl", "adrr_tm", "classic_rr_tm", "laplace_tm", "count"];

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: &'static str,
    pub n: usize,
    pub mean: f64,
    /// Standard error of the mean.
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestRow {
    pub ours: &'static str,
    pub competitor: &'static str,
    /// Test of `competitor - ours`; `Err` when the differences are degenerate.
    pub test: std::result::Result<PairedTTest, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealDataReport {
    pub ground_truth: RankPermutation,
    pub users: usize,
    pub items: usize,
    /// Kendall distance to the ground truth, `errors[rep][method]`; NaN marks a failed fit.
    pub errors: Vec<[f64; 7]>,
    pub summaries: Vec<MethodSummary>,
    pub tests: Vec<TestRow>,
}

/// Loads the dataset and runs [`real_data_from_dataset`] with `lambda_c = 1`.
pub fn real_data_pipeline(path: impl AsRef<Path>, replicates: usize, base_seed: u64) -> Result<RealDataReport> {
    let raw = load_car_csv(path)?;
    real_data_from_dataset(&raw, replicates, base_seed, EpsilonLaw::Shifted { a_low: 0.2, a_high: 2.0, width: 1.0 }, 1.0)
}

pub fn real_data_from_dataset(
    raw: &PairwiseDataset,
    replicates: usize,
    base_seed: u64,
    law: EpsilonLaw,
    lambda_c: f64,
) -> Result<RealDataReport> {
    if replicates == 0 {
        return Err(Error::Validation("replicates must be >= 1".into()));
    }
    if raw.kind() != ValueKind::RawBinary {
        return Err(Error::Validation(format!("real-data pipeline needs raw_binary data, got {}", raw.kind())));
    }
    let (items, users) = (raw.items(), raw.users());
    let plain = default_lambda(&PrivacyProfile::uniform(users, NO_PRIVACY)?, lambda_c)?;
    let btl = fit(raw, &ComparisonModel::Btl, &EstimatorConfig::with_lambda(plain))?;
    let tm = fit(raw, &ComparisonModel::Tm, &EstimatorConfig::with_lambda(plain))?;
    let counts = count_scores(raw)?;
    let truth = rank_of(&btl.theta_hat);
    let others = [rank_of(&tm.theta_hat), counts.ranking()];
    if others.iter().any(|r| *r != truth) {
        return Err(Error::Validation(format!(
            "non-private rankings disagree: btl {:?}, tm {:?}, count {:?}",
            truth.ranks(),
            others[0].ranks(),
            others[1].ranks()
        )));
    }

    let mut errors = Vec::with_capacity(replicates);
    for rep in 0..replicates {
        let seed = replicate_seed(base_seed, 0, rep);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let profile = PrivacyProfile::new(law.sample(items, users, &mut rng))?;
        let adrr = privatize(raw, &profile, Mechanism::Adrr, &mut rng)?;
        let flipped = privatize(raw, &profile, Mechanism::ClassicRr, &mut rng)?;
        let noisy = privatize(raw, &profile, Mechanism::Laplace, &mut rng)?;
        let lambda = default_lambda(&profile, lambda_c)?;
        let dist = |scores: &[f64]| kendall_ranks(rank_of(scores).ranks(), truth.ranks());
        let fitted = |data: &PairwiseDataset, model: ComparisonModel, lambda: f64| -> f64 {
            match fit(data, &model, &EstimatorConfig { lambda, seed, ..Default::default() }) {
                Ok(est) => dist(&est.theta_hat),
                Err(e) => {
                    log::warn!("replicate {rep}: {model} fit failed: {e}");
                    f64::NAN
                }
            }
        };
        let mut row = [0.0; 7];
        for (k, model) in [ComparisonModel::Btl, ComparisonModel::Tm].into_iter().enumerate() {
            row[3 * k] = fitted(&adrr, model, lambda);
            row[3 * k + 1] = fitted(&flipped, model, plain);
            row[3 * k + 2] = fitted(&noisy, model, plain);
        }
        row[6] = dist(count_scores(&flipped)?.scores());
        errors.push(row);
    }

    let column = |k: usize| -> Vec<f64> { errors.iter().map(|r| r[k]).filter(|v| !v.is_nan()).collect() };
    let summaries = METHODS
        .iter()
        .enumerate()
        .map(|(k, &method)| {
            let v = column(k);
            MethodSummary { method, n: v.len(), mean: mean(&v), se: sample_sd(&v) / (v.len() as f64).sqrt() }
        })
        .collect();
    let mut tests = Vec::new();
    for (ours, competitors) in [(0usize, [6usize, 1, 2]), (3, [6, 4, 5])] {
        for c in competitors {
            let (a, b): (Vec<f64>, Vec<f64>) =
                errors.iter().filter(|r| !r[c].is_nan() && !r[ours].is_nan()).map(|r| (r[c], r[ours])).unzip();
            tests.push(TestRow {
                ours: METHODS[ours],
                competitor: METHODS[c],
                test: paired_t_test(&a, &b).map_err(|e| e.to_string()),
            });
        }
    }
    Ok(RealDataReport { ground_truth: truth, users, items, errors, summaries, tests })
}

impl RealDataReport {
    pub fn summary(&self, method: &str) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    /// `replicate,method,kendall`.
    pub fn write_tidy<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "replicate,method,kendall")?;
        for (rep, row) in self.errors.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                writeln!(out, "{rep},{},{v}", METHODS[k])?;
            }
        }
        Ok(())
    }

    /// `key=value` lines: ground truth, means and paired tests.
    pub fn write_report<W: Write>(&self, out: &mut W) -> Result<()> {
        let ranks: Vec<String> = self.ground_truth.ranks().iter().map(|r| r.to_string()).collect();
        writeln!(out, "ground_truth_ranks={}", ranks.join(","))?;
        writeln!(out, "users={}", self.users)?;
        writeln!(out, "items={}", self.items)?;
        writeln!(out, "replicates={}", self.errors.len())?;
        for s in &self.summaries {
            writeln!(out, "{}.mean={}", s.method, s.mean)?;
            writeln!(out, "{}.se={}", s.method, s.se)?;
            writeln!(out, "{}.n={}", s.method, s.n)?;
        }
        for t in &self.tests {
            match &t.test {
                Ok(r) => {
                    writeln!(out, "ttest.{}.vs.{}.t={}", t.ours, t.competitor, r.t)?;
                    writeln!(out, "ttest.{}.vs.{}.p={}", t.ours, t.competitor, r.p)?;
                }
                Err(e) => writeln!(out, "ttest.{}.vs.{}.error={e}", t.ours, t.competitor)?,
            }
        }
        Ok(())
    }

    pub fn write_all(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut w = BufWriter::new(File::create(dir.join("real_data_tidy.csv"))?);
        self.write_tidy(&mut w)?;
        w.flush()?;
        let mut w = BufWriter::new(File::create(dir.join("real_data_report.txt"))?);
        self.write_report(&mut w)?;
        w.flush()?;
        Ok(())
    }
}
