use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use privrank::dataset::{self, Mechanism, PairwiseDataset, PreferenceVector, ValueKind};
use privrank::estimator::{self, default_lambda, EstimatorConfig};
use privrank::experiments::{self, EpsilonLaw, Scenario, ScenarioSpec};
use privrank::extensions::{budget_check, select_model};
use privrank::metrics::topk_hamming;
use privrank::{ComparisonModel, Error, PrivacyProfile, Result};

#[derive(Parser, Debug)]
#[command(name = "privrank", version, about = "Rank aggregation from locally private pairwise comparisons")]
struct Cli {
    /// Base RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Monte Carlo replicates per cell.
    #[arg(long, global = true)]
    replicates: Option<usize>,

    /// Comparison model: btl, tm, dt or dt:<scale>.
    #[arg(long, global = true)]
    model: Option<ComparisonModel>,

    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// key=value file overriding scenario defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample raw comparisons from a model with random or evenly spaced scores.
    Generate(GenerateArgs),
    /// Privatize a raw dataset under per-user budgets.
    Privatize(PrivatizeArgs),
    /// Fit item scores by regularized weighted maximum likelihood.
    Fit(FitArgs),
    /// Compare an estimate against true scores.
    Evaluate(EvaluateArgs),
    /// Run a simulation scenario and write tidy CSV results.
    Simulate(SimulateArgs),
    /// Run the car-preference pipeline.
    RealData(RealDataArgs),
    /// Pick the comparison model with the best fit.
    SelectModel(SelectModelArgs),
    /// Check whether a set of budgets carries enough information.
    Budget(BudgetArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    items: usize,
    #[arg(long)]
    users: usize,
    /// Probability that a user compares a given pair.
    #[arg(long, default_value_t = 1.0)]
    p: f64,
    /// Evenly spaced scores with this gap instead of U(-1, 1) draws.
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Args, Debug)]
struct PrivatizeArgs {
    #[arg(long)]
    data: PathBuf,
    /// rr, adrr or laplace.
    #[arg(long, default_value = "adrr")]
    mechanism: Mechanism,
    /// Same budget for every user.
    #[arg(long, conflicts_with_all = ["profile", "law"])]
    epsilon: Option<f64>,
    /// `user,epsilon` CSV.
    #[arg(long, conflicts_with = "law")]
    profile: Option<PathBuf>,
    /// Budget distribution, e.g. uniform:1:5 or shifted:0.5:2.5:0.5.
    #[arg(long)]
    law: Option<EpsilonLaw>,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    /// Budgets for debiased_weighted data.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Ridge penalty; defaults to c / (L * B).
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    lambda_c: f64,
    #[arg(long)]
    fixed_step: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    estimate: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Top-K size; defaults to floor(m / 2).
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// 1 to 5.
    #[arg(long)]
    scenario: Scenario,
}

#[derive(Args, Debug)]
struct RealDataArgs {
    /// Normalized `user_id,item_i,item_j,choice` CSV.
    #[arg(long, default_value = "data/car_preferences.csv")]
    data: PathBuf,
}

#[derive(Args, Debug)]
struct SelectModelArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "btl,tm")]
    candidates: Vec<ComparisonModel>,
    #[arg(long, default_value_t = 1.0)]
    lambda_c: f64,
}

#[derive(Args, Debug)]
struct BudgetArgs {
    /// Comma separated budgets.
    #[arg(long, value_delimiter = ',', required_unless_present = "profile")]
    epsilon: Vec<f64>,
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long)]
    alpha: f64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    let model = cli.model.unwrap_or(ComparisonModel::Btl);
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Generate(a) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let theta = match a.delta {
                Some(d) => PreferenceVector::evenly_spaced(a.items, d),
                None => PreferenceVector::sample_uniform(a.items, &mut rng),
            };
            let raw = dataset::generate(&theta, &model, a.users, a.p, &mut rng)?;
            fs::create_dir_all(&cli.out)?;
            let data_path = cli.out.join("dataset.csv");
            let theta_path = cli.out.join("theta.csv");
            raw.write_csv(&data_path)?;
            theta.write_csv(&theta_path, "theta")?;
            writeln!(out, "records={}", raw.len())?;
            writeln!(out, "dataset={}", data_path.display())?;
            writeln!(out, "theta={}", theta_path.display())?;
        }
        Command::Privatize(a) => {
            let raw = PairwiseDataset::load_csv(&a.data)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let profile = match (a.epsilon, a.profile, a.law) {
                (Some(eps), _, _) => PrivacyProfile::uniform(raw.users(), eps)?,
                (None, Some(path), _) => PrivacyProfile::read_csv(path)?,
                (None, None, Some(law)) => {
                    PrivacyProfile::new(law.sample(raw.items(), raw.users(), &mut rng))?
                }
                (None, None, None) => {
                    return Err(Error::Validation("privatize needs --epsilon, --profile or --law".into()))
                }
            };
            let private = dataset::privatize(&raw, &profile, a.mechanism, &mut rng)?;
            fs::create_dir_all(&cli.out)?;
            let data_path = cli.out.join("privatized.csv");
            let profile_path = cli.out.join("profile.csv");
            private.write_csv(&data_path)?;
            profile.write_csv(&profile_path)?;
            writeln!(out, "kind={}", private.kind())?;
            writeln!(out, "B={}", profile.b())?;
            writeln!(out, "dataset={}", data_path.display())?;
            writeln!(out, "profile={}", profile_path.display())?;
        }
        Command::Fit(a) => {
            let data = load_with_profile(&a.data, a.profile.as_deref())?;
            let lambda = match a.lambda {
                Some(l) => l,
                None => default_lambda(&profile_or_plain(&data)?, a.lambda_c)?,
            };
            let mut config = EstimatorConfig { lambda, seed, ..Default::default() };
            if let Some(step) = a.fixed_step {
                config.step_size = estimator::StepSize::Fixed(step);
            }
            if let Some(n) = a.max_iters {
                config.max_iters = n;
            }
            let est = estimator::fit(&data, &model, &config)?;
            info!("{} lambda={lambda:.6e}", est.log_line(&model));
            fs::create_dir_all(&cli.out)?;
            let path = cli.out.join("estimate.csv");
            est.theta_hat.write_csv(&path, "theta_hat")?;
            writeln!(out, "estimate={}", path.display())?;
        }
        Command::Evaluate(a) => {
            let est = PreferenceVector::read_csv(&a.estimate)?;
            let truth = PreferenceVector::read_csv(&a.truth)?;
            if est.len() != truth.len() {
                return Err(Error::Validation(format!(
                    "estimate has {} items, truth has {}",
                    est.len(),
                    truth.len()
                )));
            }
            let k = a.k.unwrap_or(truth.len() / 2);
            for (metric, v) in experiments::parameter_errors(&est, &truth)?.0 {
                let v = if metric == experiments::Metric::TopK { topk_hamming(&est, &truth, k)? } else { v };
                writeln!(out, "{metric}={v}")?;
            }
            writeln!(out, "k={k}")?;
        }
        Command::Simulate(a) => {
            let mut spec = ScenarioSpec::for_scenario(a.scenario);
            if let Some(path) = &cli.config {
                spec.apply_config(&fs::read_to_string(path)?)?;
            }
            if let Some(n) = cli.replicates {
                spec.replicates = n;
            }
            if let Some(s) = cli.seed {
                spec.base_seed = s;
            }
            if let Some(m) = cli.model {
                spec.models = vec![m];
            }
            let report = experiments::run_scenario(&spec)?;
            for path in report.write_all(&cli.out)? {
                writeln!(out, "wrote={}", path.display())?;
            }
            for f in &report.failures {
                if f.flagged() {
                    log::warn!("cell {} method {} failed in {} of {} replicates", f.cell, f.method, f.failed, f.total);
                }
            }
        }
        Command::RealData(a) => {
            let report = experiments::real_data_pipeline(&a.data, cli.replicates.unwrap_or(100), seed)?;
            report.write_all(&cli.out)?;
            report.write_report(&mut out)?;
        }
        Command::SelectModel(a) => {
            let data = load_with_profile(&a.data, a.profile.as_deref())?;
            let lambda = default_lambda(&profile_or_plain(&data)?, a.lambda_c)?;
            let config = EstimatorConfig { seed, ..Default::default() };
            let sel = select_model(&data, &a.candidates, lambda, &config)?;
            writeln!(out, "chosen={}", sel.chosen)?;
            for (m, score) in &sel.scores {
                writeln!(out, "nll.{m}={score}")?;
            }
        }
        Command::Budget(a) => {
            let eps = match &a.profile {
                Some(path) => PrivacyProfile::read_csv(path)?.epsilons().to_vec(),
                None => a.epsilon.clone(),
            };
            let (g, ok) = budget_check(&eps, a.alpha)?;
            writeln!(out, "users={}", eps.len())?;
            writeln!(out, "G={g}")?;
            writeln!(out, "B={}", g / eps.len() as f64)?;
            writeln!(out, "alpha={}", a.alpha)?;
            writeln!(out, "sufficient={ok}")?;
        }
    }
    Ok(())
}

fn load_with_profile(path: &Path, profile: Option<&Path>) -> Result<PairwiseDataset> {
    let data = PairwiseDataset::load_csv(path)?;
    match profile {
        Some(p) => data.with_profile(PrivacyProfile::read_csv(p)?),
        None if data.kind() == ValueKind::DebiasedWeighted => {
            Err(Error::Validation("debiased_weighted data needs --profile".into()))
        }
        None => Ok(data),
    }
}

/// The attached profile, or an unprivatized one for raw data.
fn profile_or_plain(data: &PairwiseDataset) -> Result<PrivacyProfile> {
    match data.profile() {
        Some(p) => Ok(p.clone()),
        None => PrivacyProfile::uniform(data.users(), privrank::NO_PRIVACY),
    }
}
