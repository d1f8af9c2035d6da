//! Scenario runner, summary statistics and the real-data pipeline.

mod real_data;
mod run;
mod spec;
mod stats;

pub use real_data::{
    car_from_reader, load_car_csv, real_data_from_dataset, real_data_pipeline, MethodSummary, RealDataReport,
    TestRow, CAR_HEADER, METHODS,
};
pub use run::{
    methods_for, parameter_errors, ranking_errors, run_scenario, CellFailures, CellSummary, Errors, Method,
    MethodOutcome, Metric, RankReport, ReplicateResult, TrendFit, FAILURE_FLAG_RATE,
};
pub use spec::{replicate_seed, splitmix64, Cell, EpsScheme, EpsilonLaw, Scenario, ScenarioSpec, Size};
pub use stats::{linear_fit, mean, paired_t_test, sample_sd, LinearFit, PairedTTest};
