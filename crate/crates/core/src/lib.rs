//! Locally differentially private rank aggregation from pairwise comparisons.
//!
//! Users privatize their comparisons with randomized response under their own
//! budgets; the released bits are debiased and reweighted per user, and item
//! scores of a linear stochastic transitivity model are fitted by regularized
//! weighted maximum likelihood.

pub mod baselines;
pub mod dataset;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod extensions;
pub mod metrics;
pub mod models;
pub mod privacy;

pub use dataset::{Comparison, Mechanism, PairwiseDataset, PreferenceVector, ValueKind};
pub use error::{Error, Result};
pub use estimator::{Estimate, EstimatorConfig, StepSize};
pub use models::ComparisonModel;
pub use privacy::{PrivacyProfile, NO_PRIVACY};
