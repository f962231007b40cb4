//! Simulation designs, true parameter values and the replication study.

mod dgp;
mod rng;
mod study;
mod truth;

pub use dgp::{
    continuous_treatment_mean, draw_binary, draw_continuous, propensity_log_odds, true_alpha, true_density_ratio,
    true_mu, true_propensity, true_treatment_density, Dgp, TREATMENT_SD,
};
pub use rng::{derive_seed, rng_from_seed, SimRng};
pub use study::{
    reference_truth, representer_metrics, run_replication, run_study, summarize, ReplicationConfig, ReplicationRecord,
    ReportRow, StudyReport,
};
pub use truth::{simpson, true_psi, true_subgroup_probability, Truth, TruthMode};
