//! Batched active search for rare hits over a finite candidate pool.

pub mod acquisition;
pub mod campaign;
pub mod complexity;
pub mod domain;
pub mod error;
pub mod metrics;
pub mod oracle;
pub mod rng;
pub mod stats;
pub mod surrogate;
pub mod theory;

pub use acquisition::{AcquisitionSpec, Strategy, ThompsonMode};
pub use campaign::{run_campaign, run_sweep, CampaignConfig, CampaignResult, SweepConfig, SweepResult};
pub use domain::{hit_set, resolve_threshold, CampaignState, Candidate, CandidatePool, Observation, Threshold};
pub use error::{Error, Result};
pub use oracle::{build_pool, Family, Oracle, OracleSpec};
pub use surrogate::{fit, fit_hyperparameters, FittedSurrogate, KernelSpec, PosteriorSummary};
