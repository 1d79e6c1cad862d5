//! Survival super learner: candidate time-to-event learners stacked on the
//! logit scale of horizon risk, censoring-aware losses and validation metrics,
//! and a synthetic two-era cohort generator for drift experiments.

pub mod censoring;
pub mod dataset;
pub mod error;
pub mod learners;
pub mod losses;
pub mod metrics;
pub mod numeric;
pub mod rng;
pub mod superlearner;

pub use error::{Error, Result};
