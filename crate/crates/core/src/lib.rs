//! Bandit pay-per-click mechanisms: simulation, truthful payments and
//! structural verification.

pub mod cli;
pub mod error;
pub mod expectation;
pub mod experiments;
pub mod instances;
pub mod mechanisms;
pub mod regret;
pub mod rng;
pub mod rule;
pub mod scalar;
pub mod stats;
pub mod types;
pub mod verify;

pub use error::{Error, Result};
pub use rule::{run_allocation, run_allocation_seeded, AllocationRule, ConstantRule, ScheduleRule, ThresholdRule};
pub use scalar::{Rational, Scalar};
pub use types::{
    click_allocation, BidProfile, ClickAllocation, ClickSource, History, MechanismOutcome, Realization, Record,
    StochasticInstance,
};
