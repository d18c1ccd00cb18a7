//! A desk-scale laboratory for preference optimization under f-divergence
//! constraints, built on exact finite tabular policies.
//!
//! Everything checkable at small scale is checked: the closed-form
//! constrained-optimal policy against a brute-force maximizer, the reward
//! reparameterization round trip, the preference-loss gradient against
//! finite differences, the divergence estimator against exact sums, and
//! the calibration bounds against exact calibration errors. See
//! [`verify`] for the full suite.

pub mod config;
pub mod divergence;
pub mod error;
pub mod fdpo;
pub mod kkt;
pub mod metrics;
pub mod par;
pub mod policy;
pub mod ppo;
pub mod preference;
pub mod rng;
pub mod sweep;
mod tablefmt;
pub mod verify;

pub use divergence::{DivergenceKind, DivergenceSpec, FiniteDistribution};
pub use error::{Error, Result};
pub use policy::{TabularPolicy, TaskSpace};
pub use preference::{PreferenceDataset, PreferenceTriple, RewardTable};
