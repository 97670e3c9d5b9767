//! Group individual differential privacy and bootstrap differential privacy
//! mechanisms, together with the attacks that undo them.

pub mod attacks;
pub mod data;
pub mod detectors;
pub mod error;
pub mod harness;
pub mod ledger;
pub mod mechanisms;

pub use data::{count_matching, threshold_eval, AttributeKind, AttributeSpec, Condition, Dataset, RangePredicate, Schema, ThresholdQuery};
pub use error::{Error, Result};
pub use ledger::PrivacyLedger;
