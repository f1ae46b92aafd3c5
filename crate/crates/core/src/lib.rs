//! Differential-privacy budgeting engine.
//!
//! A data owner states a global `(epsilon, delta)` budget, picks statistics
//! with data-independent metadata, and redistributes the budget by editing a
//! priori error bounds. The raw data are read once, at finalization.

pub mod accuracy;
pub mod budget;
pub mod data;
pub mod mechanisms;
pub mod session;

pub use accuracy::{ConfidenceLevel, ErrorEstimate, ErrorUnits, StatisticKind};
pub use budget::{
    AllocationState, ParamCode, ParamVerdict, PrivacyBudget, SamplingInfo, StatisticId,
};
pub use data::{DatasetHandle, VariableSchema};
pub use mechanisms::{RandomSource, Value, VariableKind, VariableMetadata};
pub use session::{NewStatistic, ParamsRequest, Release, Session, SessionError};
