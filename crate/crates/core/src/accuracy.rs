//! A priori worst-case error bounds and their inverses.
//!
//! Every bound has the form `coefficient / epsilon`, where the coefficient
//! depends only on the statistic kind, the metadata, the row count and the
//! confidence level. Nothing here reads data.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mechanisms::{
    MechanismError, VariableKind, VariableMetadata, DEFAULT_CDF_GRID, DEFAULT_QUANTILE_GRID,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AccuracyError {
    #[error("epsilon must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("error target must be positive and finite, got {0}")]
    InvalidTarget(f64),
    #[error("alpha must lie in (0, 0.5], got {0}")]
    InvalidAlpha(f64),
    #[error("quantile fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error("row count must be at least 1")]
    EmptyData,
    #[error(transparent)]
    Metadata(#[from] MechanismError),
}

/// Which statistic is released.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StatisticKind {
    Mean,
    Histogram,
    Quantile { p: f64 },
    Cdf,
}

impl StatisticKind {
    pub fn name(&self) -> &'static str {
        match self {
            StatisticKind::Mean => "mean",
            StatisticKind::Histogram => "histogram",
            StatisticKind::Quantile { .. } => "quantile",
            StatisticKind::Cdf => "cdf",
        }
    }

    /// Whether this statistic can be computed on a variable of `kind`.
    pub fn supports(&self, kind: VariableKind) -> bool {
        match self {
            StatisticKind::Histogram => true,
            _ => kind == VariableKind::Numerical,
        }
    }

    pub fn units(&self) -> ErrorUnits {
        match self {
            StatisticKind::Mean => ErrorUnits::Statistic,
            StatisticKind::Histogram => ErrorUnits::Count,
            StatisticKind::Quantile { .. } => ErrorUnits::QuantileFraction,
            StatisticKind::Cdf => ErrorUnits::CdfFraction,
        }
    }
}

impl std::fmt::Display for StatisticKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StatisticKind::Quantile { p } => write!(f, "quantile({p})"),
            other => f.write_str(other.name()),
        }
    }
}

/// Confidence level `1 - alpha` at which error bounds hold.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ConfidenceLevel(f64);

impl ConfidenceLevel {
    pub const DEFAULT_ALPHA: f64 = 0.05;

    pub fn new(alpha: f64) -> Result<Self, AccuracyError> {
        if alpha > 0.0 && alpha <= 0.5 {
            Ok(Self(alpha))
        } else {
            Err(AccuracyError::InvalidAlpha(alpha))
        }
    }

    /// From a percentage such as `95` or `98`.
    pub fn from_percent(percent: f64) -> Result<Self, AccuracyError> {
        Self::new(1.0 - percent / 100.0)
    }

    pub fn alpha(self) -> f64 {
        self.0
    }
}

impl Default for ConfidenceLevel {
    fn default() -> Self {
        Self(Self::DEFAULT_ALPHA)
    }
}

impl TryFrom<f64> for ConfidenceLevel {
    type Error = AccuracyError;

    fn try_from(alpha: f64) -> Result<Self, Self::Error> {
        Self::new(alpha)
    }
}

impl From<ConfidenceLevel> for f64 {
    fn from(c: ConfidenceLevel) -> f64 {
        c.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorUnits {
    /// Same units as the variable (mean).
    Statistic,
    /// People per bin (histogram).
    Count,
    /// Rank error as a fraction of n (quantile).
    QuantileFraction,
    /// Absolute error of a CDF value.
    CdfFraction,
}

/// Worst-case error that holds with probability at least `1 - alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimate {
    pub value: f64,
    pub units: ErrorUnits,
    pub alpha: f64,
}

fn check_epsilon(epsilon: f64) -> Result<(), AccuracyError> {
    if epsilon.is_finite() && epsilon > 0.0 {
        Ok(())
    } else {
        Err(AccuracyError::InvalidEpsilon(epsilon))
    }
}

/// The constant `c` such that the bound equals `c / epsilon`.
///
/// * mean: `(U - L) ln(1/alpha) / n`
/// * histogram: `2 ln(1/alpha)` per bin
/// * quantile: `2 ln(G/alpha) / n`
/// * CDF: `2 G ln(G/alpha) / n` per grid point (union bound over G bins)
pub fn error_coefficient(
    kind: StatisticKind,
    meta: &VariableMetadata,
    n: usize,
    alpha: ConfidenceLevel,
) -> Result<f64, AccuracyError> {
    if n == 0 {
        return Err(AccuracyError::EmptyData);
    }
    let n = n as f64;
    let a = alpha.alpha();
    Ok(match kind {
        StatisticKind::Mean => meta.range()? * (1.0 / a).ln() / n,
        StatisticKind::Histogram => 2.0 * (1.0 / a).ln(),
        StatisticKind::Quantile { p } => {
            if !(p > 0.0 && p < 1.0) {
                return Err(AccuracyError::InvalidFraction(p));
            }
            meta.bounds()?;
            let g = meta.grid(DEFAULT_QUANTILE_GRID)? as f64;
            2.0 * (g / a).ln() / n
        }
        StatisticKind::Cdf => {
            meta.bounds()?;
            let g = meta.grid(DEFAULT_CDF_GRID)? as f64;
            2.0 * g * (g / a).ln() / n
        }
    })
}

pub fn error_bound(
    kind: StatisticKind,
    meta: &VariableMetadata,
    n: usize,
    epsilon: f64,
    alpha: ConfidenceLevel,
) -> Result<ErrorEstimate, AccuracyError> {
    check_epsilon(epsilon)?;
    let c = error_coefficient(kind, meta, n, alpha)?;
    Ok(ErrorEstimate {
        value: c / epsilon,
        units: kind.units(),
        alpha: alpha.alpha(),
    })
}

/// Smallest epsilon whose error bound is `target`.
pub fn epsilon_for_error(
    kind: StatisticKind,
    meta: &VariableMetadata,
    n: usize,
    target: f64,
    alpha: ConfidenceLevel,
) -> Result<f64, AccuracyError> {
    if !(target.is_finite() && target > 0.0) {
        return Err(AccuracyError::InvalidTarget(target));
    }
    Ok(error_coefficient(kind, meta, n, alpha)? / target)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn age() -> VariableMetadata {
        VariableMetadata::numerical(0.0, 150.0)
    }

    fn a05() -> ConfidenceLevel {
        ConfidenceLevel::new(0.05).unwrap()
    }

    #[test]
    fn mean_bound_example() {
        let e = error_bound(StatisticKind::Mean, &age(), 1000, 0.1, a05()).unwrap();
        assert!((e.value - 150.0 * 20f64.ln() / 100.0).abs() < 1e-12);
        assert!((e.value - 4.4936).abs() < 1e-4);
        assert_eq!(e.units, ErrorUnits::Statistic);
    }

    #[test]
    fn histogram_bound_example() {
        let meta = VariableMetadata::categorical(["a", "b"]);
        let e = error_bound(StatisticKind::Histogram, &meta, 10, 0.5, a05()).unwrap();
        assert!((e.value - 4.0 * 20f64.ln()).abs() < 1e-12);
        assert!((e.value - 11.983).abs() < 1e-3);
    }

    #[test]
    fn doubling_epsilon_halves_bound() {
        for kind in [StatisticKind::Mean, StatisticKind::Histogram] {
            let a = error_bound(kind, &age(), 1000, 0.2, a05()).unwrap().value;
            let b = error_bound(kind, &age(), 1000, 0.4, a05()).unwrap().value;
            assert_eq!(a, 2.0 * b);
        }
    }

    #[test]
    fn inverse_examples() {
        let eps = epsilon_for_error(StatisticKind::Mean, &age(), 1000, 1.0, a05()).unwrap();
        assert!((eps - 0.44936).abs() < 1e-5);
        let meta = VariableMetadata::categorical(["a"]);
        let eps = epsilon_for_error(StatisticKind::Histogram, &meta, 1000, 5.0, a05()).unwrap();
        assert!((eps - 2.0 * 20f64.ln() / 5.0).abs() < 1e-12);
        assert!((eps - 1.19829).abs() < 1e-5);

        let e = error_bound(StatisticKind::Mean, &age(), 1000, 0.3, a05()).unwrap();
        let back = epsilon_for_error(StatisticKind::Mean, &age(), 1000, e.value, a05()).unwrap();
        assert!((back - 0.3).abs() < 1e-15);
    }

    #[test]
    fn quantile_and_cdf_bounds() {
        let q = error_bound(StatisticKind::Quantile { p: 0.5 }, &age(), 1000, 0.1, a05()).unwrap();
        assert!((q.value - 2.0 * (100.0f64 / 0.05).ln() / 100.0).abs() < 1e-12);
        let c = error_bound(StatisticKind::Cdf, &age(), 1000, 0.1, a05()).unwrap();
        assert!((c.value - 40.0 * (20.0f64 / 0.05).ln() / 100.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert_eq!(
            error_bound(StatisticKind::Mean, &age(), 10, 0.0, a05()),
            Err(AccuracyError::InvalidEpsilon(0.0))
        );
        assert_eq!(
            epsilon_for_error(StatisticKind::Mean, &age(), 10, -1.0, a05()),
            Err(AccuracyError::InvalidTarget(-1.0))
        );
        assert!(ConfidenceLevel::new(0.0).is_err());
        assert!(ConfidenceLevel::new(0.51).is_err());
        assert!(ConfidenceLevel::new(0.5).is_ok());
        assert_eq!(
            error_bound(StatisticKind::Mean, &age(), 0, 1.0, a05()),
            Err(AccuracyError::EmptyData)
        );
    }

    #[test]
    fn percent_conversion() {
        let c = ConfidenceLevel::from_percent(98.0).unwrap();
        assert!((c.alpha() - 0.02).abs() < 1e-12);
    }
}
