//! Privacy-budget accounting.
//!
//! Budgets compose by summation. The owner states a global budget; when the
//! data are a secret uniform sample of a larger population, the budget the
//! mechanisms may spend (the internal budget) is amplified once, up front.
//! A reserve fraction of the internal budget is withheld for later analysts
//! and the rest is split across statistics.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack for floating-point comparisons on budget sums.
pub const BUDGET_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    pub const ZERO: PrivacyBudget = PrivacyBudget {
        epsilon: 0.0,
        delta: 0.0,
    };

    pub fn new(epsilon: f64, delta: f64) -> Self {
        Self { epsilon, delta }
    }
}

/// The dataset is a uniform random sample of `sample_size` rows from a
/// population of `population_size`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingInfo {
    pub sample_size: u64,
    pub population_size: u64,
}

impl SamplingInfo {
    pub fn new(sample_size: u64, population_size: u64) -> Result<Self, BudgetError> {
        if sample_size == 0 || population_size < sample_size {
            return Err(BudgetError::PopulationTooSmall {
                sample_size,
                population_size,
            });
        }
        Ok(Self {
            sample_size,
            population_size,
        })
    }

    pub fn ratio(&self) -> f64 {
        self.population_size as f64 / self.sample_size as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StatisticId(pub u64);

impl std::fmt::Display for StatisticId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BudgetError {
    #[error(
        "infeasible: statistic needs epsilon {requested} but only {available} is available after holds"
    )]
    Infeasible { requested: f64, available: f64 },
    #[error("held allocations ({held}) exceed the usable budget ({usable})")]
    HeldExceedsUsable { held: f64, usable: f64 },
    #[error("statistic {0} is held; release the hold before changing it")]
    HeldStatistic(StatisticId),
    #[error("unknown statistic {0}")]
    UnknownStatistic(StatisticId),
    #[error("every statistic is held; nothing can be redistributed")]
    NoUnheldStatistic,
    #[error("reserve fraction must lie in [0, 1), got {0}")]
    InvalidReserve(f64),
    #[error("population size {population_size} must be at least the sample size {sample_size} (and the sample nonempty)")]
    PopulationTooSmall {
        sample_size: u64,
        population_size: u64,
    },
    #[error("privacy parameters rejected: {0}")]
    Rejected(ParamVerdict),
    #[error("required epsilon must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
}

/// Basic composition: epsilons and deltas add.
pub fn compose<I>(budgets: I) -> PrivacyBudget
where
    I: IntoIterator<Item = PrivacyBudget>,
{
    budgets
        .into_iter()
        .fold(PrivacyBudget::ZERO, |acc, b| PrivacyBudget {
            epsilon: acc.epsilon + b.epsilon,
            delta: acc.delta + b.delta,
        })
}

/// Internal budget that, run on a secret sample, satisfies `global` for the
/// population: `epsilon = max(global, ln(1 + (m/n) global))` and
/// `delta = (m/n) global_delta` (kept below 1).
pub fn amplify_by_sampling(global: PrivacyBudget, info: SamplingInfo) -> PrivacyBudget {
    let ratio = info.ratio();
    let amplified = (ratio * global.epsilon).ln_1p();
    PrivacyBudget {
        epsilon: global.epsilon.max(amplified),
        delta: (ratio * global.delta).min(1f64.next_down()),
    }
}

pub fn usable_budget(internal: PrivacyBudget, reserve: f64) -> Result<PrivacyBudget, BudgetError> {
    check_reserve(reserve)?;
    Ok(PrivacyBudget {
        epsilon: internal.epsilon * (1.0 - reserve),
        delta: internal.delta * (1.0 - reserve),
    })
}

fn check_reserve(reserve: f64) -> Result<(), BudgetError> {
    if (0.0..1.0).contains(&reserve) {
        Ok(())
    } else {
        Err(BudgetError::InvalidReserve(reserve))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictStatus {
    Ok,
    Warn,
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ParamCode {
    EpsilonNotPositive,
    DeltaOutOfRange,
    SwapSuspected,
    AboveRecommendedEpsilon,
    AboveRecommendedDelta,
}

impl ParamCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamCode::EpsilonNotPositive => "EPSILON_NOT_POSITIVE",
            ParamCode::DeltaOutOfRange => "DELTA_OUT_OF_RANGE",
            ParamCode::SwapSuspected => "SWAP_SUSPECTED",
            ParamCode::AboveRecommendedEpsilon => "ABOVE_RECOMMENDED_EPSILON",
            ParamCode::AboveRecommendedDelta => "ABOVE_RECOMMENDED_DELTA",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            ParamCode::EpsilonNotPositive => "epsilon must be a positive, finite number",
            ParamCode::DeltaOutOfRange => "delta must lie in [0, 1)",
            ParamCode::SwapSuspected => {
                "epsilon is tiny and delta is large: were the two values swapped? \
                 Typical choices are epsilon in [0.05, 1] and delta in [1e-7, 1e-5]"
            }
            ParamCode::AboveRecommendedEpsilon => {
                "epsilon above 1 exceeds the highest recommended value"
            }
            ParamCode::AboveRecommendedDelta => {
                "delta above 1e-5 exceeds the highest recommended value"
            }
        }
    }
}

impl std::fmt::Display for ParamCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamVerdict {
    pub status: VerdictStatus,
    pub messages: Vec<ParamCode>,
}

impl ParamVerdict {
    pub fn is_ok(&self) -> bool {
        self.status == VerdictStatus::Ok
    }

    pub fn is_rejected(&self) -> bool {
        self.status == VerdictStatus::Reject
    }

    pub fn has(&self, code: ParamCode) -> bool {
        self.messages.contains(&code)
    }
}

impl std::fmt::Display for ParamVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let codes: Vec<&str> = self.messages.iter().map(|c| c.as_str()).collect();
        write!(f, "{:?} [{}]", self.status, codes.join(", "))
    }
}

pub fn validate_params(epsilon: f64, delta: f64) -> ParamVerdict {
    let mut rejects = Vec::new();
    if !(epsilon.is_finite() && epsilon > 0.0) {
        rejects.push(ParamCode::EpsilonNotPositive);
    }
    if !(0.0..1.0).contains(&delta) {
        rejects.push(ParamCode::DeltaOutOfRange);
    }
    if !rejects.is_empty() {
        return ParamVerdict {
            status: VerdictStatus::Reject,
            messages: rejects,
        };
    }

    let mut warnings = Vec::new();
    if epsilon < 1e-4 && delta > 1e-2 {
        warnings.push(ParamCode::SwapSuspected);
    }
    if epsilon > 1.0 {
        warnings.push(ParamCode::AboveRecommendedEpsilon);
    }
    if delta > 1e-5 {
        warnings.push(ParamCode::AboveRecommendedDelta);
    }
    ParamVerdict {
        status: if warnings.is_empty() {
            VerdictStatus::Ok
        } else {
            VerdictStatus::Warn
        },
        messages: warnings,
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum TierRefusal {
    #[error("tier 1 (public information) does not need differential privacy")]
    NotNecessary,
    #[error(
        "tier 5 (extremely sensitive information) is not recommended for release with this tool"
    )]
    NotRecommended,
    #[error("unknown sensitivity tier {0}; expected 1 to 5")]
    Unknown(u8),
}

/// Recommended parameters per data-sensitivity tier.
pub fn recommend_params(tier: u8) -> Result<PrivacyBudget, TierRefusal> {
    match tier {
        1 => Err(TierRefusal::NotNecessary),
        2 => Ok(PrivacyBudget::new(1.0, 1e-5)),
        3 => Ok(PrivacyBudget::new(0.25, 1e-6)),
        4 => Ok(PrivacyBudget::new(0.05, 1e-7)),
        5 => Err(TierRefusal::NotRecommended),
        other => Err(TierRefusal::Unknown(other)),
    }
}

/// Short description of the harm a tier guards against.
pub fn tier_description(tier: u8) -> Option<&'static str> {
    match tier {
        1 => Some("public information"),
        2 => Some("disclosure would not cause material harm, but the data are kept confidential"),
        3 => Some("disclosure could cause risk of material harm to individuals or the institution"),
        4 => Some("disclosure would likely cause serious harm to individuals or the institution"),
        5 => Some("disclosure would cause severe harm; not supported"),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BudgetWarning {
    /// A change to the global budget or reserve rescaled held statistics.
    HeldRescaled,
}

/// Per-statistic epsilon allocations, holds and the analyst reserve.
///
/// Invariant: `sum(allocations) + unspent == internal.epsilon * (1 - reserve)`
/// up to [`BUDGET_TOLERANCE`]. All mechanisms are pure-epsilon, so the delta
/// budget is never spent by statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationState {
    allocations: BTreeMap<StatisticId, f64>,
    holds: BTreeSet<StatisticId>,
    reserve_fraction: f64,
    internal: PrivacyBudget,
    unspent: f64,
}

impl AllocationState {
    pub fn new(internal: PrivacyBudget, reserve_fraction: f64) -> Result<Self, BudgetError> {
        let usable = usable_budget(internal, reserve_fraction)?;
        Ok(Self {
            allocations: BTreeMap::new(),
            holds: BTreeSet::new(),
            reserve_fraction,
            internal,
            unspent: usable.epsilon,
        })
    }

    pub fn internal(&self) -> PrivacyBudget {
        self.internal
    }

    pub fn reserve_fraction(&self) -> f64 {
        self.reserve_fraction
    }

    pub fn usable(&self) -> PrivacyBudget {
        PrivacyBudget {
            epsilon: self.internal.epsilon * (1.0 - self.reserve_fraction),
            delta: self.internal.delta * (1.0 - self.reserve_fraction),
        }
    }

    pub fn unspent(&self) -> f64 {
        self.unspent
    }

    pub fn epsilon(&self, id: StatisticId) -> Option<f64> {
        self.allocations.get(&id).copied()
    }

    pub fn allocations(&self) -> impl Iterator<Item = (StatisticId, f64)> + '_ {
        self.allocations.iter().map(|(id, e)| (*id, *e))
    }

    pub fn is_held(&self, id: StatisticId) -> bool {
        self.holds.contains(&id)
    }

    pub fn holds(&self) -> impl Iterator<Item = StatisticId> + '_ {
        self.holds.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.allocations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.allocations.is_empty()
    }

    /// Budget spent if every allocation were released now.
    pub fn spent(&self) -> PrivacyBudget {
        compose(
            self.allocations
                .values()
                .map(|&e| PrivacyBudget::new(e, 0.0)),
        )
    }

    fn held_total(&self) -> f64 {
        self.holds.iter().map(|id| self.allocations[id]).sum()
    }

    fn unheld(&self) -> Vec<StatisticId> {
        self.allocations
            .keys()
            .filter(|id| !self.holds.contains(id))
            .copied()
            .collect()
    }

    /// Budget left for unheld statistics.
    pub fn available(&self) -> f64 {
        self.usable().epsilon - self.held_total()
    }

    /// Checks the accounting invariants; used by tests and on load.
    pub fn check(&self) -> Result<(), String> {
        let usable = self.usable().epsilon;
        let total: f64 = self.allocations.values().sum::<f64>() + self.unspent;
        if (total - usable).abs() > BUDGET_TOLERANCE * usable.max(1.0) {
            return Err(format!(
                "allocations plus unspent ({total}) differ from usable epsilon ({usable})"
            ));
        }
        if let Some((id, e)) = self.allocations.iter().find(|(_, e)| !(**e >= 0.0)) {
            return Err(format!("statistic {id} has invalid allocation {e}"));
        }
        if self.unspent < 0.0 {
            return Err(format!("negative unspent budget {}", self.unspent));
        }
        if let Some(id) = self
            .holds
            .iter()
            .find(|id| !self.allocations.contains_key(id))
        {
            return Err(format!("hold on unallocated statistic {id}"));
        }
        check_reserve(self.reserve_fraction).map_err(|e| e.to_string())
    }

    /// Adds a statistic and re-splits the unheld budget evenly.
    pub fn add(&self, id: StatisticId) -> Result<Self, BudgetError> {
        let mut next = self.clone();
        next.allocations.insert(id, 0.0);
        next.default_split()
    }

    /// Removes a statistic (and its hold) and re-splits what is left.
    pub fn remove(&self, id: StatisticId) -> Result<Self, BudgetError> {
        let mut next = self.clone();
        if next.allocations.remove(&id).is_none() {
            return Err(BudgetError::UnknownStatistic(id));
        }
        next.holds.remove(&id);
        if next.unheld().is_empty() {
            next.unspent = next.available().max(0.0);
            Ok(next)
        } else {
            next.default_split()
        }
    }

    /// Splits the budget left after holds evenly over unheld statistics.
    pub fn default_split(&self) -> Result<Self, BudgetError> {
        let unheld = self.unheld();
        if unheld.is_empty() {
            return Err(BudgetError::NoUnheldStatistic);
        }
        let remainder = self.available();
        if remainder < -BUDGET_TOLERANCE {
            return Err(BudgetError::HeldExceedsUsable {
                held: self.held_total(),
                usable: self.usable().epsilon,
            });
        }
        let share = remainder.max(0.0) / unheld.len() as f64;
        let mut next = self.clone();
        for id in unheld {
            next.allocations.insert(id, share);
        }
        next.unspent = 0.0;
        Ok(next)
    }

    /// Gives statistic `id` exactly `epsilon` and rescales the other unheld
    /// statistics proportionally to fill the rest.
    ///
    /// When `id` is the only unheld statistic, any surplus is kept as
    /// unspent budget rather than redistributed.
    pub fn set_target_epsilon(&self, id: StatisticId, epsilon: f64) -> Result<Self, BudgetError> {
        let current = self.epsilon(id).ok_or(BudgetError::UnknownStatistic(id))?;
        if self.is_held(id) {
            return Err(BudgetError::HeldStatistic(id));
        }
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(BudgetError::InvalidEpsilon(epsilon));
        }
        if (epsilon - current).abs() <= BUDGET_TOLERANCE * current.max(f64::MIN_POSITIVE) {
            return Ok(self.clone());
        }

        let available = self.available();
        let remainder = available - epsilon;
        if remainder < -BUDGET_TOLERANCE {
            return Err(BudgetError::Infeasible {
                requested: epsilon,
                available: available.max(0.0),
            });
        }
        let remainder = remainder.max(0.0);
        let others: Vec<StatisticId> = self.unheld().into_iter().filter(|o| *o != id).collect();

        let mut next = self.clone();
        next.allocations.insert(id, epsilon.min(available.max(0.0)));
        if others.is_empty() {
            next.unspent = remainder;
            return Ok(next);
        }
        let others_total: f64 = others.iter().map(|o| self.allocations[o]).sum();
        for o in &others {
            let share = if others_total > 0.0 {
                self.allocations[o] / others_total * remainder
            } else {
                remainder / others.len() as f64
            };
            next.allocations.insert(*o, share);
        }
        next.unspent = 0.0;
        Ok(next)
    }

    pub fn toggle_hold(&self, id: StatisticId, held: bool) -> Result<Self, BudgetError> {
        if !self.allocations.contains_key(&id) {
            return Err(BudgetError::UnknownStatistic(id));
        }
        let mut next = self.clone();
        if held {
            next.holds.insert(id);
        } else {
            next.holds.remove(&id);
        }
        Ok(next)
    }

    /// Moves to a new internal budget and reserve, scaling every allocation
    /// (held ones included) and the unspent remainder by the ratio of the
    /// new to the old usable epsilon.
    pub fn rescale(
        &self,
        internal: PrivacyBudget,
        reserve_fraction: f64,
    ) -> Result<(Self, Vec<BudgetWarning>), BudgetError> {
        let new_usable = usable_budget(internal, reserve_fraction)?.epsilon;
        let old_usable = self.usable().epsilon;
        let ratio = if old_usable > 0.0 {
            new_usable / old_usable
        } else {
            0.0
        };
        let mut next = self.clone();
        next.internal = internal;
        next.reserve_fraction = reserve_fraction;
        if ratio != 1.0 {
            for e in next.allocations.values_mut() {
                *e *= ratio;
            }
            next.unspent *= ratio;
        }
        if old_usable <= 0.0 {
            next.unspent = new_usable;
        }
        let warnings = if ratio != 1.0 && !self.holds.is_empty() {
            vec![BudgetWarning::HeldRescaled]
        } else {
            Vec::new()
        };
        Ok((next, warnings))
    }

    pub fn set_reserve(
        &self,
        reserve_fraction: f64,
    ) -> Result<(Self, Vec<BudgetWarning>), BudgetError> {
        self.rescale(self.internal, reserve_fraction)
    }

    /// Applies a new global budget (amplified once if `sampling` is given).
    pub fn update_global(
        &self,
        global: PrivacyBudget,
        sampling: Option<SamplingInfo>,
    ) -> Result<(Self, Vec<BudgetWarning>), BudgetError> {
        let verdict = validate_params(global.epsilon, global.delta);
        if verdict.is_rejected() {
            return Err(BudgetError::Rejected(verdict));
        }
        let internal = match sampling {
            Some(info) => amplify_by_sampling(global, info),
            None => global,
        };
        self.rescale(internal, self.reserve_fraction)
    }
}
