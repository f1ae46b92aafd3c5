//! The stateful budgeter: one dataset, one global budget, a list of
//! statistics and their allocations, and finally the releases.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::accuracy::{
    epsilon_for_error, error_bound, AccuracyError, ConfidenceLevel, ErrorEstimate, StatisticKind,
};
use crate::budget::{
    amplify_by_sampling, validate_params, AllocationState, BudgetError, BudgetWarning,
    ParamVerdict, PrivacyBudget, SamplingInfo, StatisticId, VerdictStatus, BUDGET_TOLERANCE,
};
use crate::data::{
    validate_metadata, DataError, DatasetHandle, FirewallState, MetadataIssue, VariableSchema,
};
use crate::mechanisms::{
    self, MechanismError, RandomSource, Value, VariableKind, VariableMetadata,
};

pub const ENGINE_VERSION: &str = concat!("budgeter-core/", env!("CARGO_PKG_VERSION"));
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("privacy parameters rejected: {0}")]
    ParamsRejected(ParamVerdict),
    #[error("privacy parameters need acknowledgement: {0}")]
    AcknowledgementRequired(ParamVerdict),
    #[error("session is finalized; only read operations are allowed")]
    Finalized,
    #[error("dataset has no rows; statistics cannot be added")]
    EmptyDataset,
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("no metadata supplied for `{0}` and none in the codebook")]
    MissingMetadata(String),
    #[error("invalid metadata for `{variable}`: {}", issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidMetadata {
        variable: String,
        issues: Vec<MetadataIssue>,
    },
    #[error("{statistic} cannot be computed on {kind} variable `{variable}`")]
    IncompatibleKind {
        statistic: StatisticKind,
        kind: VariableKind,
        variable: String,
    },
    #[error("unknown statistic {0}")]
    UnknownStatistic(StatisticId),
    #[error("statistic {0} is held; release the hold before setting its error")]
    HeldStatistic(StatisticId),
    #[error(
        "infeasible target for statistic {statistic}: needs epsilon {requested_epsilon} but only \
         {available_epsilon} is available{}",
        best_error.map(|e| format!("; the best achievable error is {} (spending all of it)", e.value)).unwrap_or_default()
    )]
    InfeasibleTarget {
        statistic: StatisticId,
        requested_epsilon: f64,
        available_epsilon: f64,
        best_error: Option<ErrorEstimate>,
    },
    #[error("statistic {0} has no budget allocated; adjust targets or holds before finalizing")]
    ZeroAllocation(StatisticId),
    #[error("no statistics selected")]
    NoStatistics,
    #[error(
        "population size may not be increased once set (current {current}, requested {requested})"
    )]
    PopulationLocked { current: u64, requested: u64 },
    #[error(transparent)]
    Budget(BudgetError),
    #[error(transparent)]
    Accuracy(#[from] AccuracyError),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("invalid session document: {0}")]
    Schema(String),
}

impl From<BudgetError> for SessionError {
    fn from(err: BudgetError) -> Self {
        match err {
            BudgetError::Rejected(v) => SessionError::ParamsRejected(v),
            BudgetError::UnknownStatistic(id) => SessionError::UnknownStatistic(id),
            BudgetError::HeldStatistic(id) => SessionError::HeldStatistic(id),
            other => SessionError::Budget(other),
        }
    }
}

impl SessionError {
    /// Machine-readable code for API clients.
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::ParamsRejected(_) => "PARAMS_REJECTED",
            SessionError::AcknowledgementRequired(_) => "ACKNOWLEDGEMENT_REQUIRED",
            SessionError::Finalized => "SESSION_FINALIZED",
            SessionError::EmptyDataset => "EMPTY_DATASET",
            SessionError::UnknownVariable(_) => "UNKNOWN_VARIABLE",
            SessionError::MissingMetadata(_) => "MISSING_METADATA",
            SessionError::InvalidMetadata { .. } => "INVALID_METADATA",
            SessionError::IncompatibleKind { .. } => "INCOMPATIBLE_KIND",
            SessionError::UnknownStatistic(_) => "UNKNOWN_STATISTIC",
            SessionError::HeldStatistic(_) => "HELD_STATISTIC",
            SessionError::InfeasibleTarget { .. } => "INFEASIBLE_TARGET",
            SessionError::ZeroAllocation(_) => "INFEASIBLE_ALLOCATION",
            SessionError::NoStatistics => "NO_STATISTICS",
            SessionError::PopulationLocked { .. } => "POPULATION_LOCKED",
            SessionError::Budget(BudgetError::NoUnheldStatistic) => "NO_UNHELD_STATISTIC",
            SessionError::Budget(BudgetError::InvalidReserve(_)) => "INVALID_RESERVE",
            SessionError::Budget(BudgetError::PopulationTooSmall { .. }) => "POPULATION_TOO_SMALL",
            SessionError::Budget(_) => "INFEASIBLE_ALLOCATION",
            SessionError::Accuracy(_) => "INVALID_ARGUMENT",
            SessionError::Mechanism(_) => "MECHANISM_ERROR",
            SessionError::Data(DataError::DigestMismatch) => "DIGEST_MISMATCH",
            SessionError::Data(DataError::Parse { .. }) => "DATA_PARSE_ERROR",
            SessionError::Data(_) => "DATA_ERROR",
            SessionError::Schema(_) => "SCHEMA_VIOLATION",
        }
    }

    /// The parameter verdict carried by this error, if any.
    pub fn verdict(&self) -> Option<&ParamVerdict> {
        match self {
            SessionError::ParamsRejected(v) | SessionError::AcknowledgementRequired(v) => Some(v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Configuring,
    Finalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticSpec {
    pub id: StatisticId,
    pub statistic: StatisticKind,
    pub schema: VariableSchema,
}

impl StatisticSpec {
    pub fn variable(&self) -> &str {
        &self.schema.name
    }
}

/// A statistic the owner wants to add. Metadata may come from the codebook.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewStatistic {
    pub variable: String,
    pub statistic: StatisticKind,
    #[serde(default)]
    pub metadata: Option<VariableMetadata>,
}

/// Global privacy parameters as entered by the owner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamsRequest {
    pub epsilon: f64,
    pub delta: f64,
    /// Approximate population size for secrecy of the sample.
    #[serde(default)]
    pub population_size: Option<u64>,
    /// Proceed despite warning-level verdicts.
    #[serde(default)]
    pub acknowledge_warnings: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReleaseValue {
    Scalar(f64),
    Bins(Vec<BinCount>),
    Curve(Vec<CurvePoint>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinCount {
    pub label: String,
    pub count: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub fraction: f64,
}

/// A finalized, self-describing noisy statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Release {
    pub statistic_id: StatisticId,
    pub statistic: StatisticKind,
    pub variable: String,
    pub metadata: VariableMetadata,
    pub rows: usize,
    pub epsilon_spent: f64,
    pub alpha: f64,
    pub error_bound: ErrorEstimate,
    pub value: ReleaseValue,
    pub released_at: DateTime<Utc>,
    pub engine_version: String,
}

/// Everything released by one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleaseDocument {
    pub session_id: Uuid,
    pub engine_version: String,
    pub global_budget: PrivacyBudget,
    pub sampling: Option<SamplingInfo>,
    pub internal_budget: PrivacyBudget,
    pub reserve_fraction: f64,
    /// Budget spent by the releases (delta is always zero: every mechanism is pure-epsilon).
    pub spent: PrivacyBudget,
    /// Budget left for analysts: the reserve, unspent epsilon and all of delta.
    pub remaining_for_analysts: PrivacyBudget,
    pub releases: Vec<Release>,
}

/// One row of the error table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub id: StatisticId,
    pub variable: String,
    pub statistic: StatisticKind,
    pub epsilon: f64,
    pub held: bool,
    /// `None` when the statistic has no budget (error unbounded).
    pub error: Option<ErrorEstimate>,
}

/// Outcome of an operation that changed the usable budget.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChangeReport {
    pub verdict: Option<ParamVerdict>,
    pub warnings: Vec<BudgetWarning>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    format_version: u32,
    id: Uuid,
    dataset: DatasetHandle,
    global_budget: PrivacyBudget,
    sampling: Option<SamplingInfo>,
    allocation: AllocationState,
    confidence: ConfidenceLevel,
    statistics: BTreeMap<StatisticId, StatisticSpec>,
    next_statistic_id: u64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    codebook: BTreeMap<String, VariableMetadata>,
    phase: Phase,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    releases: Vec<Release>,
    created_at: DateTime<Utc>,
    updated_at: DateTime<Utc>,
}

fn screen_params(params: &ParamsRequest) -> Result<ParamVerdict, SessionError> {
    let verdict = validate_params(params.epsilon, params.delta);
    match verdict.status {
        VerdictStatus::Reject => Err(SessionError::ParamsRejected(verdict)),
        VerdictStatus::Warn if !params.acknowledge_warnings => {
            Err(SessionError::AcknowledgementRequired(verdict))
        }
        _ => Ok(verdict),
    }
}

impl Session {
    pub fn create(
        dataset: DatasetHandle,
        params: ParamsRequest,
    ) -> Result<(Self, ParamVerdict), SessionError> {
        let verdict = screen_params(&params)?;
        let global = PrivacyBudget::new(params.epsilon, params.delta);
        let sampling = params
            .population_size
            .map(|m| SamplingInfo::new(dataset.row_count() as u64, m))
            .transpose()?;
        let internal = sampling.map_or(global, |info| amplify_by_sampling(global, info));
        let now = Utc::now();
        let session = Self {
            format_version: FORMAT_VERSION,
            id: Uuid::new_v4(),
            dataset,
            global_budget: global,
            sampling,
            allocation: AllocationState::new(internal, 0.0)?,
            confidence: ConfidenceLevel::default(),
            statistics: BTreeMap::new(),
            next_statistic_id: 1,
            codebook: BTreeMap::new(),
            phase: Phase::Configuring,
            releases: Vec::new(),
            created_at: now,
            updated_at: now,
        };
        Ok((session, verdict))
    }

    pub fn id(&self) -> Uuid {
        self.id
    }

    pub fn dataset(&self) -> &DatasetHandle {
        &self.dataset
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn global_budget(&self) -> PrivacyBudget {
        self.global_budget
    }

    pub fn sampling(&self) -> Option<SamplingInfo> {
        self.sampling
    }

    pub fn allocation(&self) -> &AllocationState {
        &self.allocation
    }

    pub fn confidence(&self) -> ConfidenceLevel {
        self.confidence
    }

    pub fn statistics(&self) -> impl Iterator<Item = &StatisticSpec> {
        self.statistics.values()
    }

    pub fn statistic(&self, id: StatisticId) -> Option<&StatisticSpec> {
        self.statistics.get(&id)
    }

    pub fn codebook(&self) -> &BTreeMap<String, VariableMetadata> {
        &self.codebook
    }

    pub fn releases(&self) -> &[Release] {
        &self.releases
    }

    pub fn created_at(&self) -> DateTime<Utc> {
        self.created_at
    }

    pub fn updated_at(&self) -> DateTime<Utc> {
        self.updated_at
    }

    fn ensure_configuring(&self) -> Result<(), SessionError> {
        match self.phase {
            Phase::Configuring => Ok(()),
            Phase::Finalized => Err(SessionError::Finalized),
        }
    }

    fn touch(&mut self) {
        self.updated_at = Utc::now();
    }

    pub fn set_codebook(
        &mut self,
        codebook: BTreeMap<String, VariableMetadata>,
    ) -> Result<(), SessionError> {
        self.ensure_configuring()?;
        for (name, meta) in &codebook {
            validate_metadata(&VariableSchema::new(name.clone(), meta.clone())).map_err(
                |issues| SessionError::InvalidMetadata {
                    variable: name.clone(),
                    issues,
                },
            )?;
        }
        self.codebook = codebook;
        self.touch();
        Ok(())
    }

    /// Changes the global parameters (and optionally the population size).
    /// Every allocation, held or not, scales with the usable budget.
    pub fn edit_params(&mut self, params: ParamsRequest) -> Result<ChangeReport, SessionError> {
        self.ensure_configuring()?;
        let verdict = screen_params(&params)?;
        let sampling = match (params.population_size, self.sampling) {
            (None, current) => current,
            (Some(requested), Some(current)) if requested > current.population_size => {
                return Err(SessionError::PopulationLocked {
                    current: current.population_size,
                    requested,
                });
            }
            (Some(m), _) => Some(SamplingInfo::new(self.dataset.row_count() as u64, m)?),
        };
        let global = PrivacyBudget::new(params.epsilon, params.delta);
        let (allocation, warnings) = self.allocation.update_global(global, sampling)?;
        self.allocation = allocation;
        self.global_budget = global;
        self.sampling = sampling;
        self.touch();
        Ok(ChangeReport {
            verdict: Some(verdict),
            warnings,
        })
    }

    pub fn set_reserve(&mut self, fraction: f64) -> Result<ChangeReport, SessionError> {
        self.ensure_configuring()?;
        let (allocation, warnings) = self.allocation.set_reserve(fraction)?;
        self.allocation = allocation;
        self.touch();
        Ok(ChangeReport {
            verdict: None,
            warnings,
        })
    }

    /// Allocations are untouched; only displayed error bounds change.
    pub fn set_confidence(&mut self, alpha: f64) -> Result<(), SessionError> {
        self.ensure_configuring()?;
        self.confidence = ConfidenceLevel::new(alpha)?;
        self.touch();
        Ok(())
    }

    pub fn add_statistic(&mut self, new: NewStatistic) -> Result<StatisticId, SessionError> {
        self.ensure_configuring()?;
        if self.dataset.row_count() == 0 {
            return Err(SessionError::EmptyDataset);
        }
        if !self.dataset.has_variable(&new.variable) {
            return Err(SessionError::UnknownVariable(new.variable));
        }
        let metadata = match new.metadata {
            Some(m) => m,
            None => self
                .codebook
                .get(&new.variable)
                .cloned()
                .ok_or_else(|| SessionError::MissingMetadata(new.variable.clone()))?,
        };
        let schema = VariableSchema::new(new.variable, metadata);
        validate_metadata(&schema).map_err(|issues| SessionError::InvalidMetadata {
            variable: schema.name.clone(),
            issues,
        })?;
        if !new.statistic.supports(schema.kind()) {
            return Err(SessionError::IncompatibleKind {
                statistic: new.statistic,
                kind: schema.kind(),
                variable: schema.name,
            });
        }
        // Rejects malformed statistic parameters (e.g. quantile p) up front.
        crate::accuracy::error_coefficient(
            new.statistic,
            &schema.metadata,
            self.dataset.row_count(),
            self.confidence,
        )?;

        let id = StatisticId(self.next_statistic_id);
        let allocation = self.allocation.add(id)?;
        self.allocation = allocation;
        self.next_statistic_id += 1;
        self.statistics.insert(
            id,
            StatisticSpec {
                id,
                statistic: new.statistic,
                schema,
            },
        );
        self.touch();
        Ok(id)
    }

    pub fn delete_statistic(&mut self, id: StatisticId) -> Result<(), SessionError> {
        self.ensure_configuring()?;
        if !self.statistics.contains_key(&id) {
            return Err(SessionError::UnknownStatistic(id));
        }
        self.allocation = self.allocation.remove(id)?;
        self.statistics.remove(&id);
        self.touch();
        Ok(())
    }

    pub fn set_hold(&mut self, id: StatisticId, held: bool) -> Result<(), SessionError> {
        self.ensure_configuring()?;
        self.allocation = self.allocation.toggle_hold(id, held)?;
        self.touch();
        Ok(())
    }

    /// Spends exactly what statistic `id` needs to reach error `target` and
    /// rescales the other unheld statistics into the remainder.
    pub fn set_error_target(&mut self, id: StatisticId, target: f64) -> Result<(), SessionError> {
        self.ensure_configuring()?;
        let spec = self
            .statistics
            .get(&id)
            .ok_or(SessionError::UnknownStatistic(id))?;
        if self.allocation.is_held(id) {
            return Err(SessionError::HeldStatistic(id));
        }
        let needed = epsilon_for_error(
            spec.statistic,
            &spec.schema.metadata,
            self.dataset.row_count(),
            target,
            self.confidence,
        )?;
        match self.allocation.set_target_epsilon(id, needed) {
            Ok(next) => {
                self.allocation = next;
                self.touch();
                Ok(())
            }
            Err(BudgetError::Infeasible {
                requested,
                available,
            }) => Err(SessionError::InfeasibleTarget {
                statistic: id,
                requested_epsilon: requested,
                available_epsilon: available,
                best_error: self.bound_for(spec, available).ok(),
            }),
            Err(other) => Err(other.into()),
        }
    }

    fn bound_for(
        &self,
        spec: &StatisticSpec,
        epsilon: f64,
    ) -> Result<ErrorEstimate, AccuracyError> {
        error_bound(
            spec.statistic,
            &spec.schema.metadata,
            self.dataset.row_count(),
            epsilon,
            self.confidence,
        )
    }

    /// Error bounds for every statistic. Depends only on metadata, the row
    /// count, the allocations and alpha.
    pub fn error_table(&self) -> Vec<ErrorRow> {
        self.statistics
            .values()
            .map(|spec| {
                let epsilon = self.allocation.epsilon(spec.id).unwrap_or_default();
                ErrorRow {
                    id: spec.id,
                    variable: spec.variable().to_owned(),
                    statistic: spec.statistic,
                    epsilon,
                    held: self.allocation.is_held(spec.id),
                    error: self.bound_for(spec, epsilon).ok(),
                }
            })
            .collect()
    }

    /// Runs every mechanism on the raw data. All-or-nothing: on any failure
    /// no release is produced and the session stays sealed. Calling it again
    /// on a finalized session returns the stored releases.
    pub fn finalize(&mut self, rng: &mut RandomSource) -> Result<&[Release], SessionError> {
        if self.phase == Phase::Finalized {
            return Ok(&self.releases);
        }
        if self.statistics.is_empty() {
            return Err(SessionError::NoStatistics);
        }
        for spec in self.statistics.values() {
            match self.allocation.epsilon(spec.id) {
                Some(e) if e > 0.0 => {}
                _ => return Err(SessionError::ZeroAllocation(spec.id)),
            }
        }
        let spent = self.allocation.spent().epsilon;
        let usable = self.allocation.usable().epsilon;
        assert!(
            spent <= usable + BUDGET_TOLERANCE,
            "allocations {spent} exceed usable budget {usable}"
        );

        // Work on a copy so that a failed attempt leaves the session sealed.
        let mut dataset = self.dataset.clone();
        let columns = {
            let mut accessor = dataset.open_for_finalize()?;
            let mut columns = BTreeMap::new();
            for spec in self.statistics.values() {
                if !columns.contains_key(spec.variable()) {
                    columns.insert(spec.variable().to_owned(), accessor.column(&spec.schema)?);
                }
            }
            columns
        };

        let now = Utc::now();
        let n = self.dataset.row_count();
        let mut releases = Vec::with_capacity(self.statistics.len());
        for spec in self.statistics.values() {
            let epsilon = self.allocation.epsilon(spec.id).unwrap_or_default();
            let value = run_mechanism(spec, &columns[spec.variable()], epsilon, rng)?;
            releases.push(Release {
                statistic_id: spec.id,
                statistic: spec.statistic,
                variable: spec.variable().to_owned(),
                metadata: spec.schema.metadata.clone(),
                rows: n,
                epsilon_spent: epsilon,
                alpha: self.confidence.alpha(),
                error_bound: self.bound_for(spec, epsilon)?,
                value,
                released_at: now,
                engine_version: ENGINE_VERSION.to_owned(),
            });
        }

        self.dataset = dataset;
        self.releases = releases;
        self.phase = Phase::Finalized;
        self.updated_at = now;
        Ok(&self.releases)
    }

    pub fn release_document(&self) -> ReleaseDocument {
        let usable = self.allocation.usable();
        let internal = self.allocation.internal();
        let spent = self.allocation.spent();
        ReleaseDocument {
            session_id: self.id,
            engine_version: ENGINE_VERSION.to_owned(),
            global_budget: self.global_budget,
            sampling: self.sampling,
            internal_budget: internal,
            reserve_fraction: self.allocation.reserve_fraction(),
            spent: PrivacyBudget::new(spent.epsilon, 0.0),
            remaining_for_analysts: PrivacyBudget::new(
                (internal.epsilon - usable.epsilon) + self.allocation.unspent(),
                internal.delta,
            ),
            releases: self.releases.clone(),
        }
    }

    /// Serializes the whole session. The raw data are referenced by path and
    /// content digest only.
    pub fn save(&self) -> String {
        serde_json::to_string_pretty(self).expect("session serializes")
    }

    /// Parses a saved session and verifies the dataset digest.
    pub fn load(document: &str) -> Result<Self, SessionError> {
        let session: Session =
            serde_json::from_str(document).map_err(|e| SessionError::Schema(e.to_string()))?;
        session.check_document()?;
        session.dataset.verify_digest()?;
        Ok(session)
    }

    fn check_document(&self) -> Result<(), SessionError> {
        if self.format_version != FORMAT_VERSION {
            return Err(SessionError::Schema(format!(
                "unsupported format version {}",
                self.format_version
            )));
        }
        self.allocation.check().map_err(SessionError::Schema)?;
        let allocated: Vec<StatisticId> = self.allocation.allocations().map(|(id, _)| id).collect();
        let declared: Vec<StatisticId> = self.statistics.keys().copied().collect();
        if allocated != declared {
            return Err(SessionError::Schema(
                "statistics and allocations disagree".into(),
            ));
        }
        if self
            .statistics
            .keys()
            .any(|id| id.0 >= self.next_statistic_id)
        {
            return Err(SessionError::Schema(
                "statistic id counter is behind".into(),
            ));
        }
        let sealed = self.dataset.firewall() == FirewallState::Sealed;
        match self.phase {
            Phase::Configuring if !sealed || self.dataset.read_audit() != 0 => Err(
                SessionError::Schema("configuring session with an opened dataset".into()),
            ),
            Phase::Configuring if !self.releases.is_empty() => Err(SessionError::Schema(
                "configuring session with releases".into(),
            )),
            Phase::Finalized if sealed => Err(SessionError::Schema(
                "finalized session with a sealed dataset".into(),
            )),
            _ => Ok(()),
        }
    }
}

fn run_mechanism(
    spec: &StatisticSpec,
    column: &[Value],
    epsilon: f64,
    rng: &mut RandomSource,
) -> Result<ReleaseValue, MechanismError> {
    let meta = &spec.schema.metadata;
    let numbers = || -> Result<Vec<f64>, MechanismError> {
        let raw: Vec<Option<f64>> = column
            .iter()
            .map(|v| match v {
                Value::Number(x) => Some(*x),
                _ => None,
            })
            .collect();
        mechanisms::impute_numeric(&raw, meta)
    };
    Ok(match spec.statistic {
        StatisticKind::Mean => {
            ReleaseValue::Scalar(mechanisms::dp_mean(&numbers()?, meta, epsilon, rng)?)
        }
        StatisticKind::Quantile { p } => {
            ReleaseValue::Scalar(mechanisms::dp_quantile(&numbers()?, p, meta, epsilon, rng)?)
        }
        StatisticKind::Histogram => ReleaseValue::Bins(
            mechanisms::dp_histogram(column, meta, epsilon, rng)?
                .into_iter()
                .map(|(label, count)| BinCount { label, count })
                .collect(),
        ),
        StatisticKind::Cdf => ReleaseValue::Curve(
            mechanisms::dp_cdf(&numbers()?, meta, epsilon, rng)?
                .into_iter()
                .map(|(x, fraction)| CurvePoint { x, fraction })
                .collect(),
        ),
    })
}
