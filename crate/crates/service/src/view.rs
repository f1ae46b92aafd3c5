//! Read-only projections of a session, shared by the HTTP API and the CLI.

use std::fmt::Write as _;
use std::path::PathBuf;

use budgeter_core::accuracy::{ErrorEstimate, ErrorUnits, StatisticKind};
use budgeter_core::budget::{PrivacyBudget, SamplingInfo, StatisticId};
use budgeter_core::data::FirewallState;
use budgeter_core::session::{Phase, ReleaseValue, Session};
use budgeter_core::VariableMetadata;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetView {
    pub source: PathBuf,
    pub variables: Vec<String>,
    pub row_count: usize,
    pub firewall: FirewallState,
    pub read_audit: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticView {
    pub id: StatisticId,
    pub variable: String,
    pub statistic: StatisticKind,
    pub metadata: VariableMetadata,
    pub epsilon: f64,
    pub held: bool,
    pub error: Option<ErrorEstimate>,
}

/// Full session state plus the error table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: Uuid,
    pub phase: Phase,
    pub dataset: DatasetView,
    pub global_budget: PrivacyBudget,
    pub sampling: Option<SamplingInfo>,
    pub internal_budget: PrivacyBudget,
    pub reserve_fraction: f64,
    pub usable_budget: PrivacyBudget,
    pub unspent_epsilon: f64,
    pub alpha: f64,
    pub statistics: Vec<StatisticView>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

impl SessionView {
    pub fn of(session: &Session) -> Self {
        let alloc = session.allocation();
        let dataset = session.dataset();
        let statistics = session
            .error_table()
            .into_iter()
            .map(|row| StatisticView {
                metadata: session
                    .statistic(row.id)
                    .map(|s| s.schema.metadata.clone())
                    .expect("error rows come from statistics"),
                id: row.id,
                variable: row.variable,
                statistic: row.statistic,
                epsilon: row.epsilon,
                held: row.held,
                error: row.error,
            })
            .collect();
        Self {
            id: session.id(),
            phase: session.phase(),
            dataset: DatasetView {
                source: dataset.source().to_owned(),
                variables: dataset.header().to_vec(),
                row_count: dataset.row_count(),
                firewall: dataset.firewall(),
                read_audit: dataset.read_audit(),
            },
            global_budget: session.global_budget(),
            sampling: session.sampling(),
            internal_budget: alloc.internal(),
            reserve_fraction: alloc.reserve_fraction(),
            usable_budget: alloc.usable(),
            unspent_epsilon: alloc.unspent(),
            alpha: session.confidence().alpha(),
            statistics,
            created_at: session.created_at(),
            updated_at: session.updated_at(),
        }
    }

    /// Plain-text rendering for the terminal.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let phase = match self.phase {
            Phase::Configuring => "configuring",
            Phase::Finalized => "finalized",
        };
        let _ = writeln!(out, "session {} ({phase})", self.id);
        let _ = writeln!(
            out,
            "dataset  {} ({} rows, {} variables, {:?})",
            self.dataset.source.display(),
            self.dataset.row_count,
            self.dataset.variables.len(),
            self.dataset.firewall
        );
        let _ = writeln!(
            out,
            "global   epsilon {} delta {}",
            self.global_budget.epsilon, self.global_budget.delta
        );
        if let Some(s) = self.sampling {
            let _ = writeln!(
                out,
                "sample   {} of a population of {} -> internal epsilon {:.6}",
                s.sample_size, s.population_size, self.internal_budget.epsilon
            );
        }
        let _ = writeln!(
            out,
            "reserve  {:.1}% for analysts; usable epsilon {:.6}; unspent {:.6}",
            self.reserve_fraction * 100.0,
            self.usable_budget.epsilon,
            self.unspent_epsilon
        );
        let _ = writeln!(out, "confidence {}%", format_percent(1.0 - self.alpha));
        if self.statistics.is_empty() {
            let _ = writeln!(out, "\nno statistics selected");
            return out;
        }
        let _ = writeln!(
            out,
            "\n{:>4}  {:<14} {:<16} {:>10}  {:>14}  {:<10} held",
            "id", "variable", "statistic", "epsilon", "error", "units"
        );
        for s in &self.statistics {
            let (error, units) = match s.error {
                Some(e) => (format!("{:.4}", e.value), units_label(e.units)),
                None => ("unbounded".to_owned(), ""),
            };
            let _ = writeln!(
                out,
                "{:>4}  {:<14} {:<16} {:>10.6}  {:>14}  {:<10} {}",
                s.id.to_string(),
                s.variable,
                s.statistic.to_string(),
                s.epsilon,
                error,
                units,
                if s.held { "yes" } else { "" }
            );
        }
        out
    }
}

fn format_percent(fraction: f64) -> String {
    let p = fraction * 100.0;
    if (p - p.round()).abs() < 1e-9 {
        format!("{}", p.round())
    } else {
        format!("{p:.2}")
    }
}

pub fn units_label(units: ErrorUnits) -> &'static str {
    match units {
        ErrorUnits::Statistic => "units",
        ErrorUnits::Count => "people",
        ErrorUnits::QuantileFraction => "rank frac",
        ErrorUnits::CdfFraction => "cdf frac",
    }
}

/// One-line summary of a release value.
pub fn describe_value(value: &ReleaseValue) -> String {
    match value {
        ReleaseValue::Scalar(x) => format!("{x:.4}"),
        ReleaseValue::Bins(bins) => bins
            .iter()
            .map(|b| format!("{}: {:.1}", b.label, b.count))
            .collect::<Vec<_>>()
            .join(", "),
        ReleaseValue::Curve(points) => points
            .iter()
            .map(|p| format!("{}: {:.3}", p.x, p.fraction))
            .collect::<Vec<_>>()
            .join(", "),
    }
}
