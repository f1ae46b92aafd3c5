//! Browser demo: error-versus-epsilon curves, amplification by sampling and
//! a small budget redistribution explorer. No data is involved; everything
//! here is computed from metadata and budgets alone.

use budgeter_core::accuracy::{epsilon_for_error, error_bound, ConfidenceLevel, StatisticKind};
use budgeter_core::budget::{
    amplify_by_sampling, AllocationState, PrivacyBudget, SamplingInfo, StatisticId,
};
use budgeter_core::VariableMetadata;
use wasm_bindgen::prelude::*;

fn statistic(name: &str) -> Result<StatisticKind, String> {
    match name {
        "mean" => Ok(StatisticKind::Mean),
        "histogram" => Ok(StatisticKind::Histogram),
        "median" => Ok(StatisticKind::Quantile { p: 0.5 }),
        "cdf" => Ok(StatisticKind::Cdf),
        other => Err(format!("unknown statistic `{other}`")),
    }
}

/// Error bounds at `points` epsilons spaced evenly on a log scale.
#[allow(clippy::too_many_arguments)]
pub fn error_curve_values(
    kind: &str,
    lower: f64,
    upper: f64,
    n: usize,
    confidence_percent: f64,
    eps_min: f64,
    eps_max: f64,
    points: usize,
) -> Result<Vec<f64>, String> {
    let kind = statistic(kind)?;
    let meta = VariableMetadata::numerical(lower, upper);
    let alpha = ConfidenceLevel::from_percent(confidence_percent).map_err(|e| e.to_string())?;
    if !(eps_min > 0.0 && eps_max > eps_min) || points < 2 {
        return Err("need 0 < eps_min < eps_max and at least two points".into());
    }
    (0..points)
        .map(|i| {
            let eps = eps_min * (eps_max / eps_min).powf(i as f64 / (points - 1) as f64);
            error_bound(kind, &meta, n, eps, alpha)
                .map(|e| e.value)
                .map_err(|e| e.to_string())
        })
        .collect()
}

/// Internal epsilon for populations spaced evenly on a log scale from `n`
/// to `max_population`.
pub fn amplification_values(
    epsilon: f64,
    n: u64,
    max_population: u64,
    points: usize,
) -> Result<Vec<f64>, String> {
    if points < 2 || max_population < n || n == 0 {
        return Err("need 0 < n <= max_population and at least two points".into());
    }
    let global = PrivacyBudget::new(epsilon, 0.0);
    (0..points)
        .map(|i| {
            let m = (n as f64
                * (max_population as f64 / n as f64).powf(i as f64 / (points - 1) as f64))
            .round() as u64;
            let info = SamplingInfo::new(n, m.max(n)).map_err(|e| e.to_string())?;
            Ok(amplify_by_sampling(global, info).epsilon)
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
#[wasm_bindgen]
pub fn error_curve(
    kind: &str,
    lower: f64,
    upper: f64,
    n: usize,
    confidence_percent: f64,
    eps_min: f64,
    eps_max: f64,
    points: usize,
) -> Result<Vec<f64>, JsValue> {
    error_curve_values(
        kind,
        lower,
        upper,
        n,
        confidence_percent,
        eps_min,
        eps_max,
        points,
    )
    .map_err(JsValue::from)
}

/// Sizes arrive as JS numbers and are rounded to whole people.
#[wasm_bindgen]
pub fn amplification_curve(
    epsilon: f64,
    n: f64,
    max_population: f64,
    points: usize,
) -> Result<Vec<f64>, JsValue> {
    if !(n >= 1.0 && max_population.is_finite()) {
        return Err(JsValue::from("sizes must be positive numbers"));
    }
    amplification_values(
        epsilon,
        n.round() as u64,
        max_population.round() as u64,
        points,
    )
    .map_err(JsValue::from)
}

/// A handful of statistics sharing one budget, over a numerical variable.
#[wasm_bindgen]
pub struct Explorer {
    state: AllocationState,
    kinds: Vec<StatisticKind>,
    meta: VariableMetadata,
    n: usize,
    alpha: ConfidenceLevel,
}

impl Explorer {
    pub fn build(epsilon: f64, lower: f64, upper: f64, n: usize) -> Result<Explorer, String> {
        Ok(Explorer {
            state: AllocationState::new(PrivacyBudget::new(epsilon, 0.0), 0.0)
                .map_err(|e| e.to_string())?,
            kinds: Vec::new(),
            meta: VariableMetadata::numerical(lower, upper),
            n,
            alpha: ConfidenceLevel::default(),
        })
    }

    fn id(&self, index: usize) -> Result<StatisticId, String> {
        if index < self.kinds.len() {
            Ok(StatisticId(index as u64 + 1))
        } else {
            Err(format!("no statistic at row {index}"))
        }
    }

    pub fn add_statistic(&mut self, kind: &str) -> Result<(), String> {
        let kind = statistic(kind)?;
        self.state = self
            .state
            .add(StatisticId(self.kinds.len() as u64 + 1))
            .map_err(|e| e.to_string())?;
        self.kinds.push(kind);
        Ok(())
    }

    pub fn set_error_target(&mut self, index: usize, error: f64) -> Result<(), String> {
        let id = self.id(index)?;
        let eps = epsilon_for_error(self.kinds[index], &self.meta, self.n, error, self.alpha)
            .map_err(|e| e.to_string())?;
        self.state = self
            .state
            .set_target_epsilon(id, eps)
            .map_err(|e| e.to_string())?;
        Ok(())
    }

    pub fn set_held(&mut self, index: usize, held: bool) -> Result<(), String> {
        let id = self.id(index)?;
        self.state = self
            .state
            .toggle_hold(id, held)
            .map_err(|e| e.to_string())?;
        Ok(())
    }
}

#[wasm_bindgen]
impl Explorer {
    #[wasm_bindgen(constructor)]
    pub fn new(epsilon: f64, lower: f64, upper: f64, n: usize) -> Result<Explorer, JsValue> {
        Explorer::build(epsilon, lower, upper, n).map_err(JsValue::from)
    }

    pub fn add(&mut self, kind: &str) -> Result<(), JsValue> {
        self.add_statistic(kind).map_err(JsValue::from)
    }

    pub fn target(&mut self, index: usize, error: f64) -> Result<(), JsValue> {
        self.set_error_target(index, error).map_err(JsValue::from)
    }

    pub fn hold(&mut self, index: usize, held: bool) -> Result<(), JsValue> {
        self.set_held(index, held).map_err(JsValue::from)
    }

    pub fn epsilons(&self) -> Vec<f64> {
        (0..self.kinds.len())
            .map(|i| self.state.epsilon(StatisticId(i as u64 + 1)).unwrap_or(0.0))
            .collect()
    }

    /// Error bound per row; infinite where a row has no budget.
    pub fn errors(&self) -> Vec<f64> {
        self.epsilons()
            .iter()
            .zip(&self.kinds)
            .map(|(&eps, &kind)| {
                error_bound(kind, &self.meta, self.n, eps, self.alpha)
                    .map(|e| e.value)
                    .unwrap_or(f64::INFINITY)
            })
            .collect()
    }

    pub fn held(&self) -> Vec<u8> {
        let holds: Vec<StatisticId> = self.state.holds().collect();
        (0..self.kinds.len())
            .map(|i| u8::from(holds.contains(&StatisticId(i as u64 + 1))))
            .collect()
    }

    pub fn unspent(&self) -> f64 {
        self.state.unspent()
    }
}
