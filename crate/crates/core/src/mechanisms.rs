//! Differentially private statistics over a single variable.
//!
//! Every mechanism here is pure-ε under one-row replacement and takes its
//! randomness from an explicit [`RandomSource`]. Data is clipped to the
//! declared metadata before any computation, so sensitivity depends only on
//! the metadata and the (public) row count.

use rand::rngs::StdRng;
use rand::{Rng, RngCore, SeedableRng};
#[cfg(any(test, feature = "test-hooks"))]
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default number of cells for the quantile search grid.
pub const DEFAULT_QUANTILE_GRID: usize = 100;
/// Default number of CDF grid points.
pub const DEFAULT_CDF_GRID: usize = 20;
/// Default number of equal-width bins for a histogram of a numerical variable.
pub const DEFAULT_HISTOGRAM_BINS: usize = 10;
/// Label of the extra bin that collects missing and undeclared categories.
pub const UNCATEGORIZED: &str = "uncategorized";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MechanismError {
    #[error("epsilon must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("noise scale must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("quantile fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error("no data rows")]
    EmptyData,
    #[error("this statistic requires {expected} metadata")]
    WrongKind { expected: &'static str },
    #[error("invalid metadata: {0}")]
    Metadata(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariableKind {
    Numerical,
    Categorical,
    Boolean,
}

impl VariableKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VariableKind::Numerical => "numerical",
            VariableKind::Categorical => "categorical",
            VariableKind::Boolean => "boolean",
        }
    }
}

impl std::fmt::Display for VariableKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for VariableKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "numerical" | "numeric" => Ok(VariableKind::Numerical),
            "categorical" => Ok(VariableKind::Categorical),
            "boolean" | "bool" => Ok(VariableKind::Boolean),
            other => Err(format!("unknown variable kind `{other}`")),
        }
    }
}

/// Data-independent description of a variable, supplied by the data owner.
///
/// Numerical variables carry bounds; categorical and boolean variables carry
/// an ordered list of labels. `grid_cells` overrides the per-statistic
/// default discretization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableMetadata {
    pub kind: VariableKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_cells: Option<usize>,
}

impl VariableMetadata {
    pub fn numerical(lower: f64, upper: f64) -> Self {
        Self {
            kind: VariableKind::Numerical,
            lower: Some(lower),
            upper: Some(upper),
            categories: Vec::new(),
            grid_cells: None,
        }
    }

    pub fn categorical<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            kind: VariableKind::Categorical,
            lower: None,
            upper: None,
            categories: labels.into_iter().map(Into::into).collect(),
            grid_cells: None,
        }
    }

    /// Boolean variable with labels `false` and `true`.
    pub fn boolean() -> Self {
        Self {
            kind: VariableKind::Boolean,
            categories: vec!["false".to_owned(), "true".to_owned()],
            ..Self::categorical(Vec::<String>::new())
        }
    }

    pub fn with_grid(mut self, cells: usize) -> Self {
        self.grid_cells = Some(cells);
        self
    }

    /// Validated `(lower, upper)` of a numerical variable.
    pub fn bounds(&self) -> Result<(f64, f64), MechanismError> {
        if self.kind != VariableKind::Numerical {
            return Err(MechanismError::WrongKind {
                expected: "numerical",
            });
        }
        match (self.lower, self.upper) {
            (Some(lo), Some(hi)) if lo.is_finite() && hi.is_finite() && lo < hi => Ok((lo, hi)),
            (Some(lo), Some(hi)) => Err(MechanismError::Metadata(format!(
                "bounds must be finite with lower < upper, got [{lo}, {hi}]"
            ))),
            _ => Err(MechanismError::Metadata(
                "numerical variables need lower and upper bounds".into(),
            )),
        }
    }

    /// Number of grid cells, falling back to `default` when unset.
    pub fn grid(&self, default: usize) -> Result<usize, MechanismError> {
        match self.grid_cells.unwrap_or(default) {
            g if g >= 2 => Ok(g),
            g => Err(MechanismError::Metadata(format!(
                "grid needs at least 2 cells, got {g}"
            ))),
        }
    }

    pub fn range(&self) -> Result<f64, MechanismError> {
        self.bounds().map(|(lo, hi)| hi - lo)
    }
}

/// A typed data cell, as materialized after the firewall is opened.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Number(f64),
    Label(String),
    Missing,
}

impl Value {
    pub fn label(s: impl Into<String>) -> Self {
        Value::Label(s.into())
    }
}

/// Laplace scale `b`, in the units of the statistic.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct NoiseScale(f64);

impl NoiseScale {
    pub fn new(scale: f64) -> Result<Self, MechanismError> {
        if scale.is_finite() && scale > 0.0 {
            Ok(Self(scale))
        } else {
            Err(MechanismError::InvalidScale(scale))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

enum Source {
    Secure(StdRng),
    #[cfg(any(test, feature = "test-hooks"))]
    Seeded(ChaCha20Rng),
    #[cfg(any(test, feature = "test-hooks"))]
    ZeroNoise,
}

/// Where mechanism noise comes from.
///
/// Production code can only build [`RandomSource::secure`]. Seeded and
/// zero-noise sources exist only with the `test-hooks` feature.
pub struct RandomSource {
    source: Source,
}

impl std::fmt::Debug for RandomSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mode = match self.source {
            Source::Secure(_) => "secure",
            #[cfg(any(test, feature = "test-hooks"))]
            Source::Seeded(_) => "seeded",
            #[cfg(any(test, feature = "test-hooks"))]
            Source::ZeroNoise => "zero-noise",
        };
        f.debug_struct("RandomSource").field("mode", &mode).finish()
    }
}

impl RandomSource {
    /// CSPRNG seeded from the operating system.
    pub fn secure() -> Self {
        Self {
            source: Source::Secure(StdRng::from_os_rng()),
        }
    }

    #[cfg(any(test, feature = "test-hooks"))]
    pub fn seeded(seed: u64) -> Self {
        Self {
            source: Source::Seeded(ChaCha20Rng::seed_from_u64(seed)),
        }
    }

    /// Every noise draw is exactly zero and the exponential mechanism picks
    /// its utility maximizer.
    #[cfg(any(test, feature = "test-hooks"))]
    pub fn zero_noise() -> Self {
        Self {
            source: Source::ZeroNoise,
        }
    }

    pub fn is_zero_noise(&self) -> bool {
        match self.source {
            #[cfg(any(test, feature = "test-hooks"))]
            Source::ZeroNoise => true,
            _ => false,
        }
    }

    fn rng(&mut self) -> Option<&mut dyn RngCore> {
        match &mut self.source {
            Source::Secure(rng) => Some(rng),
            #[cfg(any(test, feature = "test-hooks"))]
            Source::Seeded(rng) => Some(rng),
            #[cfg(any(test, feature = "test-hooks"))]
            Source::ZeroNoise => None,
        }
    }
}

/// Uniform draw in the open interval (0, 1).
fn open_unit(rng: &mut dyn RngCore) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// One draw from Laplace(0, scale) by inverse CDF.
pub fn sample_laplace(scale: NoiseScale, rng: &mut RandomSource) -> f64 {
    let Some(rng) = rng.rng() else {
        return 0.0;
    };
    let u = open_unit(rng);
    let b = scale.get();
    if u < 0.5 {
        b * (2.0 * u).ln()
    } else {
        -b * (2.0 * (1.0 - u)).ln()
    }
}

/// Samples an index with probability proportional to `exp(log_weights[i])`.
/// The zero-noise source returns the first maximizer.
fn sample_exponential(log_weights: &[f64], rng: &mut RandomSource) -> usize {
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let Some(rng) = rng.rng() else {
        return log_weights
            .iter()
            .position(|&w| w == max)
            .unwrap_or_default();
    };
    let weights: Vec<f64> = log_weights.iter().map(|w| (w - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut target = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if target < *w {
            return i;
        }
        target -= w;
    }
    // Rounding fell off the end; take the last cell with positive weight.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or_default()
}

fn check_epsilon(epsilon: f64) -> Result<(), MechanismError> {
    if epsilon.is_finite() && epsilon > 0.0 {
        Ok(())
    } else {
        Err(MechanismError::InvalidEpsilon(epsilon))
    }
}

/// Clamps every value into the declared bounds.
pub fn clip_numeric(values: &[f64], meta: &VariableMetadata) -> Result<Vec<f64>, MechanismError> {
    let (lo, hi) = meta.bounds()?;
    Ok(values.iter().map(|v| v.clamp(lo, hi)).collect())
}

/// Replaces missing numerical values by the midpoint of the bounds.
pub fn impute_numeric(
    values: &[Option<f64>],
    meta: &VariableMetadata,
) -> Result<Vec<f64>, MechanismError> {
    let (lo, hi) = meta.bounds()?;
    let mid = lo + (hi - lo) / 2.0;
    Ok(values.iter().map(|v| v.unwrap_or(mid)).collect())
}

/// Equal-width partition of `[lower, upper]` into cells `(left, right]`,
/// with the first cell closed on the left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    lower: f64,
    upper: f64,
    cells: usize,
}

impl Grid {
    pub fn new(lower: f64, upper: f64, cells: usize) -> Self {
        assert!(lower < upper && cells >= 1, "degenerate grid");
        Self {
            lower,
            upper,
            cells,
        }
    }

    pub fn from_metadata(meta: &VariableMetadata, default: usize) -> Result<Self, MechanismError> {
        let (lo, hi) = meta.bounds()?;
        Ok(Self::new(lo, hi, meta.grid(default)?))
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    fn width(&self) -> f64 {
        (self.upper - self.lower) / self.cells as f64
    }

    pub fn left_edge(&self, cell: usize) -> f64 {
        if cell == 0 {
            self.lower
        } else {
            self.right_edge(cell - 1)
        }
    }

    pub fn right_edge(&self, cell: usize) -> f64 {
        if cell + 1 >= self.cells {
            self.upper
        } else {
            self.lower + (cell + 1) as f64 * self.width()
        }
    }

    pub fn midpoint(&self, cell: usize) -> f64 {
        let (l, r) = (self.left_edge(cell), self.right_edge(cell));
        l + (r - l) / 2.0
    }

    /// Index of the cell holding `x`; out-of-range values saturate.
    pub fn cell_of(&self, x: f64) -> usize {
        let last = self.cells - 1;
        let guess = ((x - self.lower) / self.width()).ceil() - 1.0;
        let mut idx = if guess.is_nan() || guess < 0.0 {
            0
        } else {
            (guess as usize).min(last)
        };
        // Settle floating-point disagreements against the exact edges.
        while idx > 0 && x <= self.right_edge(idx - 1) {
            idx -= 1;
        }
        while idx < last && x > self.right_edge(idx) {
            idx += 1;
        }
        idx
    }

    /// Number of values falling in each cell.
    pub fn counts(&self, values: &[f64]) -> Vec<usize> {
        let mut counts = vec![0usize; self.cells];
        for &v in values {
            counts[self.cell_of(v)] += 1;
        }
        counts
    }

    pub fn label(&self, cell: usize) -> String {
        let open = if cell == 0 { '[' } else { '(' };
        format!("{open}{}, {}]", self.left_edge(cell), self.right_edge(cell))
    }
}

/// Laplace scale of [`dp_mean`]: `(upper - lower) / (n * epsilon)`.
pub fn mean_noise_scale(
    meta: &VariableMetadata,
    n: usize,
    epsilon: f64,
) -> Result<NoiseScale, MechanismError> {
    check_epsilon(epsilon)?;
    if n == 0 {
        return Err(MechanismError::EmptyData);
    }
    NoiseScale::new(meta.range()? / (n as f64 * epsilon))
}

/// Per-bin Laplace scale of [`dp_histogram`]: `2 / epsilon`.
pub fn histogram_noise_scale(epsilon: f64) -> Result<NoiseScale, MechanismError> {
    check_epsilon(epsilon)?;
    NoiseScale::new(2.0 / epsilon)
}

pub fn dp_mean(
    values: &[f64],
    meta: &VariableMetadata,
    epsilon: f64,
    rng: &mut RandomSource,
) -> Result<f64, MechanismError> {
    let scale = mean_noise_scale(meta, values.len(), epsilon)?;
    let clipped = clip_numeric(values, meta)?;
    let mean = clipped.iter().sum::<f64>() / clipped.len() as f64;
    Ok(mean + sample_laplace(scale, rng))
}

/// Noisy counts for every declared bin.
///
/// Categorical and boolean variables get one bin per declared label plus a
/// trailing [`UNCATEGORIZED`] bin for missing and undeclared values.
/// Numerical variables are clipped and binned on an equal-width grid
/// (missing values take the midpoint of the bounds).
pub fn dp_histogram(
    values: &[Value],
    meta: &VariableMetadata,
    epsilon: f64,
    rng: &mut RandomSource,
) -> Result<Vec<(String, f64)>, MechanismError> {
    let scale = histogram_noise_scale(epsilon)?;
    let (labels, counts) = match meta.kind {
        VariableKind::Numerical => {
            let grid = Grid::from_metadata(meta, DEFAULT_HISTOGRAM_BINS)?;
            let numbers = numeric_values(values, meta)?;
            let labels = (0..grid.cells()).map(|c| grid.label(c)).collect();
            (labels, grid.counts(&numbers))
        }
        VariableKind::Categorical | VariableKind::Boolean => {
            if meta.categories.is_empty() {
                return Err(MechanismError::Metadata("no categories declared".into()));
            }
            let mut counts = vec![0usize; meta.categories.len() + 1];
            for v in values {
                let slot = match v {
                    Value::Label(l) => meta.categories.iter().position(|c| c == l),
                    _ => None,
                };
                counts[slot.unwrap_or(meta.categories.len())] += 1;
            }
            let mut labels = meta.categories.clone();
            labels.push(UNCATEGORIZED.to_owned());
            (labels, counts)
        }
    };
    Ok(labels
        .into_iter()
        .zip(counts)
        .map(|(label, count)| (label, count as f64 + sample_laplace(scale, rng)))
        .collect())
}

/// Numbers from typed cells; anything that is not a number is imputed.
fn numeric_values(values: &[Value], meta: &VariableMetadata) -> Result<Vec<f64>, MechanismError> {
    let raw: Vec<Option<f64>> = values
        .iter()
        .map(|v| match v {
            Value::Number(x) => Some(*x),
            _ => None,
        })
        .collect();
    impute_numeric(&raw, meta)
}

/// Exponential-mechanism utilities of each quantile grid cell:
/// `-|#{x <= right_edge(c)} - p * n|`.
pub fn quantile_utilities(
    values: &[f64],
    p: f64,
    meta: &VariableMetadata,
) -> Result<Vec<f64>, MechanismError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(MechanismError::InvalidFraction(p));
    }
    if values.is_empty() {
        return Err(MechanismError::EmptyData);
    }
    let grid = Grid::from_metadata(meta, DEFAULT_QUANTILE_GRID)?;
    let clipped = clip_numeric(values, meta)?;
    let target = p * clipped.len() as f64;
    let mut below = 0usize;
    Ok(grid
        .counts(&clipped)
        .into_iter()
        .map(|c| {
            below += c;
            -(below as f64 - target).abs()
        })
        .collect())
}

/// Private `p`-quantile: picks a grid cell with probability proportional to
/// `exp(epsilon * utility / 2)` and returns its midpoint.
pub fn dp_quantile(
    values: &[f64],
    p: f64,
    meta: &VariableMetadata,
    epsilon: f64,
    rng: &mut RandomSource,
) -> Result<f64, MechanismError> {
    check_epsilon(epsilon)?;
    let utilities = quantile_utilities(values, p, meta)?;
    let grid = Grid::from_metadata(meta, DEFAULT_QUANTILE_GRID)?;
    let log_weights: Vec<f64> = utilities.iter().map(|u| epsilon * u / 2.0).collect();
    Ok(grid.midpoint(sample_exponential(&log_weights, rng)))
}

/// Clamps to `[0, 1]` and takes the running maximum.
pub fn enforce_monotone(fractions: &[f64]) -> Vec<f64> {
    let mut running = 0.0_f64;
    fractions
        .iter()
        .map(|f| {
            running = running.max(f.clamp(0.0, 1.0));
            running
        })
        .collect()
}

/// Private CDF evaluated at every grid cell's right edge.
pub fn dp_cdf(
    values: &[f64],
    meta: &VariableMetadata,
    epsilon: f64,
    rng: &mut RandomSource,
) -> Result<Vec<(f64, f64)>, MechanismError> {
    let scale = histogram_noise_scale(epsilon)?;
    if values.is_empty() {
        return Err(MechanismError::EmptyData);
    }
    let grid = Grid::from_metadata(meta, DEFAULT_CDF_GRID)?;
    let clipped = clip_numeric(values, meta)?;
    let n = clipped.len() as f64;
    let mut cumulative = 0.0;
    let raw: Vec<f64> = grid
        .counts(&clipped)
        .into_iter()
        .map(|c| {
            cumulative += c as f64 + sample_laplace(scale, rng);
            cumulative / n
        })
        .collect();
    let mut fractions = enforce_monotone(&raw);
    if let Some(last) = fractions.last_mut() {
        *last = 1.0;
    }
    Ok((0..grid.cells())
        .map(|c| grid.right_edge(c))
        .zip(fractions)
        .collect())
}
