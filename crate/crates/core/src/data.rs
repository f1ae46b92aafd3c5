//! Dataset ingestion behind a raw-data firewall.
//!
//! Loading a CSV file records only its header, its row count and a content
//! digest. Cell values are read exclusively through
//! [`DatasetHandle::open_for_finalize`], which is one-shot and counts every
//! cell it materializes.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::mechanisms::{Value, VariableKind, VariableMetadata};

/// Tokens read as a missing value, in addition to the empty string.
pub const MISSING_TOKENS: &[&str] = &["NA"];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path} is empty")]
    EmptyFile { path: PathBuf },
    #[error("{path} is not valid UTF-8")]
    NotUtf8 { path: PathBuf },
    #[error("header problem: {0}")]
    Header(String),
    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        line: u64,
        expected: u64,
        found: u64,
    },
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error("dataset changed since it was loaded (digest mismatch)")]
    DigestMismatch,
    #[error("the dataset was already opened; finalize is one-shot")]
    AlreadyOpened,
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("line {line}, column `{column}`: cannot read `{token}` as {expected}")]
    Parse {
        line: u64,
        column: String,
        token: String,
        expected: VariableKind,
    },
    #[error("codebook line {line}: {message}")]
    Codebook { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FirewallState {
    Sealed,
    Opened,
}

/// A dataset known only by its header and row count until finalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHandle {
    source: PathBuf,
    digest: String,
    header: Vec<String>,
    row_count: usize,
    firewall: FirewallState,
    read_audit: u64,
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, DataError> {
    std::fs::read(path).map_err(|source| DataError::Io {
        path: path.to_owned(),
        source,
    })
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn csv_error(err: csv::Error) -> DataError {
    match err.kind() {
        csv::ErrorKind::UnequalLengths {
            pos,
            expected_len,
            len,
        } => DataError::RaggedRow {
            line: pos.as_ref().map(|p| p.line()).unwrap_or_default(),
            expected: *expected_len,
            found: *len,
        },
        _ => DataError::Csv(err.to_string()),
    }
}

fn reader(bytes: &[u8]) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes)
}

/// Reads the header and counts rows without keeping any cell.
pub fn load_csv(path: impl AsRef<Path>) -> Result<DatasetHandle, DataError> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    if bytes.iter().all(|b| b.is_ascii_whitespace()) {
        return Err(DataError::EmptyFile {
            path: path.to_owned(),
        });
    }
    if std::str::from_utf8(&bytes).is_err() {
        return Err(DataError::NotUtf8 {
            path: path.to_owned(),
        });
    }

    let mut rdr = reader(&bytes);
    let header: Vec<String> = rdr
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(|h| h.trim().to_owned())
        .collect();
    check_header(&header)?;

    let mut record = csv::ByteRecord::new();
    let mut row_count = 0usize;
    while rdr.read_byte_record(&mut record).map_err(csv_error)? {
        row_count += 1;
    }

    Ok(DatasetHandle {
        source: std::fs::canonicalize(path).unwrap_or_else(|_| path.to_owned()),
        digest: sha256_hex(&bytes),
        header,
        row_count,
        firewall: FirewallState::Sealed,
        read_audit: 0,
    })
}

fn check_header(header: &[String]) -> Result<(), DataError> {
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(DataError::Header("missing header row".into()));
    }
    if let Some(pos) = header.iter().position(String::is_empty) {
        return Err(DataError::Header(format!("column {} has no name", pos + 1)));
    }
    let mut seen = HashSet::new();
    for name in header {
        if !seen.insert(name) {
            return Err(DataError::Header(format!("duplicate column name `{name}`")));
        }
    }
    Ok(())
}

impl DatasetHandle {
    pub fn source(&self) -> &Path {
        &self.source
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn firewall(&self) -> FirewallState {
        self.firewall
    }

    /// Number of cells materialized so far.
    pub fn read_audit(&self) -> u64 {
        self.read_audit
    }

    pub fn has_variable(&self, name: &str) -> bool {
        self.header.iter().any(|h| h == name)
    }

    /// Re-hashes the source file and compares with the stored digest.
    pub fn verify_digest(&self) -> Result<(), DataError> {
        if sha256_hex(&read_bytes(&self.source)?) == self.digest {
            Ok(())
        } else {
            Err(DataError::DigestMismatch)
        }
    }

    /// Opens the firewall. Only the finalize path should call this, and only
    /// once per handle.
    pub fn open_for_finalize(&mut self) -> Result<ColumnAccessor<'_>, DataError> {
        if self.firewall == FirewallState::Opened {
            return Err(DataError::AlreadyOpened);
        }
        let bytes = read_bytes(&self.source)?;
        if sha256_hex(&bytes) != self.digest {
            return Err(DataError::DigestMismatch);
        }
        let mut rdr = reader(&bytes);
        let records = rdr
            .records()
            .collect::<Result<Vec<_>, _>>()
            .map_err(csv_error)?;
        self.firewall = FirewallState::Opened;
        Ok(ColumnAccessor {
            handle: self,
            records,
        })
    }
}

/// Typed column access over an opened dataset.
pub struct ColumnAccessor<'a> {
    handle: &'a mut DatasetHandle,
    records: Vec<csv::StringRecord>,
}

impl ColumnAccessor<'_> {
    /// Materializes one column, parsed per the declared schema.
    pub fn column(&mut self, schema: &VariableSchema) -> Result<Vec<Value>, DataError> {
        let idx = self
            .handle
            .header
            .iter()
            .position(|h| *h == schema.name)
            .ok_or_else(|| DataError::UnknownVariable(schema.name.clone()))?;
        self.handle.read_audit += self.records.len() as u64;
        self.records
            .iter()
            .enumerate()
            .map(|(row, record)| {
                let token = record.get(idx).unwrap_or_default();
                parse_cell(token, &schema.metadata).ok_or_else(|| DataError::Parse {
                    line: record
                        .position()
                        .map(|p| p.line())
                        .unwrap_or(row as u64 + 2),
                    column: schema.name.clone(),
                    token: token.to_owned(),
                    expected: schema.metadata.kind,
                })
            })
            .collect()
    }
}

fn parse_cell(token: &str, meta: &VariableMetadata) -> Option<Value> {
    let token = token.trim();
    if token.is_empty() || MISSING_TOKENS.contains(&token) {
        return Some(Value::Missing);
    }
    match meta.kind {
        VariableKind::Numerical => token
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .map(Value::Number),
        VariableKind::Categorical => Some(Value::Label(token.to_owned())),
        VariableKind::Boolean => {
            if meta.categories.iter().any(|c| c == token) {
                return Some(Value::Label(token.to_owned()));
            }
            let truth = match token.to_ascii_lowercase().as_str() {
                "true" | "t" | "yes" | "y" | "1" => 1,
                "false" | "f" | "no" | "n" | "0" => 0,
                _ => return None,
            };
            meta.categories.get(truth).cloned().map(Value::Label)
        }
    }
}

/// A variable name with its declared kind and metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSchema {
    pub name: String,
    pub metadata: VariableMetadata,
}

impl VariableSchema {
    pub fn new(name: impl Into<String>, metadata: VariableMetadata) -> Self {
        Self {
            name: name.into(),
            metadata,
        }
    }

    pub fn kind(&self) -> VariableKind {
        self.metadata.kind
    }
}

/// A structural metadata problem and how to fix it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataIssue {
    pub problem: String,
    pub remediation: String,
}

impl fmt::Display for MetadataIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.problem, self.remediation)
    }
}

fn issue(problem: impl Into<String>, remediation: impl Into<String>) -> MetadataIssue {
    MetadataIssue {
        problem: problem.into(),
        remediation: remediation.into(),
    }
}

const DATA_INDEPENDENT: &str =
    "choose values from general knowledge of the variable, not from the dataset itself";

/// Structural checks on metadata. Never touches data cells.
pub fn validate_metadata(schema: &VariableSchema) -> Result<(), Vec<MetadataIssue>> {
    let meta = &schema.metadata;
    let mut issues = Vec::new();
    if schema.name.trim().is_empty() {
        issues.push(issue("variable name is empty", "name the variable"));
    }
    match meta.kind {
        VariableKind::Numerical => {
            match (meta.lower, meta.upper) {
                (Some(lo), Some(hi)) => {
                    if !lo.is_finite() || !hi.is_finite() {
                        issues.push(issue(
                            "bounds must be finite numbers",
                            format!("enter a finite lower and upper bound; {DATA_INDEPENDENT}"),
                        ));
                    } else if lo >= hi {
                        issues.push(issue(
                            format!("lower bound {lo} is not below upper bound {hi}"),
                            "swap the bounds or widen the range so that lower < upper",
                        ));
                    }
                }
                _ => issues.push(issue(
                    "numerical variables need a lower and an upper bound",
                    format!(
                        "supply an a priori range, e.g. 0 to 150 for an age; {DATA_INDEPENDENT}"
                    ),
                )),
            }
            if !meta.categories.is_empty() {
                issues.push(issue(
                    "numerical variables do not take categories",
                    "remove the category list or declare the variable categorical",
                ));
            }
        }
        VariableKind::Categorical | VariableKind::Boolean => {
            if meta.categories.is_empty() {
                issues.push(issue(
                    "no categories declared",
                    format!("list every possible value of the variable; {DATA_INDEPENDENT}"),
                ));
            }
            if meta.categories.iter().any(|c| c.trim().is_empty()) {
                issues.push(issue("a category label is empty", "remove blank labels"));
            }
            let mut seen = HashSet::new();
            for label in &meta.categories {
                if !seen.insert(label) {
                    issues.push(issue(
                        format!("category `{label}` is listed twice"),
                        "make every category label unique",
                    ));
                }
            }
            if meta.kind == VariableKind::Boolean && meta.categories.len() != 2 {
                issues.push(issue(
                    format!(
                        "boolean variables need exactly 2 labels, got {}",
                        meta.categories.len()
                    ),
                    "use two labels (false first, true second) or declare the variable categorical",
                ));
            }
            if meta.lower.is_some() || meta.upper.is_some() {
                issues.push(issue(
                    format!("{} variables do not take bounds", meta.kind),
                    "remove the bounds or declare the variable numerical",
                ));
            }
        }
    }
    if let Some(g) = meta.grid_cells {
        if g < 2 {
            issues.push(issue(
                format!("grid has {g} cells"),
                "use at least 2 grid cells",
            ));
        }
    }
    if issues.is_empty() {
        Ok(())
    } else {
        Err(issues)
    }
}

/// Parses a flat codebook mapping variable names to metadata.
///
/// One variable per line, `#` starts a comment:
///
/// ```text
/// age     = numerical 0 150
/// income  = numerical 0 500000 grid=50
/// race    = categorical White, Black, Asian, Other
/// married = boolean
/// smoker  = boolean no, yes
/// ```
pub fn parse_codebook(text: &str) -> Result<BTreeMap<String, VariableMetadata>, DataError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let fail = |message: String| DataError::Codebook {
            line: line_no,
            message,
        };
        let (name, spec) = line
            .split_once('=')
            .ok_or_else(|| fail("expected `name = kind ...`".into()))?;
        let name = name.trim();
        let spec = spec.trim();
        let (kind, rest) = spec.split_once(char::is_whitespace).unwrap_or((spec, ""));
        let kind: VariableKind = kind.parse().map_err(fail)?;
        let rest = rest.trim();
        let meta = match kind {
            VariableKind::Numerical => {
                let mut numbers = Vec::new();
                let mut grid = None;
                for word in rest.split_whitespace() {
                    if let Some(g) = word.strip_prefix("grid=") {
                        grid = Some(g.parse().map_err(|_| fail(format!("bad grid `{g}`")))?);
                    } else {
                        numbers.push(
                            word.parse::<f64>()
                                .map_err(|_| fail(format!("bad bound `{word}`")))?,
                        );
                    }
                }
                let [lo, hi] = numbers[..] else {
                    return Err(fail("numerical needs exactly two bounds".into()));
                };
                VariableMetadata {
                    grid_cells: grid,
                    ..VariableMetadata::numerical(lo, hi)
                }
            }
            VariableKind::Categorical => VariableMetadata::categorical(
                rest.split(',').map(str::trim).filter(|s| !s.is_empty()),
            ),
            VariableKind::Boolean if rest.is_empty() => VariableMetadata::boolean(),
            VariableKind::Boolean => VariableMetadata {
                kind: VariableKind::Boolean,
                ..VariableMetadata::categorical(rest.split(',').map(str::trim))
            },
        };
        if out.insert(name.to_owned(), meta).is_some() {
            return Err(fail(format!("variable `{name}` defined twice")));
        }
    }
    Ok(out)
}

pub fn load_codebook(
    path: impl AsRef<Path>,
) -> Result<BTreeMap<String, VariableMetadata>, DataError> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let text = String::from_utf8(bytes).map_err(|_| DataError::NotUtf8 {
        path: path.to_owned(),
    })?;
    parse_codebook(&text)
}
