//! Command-line interface.
//!
//! Every subcommand except `init`, `run` and `serve` loads the session
//! document named by `--session`, applies one change and writes it back.
//! A plan file lists the same subcommands as JSON objects tagged by
//! `command`, so a whole session can be replayed without prompts.

use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use budgeter_core::accuracy::StatisticKind;
use budgeter_core::budget::{recommend_params, BudgetWarning, ParamVerdict, StatisticId};
use budgeter_core::data::{load_codebook, load_csv};
use budgeter_core::session::{NewStatistic, ParamsRequest, Phase, Session, SessionError};
use budgeter_core::{VariableKind, VariableMetadata};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::view::{describe_value, SessionView};
use crate::NoiseMode;

#[derive(Debug, Parser)]
#[command(
    name = "budgeter",
    version,
    about = "Budget a differential-privacy release of a CSV dataset"
)]
pub struct Cli {
    /// Session document to create or update.
    #[arg(long, global = true, value_name = "FILE")]
    pub session: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    #[command(flatten)]
    Step(Step),
    /// Execute every step of a plan file.
    Run { plan: PathBuf },
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Step {
    /// Start a session on a dataset.
    Init(InitArgs),
    /// Change the global privacy parameters or the population size.
    Params(ParamsArgs),
    /// Select a statistic to release.
    AddStat(AddStatArgs),
    /// Delete a selected statistic.
    RmStat { id: u64 },
    /// Redistribute the budget so a statistic meets an error bound.
    ErrorTarget { id: u64, error: f64 },
    /// Freeze (or with --off, unfreeze) a statistic's allocation.
    Hold {
        id: u64,
        #[arg(long)]
        #[serde(default)]
        off: bool,
    },
    /// Percentage of the budget reserved for analysts.
    Reserve { percent: f64 },
    /// Confidence level of the error bounds, in percent.
    Confidence { percent: f64 },
    /// Print the session and its error table.
    Show {
        #[arg(long)]
        #[serde(default)]
        json: bool,
    },
    /// Run the mechanisms on the raw data and write the releases.
    Finalize(FinalizeArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct InitArgs {
    /// CSV dataset with a header row.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, required_unless_present = "tier", conflicts_with = "tier")]
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[arg(long, required_unless_present = "tier", conflicts_with = "tier")]
    #[serde(default)]
    pub delta: Option<f64>,
    /// Use the recommended parameters for a sensitivity tier (1-5).
    #[arg(long)]
    #[serde(default)]
    pub tier: Option<u8>,
    /// Size of the population the dataset was sampled from.
    #[arg(long)]
    #[serde(default)]
    pub population: Option<u64>,
    /// Variable metadata file.
    #[arg(long)]
    #[serde(default)]
    pub codebook: Option<PathBuf>,
    /// Proceed despite parameter warnings.
    #[arg(long)]
    #[serde(default)]
    pub acknowledge: bool,
    /// Overwrite an existing session file.
    #[arg(long)]
    #[serde(default)]
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ParamsArgs {
    #[arg(long)]
    pub epsilon: f64,
    #[arg(long)]
    pub delta: f64,
    /// Size of the population the dataset was sampled from.
    #[arg(long)]
    #[serde(default)]
    pub population: Option<u64>,
    #[arg(long)]
    #[serde(default)]
    pub acknowledge: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatisticName {
    Mean,
    Histogram,
    Quantile,
    Cdf,
}

/// Metadata flags are optional when the codebook describes the variable.
#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct AddStatArgs {
    pub variable: String,
    pub statistic: StatisticName,
    /// Quantile probability in (0, 1).
    #[arg(long)]
    #[serde(default)]
    pub p: Option<f64>,
    #[arg(long)]
    #[serde(default)]
    pub kind: Option<VariableKind>,
    #[arg(long, allow_hyphen_values = true)]
    #[serde(default)]
    pub lower: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    #[serde(default)]
    pub upper: Option<f64>,
    /// Comma-separated category labels.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub categories: Vec<String>,
    /// Number of grid cells for quantiles, CDFs and numeric histograms.
    #[arg(long)]
    #[serde(default)]
    pub grid: Option<usize>,
}

impl AddStatArgs {
    fn to_request(&self) -> anyhow::Result<NewStatistic> {
        let statistic = match self.statistic {
            StatisticName::Mean => StatisticKind::Mean,
            StatisticName::Histogram => StatisticKind::Histogram,
            StatisticName::Cdf => StatisticKind::Cdf,
            StatisticName::Quantile => StatisticKind::Quantile {
                p: self.p.context("a quantile needs --p")?,
            },
        };
        let kind = match self.kind {
            Some(kind) => Some(kind),
            None if self.lower.is_some() || self.upper.is_some() => Some(VariableKind::Numerical),
            None if !self.categories.is_empty() => Some(VariableKind::Categorical),
            None => None,
        };
        let metadata = kind.map(|kind| VariableMetadata {
            kind,
            lower: self.lower,
            upper: self.upper,
            categories: if kind == VariableKind::Boolean && self.categories.is_empty() {
                VariableMetadata::boolean().categories
            } else {
                self.categories.clone()
            },
            grid_cells: self.grid,
        });
        Ok(NewStatistic {
            variable: self.variable.clone(),
            statistic,
            metadata,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct FinalizeArgs {
    /// Write the release document here instead of standard output.
    #[arg(long)]
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[cfg(feature = "test-hooks")]
    #[arg(long, conflicts_with = "zero_noise")]
    #[serde(default)]
    pub seed: Option<u64>,
    #[cfg(feature = "test-hooks")]
    #[arg(long)]
    #[serde(default)]
    pub zero_noise: bool,
}

impl FinalizeArgs {
    fn noise(&self) -> NoiseMode {
        #[cfg(feature = "test-hooks")]
        {
            if self.zero_noise {
                return NoiseMode::ZeroNoise;
            }
            if let Some(seed) = self.seed {
                return NoiseMode::Seeded(seed);
            }
        }
        NoiseMode::Secure
    }
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// Directory holding one JSON document per session.
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[cfg(feature = "test-hooks")]
    #[arg(long, conflicts_with = "zero_noise")]
    pub seed: Option<u64>,
    #[cfg(feature = "test-hooks")]
    #[arg(long)]
    pub zero_noise: bool,
}

impl ServeArgs {
    fn noise(&self) -> NoiseMode {
        #[cfg(feature = "test-hooks")]
        {
            if self.zero_noise {
                return NoiseMode::ZeroNoise;
            }
            if let Some(seed) = self.seed {
                return NoiseMode::Seeded(seed);
            }
        }
        NoiseMode::Secure
    }
}

/// A saved sequence of steps. Relative paths resolve against the plan file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    #[serde(default)]
    pub session: Option<PathBuf>,
    pub steps: Vec<Step>,
}

impl Plan {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read plan {}", path.display()))?;
        let mut plan: Plan = serde_json::from_str(&text)
            .with_context(|| format!("invalid plan {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(session) = plan.session.as_mut() {
            resolve(session);
        }
        for step in &mut plan.steps {
            match step {
                Step::Init(args) => {
                    resolve(&mut args.data);
                    if let Some(codebook) = args.codebook.as_mut() {
                        resolve(codebook);
                    }
                }
                Step::Finalize(args) => {
                    if let Some(out) = args.out.as_mut() {
                        resolve(out);
                    }
                }
                _ => {}
            }
        }
        Ok(plan)
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    match run(cli, &mut stdout.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            report(&err);
            ExitCode::FAILURE
        }
    }
}

fn report(err: &anyhow::Error) {
    match err.downcast_ref::<SessionError>() {
        Some(session_err) => {
            eprintln!("error[{}]: {err:#}", session_err.code());
            if let Some(verdict) = session_err.verdict() {
                for code in &verdict.messages {
                    eprintln!("  {code}: {}", code.describe());
                }
            }
            if matches!(session_err, SessionError::AcknowledgementRequired(_)) {
                eprintln!("  rerun with --acknowledge to proceed anyway");
            }
        }
        None => eprintln!("error: {err:#}"),
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> anyhow::Result<()> {
    match cli.command {
        Command::Step(step) => {
            let session = cli.session.context("--session <FILE> is required")?;
            execute(&step, &session, out)
        }
        Command::Run { plan } => {
            let plan = Plan::load(&plan)?;
            let session = cli
                .session
                .or(plan.session.clone())
                .context("the plan names no session file and --session was not given")?;
            for (i, step) in plan.steps.iter().enumerate() {
                execute(step, &session, out).with_context(|| format!("plan step {}", i + 1))?;
            }
            Ok(())
        }
        Command::Serve(args) => serve(args),
    }
}

fn serve(args: ServeArgs) -> anyhow::Result<()> {
    let noise = args.noise();
    let state = match args.store {
        Some(dir) => crate::api::AppState::open(dir, noise)?,
        None => crate::api::AppState::new(None, noise),
    };
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(args.addr).await?;
        eprintln!("listening on {}", listener.local_addr()?);
        axum::serve(listener, crate::api::router(Arc::new(state))).await?;
        Ok(())
    })
}

pub fn load_session(path: &Path) -> anyhow::Result<Session> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read session {}", path.display()))?;
    Ok(Session::load(&text)?)
}

/// Replaces `path` only once the new contents are fully written.
pub fn write_atomically(path: &Path, contents: &str) -> anyhow::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, contents).with_context(|| format!("cannot write {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn print_verdict(out: &mut dyn Write, verdict: Option<&ParamVerdict>) -> anyhow::Result<()> {
    for code in verdict.map(|v| v.messages.as_slice()).unwrap_or_default() {
        writeln!(out, "warning: {code}: {}", code.describe())?;
    }
    Ok(())
}

fn print_warnings(out: &mut dyn Write, warnings: &[BudgetWarning]) -> anyhow::Result<()> {
    for w in warnings {
        match w {
            BudgetWarning::HeldRescaled => {
                writeln!(out, "note: held statistics were rescaled with the budget")?
            }
        }
    }
    Ok(())
}

/// Runs one step against the session file at `path`.
pub fn execute(step: &Step, path: &Path, out: &mut dyn Write) -> anyhow::Result<()> {
    if let Step::Init(args) = step {
        return init(args, path, out);
    }
    let mut session = load_session(path)?;
    match step {
        Step::Init(_) => unreachable!(),
        Step::Show { json } => {
            let view = SessionView::of(&session);
            if *json {
                writeln!(out, "{}", serde_json::to_string_pretty(&view)?)?;
            } else {
                write!(out, "{}", view.render())?;
            }
            return Ok(());
        }
        Step::Finalize(args) => return finalize(session, args, path, out),
        Step::Params(args) => {
            let report = session.edit_params(ParamsRequest {
                epsilon: args.epsilon,
                delta: args.delta,
                population_size: args.population,
                acknowledge_warnings: args.acknowledge,
            })?;
            print_verdict(out, report.verdict.as_ref())?;
            print_warnings(out, &report.warnings)?;
        }
        Step::AddStat(args) => {
            let id = session.add_statistic(args.to_request()?)?;
            writeln!(out, "added statistic {id}")?;
        }
        Step::RmStat { id } => {
            session.delete_statistic(StatisticId(*id))?;
            writeln!(out, "deleted statistic {id}")?;
        }
        Step::ErrorTarget { id, error } => session.set_error_target(StatisticId(*id), *error)?,
        Step::Hold { id, off } => session.set_hold(StatisticId(*id), !off)?,
        Step::Reserve { percent } => {
            let report = session.set_reserve(percent / 100.0)?;
            print_warnings(out, &report.warnings)?;
        }
        Step::Confidence { percent } => {
            if !(percent.is_finite() && *percent > 0.0 && *percent < 100.0) {
                bail!("confidence must be a percentage between 50 and 100");
            }
            session.set_confidence(1.0 - percent / 100.0)?;
        }
    }
    write_atomically(path, &session.save())?;
    write!(out, "{}", SessionView::of(&session).render())?;
    Ok(())
}

fn init(args: &InitArgs, path: &Path, out: &mut dyn Write) -> anyhow::Result<()> {
    if path.exists() && !args.force {
        bail!(
            "{} already exists; pass --force to replace it",
            path.display()
        );
    }
    let (epsilon, delta) = match (args.tier, args.epsilon, args.delta) {
        (Some(tier), _, _) => {
            let budget = recommend_params(tier).map_err(|refusal| anyhow!("{refusal}"))?;
            (budget.epsilon, budget.delta)
        }
        (None, Some(e), Some(d)) => (e, d),
        _ => bail!("give --epsilon and --delta, or --tier"),
    };
    let handle = load_csv(&args.data)?;
    let (mut session, verdict) = Session::create(
        handle,
        ParamsRequest {
            epsilon,
            delta,
            population_size: args.population,
            acknowledge_warnings: args.acknowledge,
        },
    )?;
    if let Some(codebook) = &args.codebook {
        session.set_codebook(load_codebook(codebook)?)?;
    }
    print_verdict(out, Some(&verdict))?;
    write_atomically(path, &session.save())?;
    write!(out, "{}", SessionView::of(&session).render())?;
    Ok(())
}

/// The spend is written to the session file before any release leaves the
/// process, so a crash cannot lead to a second, independent finalize.
fn finalize(
    mut session: Session,
    args: &FinalizeArgs,
    path: &Path,
    out: &mut dyn Write,
) -> anyhow::Result<()> {
    let already = session.phase() == Phase::Finalized;
    let mut rng = args.noise().source();
    session.finalize(&mut rng)?;
    if !already {
        write_atomically(path, &session.save())?;
    }
    let document = serde_json::to_string_pretty(&session.release_document())?;
    match &args.out {
        Some(target) => {
            write_atomically(target, &document)?;
            for release in session.releases() {
                writeln!(
                    out,
                    "{} {}({}): {}  (epsilon {:.6}, error {:.4})",
                    release.statistic_id,
                    release.statistic,
                    release.variable,
                    describe_value(&release.value),
                    release.epsilon_spent,
                    release.error_bound.value
                )?;
            }
            writeln!(out, "releases written to {}", target.display())?;
        }
        None => writeln!(out, "{document}")?,
    }
    Ok(())
}
