//! `sibyl` command line: serve the API, or run one engine operation and
//! print it as a table or as the same JSON the API returns.

use std::ffi::OsString;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::dataio::{load_all, write_demo_corpus, DataPaths};
use crate::engine::{ContributionQuery, ContributionView, Engine, EngineConfig, DEFAULT_SEED};
use crate::error::Error;
use crate::explain::DEFAULT_IMPORTANCE_REPEATS;
use crate::model::RiskScore;
use crate::neighbors::{DEFAULT_K, MAX_K};
use crate::present::{PresentedContribution, PresentedKind};
use crate::service::{ServiceConfig, DEFAULT_PORT};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Widest description printed in table output.
pub const DESCRIPTION_WIDTH: usize = 60;

#[derive(Debug, Parser)]
#[command(name = "sibyl", version, about = "Explanations for an additive risk model")]
pub struct Cli {
    #[command(flatten)]
    pub data: DataArgs,

    #[arg(long, value_enum, default_value_t = Format::Table, global = true)]
    pub format: Format,

    /// Enable the similar-cases view.
    #[arg(long, global = true, env = "SIBYL_REVIEW_MODE")]
    pub review_mode: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// Directory holding model.json, factors.json, cases.csv, outcomes.csv and events.csv.
    #[arg(long, global = true, env = "SIBYL_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    #[arg(long, global = true, env = "SIBYL_MODEL")]
    pub model: Option<PathBuf>,
    #[arg(long, global = true, env = "SIBYL_FACTORS")]
    pub factors: Option<PathBuf>,
    #[arg(long, global = true, env = "SIBYL_CASES")]
    pub cases: Option<PathBuf>,
    #[arg(long, global = true, env = "SIBYL_OUTCOMES")]
    pub outcomes: Option<PathBuf>,
    #[arg(long, global = true, env = "SIBYL_EVENTS")]
    pub events: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Serve the HTTP API (and the UI, if built).
    Serve {
        #[arg(long, env = "SIBYL_PORT", default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, env = "SIBYL_HOST", default_value = "127.0.0.1")]
        host: IpAddr,
        #[arg(long, env = "SIBYL_CORS_ORIGIN")]
        cors_origin: Option<String>,
        #[arg(long, env = "SIBYL_STATIC_DIR")]
        static_dir: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_IMPORTANCE_REPEATS as u32, value_parser = clap::value_parser!(u32).range(1..))]
        repeats: u32,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Factor contributions for one case.
    Explain {
        #[arg(long)]
        case_id: String,
        /// Rows to show, largest first.
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        top: Option<u32>,
        /// Separate risk and protective factors.
        #[arg(long, conflicts_with = "top")]
        split: bool,
    },
    /// Global permutation importance.
    Importance {
        #[arg(long, default_value_t = DEFAULT_IMPORTANCE_REPEATS as u32, value_parser = clap::value_parser!(u32).range(1..))]
        repeats: u32,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Removal rate and factor distributions among cases with one score.
    Distributions {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=20))]
        score: u8,
        /// Comma-separated factor names.
        #[arg(long, value_delimiter = ',')]
        factors: Vec<String>,
    },
    /// Nearest past cases and their timelines (requires --review-mode).
    Similar {
        #[arg(long)]
        case_id: String,
        #[arg(long, default_value_t = DEFAULT_K as u8, value_parser = clap::value_parser!(u8).range(1..=MAX_K as i64))]
        k: u8,
    },
    /// Load and validate all input files.
    Validate,
    /// Write a deterministic synthetic corpus.
    Demo {
        #[arg(long, default_value_t = 500)]
        n_cases: usize,
        #[arg(long, default_value_t = 24)]
        n_factors: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Data(Error),
    Io(std::io::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e)
    }
}

type Outcome = std::result::Result<i32, Failure>;

impl DataArgs {
    fn paths(&self) -> std::result::Result<DataPaths, Failure> {
        let defaults = self.data_dir.as_ref().map(DataPaths::in_dir);
        let pick = |explicit: &Option<PathBuf>, default: Option<&PathBuf>, flag: &str, env: &str| {
            explicit.clone().or_else(|| default.cloned()).ok_or_else(|| {
                Failure::Usage(format!("missing input file: pass --{flag}, set {env}, or use --data-dir"))
            })
        };
        let d = defaults.as_ref();
        Ok(DataPaths {
            model: pick(&self.model, d.map(|d| &d.model), "model", "SIBYL_MODEL")?,
            factors: pick(&self.factors, d.map(|d| &d.factors), "factors", "SIBYL_FACTORS")?,
            cases: pick(&self.cases, d.map(|d| &d.cases), "cases", "SIBYL_CASES")?,
            outcomes: pick(&self.outcomes, d.map(|d| &d.outcomes), "outcomes", "SIBYL_OUTCOMES")?,
            events: pick(&self.events, d.map(|d| &d.events), "events", "SIBYL_EVENTS")?,
        })
    }
}

/// Shortens `text` to at most `width` characters, ending in an ellipsis
/// when cut.
pub fn truncate(text: &str, width: usize) -> String {
    if text.chars().count() <= width {
        text.to_string()
    } else {
        let mut s: String = text.chars().take(width.saturating_sub(1)).collect();
        s.push('…');
        s
    }
}

fn json<T: Serialize>(out: &mut dyn Write, value: &T) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)
}

fn contribution_rows(out: &mut dyn Write, rows: &[PresentedContribution]) -> std::io::Result<()> {
    for r in rows {
        let (text, value) = match r.kind {
            PresentedKind::Binary => (r.displayed_value.as_str(), ""),
            _ => (r.description.as_str(), r.displayed_value.as_str()),
        };
        let line = format!(
            "  {:>+10.4}  {:<10}  {:<width$}  {}",
            r.contribution,
            format!("{:?}", r.label).to_lowercase(),
            truncate(text, DESCRIPTION_WIDTH),
            value,
            width = DESCRIPTION_WIDTH,
        );
        writeln!(out, "{}", line.trim_end())?;
    }
    Ok(())
}

fn open_engine(cli: &Cli, repeats: usize, seed: u64) -> std::result::Result<Engine, Failure> {
    let config = EngineConfig {
        review_mode: cli.review_mode,
        importance_repeats: repeats,
        seed,
    };
    Ok(Engine::open(&cli.data.paths()?, config)?)
}

fn default_engine(cli: &Cli) -> std::result::Result<Engine, Failure> {
    open_engine(cli, DEFAULT_IMPORTANCE_REPEATS, DEFAULT_SEED)
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Outcome {
    match &cli.command {
        Command::Serve {
            port,
            host,
            cors_origin,
            static_dir,
            repeats,
            seed,
        } => {
            let engine = open_engine(cli, *repeats as usize, *seed)?;
            let _ = tracing_subscriber::fmt()
                .with_writer(std::io::stderr)
                .with_ansi(std::io::IsTerminal::is_terminal(&std::io::stderr()))
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env()
                        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
                )
                .try_init();
            let config = ServiceConfig {
                cors_origin: cors_origin.clone(),
                static_dir: static_dir.clone(),
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(crate::service::serve(
                Arc::new(engine),
                SocketAddr::new(*host, *port),
                config,
            ))?;
            Ok(EXIT_OK)
        }
        Command::Explain { case_id, top, split } => {
            let engine = default_engine(cli)?;
            let q = ContributionQuery {
                view: if *split { ContributionView::Split } else { ContributionView::Top },
                top_k: top.map(|t| t as usize),
                ..Default::default()
            };
            let p = engine.contributions(case_id, &q)?;
            if cli.format == Format::Json {
                json(out, &p)?;
                return Ok(EXIT_OK);
            }
            writeln!(
                out,
                "case {}  score {}  raw {:.4}  base {:.4}",
                p.case_id, p.score, p.raw_output, p.base_value
            )?;
            if let Some(rows) = &p.rows {
                writeln!(out, "top {} of {} factors", rows.len(), p.total_factors)?;
                contribution_rows(out, rows)?;
            }
            if let (Some(risk), Some(protective)) = (&p.risk, &p.protective) {
                writeln!(out, "risk factors ({})", risk.len())?;
                contribution_rows(out, risk)?;
                writeln!(out, "protective factors ({})", protective.len())?;
                contribution_rows(out, protective)?;
            }
            Ok(EXIT_OK)
        }
        Command::Importance { repeats, seed } => {
            let engine = open_engine(cli, *repeats as usize, *seed)?;
            let report = engine.importance();
            if cli.format == Format::Json {
                json(out, report)?;
                return Ok(EXIT_OK);
            }
            writeln!(
                out,
                "permutation importance ({}, {} repeats, seed {}, baseline {:.6})",
                report.metric_name, report.repeats, report.seed, report.baseline_loss
            )?;
            for (i, e) in report.entries.iter().enumerate() {
                let bar = "#".repeat((e.relative_importance * 30.0).round() as usize);
                writeln!(
                    out,
                    "{:>4}  {:<30}  {:>6.3}  {:<30}  {:.6}",
                    i + 1,
                    truncate(&e.factor, 30),
                    e.relative_importance,
                    bar,
                    e.raw_importance
                )?;
            }
            Ok(EXIT_OK)
        }
        Command::Distributions { score, factors } => {
            let score = RiskScore::new(*score).map_err(|e| Failure::Usage(e.to_string()))?;
            let engine = default_engine(cli)?;
            let only = (!factors.is_empty()).then_some(factors.as_slice());
            let bundle = engine.distributions(score, only)?;
            if cli.format == Format::Json {
                json(out, &bundle)?;
                return Ok(EXIT_OK);
            }
            let s = &bundle.slice;
            match s.removal_rate_pct {
                Some(rate) => writeln!(
                    out,
                    "score {}: {} cases, {} removed ({rate:.1}%)",
                    s.score, s.case_count, s.removed_count
                )?,
                None => writeln!(out, "score {}: no cases", s.score)?,
            }
            for f in &bundle.factors {
                use crate::distributions::DistributionStats as D;
                let summary = match &f.stats {
                    D::Binary { pct_true: Some(p) } => format!("{p:.1}% true"),
                    D::Numeric { box_stats: Some(b) } => format!(
                        "min {} q1 {} median {} q3 {} max {} (global {}..{})",
                        b.slice_min, b.q1, b.median, b.q3, b.slice_max, b.global_min, b.global_max
                    ),
                    D::Categorical { segments: Some(seg) } => seg
                        .segments
                        .iter()
                        .map(|s| format!("{} {:.1}%", s.label, s.pct))
                        .collect::<Vec<_>>()
                        .join(", "),
                    _ => "no data".to_string(),
                };
                writeln!(out, "  {:<40}  {summary}", truncate(&f.factor, 40))?;
            }
            Ok(EXIT_OK)
        }
        Command::Similar { case_id, k } => {
            if !cli.review_mode {
                return Err(Failure::Usage("`similar` requires --review-mode".into()));
            }
            let engine = default_engine(cli)?;
            let r = engine.similar(case_id, Some(*k as usize))?;
            if cli.format == Format::Json {
                json(out, &r)?;
                return Ok(EXIT_OK);
            }
            writeln!(out, "cases most similar to {}", r.case_id)?;
            for (i, n) in r.neighbors.iter().enumerate() {
                writeln!(out, "{:>4}  {:<12}  distance {:.4}", i + 1, n.case_id, n.distance)?;
            }
            if r.truncated {
                writeln!(out, "(fewer cases available than requested)")?;
            }
            match (r.axis_start, r.axis_end) {
                (Some(a), Some(b)) => writeln!(out, "timeline {a} .. {b}")?,
                _ => writeln!(out, "no events recorded")?,
            }
            for t in &r.timelines {
                let events: Vec<_> = t.events.iter().map(|e| format!("{} {}", e.date, e.kind.as_str())).collect();
                writeln!(out, "  {:<12}  {}", t.case_id, events.join(", "))?;
            }
            Ok(EXIT_OK)
        }
        Command::Validate => {
            let (report, _) = load_all(&cli.data.paths()?);
            if cli.format == Format::Json {
                json(out, &report)?;
            } else {
                writeln!(out, "{report}")?;
            }
            Ok(if report.ok { EXIT_OK } else { EXIT_DATA })
        }
        Command::Demo {
            n_cases,
            n_factors,
            seed,
            out: dir,
        } => {
            let paths = write_demo_corpus(dir, *n_cases, *n_factors, *seed)?;
            if cli.format == Format::Json {
                json(
                    out,
                    &serde_json::json!({
                        "model": paths.model, "factors": paths.factors, "cases": paths.cases,
                        "outcomes": paths.outcomes, "events": paths.events,
                    }),
                )?;
            } else {
                writeln!(out, "wrote {n_cases} cases with {n_factors} factors to {}", dir.display())?;
            }
            Ok(EXIT_OK)
        }
    }
}

/// Runs one invocation and returns its exit code.
pub fn run_cli<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Data(Error::Validation(report))) => {
            let _ = writeln!(err, "{report}");
            EXIT_DATA
        }
        Err(Failure::Data(e)) => {
            let _ = writeln!(err, "error: {}: {e}", e.code());
            EXIT_DATA
        }
        Err(Failure::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => EXIT_OK,
        Err(Failure::Io(e)) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_DATA
        }
    }
}
