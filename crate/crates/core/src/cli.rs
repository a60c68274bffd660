//! `tandem` command line.
//!
//! Exit codes: 0 success, 1 input error, 2 internal error.

use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::api::{self, AppState, ServiceOptions};
use crate::config::AnalysisConfig;
use crate::error::StoreError;
use crate::metrics::{compute_session_metrics, SessionMetrics};
use crate::store::SessionStore;
use crate::text::Language;
use crate::transcript::{self, Severity};

#[derive(Debug, Parser)]
#[command(name = "tandem", version, about = "Conversation metrics for recorded language-exchange sessions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricsFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Table,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute session metrics for a WebVTT transcript.
    Analyze {
        transcript: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: MetricsFormat,
        /// Output file; with `--format csv` the flow matrix goes next to it
        /// as `<stem>.flow.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report parse and sanity issues; exits 0 iff there are no errors.
    Validate { transcript: PathBuf },
    /// Run the HTTP service.
    Serve {
        #[arg(long, env = "TANDEM_DATA_DIR")]
        data_dir: PathBuf,
        #[arg(long, env = "TANDEM_LISTEN", default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        #[arg(long, env = "TANDEM_CONFIG")]
        config: Option<PathBuf>,
        /// Permissive cross-origin headers for dashboard development.
        #[arg(long, env = "TANDEM_CORS")]
        cors: bool,
    },
    /// Per-participant, per-week summary of a stored cohort.
    Report {
        #[arg(long, env = "TANDEM_DATA_DIR")]
        data_dir: PathBuf,
        #[arg(long)]
        cohort: String,
        #[arg(long)]
        week: Option<u32>,
        #[arg(long, value_enum, default_value = "table")]
        format: ReportFormat,
    },
}

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Input(_) => ExitCode::from(1),
            CliError::Internal(_) => ExitCode::from(2),
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(_) | StoreError::Validation(_) | StoreError::Conflict(_) => {
                CliError::Input(e.to_string())
            }
            StoreError::Io { .. } | StoreError::Corrupt { .. } => CliError::Internal(e.to_string()),
        }
    }
}

type CliResult = Result<(), CliError>;

pub fn run(cli: Cli) -> ExitCode {
    let result = match cli.command {
        Command::Analyze {
            transcript,
            config,
            format,
            out,
        } => analyze(&transcript, config.as_deref(), format, out.as_deref()),
        Command::Validate { transcript } => validate(&transcript),
        Command::Serve {
            data_dir,
            listen,
            config,
            cors,
        } => serve(&data_dir, listen, config.as_deref(), cors),
        Command::Report {
            data_dir,
            cohort,
            week,
            format,
        } => report(&data_dir, &cohort, week, format),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = match &e {
                CliError::Input(m) | CliError::Internal(m) => m,
            };
            eprintln!("tandem: {message}");
            e.exit_code()
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<AnalysisConfig, CliError> {
    match path {
        Some(p) => AnalysisConfig::from_file(p).map_err(|e| CliError::Input(e.to_string())),
        None => Ok(AnalysisConfig::default()),
    }
}

fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

fn source_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn write_output(out: Option<&Path>, body: &str) -> CliResult {
    match out {
        Some(path) => std::fs::write(path, body)
            .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(body.as_bytes())
            .map_err(|e| CliError::Internal(format!("writing output: {e}"))),
    }
}

fn analyze(path: &Path, config: Option<&Path>, format: MetricsFormat, out: Option<&Path>) -> CliResult {
    let config = load_config(config)?;
    let bytes = read_input(path)?;
    let (transcript, issues) = transcript::parse_vtt_bytes(&source_name(path), &bytes);
    for issue in &issues {
        eprintln!("{}: {issue}", path.display());
    }
    if transcript::has_errors(&issues) {
        return Err(CliError::Input(format!("{} could not be parsed", path.display())));
    }
    let metrics = compute_session_metrics(&transcript, &config);
    match format {
        MetricsFormat::Json => write_output(out, &metrics.to_canonical_json()),
        MetricsFormat::Csv => {
            let speakers = speakers_csv(&metrics)?;
            let flow = flow_csv(&metrics)?;
            match out {
                Some(path) => {
                    write_output(Some(path), &speakers)?;
                    write_output(Some(&flow_path(path)), &flow)
                }
                None => write_output(None, &format!("{speakers}\n{flow}")),
            }
        }
    }
}

/// `metrics.csv` -> `metrics.flow.csv`.
pub fn flow_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "metrics".into());
    out.with_file_name(format!("{stem}.flow.csv"))
}

pub const SPEAKER_CSV_COLUMNS: [&str; 14] = [
    "speaker",
    "speaking_ms",
    "share",
    "floor_turn_count",
    "backchannel_count",
    "mean_floor_turn_ms",
    "longest_floor_turn_ms",
    "word_count",
    "words_per_minute",
    "filled_pause_count",
    "long_pauses_after",
    "language_fr_ms",
    "language_en_ms",
    "language_unknown_ms",
];

fn csv_error(e: impl std::fmt::Display) -> CliError {
    CliError::Internal(format!("writing CSV: {e}"))
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String, CliError> {
    let bytes = w.into_inner().map_err(csv_error)?;
    String::from_utf8(bytes).map_err(csv_error)
}

pub fn speakers_csv(metrics: &SessionMetrics) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SPEAKER_CSV_COLUMNS).map_err(csv_error)?;
    for m in metrics.per_speaker.values() {
        let lang = |l: Language| m.language_ms.get(&l).copied().unwrap_or(0).to_string();
        w.write_record([
            m.speaker.clone(),
            m.speaking_ms.to_string(),
            m.share.to_string(),
            m.floor_turn_count.to_string(),
            m.backchannel_count.to_string(),
            m.mean_floor_turn_ms.to_string(),
            m.longest_floor_turn_ms.to_string(),
            m.word_count.to_string(),
            m.words_per_minute.to_string(),
            m.filled_pause_count.to_string(),
            m.long_pauses_after.to_string(),
            lang(Language::Fr),
            lang(Language::En),
            lang(Language::Unknown),
        ])
        .map_err(csv_error)?;
    }
    finish_csv(w)
}

/// Header `from,<speaker>...`; one row per source speaker.
pub fn flow_csv(metrics: &SessionMetrics) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let flow = &metrics.flow;
    w.write_record(std::iter::once("from").chain(flow.speakers.iter().map(String::as_str)))
        .map_err(csv_error)?;
    for (speaker, row) in flow.speakers.iter().zip(&flow.counts) {
        w.write_record(std::iter::once(speaker.clone()).chain(row.iter().map(u64::to_string)))
            .map_err(csv_error)?;
    }
    finish_csv(w)
}

fn validate(path: &Path) -> CliResult {
    let bytes = read_input(path)?;
    let (transcript, mut issues) = transcript::parse_vtt_bytes(&source_name(path), &bytes);
    if !transcript::has_errors(&issues) {
        issues.extend(transcript::validate(&transcript));
    }
    for issue in &issues {
        println!("{issue}");
    }
    let errors = issues.iter().filter(|i| i.severity == Severity::Error).count();
    println!(
        "{}: {} cues, {} speakers, {} errors, {} warnings",
        path.display(),
        transcript.cues.len(),
        transcript.speakers.len(),
        errors,
        issues.len() - errors
    );
    if errors > 0 {
        Err(CliError::Input(format!("{} has {errors} error(s)", path.display())))
    } else {
        Ok(())
    }
}

fn serve(data_dir: &Path, listen: SocketAddr, config: Option<&Path>, cors: bool) -> CliResult {
    let config = load_config(config)?;
    let store = SessionStore::open(data_dir)?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Internal(format!("starting runtime: {e}")))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(listen)
            .await
            .map_err(|e| CliError::Input(format!("cannot listen on {listen}: {e}")))?;
        let addr = listener.local_addr().unwrap_or(listen);
        tracing::info!(%addr, data_dir = %data_dir.display(), "serving");
        eprintln!("tandem: listening on http://{addr}");
        let options = ServiceOptions {
            cors,
            ..ServiceOptions::default()
        };
        api::serve(listener, AppState::new(store, config), &options, shutdown_signal())
            .await
            .map_err(|e| CliError::Internal(format!("server error: {e}")))?;
        eprintln!("tandem: shut down");
        Ok(())
    })
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = terminate => {},
    }
}

/// One row per participant per stored week they spoke in.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub participant_id: String,
    pub display_name: String,
    pub week_number: u32,
    pub share: f64,
    pub floor_turn_count: usize,
    pub speaking_ms: u64,
    pub filled_pause_count: usize,
}

pub fn report_rows(store: &SessionStore, cohort_id: &str, week: Option<u32>) -> Result<Vec<ReportRow>, StoreError> {
    let cohort = store.get_cohort(cohort_id)?;
    let mut rows = Vec::new();
    for p in &cohort.participants {
        let report = store.progression_report(&p.participant_id, cohort_id)?;
        rows.extend(
            report
                .points
                .into_iter()
                .filter(|pt| week.is_none_or(|w| w == pt.week_number))
                .map(|pt| ReportRow {
                    participant_id: p.participant_id.clone(),
                    display_name: p.display_name.clone(),
                    week_number: pt.week_number,
                    share: pt.share,
                    floor_turn_count: pt.floor_turn_count,
                    speaking_ms: pt.speaking_ms,
                    filled_pause_count: pt.filled_pause_count,
                }),
        );
    }
    Ok(rows)
}

fn report(data_dir: &Path, cohort_id: &str, week: Option<u32>, format: ReportFormat) -> CliResult {
    if !data_dir.is_dir() {
        return Err(CliError::Input(format!("data directory {} does not exist", data_dir.display())));
    }
    let store = SessionStore::open(data_dir)?;
    let rows = report_rows(&store, cohort_id, week)?;
    let header = ["participant_id", "display_name", "week", "share", "floor_turns", "speaking_ms", "filled_pauses"];
    let cells: Vec<[String; 7]> = rows
        .iter()
        .map(|r| {
            [
                r.participant_id.clone(),
                r.display_name.clone(),
                r.week_number.to_string(),
                format!("{:.4}", r.share),
                r.floor_turn_count.to_string(),
                r.speaking_ms.to_string(),
                r.filled_pause_count.to_string(),
            ]
        })
        .collect();
    let body = match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(header).map_err(csv_error)?;
            for row in &cells {
                w.write_record(row).map_err(csv_error)?;
            }
            finish_csv(w)?
        }
        ReportFormat::Table => {
            let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
            for row in &cells {
                for (w, c) in widths.iter_mut().zip(row) {
                    *w = (*w).max(c.chars().count());
                }
            }
            let line = |row: &[String]| {
                row.iter()
                    .zip(&widths)
                    .map(|(c, w)| format!("{c:<w$}"))
                    .collect::<Vec<_>>()
                    .join("  ")
                    .trim_end()
                    .to_string()
            };
            let mut out = line(&header.map(String::from));
            out.push('\n');
            for row in &cells {
                out.push_str(&line(row));
                out.push('\n');
            }
            out
        }
    };
    write_output(None, &body)
}
