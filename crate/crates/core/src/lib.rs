//! Conversation analytics for recorded language-exchange sessions.
//!
//! Exported WebVTT transcripts are parsed ([`transcript`]), segmented into
//! turns, backchannels and silences ([`turns`]), and summarised as
//! per-speaker metrics and a speaker-to-speaker flow matrix ([`metrics`]).
//! [`timeline`] turns the same turns into per-speaker playback tracks and
//! maps instants to playback offsets. [`store`] persists cohorts and weekly
//! sessions on disk and derives progression reports, and [`api`] serves all
//! of it over HTTP.

pub mod api;
pub mod cli;
pub mod config;
pub mod error;
pub mod json;
pub mod metrics;
pub mod store;
pub mod text;
pub mod timeline;
pub mod transcript;
pub mod turns;

pub use config::AnalysisConfig;
pub use metrics::{compute_session_metrics, FlowMatrix, SessionMetrics, SpeakerMetrics};
pub use transcript::{parse_vtt, ParseIssue, Severity, Transcript};
pub use turns::{Turn, TurnKind, TurnSequence};
