//! C ABI for `tandem-core`.
//!
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `*_free` function. Every fallible call returns a
//! [`TandemStatus`]; on failure [`tandem_last_error`] describes what went
//! wrong on the calling thread. Strings handed out by the library are
//! NUL-terminated UTF-8 and must be released with [`tandem_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use tandem_core::json::to_canonical_string;
use tandem_core::metrics::session_metrics_from_turns;
use tandem_core::timeline::{build_timeline, seek};
use tandem_core::transcript::{has_errors, parse_vtt_bytes, Transcript};
use tandem_core::turns::{analyze_turns, TurnSequence};
use tandem_core::{AnalysisConfig, SessionMetrics};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TandemStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The transcript has error-severity parse issues.
    ParseError = 3,
    /// The configuration text was rejected.
    ConfigError = 4,
    /// A Rust panic was caught at the boundary.
    Internal = 5,
}

/// A parsed transcript.
pub struct TandemTranscript(Transcript);

/// Analysis parameters.
pub struct TandemConfig(AnalysisConfig);

/// Turns and metrics of one transcript.
pub struct TandemAnalysis {
    speakers: Vec<String>,
    turns: TurnSequence,
    metrics: SessionMetrics,
}

/// Where playback should go for an instant. Cue positions are -1 when there
/// is no such cue.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TandemSeek {
    pub offset_ms: u64,
    pub active_cue: i64,
    pub next_cue: i64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let message = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(message).unwrap_or_default());
}

fn guard(f: impl FnOnce() -> Result<(), (TandemStatus, String)>) -> TandemStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            TandemStatus::Ok
        }
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal error: panic caught at the C boundary");
            TandemStatus::Internal
        }
    }
}

fn null(what: &str) -> (TandemStatus, String) {
    (TandemStatus::NullArgument, format!("{what} is null"))
}

fn emit_string(s: String, out: *mut *mut c_char) -> Result<(), (TandemStatus, String)> {
    let c = CString::new(s).map_err(|_| (TandemStatus::Internal, "output contains NUL".to_string()))?;
    // SAFETY: caller guarantees `out` is valid for writes; checked non-null.
    unsafe { *out = c.into_raw() };
    Ok(())
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn tandem_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn tandem_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn tandem_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses `len` bytes of WebVTT. Warnings are tolerated; error-severity
/// issues fail with `ParseError` and list the issues in the last error.
///
/// # Safety
/// `data` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tandem_transcript_parse(
    data: *const u8,
    len: usize,
    out: *mut *mut TandemTranscript,
) -> TandemStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if data.is_null() && len > 0 {
            return Err(null("data"));
        }
        let bytes = if len == 0 { &[][..] } else { std::slice::from_raw_parts(data, len) };
        let (transcript, issues) = parse_vtt_bytes("input.vtt", bytes);
        if has_errors(&issues) {
            let lines: Vec<String> = issues.iter().filter(|i| i.is_error()).map(|i| i.to_string()).collect();
            return Err((TandemStatus::ParseError, lines.join("\n")));
        }
        *out = Box::into_raw(Box::new(TandemTranscript(transcript)));
        Ok(())
    })
}

/// # Safety
/// `t` must be null or a live handle from [`tandem_transcript_parse`].
#[no_mangle]
pub unsafe extern "C" fn tandem_transcript_free(t: *mut TandemTranscript) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Number of cues; 0 for a null handle.
///
/// # Safety
/// `t` must be null or a live transcript handle.
#[no_mangle]
pub unsafe extern "C" fn tandem_transcript_cue_count(t: *const TandemTranscript) -> usize {
    t.as_ref().map_or(0, |t| t.0.cues.len())
}

/// End of the last cue in milliseconds; 0 for a null handle.
///
/// # Safety
/// `t` must be null or a live transcript handle.
#[no_mangle]
pub unsafe extern "C" fn tandem_transcript_duration_ms(t: *const TandemTranscript) -> u64 {
    t.as_ref().map_or(0, |t| t.0.duration_ms)
}

/// The transcript as canonical JSON.
///
/// # Safety
/// `t` must be a live transcript handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tandem_transcript_json(t: *const TandemTranscript, out: *mut *mut c_char) -> TandemStatus {
    guard(|| {
        let t = t.as_ref().ok_or_else(|| null("transcript"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        emit_string(to_canonical_string(&t.0), out)
    })
}

/// Maps an instant to a playback offset and cue positions.
///
/// # Safety
/// `t` must be a live transcript handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tandem_seek(t: *const TandemTranscript, t_ms: u64, out: *mut TandemSeek) -> TandemStatus {
    guard(|| {
        let t = t.as_ref().ok_or_else(|| null("transcript"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let r = seek(&t.0, t_ms);
        let pos = |c: Option<usize>| c.map_or(-1, |i| i as i64);
        *out = TandemSeek {
            offset_ms: r.offset_ms,
            active_cue: pos(r.active_cue),
            next_cue: pos(r.next_cue),
        };
        Ok(())
    })
}

/// Default parameters. Never null.
#[no_mangle]
pub extern "C" fn tandem_config_default() -> *mut TandemConfig {
    Box::into_raw(Box::new(TandemConfig(AnalysisConfig::default())))
}

/// Parameters from TOML text; keys left out keep their defaults.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tandem_config_from_toml(toml: *const c_char, out: *mut *mut TandemConfig) -> TandemStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if toml.is_null() {
            return Err(null("toml"));
        }
        let text = CStr::from_ptr(toml)
            .to_str()
            .map_err(|e| (TandemStatus::InvalidUtf8, e.to_string()))?;
        let cfg = AnalysisConfig::from_toml_str(text).map_err(|e| (TandemStatus::ConfigError, e.to_string()))?;
        *out = Box::into_raw(Box::new(TandemConfig(cfg)));
        Ok(())
    })
}

/// # Safety
/// `c` must be null or a live config handle.
#[no_mangle]
pub unsafe extern "C" fn tandem_config_free(c: *mut TandemConfig) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Segments turns and computes metrics. A null `config` means defaults.
///
/// # Safety
/// `t` must be a live transcript handle, `config` null or a live config
/// handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tandem_analyze(
    t: *const TandemTranscript,
    config: *const TandemConfig,
    out: *mut *mut TandemAnalysis,
) -> TandemStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let t = t.as_ref().ok_or_else(|| null("transcript"))?;
        let default;
        let cfg = match config.as_ref() {
            Some(c) => &c.0,
            None => {
                default = AnalysisConfig::default();
                &default
            }
        };
        let turns = analyze_turns(&t.0, cfg);
        let metrics = session_metrics_from_turns(&turns, cfg);
        *out = Box::into_raw(Box::new(TandemAnalysis {
            speakers: t.0.speakers.clone(),
            turns,
            metrics,
        }));
        Ok(())
    })
}

/// # Safety
/// `a` must be null or a live analysis handle.
#[no_mangle]
pub unsafe extern "C" fn tandem_analysis_free(a: *mut TandemAnalysis) {
    if !a.is_null() {
        drop(Box::from_raw(a));
    }
}

/// Session metrics as canonical JSON, byte-identical to the CLI and API.
///
/// # Safety
/// `a` must be a live analysis handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tandem_analysis_metrics_json(a: *const TandemAnalysis, out: *mut *mut c_char) -> TandemStatus {
    guard(|| {
        let a = a.as_ref().ok_or_else(|| null("analysis"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        emit_string(a.metrics.to_canonical_json(), out)
    })
}

/// Timeline tracks as canonical JSON, one per speaker in order of first
/// appearance.
///
/// # Safety
/// `a` must be a live analysis handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tandem_analysis_timeline_json(a: *const TandemAnalysis, out: *mut *mut c_char) -> TandemStatus {
    guard(|| {
        let a = a.as_ref().ok_or_else(|| null("analysis"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let tracks = build_timeline(&a.turns, &a.speakers).map_err(|e| (TandemStatus::Internal, e.to_string()))?;
        emit_string(to_canonical_string(&tracks), out)
    })
}
