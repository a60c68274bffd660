//! WebVTT transcript ingestion.
//!
//! Accepts the Zoom transcript dialect (numbered cues, `HH:MM:SS.mmm`
//! timestamps, `Name: text` payloads) as well as generic WebVTT (optional
//! hours, arbitrary cue identifiers, cue settings, `NOTE`/`STYLE`/`REGION`
//! blocks). Parsing never fails outright: problems are reported as
//! [`ParseIssue`]s next to whatever could be recovered.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Label given to cues whose payload carries no `Name: ` prefix.
pub const UNKNOWN_SPEAKER: &str = "?";

/// A speaker prefix is only recognised when its colon sits within this many
/// characters of the start of the payload.
const SPEAKER_PREFIX_MAX_CHARS: usize = 64;

/// Longest cue accepted by [`validate`] before it is flagged.
const OVERLONG_CUE_MS: u64 = 120_000;
const UNKNOWN_RATIO_LIMIT: f64 = 0.40;
const MIN_SPEECH_RATIO: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawCue {
    /// Numeric cue identifier line, when the source carried one.
    pub index: Option<u32>,
    pub start_ms: u64,
    pub end_ms: u64,
    /// Speaker label, or [`UNKNOWN_SPEAKER`].
    pub speaker: String,
    pub text: String,
}

impl RawCue {
    pub fn duration_ms(&self) -> u64 {
        self.end_ms - self.start_ms
    }

    pub fn has_known_speaker(&self) -> bool {
        self.speaker != UNKNOWN_SPEAKER
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub source_name: String,
    pub cues: Vec<RawCue>,
    /// Distinct speaker labels in order of first appearance.
    pub speakers: Vec<String>,
    pub duration_ms: u64,
}

impl Transcript {
    pub fn empty(source_name: impl Into<String>) -> Self {
        Transcript {
            source_name: source_name.into(),
            cues: Vec::new(),
            speakers: Vec::new(),
            duration_ms: 0,
        }
    }

    /// Builds a transcript from cues, sorting them and deriving the speaker
    /// list and duration. Returns `true` alongside when sorting moved a cue.
    fn from_cues(source_name: String, mut cues: Vec<RawCue>) -> (Self, bool) {
        let was_sorted = cues
            .windows(2)
            .all(|w| (w[0].start_ms, w[0].end_ms) <= (w[1].start_ms, w[1].end_ms));
        // stable: equal (start, end) keep input order
        cues.sort_by_key(|c| (c.start_ms, c.end_ms));
        let mut transcript = Transcript {
            source_name,
            cues,
            speakers: Vec::new(),
            duration_ms: 0,
        };
        transcript.refresh_derived();
        (transcript, !was_sorted)
    }

    /// Builds a transcript from already-parsed cues. Cues are re-sorted and
    /// the speaker list recomputed.
    pub fn from_raw_cues(source_name: impl Into<String>, cues: Vec<RawCue>) -> Self {
        Self::from_cues(source_name.into(), cues).0
    }

    fn refresh_derived(&mut self) {
        let mut seen = HashSet::new();
        self.speakers = self
            .cues
            .iter()
            .filter(|c| seen.insert(c.speaker.as_str()))
            .map(|c| c.speaker.clone())
            .collect();
        self.duration_ms = self.cues.iter().map(|c| c.end_ms).max().unwrap_or(0);
    }

    pub fn is_empty(&self) -> bool {
        self.cues.is_empty()
    }

    /// Canonical WebVTT rendering: numbered cues, two-digit hours and a
    /// `Speaker: text` payload on every cue (the unknown speaker included,
    /// so that re-parsing cannot pick up a prefix hidden in the text).
    pub fn to_vtt(&self) -> String {
        let mut out = String::from("WEBVTT\n\n");
        for (n, cue) in self.cues.iter().enumerate() {
            out.push_str(&format!(
                "{}\n{} --> {}\n{}: {}\n\n",
                n + 1,
                format_timestamp(cue.start_ms),
                format_timestamp(cue.end_ms),
                cue.speaker,
                cue.text
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Severity::Warning => f.write_str("warning"),
            Severity::Error => f.write_str("error"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseIssue {
    /// 1-based source line; 0 for issues about the transcript as a whole.
    pub line_number: usize,
    pub severity: Severity,
    pub message: String,
}

impl ParseIssue {
    fn warning(line_number: usize, message: impl Into<String>) -> Self {
        ParseIssue {
            line_number,
            severity: Severity::Warning,
            message: message.into(),
        }
    }

    fn error(line_number: usize, message: impl Into<String>) -> Self {
        ParseIssue {
            line_number,
            severity: Severity::Error,
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for ParseIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line_number == 0 {
            write!(f, "{}: {}", self.severity, self.message)
        } else {
            write!(f, "line {}: {}: {}", self.line_number, self.severity, self.message)
        }
    }
}

pub fn has_errors(issues: &[ParseIssue]) -> bool {
    issues.iter().any(ParseIssue::is_error)
}

/// Parses raw bytes. Invalid UTF-8 sequences are replaced and reported as a
/// warning rather than rejected.
pub fn parse_vtt_bytes(source_name: &str, bytes: &[u8]) -> (Transcript, Vec<ParseIssue>) {
    match std::str::from_utf8(bytes) {
        Ok(text) => parse_vtt(source_name, text),
        Err(_) => {
            let text = String::from_utf8_lossy(bytes);
            let (transcript, mut issues) = parse_vtt(source_name, &text);
            issues.insert(
                0,
                ParseIssue::warning(0, "input is not valid UTF-8; invalid sequences replaced"),
            );
            (transcript, issues)
        }
    }
}

/// Parses WebVTT text into a sorted, speaker-attributed transcript.
pub fn parse_vtt(source_name: &str, input: &str) -> (Transcript, Vec<ParseIssue>) {
    let input = input.strip_prefix('\u{feff}').unwrap_or(input);
    // Line terminators: CRLF, LF or lone CR.
    let normalized;
    let input = if input.contains('\r') {
        normalized = input.replace("\r\n", "\n").replace('\r', "\n");
        normalized.as_str()
    } else {
        input
    };
    let lines: Vec<(usize, &str)> = input
        .split('\n')
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .collect();

    let mut issues = Vec::new();
    let is_blank = |l: &str| l.trim().is_empty();

    let Some(header_pos) = lines.iter().position(|(_, l)| !is_blank(l)) else {
        issues.push(ParseIssue::error(1, "missing WEBVTT header (empty input)"));
        return (Transcript::empty(source_name), issues);
    };
    let (header_line, header) = lines[header_pos];
    if !header.trim_start().starts_with("WEBVTT") {
        issues.push(ParseIssue::error(header_line, "missing WEBVTT header"));
        return (Transcript::empty(source_name), issues);
    }

    // Group the remaining lines into blank-separated blocks; the first block
    // is the header block itself.
    let mut blocks: Vec<&[(usize, &str)]> = Vec::new();
    let mut rest = &lines[header_pos..];
    loop {
        while let Some(((_, l), tail)) = rest.split_first() {
            if is_blank(l) {
                rest = tail;
            } else {
                break;
            }
        }
        if rest.is_empty() {
            break;
        }
        let len = rest.iter().position(|(_, l)| is_blank(l)).unwrap_or(rest.len());
        blocks.push(&rest[..len]);
        rest = &rest[len..];
    }

    let mut cues = Vec::new();
    for block in blocks.into_iter().skip(1) {
        if let Some(cue) = parse_block(block, &mut issues) {
            cues.push(cue);
        }
    }

    let (transcript, resorted) = Transcript::from_cues(source_name.to_string(), cues);
    if resorted {
        issues.push(ParseIssue::warning(0, "cues were out of order and have been re-sorted"));
    }
    let mut max_end = 0u64;
    for (pos, cue) in transcript.cues.iter().enumerate() {
        if pos > 0 && cue.start_ms < max_end {
            issues.push(ParseIssue::warning(
                0,
                format!(
                    "cue {} ({}) overlaps earlier speech",
                    pos + 1,
                    format_timestamp(cue.start_ms)
                ),
            ));
        }
        max_end = max_end.max(cue.end_ms);
    }
    (transcript, issues)
}

fn parse_block(block: &[(usize, &str)], issues: &mut Vec<ParseIssue>) -> Option<RawCue> {
    let (first_no, first) = block[0];
    let first_trimmed = first.trim();
    let timing_pos = if first.contains("-->") {
        0
    } else if block.len() > 1 && block[1].1.contains("-->") {
        1
    } else {
        if ["NOTE", "STYLE", "REGION"]
            .iter()
            .any(|kw| first_trimmed == *kw || first_trimmed.starts_with(&format!("{kw} ")))
        {
            return None;
        }
        issues.push(ParseIssue::error(
            first_no,
            "cue block has no timestamp line; cue skipped",
        ));
        return None;
    };

    let index = if timing_pos == 1 {
        first_trimmed.parse::<u32>().ok()
    } else {
        None
    };

    let (timing_no, timing) = block[timing_pos];
    let (start_ms, end_ms) = match parse_timing_line(timing) {
        Some(t) => t,
        None => {
            issues.push(ParseIssue::error(
                timing_no,
                format!("malformed timestamp line {:?}; cue skipped", timing.trim()),
            ));
            return None;
        }
    };
    if start_ms >= end_ms {
        issues.push(ParseIssue::error(
            timing_no,
            "cue end is not after its start; cue skipped",
        ));
        return None;
    }

    let payload = &block[timing_pos + 1..];
    let Some(((_, first_payload), more)) = payload.split_first() else {
        issues.push(ParseIssue::warning(timing_no, "cue has an empty payload; dropped"));
        return None;
    };
    let (speaker, head) = match split_speaker_prefix(first_payload) {
        Some((name, text)) => (name.to_string(), text),
        None => (UNKNOWN_SPEAKER.to_string(), *first_payload),
    };
    let text = std::iter::once(head)
        .chain(more.iter().map(|(_, l)| *l))
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join(" ");
    if text.is_empty() {
        issues.push(ParseIssue::warning(timing_no, "cue has an empty payload; dropped"));
        return None;
    }
    Some(RawCue {
        index,
        start_ms,
        end_ms,
        speaker,
        text,
    })
}

/// Splits `Name: text`. The first colon must be followed by a space and lie
/// within the first 64 characters; the name must be non-empty.
fn split_speaker_prefix(line: &str) -> Option<(&str, &str)> {
    let (byte_pos, _) = line
        .char_indices()
        .take(SPEAKER_PREFIX_MAX_CHARS)
        .find(|(_, c)| *c == ':')?;
    let after = &line[byte_pos + 1..];
    if !after.starts_with(' ') {
        return None;
    }
    let name = line[..byte_pos].trim();
    if name.is_empty() {
        return None;
    }
    Some((name, after))
}

fn parse_timing_line(line: &str) -> Option<(u64, u64)> {
    let (left, right) = line.split_once("-->")?;
    let start = parse_timestamp(left.trim())?;
    let end_token = right.split_whitespace().next()?;
    let end = parse_timestamp(end_token)?;
    Some((start, end))
}

/// Parses `[H*:]MM:SS.mmm` into milliseconds.
pub fn parse_timestamp(s: &str) -> Option<u64> {
    let (clock, millis) = s.split_once('.')?;
    if millis.len() != 3 || !millis.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let parts: Vec<&str> = clock.split(':').collect();
    let (hours, minutes, seconds) = match parts.as_slice() {
        [m, s] => ("0", *m, *s),
        [h, m, s] if !h.is_empty() => (*h, *m, *s),
        _ => return None,
    };
    let two_digits = |p: &str| p.len() == 2 && p.bytes().all(|b| b.is_ascii_digit());
    if !two_digits(minutes) || !two_digits(seconds) || !hours.bytes().all(|b| b.is_ascii_digit())
    {
        return None;
    }
    let hours: u64 = hours.parse().ok()?;
    let minutes: u64 = minutes.parse().ok()?;
    let seconds: u64 = seconds.parse().ok()?;
    if minutes > 59 || seconds > 59 {
        return None;
    }
    let millis: u64 = millis.parse().ok()?;
    hours
        .checked_mul(3_600_000)?
        .checked_add(minutes * 60_000 + seconds * 1000 + millis)
}

/// Formats milliseconds as `HH:MM:SS.mmm` (hours widen past 99).
pub fn format_timestamp(ms: u64) -> String {
    let hours = ms / 3_600_000;
    let minutes = (ms / 60_000) % 60;
    let seconds = (ms / 1000) % 60;
    format!("{hours:02}:{minutes:02}:{seconds:02}.{:03}", ms % 1000)
}

fn alias_key(label: &str) -> String {
    label
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Rewrites speaker labels through an alias map. Keys match regardless of
/// case and surrounding or repeated whitespace; unmapped labels pass
/// through unchanged. When two keys collapse to the same normalised form the
/// one sorting last wins.
pub fn normalize_speakers(transcript: &Transcript, alias_map: &BTreeMap<String, String>) -> Transcript {
    if alias_map.is_empty() {
        return transcript.clone();
    }
    let lookup: BTreeMap<String, &str> = alias_map
        .iter()
        .map(|(k, v)| (alias_key(k), v.as_str()))
        .collect();
    let mut out = transcript.clone();
    for cue in &mut out.cues {
        if let Some(canonical) = lookup.get(&alias_key(&cue.speaker)) {
            cue.speaker = canonical.to_string();
        }
    }
    out.refresh_derived();
    out
}

/// Reports suspicious but well-formed transcripts. Only warnings.
pub fn validate(transcript: &Transcript) -> Vec<ParseIssue> {
    let mut issues = Vec::new();
    if transcript.speakers.is_empty() {
        issues.push(ParseIssue::warning(0, "transcript has zero speakers"));
    }
    if !transcript.cues.is_empty() {
        let unknown = transcript.cues.iter().filter(|c| !c.has_known_speaker()).count();
        let ratio = unknown as f64 / transcript.cues.len() as f64;
        if ratio > UNKNOWN_RATIO_LIMIT {
            issues.push(ParseIssue::warning(
                0,
                format!(
                    "unknown speaker ratio {:.0}% exceeds {:.0}%",
                    ratio * 100.0,
                    UNKNOWN_RATIO_LIMIT * 100.0
                ),
            ));
        }
    }
    for (pos, cue) in transcript.cues.iter().enumerate() {
        if cue.duration_ms() > OVERLONG_CUE_MS {
            issues.push(ParseIssue::warning(
                0,
                format!(
                    "overlong cue {} at {} lasts {} s",
                    pos + 1,
                    format_timestamp(cue.start_ms),
                    cue.duration_ms() / 1000
                ),
            ));
        }
    }
    if transcript.duration_ms > 0 {
        let speech = union_length(transcript.cues.iter().map(|c| (c.start_ms, c.end_ms)));
        let ratio = speech as f64 / transcript.duration_ms as f64;
        if ratio < MIN_SPEECH_RATIO {
            issues.push(ParseIssue::warning(
                0,
                format!("low speech ratio: speech covers {:.1}% of the session", ratio * 100.0),
            ));
        }
    }
    issues
}

/// Total length covered by intervals sorted by start.
fn union_length(intervals: impl Iterator<Item = (u64, u64)>) -> u64 {
    let mut total = 0;
    let mut covered_to = 0;
    for (start, end) in intervals {
        let start = start.max(covered_to);
        if end > start {
            total += end - start;
            covered_to = end;
        }
    }
    total
}
