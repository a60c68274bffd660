//! Individual (per-speaker) and inter-individual (flow) conversation metrics.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::config::AnalysisConfig;
use crate::text::{self, Language};
use crate::transcript::Transcript;
use crate::turns::{self, TurnKind, TurnSequence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerMetrics {
    pub speaker: String,
    /// Speech of both floor turns and backchannels.
    pub speaking_ms: u64,
    /// Fraction of all speech in the session.
    pub share: f64,
    pub floor_turn_count: usize,
    pub backchannel_count: usize,
    /// Mean span of floor turns.
    pub mean_floor_turn_ms: f64,
    pub longest_floor_turn_ms: u64,
    pub word_count: usize,
    /// Words over speech time (silences merged into turns excluded).
    pub words_per_minute: f64,
    pub filled_pause_count: usize,
    pub long_pauses_after: usize,
    pub language_ms: BTreeMap<Language, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FlowMatrix {
    pub speakers: Vec<String>,
    /// `counts[i][j]`: floor passes from `speakers[i]` to `speakers[j]`.
    pub counts: Vec<Vec<u64>>,
}

impl FlowMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn get(&self, from: &str, to: &str) -> Option<u64> {
        let i = self.speakers.iter().position(|s| s == from)?;
        let j = self.speakers.iter().position(|s| s == to)?;
        Some(self.counts[i][j])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub per_speaker: BTreeMap<String, SpeakerMetrics>,
    pub flow: FlowMatrix,
    pub total_speaking_ms: u64,
    pub session_duration_ms: u64,
    pub long_pause_count: usize,
    pub config_used: AnalysisConfig,
}

impl SessionMetrics {
    pub fn empty(config: &AnalysisConfig) -> Self {
        SessionMetrics {
            per_speaker: BTreeMap::new(),
            flow: FlowMatrix::default(),
            total_speaking_ms: 0,
            session_duration_ms: 0,
            long_pause_count: 0,
            config_used: config.clone(),
        }
    }

    /// Canonical JSON (sorted keys, pretty-printed, trailing newline). This
    /// is the exact body served by the API and written by the CLI.
    pub fn to_canonical_json(&self) -> String {
        crate::json::to_canonical_string(self)
    }
}

/// Number of filled-pause tokens in `text`.
pub fn count_filled_pauses(text: &str, config: &AnalysisConfig) -> usize {
    text::tokens(text)
        .filter(|t| config.filled_pause_lexicon.contains(t))
        .count()
}

pub use crate::text::classify_language;

/// Per-speaker metrics over a classified turn sequence.
pub fn compute_speaker_metrics(
    seq: &TurnSequence,
    config: &AnalysisConfig,
) -> BTreeMap<String, SpeakerMetrics> {
    let mut out: BTreeMap<String, SpeakerMetrics> = BTreeMap::new();
    let mut floor_span_total: BTreeMap<&str, u64> = BTreeMap::new();

    for turn in &seq.turns {
        let m = out.entry(turn.speaker.clone()).or_insert_with(|| SpeakerMetrics {
            speaker: turn.speaker.clone(),
            speaking_ms: 0,
            share: 0.0,
            floor_turn_count: 0,
            backchannel_count: 0,
            mean_floor_turn_ms: 0.0,
            longest_floor_turn_ms: 0,
            word_count: 0,
            words_per_minute: 0.0,
            filled_pause_count: 0,
            long_pauses_after: 0,
            language_ms: Language::ALL.iter().map(|&l| (l, 0)).collect(),
        });
        m.speaking_ms += turn.speech_ms;
        m.word_count += turn.word_count;
        m.filled_pause_count += count_filled_pauses(&turn.text, config);
        *m.language_ms
            .get_mut(&classify_language(&turn.text))
            .expect("all languages present") += turn.speech_ms;
        match turn.kind {
            TurnKind::Floor => {
                m.floor_turn_count += 1;
                m.longest_floor_turn_ms = m.longest_floor_turn_ms.max(turn.duration_ms());
                *floor_span_total.entry(turn.speaker.as_str()).or_default() += turn.duration_ms();
            }
            TurnKind::Backchannel => m.backchannel_count += 1,
        }
    }

    for gap in turns::detect_long_pauses(seq, config) {
        if let Some(m) = gap.before_speaker.and_then(|s| out.get_mut(&s)) {
            m.long_pauses_after += 1;
        }
    }

    let total: u64 = out.values().map(|m| m.speaking_ms).sum();
    for m in out.values_mut() {
        if total > 0 {
            m.share = m.speaking_ms as f64 / total as f64;
        }
        if m.floor_turn_count > 0 {
            m.mean_floor_turn_ms =
                floor_span_total[m.speaker.as_str()] as f64 / m.floor_turn_count as f64;
        }
        if m.speaking_ms > 0 {
            m.words_per_minute = m.word_count as f64 / (m.speaking_ms as f64 / 60_000.0);
        }
    }
    out
}

/// Counts who takes the floor after whom. Backchannels are skipped.
pub fn compute_flow(seq: &TurnSequence) -> FlowMatrix {
    let speakers: Vec<String> = seq
        .turns
        .iter()
        .map(|t| t.speaker.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let position: BTreeMap<&str, usize> = speakers
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let mut counts = vec![vec![0u64; speakers.len()]; speakers.len()];
    let floor: Vec<usize> = seq.floor_turns().map(|t| position[t.speaker.as_str()]).collect();
    for pair in floor.windows(2) {
        counts[pair[0]][pair[1]] += 1;
    }
    FlowMatrix { speakers, counts }
}

/// Full pipeline: segmentation, backchannels, pauses, speaker metrics, flow.
pub fn compute_session_metrics(transcript: &Transcript, config: &AnalysisConfig) -> SessionMetrics {
    let seq = turns::analyze_turns(transcript, config);
    session_metrics_from_turns(&seq, config)
}

pub fn session_metrics_from_turns(seq: &TurnSequence, config: &AnalysisConfig) -> SessionMetrics {
    let per_speaker = compute_speaker_metrics(seq, config);
    SessionMetrics {
        total_speaking_ms: per_speaker.values().map(|m| m.speaking_ms).sum(),
        long_pause_count: turns::detect_long_pauses(seq, config).len(),
        flow: compute_flow(seq),
        session_duration_ms: seq.duration_ms,
        per_speaker,
        config_used: config.clone(),
    }
}
