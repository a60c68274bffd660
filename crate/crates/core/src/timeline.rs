//! Per-speaker activity tracks and instant-to-playback mapping.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::TimelineError;
use crate::transcript::Transcript;
use crate::turns::{TurnKind, TurnSequence};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start_ms: u64,
    pub end_ms: u64,
    pub kind: TurnKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineTrack {
    pub speaker: String,
    /// Colour key; the dashboard maps it to a palette entry.
    pub speaker_index: usize,
    pub segments: Vec<Segment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeekResult {
    pub offset_ms: u64,
    pub active_cue: Option<usize>,
    pub next_cue: Option<usize>,
}

/// One track per entry of `speaker_order`, in that order. Every speaker
/// with turns must appear in the order.
pub fn build_timeline(
    seq: &TurnSequence,
    speaker_order: &[String],
) -> Result<Vec<TimelineTrack>, TimelineError> {
    let slot: HashMap<&str, usize> = speaker_order
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let mut tracks: Vec<TimelineTrack> = speaker_order
        .iter()
        .enumerate()
        .map(|(i, s)| TimelineTrack {
            speaker: s.clone(),
            speaker_index: i,
            segments: Vec::new(),
        })
        .collect();
    for turn in &seq.turns {
        let &i = slot
            .get(turn.speaker.as_str())
            .ok_or_else(|| TimelineError::UnorderedSpeaker(turn.speaker.clone()))?;
        tracks[i].segments.push(Segment {
            start_ms: turn.start_ms,
            end_ms: turn.end_ms,
            kind: turn.kind,
        });
    }
    Ok(tracks)
}

/// Maps an instant to a playback offset, the cue being spoken then (the
/// earliest such cue) and the first cue starting at or after it.
pub fn seek(transcript: &Transcript, t_ms: u64) -> SeekResult {
    let cues = &transcript.cues;
    let started = cues.partition_point(|c| c.start_ms <= t_ms);
    let active_cue = cues[..started].iter().position(|c| t_ms < c.end_ms);
    let next_cue = cues.partition_point(|c| c.start_ms < t_ms);
    SeekResult {
        offset_ms: t_ms.min(transcript.duration_ms),
        active_cue,
        next_cue: (next_cue < cues.len()).then_some(next_cue),
    }
}
