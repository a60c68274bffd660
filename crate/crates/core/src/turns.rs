//! Turn segmentation: cues become floor turns and backchannels, and the
//! silences between them become gaps.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::config::AnalysisConfig;
use crate::text;
use crate::transcript::Transcript;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TurnKind {
    Floor,
    Backchannel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: String,
    pub start_ms: u64,
    pub end_ms: u64,
    /// Speech inside the turn, excluding merged silences between its cues.
    pub speech_ms: u64,
    /// Positions in `Transcript::cues`.
    pub cue_indices: Vec<usize>,
    pub word_count: usize,
    pub kind: TurnKind,
    /// Constituent cue texts joined by single spaces.
    pub text: String,
}

impl Turn {
    pub fn duration_ms(&self) -> u64 {
        self.end_ms - self.start_ms
    }

    pub fn is_floor(&self) -> bool {
        self.kind == TurnKind::Floor
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gap {
    pub start_ms: u64,
    pub end_ms: u64,
    pub before_speaker: Option<String>,
    pub after_speaker: Option<String>,
    pub is_long: bool,
}

impl Gap {
    pub fn duration_ms(&self) -> u64 {
        self.end_ms - self.start_ms
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TurnSequence {
    pub turns: Vec<Turn>,
    pub gaps: Vec<Gap>,
    pub duration_ms: u64,
}

impl TurnSequence {
    pub fn floor_turns(&self) -> impl Iterator<Item = &Turn> {
        self.turns.iter().filter(|t| t.is_floor())
    }
}

/// Segments then classifies backchannels.
pub fn analyze_turns(transcript: &Transcript, config: &AnalysisConfig) -> TurnSequence {
    classify_backchannels(&segment_turns(transcript, config), config)
}

/// Merges consecutive same-speaker cues into turns.
///
/// A cue overlapping earlier speech by its own speaker is clipped to start
/// where that speech ended; a cue entirely covered that way adds no speech
/// and is attached to the speaker's latest turn.
pub fn segment_turns(transcript: &Transcript, config: &AnalysisConfig) -> TurnSequence {
    let mut turns: Vec<Turn> = Vec::new();
    let mut latest_turn: HashMap<&str, usize> = HashMap::new();
    let mut spoken_until: HashMap<&str, u64> = HashMap::new();
    let mut open: Option<usize> = None;

    for (i, cue) in transcript.cues.iter().enumerate() {
        let speaker = cue.speaker.as_str();
        let start = spoken_until
            .get(speaker)
            .map_or(cue.start_ms, |&until| cue.start_ms.max(until));
        let words = text::word_count(&cue.text);

        if start >= cue.end_ms {
            let t = &mut turns[latest_turn[speaker]];
            t.cue_indices.push(i);
            t.word_count += words;
            t.text.push(' ');
            t.text.push_str(&cue.text);
            continue;
        }

        let merge_into = open.filter(|&o| {
            let t = &turns[o];
            t.speaker == speaker && start - t.end_ms <= config.merge_gap_ms
        });
        let idx = match merge_into {
            Some(o) => {
                let t = &mut turns[o];
                t.end_ms = cue.end_ms;
                t.speech_ms += cue.end_ms - start;
                t.cue_indices.push(i);
                t.word_count += words;
                t.text.push(' ');
                t.text.push_str(&cue.text);
                o
            }
            None => {
                turns.push(Turn {
                    speaker: cue.speaker.clone(),
                    start_ms: start,
                    end_ms: cue.end_ms,
                    speech_ms: cue.end_ms - start,
                    cue_indices: vec![i],
                    word_count: words,
                    kind: TurnKind::Floor,
                    text: cue.text.clone(),
                });
                turns.len() - 1
            }
        };
        open = Some(idx);
        latest_turn.insert(speaker, idx);
        spoken_until.insert(speaker, cue.end_ms);
    }

    // Clipping can push a turn's start past turns opened after it.
    turns.sort_by_key(|t| (t.start_ms, t.cue_indices[0]));

    TurnSequence {
        gaps: silence_gaps(transcript, config),
        turns,
        duration_ms: transcript.duration_ms,
    }
}

/// Maximal intervals between the first cue start and the last cue end where
/// no cue is active.
fn silence_gaps(transcript: &Transcript, config: &AnalysisConfig) -> Vec<Gap> {
    let mut gaps = Vec::new();
    let mut cues = transcript.cues.iter();
    let Some(first) = cues.next() else {
        return gaps;
    };
    let mut covered_to = first.end_ms;
    let mut last_speaker = first.speaker.as_str();
    for cue in cues {
        if cue.start_ms > covered_to {
            gaps.push(Gap {
                start_ms: covered_to,
                end_ms: cue.start_ms,
                before_speaker: Some(last_speaker.to_string()),
                after_speaker: Some(cue.speaker.clone()),
                is_long: cue.start_ms - covered_to >= config.long_pause_ms,
            });
        }
        if cue.end_ms >= covered_to {
            covered_to = cue.end_ms;
            last_speaker = cue.speaker.as_str();
        }
    }
    gaps
}

/// Marks short lexical responses given alongside another speaker's talk as
/// backchannels. Kinds are recomputed from scratch; boundaries never change.
pub fn classify_backchannels(seq: &TurnSequence, config: &AnalysisConfig) -> TurnSequence {
    let turns = &seq.turns;
    let mut max_end_upto = Vec::with_capacity(turns.len());
    let mut running = 0u64;
    for t in turns {
        running = running.max(t.end_ms);
        max_end_upto.push(running);
    }

    let near_other_speaker = |k: usize| -> bool {
        let t = &turns[k];
        let reach = config.merge_gap_ms;
        for u in &turns[k + 1..] {
            if u.start_ms > t.end_ms + reach {
                break;
            }
            if u.speaker != t.speaker {
                return true;
            }
        }
        for j in (0..k).rev() {
            if max_end_upto[j] + reach < t.start_ms {
                break;
            }
            let u = &turns[j];
            if u.speaker != t.speaker && u.end_ms + reach >= t.start_ms {
                return true;
            }
        }
        false
    };

    let mut out = seq.clone();
    for (k, turn) in out.turns.iter_mut().enumerate() {
        let is_backchannel = k > 0
            && turn.duration_ms() <= config.backchannel_max_ms
            && turn.word_count <= config.backchannel_max_tokens
            && is_lexical_backchannel(&turn.text, config)
            && near_other_speaker(k);
        turn.kind = if is_backchannel {
            TurnKind::Backchannel
        } else {
            TurnKind::Floor
        };
    }
    out
}

fn is_lexical_backchannel(text: &str, config: &AnalysisConfig) -> bool {
    let mut any = false;
    for token in text::tokens(text) {
        if !config.backchannel_lexicon.contains(&token) {
            return false;
        }
        any = true;
    }
    any
}

/// Silences at least `long_pause_ms` long.
pub fn detect_long_pauses(seq: &TurnSequence, config: &AnalysisConfig) -> Vec<Gap> {
    seq.gaps
        .iter()
        .filter(|g| g.duration_ms() >= config.long_pause_ms)
        .map(|g| Gap {
            is_long: true,
            ..g.clone()
        })
        .collect()
}
