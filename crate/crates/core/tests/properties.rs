//! Randomized invariants of the analysis pipeline.
//!
//! Each property is a plain function over a `TestRunner` so the acceptance
//! harness can run the same code outside libtest.

mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tandem_core::timeline::seek;
use tandem_core::transcript::{parse_vtt, parse_vtt_bytes, RawCue, Transcript};
use tandem_core::turns::{analyze_turns, classify_backchannels, segment_turns};
use tandem_core::{compute_session_metrics, AnalysisConfig};

pub const CASES: u32 = 256;

fn runner() -> TestRunner {
    TestRunner::new(Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    })
}

fn transcript_from(seed: u64) -> Transcript {
    common::random_transcript(&mut ChaCha8Rng::seed_from_u64(seed), 120, 5)
}

fn run<S: Strategy>(name: &str, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) {
    if let Err(e) = runner().run(&strategy, test) {
        panic!("{name}: {e}");
    }
}

fn with_cues(t: &Transcript, f: impl Fn(&RawCue) -> RawCue) -> Transcript {
    Transcript::from_raw_cues(t.source_name.clone(), t.cues.iter().map(f).collect())
}

/// A larger merge threshold never yields more turns.
pub fn merge_threshold_monotonic() {
    run(
        "merge monotonicity",
        (any::<u64>(), 0u64..6000, 0u64..6000),
        |(seed, a, b)| {
            let t = transcript_from(seed);
            let (lo, hi) = (a.min(b), a.max(b));
            let cfg = |gap: u64| AnalysisConfig { merge_gap_ms: gap.max(1), ..AnalysisConfig::default() };
            let n_lo = segment_turns(&t, &cfg(lo)).turns.len();
            let n_hi = segment_turns(&t, &cfg(hi)).turns.len();
            prop_assert!(n_hi <= n_lo, "gap {lo}: {n_lo} turns, gap {hi}: {n_hi} turns");
            Ok(())
        },
    );
}

/// Shifting every cue by the same offset changes nothing but the session
/// end, which moves with it.
pub fn time_shift_invariant() {
    run("time shift", (any::<u64>(), 0u64..10_000_000), |(seed, delta)| {
        let t = transcript_from(seed);
        let shifted = with_cues(&t, |c| RawCue {
            start_ms: c.start_ms + delta,
            end_ms: c.end_ms + delta,
            ..c.clone()
        });
        let cfg = AnalysisConfig::default();
        let a = compute_session_metrics(&t, &cfg);
        let mut b = compute_session_metrics(&shifted, &cfg);
        if !t.cues.is_empty() {
            prop_assert_eq!(b.session_duration_ms, a.session_duration_ms + delta);
        }
        b.session_duration_ms = a.session_duration_ms;
        prop_assert_eq!(a, b);
        Ok(())
    });
}

/// Renaming speakers renames per-speaker metrics and conjugates the flow
/// matrix by the induced permutation of the sorted speaker order.
pub fn relabel_equivariant() {
    let targets = Just(["Zoé", "Bea", "Mo", "Al", "Kit"].map(String::from).to_vec()).prop_shuffle();
    run("relabel", (any::<u64>(), targets), |(seed, targets)| {
        let t = transcript_from(seed);
        let rename: BTreeMap<&str, &str> = common::NAMES
            .iter()
            .copied()
            .zip(targets.iter().map(String::as_str))
            .collect();
        let relabeled = with_cues(&t, |c| RawCue { speaker: rename[c.speaker.as_str()].to_string(), ..c.clone() });
        let cfg = AnalysisConfig::default();
        let a = compute_session_metrics(&t, &cfg);
        let b = compute_session_metrics(&relabeled, &cfg);

        prop_assert_eq!(a.per_speaker.len(), b.per_speaker.len());
        for (name, m) in &a.per_speaker {
            let mut renamed = m.clone();
            renamed.speaker = rename[name.as_str()].to_string();
            prop_assert_eq!(&b.per_speaker[rename[name.as_str()]], &renamed);
        }
        let pos = |s: &str| b.flow.speakers.iter().position(|x| x == s).unwrap();
        for (i, from) in a.flow.speakers.iter().enumerate() {
            for (j, to) in a.flow.speakers.iter().enumerate() {
                prop_assert_eq!(
                    a.flow.counts[i][j],
                    b.flow.counts[pos(rename[from.as_str()])][pos(rename[to.as_str()])]
                );
            }
        }
        Ok(())
    });
}

/// Seeking is monotone in the instant and clamps to the session.
pub fn seek_monotone_and_clamped() {
    run("seek", (any::<u64>(), 0u64..2_000_000, 0u64..2_000_000), |(seed, a, b)| {
        let t = transcript_from(seed);
        let (t1, t2) = (a.min(b), a.max(b));
        let (s1, s2) = (seek(&t, t1), seek(&t, t2));
        let n = t.cues.len();
        prop_assert!(s1.offset_ms <= s2.offset_ms);
        prop_assert!(s1.next_cue.unwrap_or(n) <= s2.next_cue.unwrap_or(n));
        for (ti, s) in [(t1, s1), (t2, s2)] {
            prop_assert_eq!(s.offset_ms, ti.min(t.duration_ms));
            if ti >= t.duration_ms {
                prop_assert_eq!(s.active_cue, None);
            }
            if ti > t.duration_ms {
                prop_assert_eq!(s.next_cue, None);
            }
            if let Some(k) = s.active_cue {
                let c = &t.cues[k];
                prop_assert!(c.start_ms <= ti && ti < c.end_ms);
                prop_assert!(t.cues[..k].iter().all(|c| !(c.start_ms <= ti && ti < c.end_ms)));
            }
            if let Some(k) = s.next_cue {
                prop_assert!(t.cues[k].start_ms >= ti);
                prop_assert!(k == 0 || t.cues[k - 1].start_ms < ti);
            }
        }
        Ok(())
    });
}

/// Classifying an already classified sequence changes nothing, and turn
/// boundaries never move.
pub fn backchannel_idempotent() {
    run("backchannel idempotence", any::<u64>(), |seed| {
        let t = transcript_from(seed);
        let cfg = AnalysisConfig::default();
        let raw = segment_turns(&t, &cfg);
        let once = classify_backchannels(&raw, &cfg);
        let twice = classify_backchannels(&once, &cfg);
        prop_assert_eq!(&once, &twice);
        prop_assert_eq!(once.turns.len(), raw.turns.len());
        for (a, b) in once.turns.iter().zip(&raw.turns) {
            prop_assert_eq!((a.start_ms, a.end_ms, &a.cue_indices), (b.start_ms, b.end_ms, &b.cue_indices));
        }
        prop_assert!(once.turns.first().is_none_or(|t| t.is_floor()));
        Ok(())
    });
}

/// Arbitrary bytes never panic the parser and always yield sorted,
/// positive-length cues.
pub fn parse_is_total() {
    let noise = prop_oneof![
        proptest::collection::vec(any::<u8>(), 0..512),
        "(WEBVTT\n\n)?([0-9:.]{0,14}( --> )?[0-9:.]{0,14}\n[A-Za-zé ]{0,12}:? ?[a-z ]{0,20}\n\n){0,6}"
            .prop_map(String::into_bytes),
    ];
    run("parse totality", noise, |bytes| {
        let (t, issues) = parse_vtt_bytes("noise", &bytes);
        prop_assert!(t.cues.iter().all(|c| c.start_ms < c.end_ms && !c.text.is_empty()));
        prop_assert!(t.cues.windows(2).all(|w| w[0].start_ms <= w[1].start_ms));
        prop_assert_eq!(t.duration_ms, t.cues.iter().map(|c| c.end_ms).max().unwrap_or(0));
        prop_assert!(issues.iter().all(|i| !i.message.is_empty()));
        Ok(())
    });
}

/// Rendering then parsing reproduces the cues.
pub fn round_trip_identity() {
    run("round trip", any::<u64>(), |seed| {
        let t = transcript_from(seed);
        let (again, issues) = parse_vtt("rt", &t.to_vtt());
        prop_assert!(issues.iter().all(|i| !i.is_error()), "{:?}", issues);
        prop_assert_eq!(again.cues.len(), t.cues.len());
        for (a, b) in again.cues.iter().zip(&t.cues) {
            prop_assert_eq!((a.start_ms, a.end_ms, &a.speaker, &a.text), (b.start_ms, b.end_ms, &b.speaker, &b.text));
        }
        Ok(())
    });
}

/// Shares sum to one and the flow matrix counts every floor hand-over.
pub fn shares_and_flow_totals() {
    run("share and flow totals", any::<u64>(), |seed| {
        let t = transcript_from(seed);
        let cfg = AnalysisConfig::default();
        let m = compute_session_metrics(&t, &cfg);
        let seq = analyze_turns(&t, &cfg);
        if !m.per_speaker.is_empty() {
            let sum: f64 = m.per_speaker.values().map(|s| s.share).sum();
            prop_assert!((sum - 1.0).abs() <= 1e-9);
        }
        prop_assert_eq!(m.flow.total() as usize, seq.floor_turns().count().saturating_sub(1));
        for s in m.per_speaker.values() {
            prop_assert_eq!(s.language_ms.values().sum::<u64>(), s.speaking_ms);
        }
        Ok(())
    });
}

#[test]
fn merge_threshold_monotonicity() {
    merge_threshold_monotonic();
}

#[test]
fn time_shift_invariance() {
    time_shift_invariant();
}

#[test]
fn speaker_relabel_equivariance() {
    relabel_equivariant();
}

#[test]
fn seek_monotonicity_and_clamp() {
    seek_monotone_and_clamped();
}

#[test]
fn backchannel_idempotence() {
    backchannel_idempotent();
}

#[test]
fn parse_totality() {
    parse_is_total();
}

#[test]
fn serialize_parse_round_trip() {
    round_trip_identity();
}

#[test]
fn share_sum_and_flow_total() {
    shares_and_flow_totals();
}
