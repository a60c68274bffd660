//! Shared test support: a brute-force metrics oracle working directly on raw
//! cues, a seeded transcript generator, and HTTP helpers.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::{json, Value};
use chrono::NaiveDate;
use tandem_core::error::StoreError;
use tandem_core::store::{NewSession, SessionRecord, SessionStore};
use tandem_core::transcript::{RawCue, Transcript};
use tandem_core::{compute_session_metrics, AnalysisConfig};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

pub fn read_fixture(rel: &str) -> String {
    std::fs::read_to_string(fixture(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

// ---------------------------------------------------------------------------
// Oracle
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct OracleTurn {
    pub speaker: String,
    pub start: u64,
    pub end: u64,
    pub speech: u64,
    pub cues: Vec<usize>,
    pub text: String,
    pub words: usize,
    pub floor: bool,
}

fn oracle_token(raw: &str) -> Option<String> {
    let t = raw.trim_matches(|c: char| !c.is_alphanumeric());
    (!t.is_empty()).then(|| t.replace(['\u{2019}', '\u{2018}'], "'").to_lowercase())
}

/// Turns re-derived from the cue list with quadratic scans.
pub fn oracle_turns(cues: &[RawCue], cfg: &AnalysisConfig) -> Vec<OracleTurn> {
    let n = cues.len();
    let clipped: Vec<u64> = (0..n)
        .map(|i| {
            (0..i)
                .filter(|&j| cues[j].speaker == cues[i].speaker)
                .map(|j| cues[j].end_ms)
                .max()
                .map_or(cues[i].start_ms, |e| e.max(cues[i].start_ms))
        })
        .collect();
    let live: Vec<usize> = (0..n).filter(|&i| clipped[i] < cues[i].end_ms).collect();

    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (k, &i) in live.iter().enumerate() {
        let joins = k > 0 && {
            let prev = live[k - 1];
            let group_end = groups.last().unwrap().iter().map(|&j| cues[j].end_ms).max().unwrap();
            cues[prev].speaker == cues[i].speaker && clipped[i] - group_end <= cfg.merge_gap_ms
        };
        if joins {
            groups.last_mut().unwrap().push(i);
        } else {
            groups.push(vec![i]);
        }
    }
    let live_groups = groups.clone();
    for i in (0..n).filter(|&i| clipped[i] >= cues[i].end_ms) {
        let owner = (0..i)
            .rev()
            .find(|&j| live.contains(&j) && cues[j].speaker == cues[i].speaker)
            .expect("covered cue has an earlier live cue");
        let g = live_groups.iter().position(|g| g.contains(&owner)).unwrap();
        groups[g].push(i);
    }

    let mut turns: Vec<OracleTurn> = groups
        .into_iter()
        .zip(&live_groups)
        .map(|(mut members, live_members)| {
            members.sort();
            OracleTurn {
                speaker: cues[members[0]].speaker.clone(),
                start: clipped[live_members[0]],
                end: live_members.iter().map(|&j| cues[j].end_ms).max().unwrap(),
                speech: live_members.iter().map(|&j| cues[j].end_ms - clipped[j]).sum(),
                text: members.iter().map(|&j| cues[j].text.as_str()).collect::<Vec<_>>().join(" "),
                words: members.iter().map(|&j| cues[j].text.split_whitespace().count()).sum(),
                cues: members,
                floor: true,
            }
        })
        .collect();
    turns.sort_by_key(|t| (t.start, t.cues[0]));

    let snapshot = turns.clone();
    for (k, t) in turns.iter_mut().enumerate() {
        let tokens: Vec<String> = t.text.split_whitespace().filter_map(oracle_token).collect();
        let lexical = !tokens.is_empty() && tokens.iter().all(|x| cfg.backchannel_lexicon.contains(x));
        let near = snapshot.iter().enumerate().any(|(j, u)| {
            j != k
                && u.speaker != t.speaker
                && u.start.max(t.start).saturating_sub(u.end.min(t.end)) <= cfg.merge_gap_ms
        });
        let bc = k > 0
            && t.end - t.start <= cfg.backchannel_max_ms
            && t.words <= cfg.backchannel_max_tokens
            && lexical
            && near;
        t.floor = !bc;
    }
    turns
}

/// (start, end, before speaker, after speaker) of each silence.
pub fn oracle_gaps(cues: &[RawCue]) -> Vec<(u64, u64, String, String)> {
    let mut spans: Vec<(u64, u64)> = cues.iter().map(|c| (c.start_ms, c.end_ms)).collect();
    spans.sort();
    let mut merged: Vec<(u64, u64)> = Vec::new();
    for (a, b) in spans {
        match merged.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => merged.push((a, b)),
        }
    }
    merged
        .windows(2)
        .map(|w| {
            let (start, end) = (w[0].1, w[1].0);
            let before = cues.iter().rev().find(|c| c.end_ms == start).unwrap().speaker.clone();
            let after = cues.iter().find(|c| c.start_ms == end).unwrap().speaker.clone();
            (start, end, before, after)
        })
        .collect()
}

fn union_len(mut spans: Vec<(u64, u64)>) -> u64 {
    spans.sort();
    let mut total = 0;
    let mut to = 0;
    for (a, b) in spans {
        let a = a.max(to);
        if b > a {
            total += b - a;
            to = b;
        }
    }
    total
}

/// Session metrics recomputed from raw cues, as a JSON value shaped like
/// the engine's serialized `SessionMetrics`.
pub fn oracle_metrics(transcript: &Transcript, cfg: &AnalysisConfig) -> Value {
    let cues = &transcript.cues;
    let turns = oracle_turns(cues, cfg);
    let gaps = oracle_gaps(cues);
    let long: Vec<_> = gaps.iter().filter(|g| g.1 - g.0 >= cfg.long_pause_ms).collect();
    let speakers: BTreeSet<String> = cues.iter().map(|c| c.speaker.clone()).collect();

    let speaking: BTreeMap<&str, u64> = speakers
        .iter()
        .map(|s| {
            let spans = cues.iter().filter(|c| &c.speaker == s).map(|c| (c.start_ms, c.end_ms)).collect();
            (s.as_str(), union_len(spans))
        })
        .collect();
    let total: u64 = speaking.values().sum();

    let mut per_speaker = serde_json::Map::new();
    for s in &speakers {
        let mine: Vec<&OracleTurn> = turns.iter().filter(|t| &t.speaker == s).collect();
        let floor: Vec<&&OracleTurn> = mine.iter().filter(|t| t.floor).collect();
        let ms = speaking[s.as_str()];
        let words: usize = cues.iter().filter(|c| &c.speaker == s).map(|c| c.text.split_whitespace().count()).sum();
        let fillers: usize = cues
            .iter()
            .filter(|c| &c.speaker == s)
            .map(|c| c.text.split_whitespace().filter_map(oracle_token).filter(|t| cfg.filled_pause_lexicon.contains(t)).count())
            .sum();
        let mut lang = BTreeMap::from([("en", 0u64), ("fr", 0), ("unknown", 0)]);
        for t in &mine {
            *lang.get_mut(tandem_core::text::classify_language(&t.text).as_str()).unwrap() += t.speech;
        }
        let floor_total: u64 = floor.iter().map(|t| t.end - t.start).sum();
        per_speaker.insert(
            s.clone(),
            json!({
                "speaker": s,
                "speaking_ms": ms,
                "share": if total > 0 { ms as f64 / total as f64 } else { 0.0 },
                "floor_turn_count": floor.len(),
                "backchannel_count": mine.len() - floor.len(),
                "mean_floor_turn_ms": if floor.is_empty() { 0.0 } else { floor_total as f64 / floor.len() as f64 },
                "longest_floor_turn_ms": floor.iter().map(|t| t.end - t.start).max().unwrap_or(0),
                "word_count": words,
                "words_per_minute": if ms > 0 { words as f64 / (ms as f64 / 60_000.0) } else { 0.0 },
                "filled_pause_count": fillers,
                "long_pauses_after": long.iter().filter(|g| &g.2 == s).count(),
                "language_ms": lang,
            }),
        );
    }

    let order: Vec<&String> = speakers.iter().collect();
    let mut counts = vec![vec![0u64; order.len()]; order.len()];
    let floor_seq: Vec<usize> = turns
        .iter()
        .filter(|t| t.floor)
        .map(|t| order.iter().position(|s| **s == t.speaker).unwrap())
        .collect();
    let mut i = 1;
    while i < floor_seq.len() {
        counts[floor_seq[i - 1]][floor_seq[i]] += 1;
        i += 1;
    }

    json!({
        "per_speaker": per_speaker,
        "flow": { "speakers": order, "counts": counts },
        "total_speaking_ms": total,
        "session_duration_ms": cues.iter().map(|c| c.end_ms).max().unwrap_or(0),
        "long_pause_count": long.len(),
        "config_used": serde_json::to_value(cfg).unwrap(),
    })
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

pub const NAMES: [&str; 5] = ["Aoife", "Cian", "Lucas", "Inès", "Dara"];

const SHORT: [&str; 10] = ["ouais", "yeah", "mm", "ok", "d'accord", "oui", "right", "Ah!", "hm", "mmhm"];
const WORDS: [&str; 40] = [
    "je", "pense", "que", "c'est", "une", "bonne", "idée", "the", "weather", "is", "very",
    "nice", "today", "and", "I", "think", "that", "euh", "um", "uh", "bah", "le", "cours",
    "est", "difficile", "we", "have", "exams", "in", "May", "nous", "avons", "des", "projets",
    "hmm", "well,", "so...", "vraiment", "you", "know",
];

pub fn random_text<R: Rng>(rng: &mut R) -> String {
    if rng.gen_bool(0.3) {
        let k = rng.gen_range(1..=2);
        (0..k).map(|_| *SHORT.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
    } else {
        let k = rng.gen_range(2..=14);
        (0..k).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
    }
}

/// A random conversation with up to `max_cues` cues among up to
/// `max_speakers` speakers, including overlaps, merges and long silences.
pub fn random_transcript<R: Rng>(rng: &mut R, max_cues: usize, max_speakers: usize) -> Transcript {
    let speakers = &NAMES[..rng.gen_range(1..=max_speakers.min(NAMES.len()))];
    let n = rng.gen_range(0..=max_cues);
    let mut cursor: u64 = rng.gen_range(0..5000);
    let mut speaker = speakers[0];
    let mut cues = Vec::with_capacity(n);
    for _ in 0..n {
        if !rng.gen_bool(0.4) {
            speaker = speakers.choose(rng).unwrap();
        }
        let start = match rng.gen_range(0..100) {
            0..=24 => cursor.saturating_sub(rng.gen_range(0..2500)),
            25..=74 => cursor + rng.gen_range(0..1200),
            75..=89 => cursor + rng.gen_range(1200..4000),
            _ => cursor + rng.gen_range(3000..9000),
        };
        let len = if rng.gen_bool(0.3) { rng.gen_range(150..1500) } else { rng.gen_range(800..9000) };
        cues.push(RawCue {
            index: None,
            start_ms: start,
            end_ms: start + len,
            speaker: speaker.to_string(),
            text: random_text(rng),
        });
        cursor = cursor.max(start + len);
    }
    Transcript::from_raw_cues("random.vtt", cues)
}

// ---------------------------------------------------------------------------
// HTTP
// ---------------------------------------------------------------------------

pub const BOUNDARY: &str = "----tandem-test-boundary";

pub struct Part<'a> {
    pub name: &'a str,
    pub filename: Option<&'a str>,
    pub content_type: &'a str,
    pub body: &'a [u8],
}

pub fn multipart_body(parts: &[Part<'_>]) -> Vec<u8> {
    let mut out = Vec::new();
    for p in parts {
        out.extend_from_slice(format!("--{BOUNDARY}\r\n").as_bytes());
        match p.filename {
            Some(f) => out.extend_from_slice(
                format!("Content-Disposition: form-data; name=\"{}\"; filename=\"{f}\"\r\n", p.name).as_bytes(),
            ),
            None => out.extend_from_slice(
                format!("Content-Disposition: form-data; name=\"{}\"\r\n", p.name).as_bytes(),
            ),
        }
        out.extend_from_slice(format!("Content-Type: {}\r\n\r\n", p.content_type).as_bytes());
        out.extend_from_slice(p.body);
        out.extend_from_slice(b"\r\n");
    }
    out.extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
    out
}

pub fn upload_parts<'a>(vtt: &'a [u8], metadata: &'a [u8], media: Option<&'a [u8]>) -> Vec<u8> {
    let mut parts = vec![
        Part { name: "metadata", filename: None, content_type: "application/json", body: metadata },
        Part { name: "transcript", filename: Some("session.vtt"), content_type: "text/vtt", body: vtt },
    ];
    if let Some(m) = media {
        parts.push(Part { name: "media", filename: Some("recording.mp4"), content_type: "video/mp4", body: m });
    }
    multipart_body(&parts)
}

pub mod http {
    use axum::body::Body;
    use axum::http::{Request, StatusCode};
    use axum::Router;
    use http_body_util::BodyExt;
    use tower::ServiceExt;

    pub struct Reply {
        pub status: StatusCode,
        pub headers: axum::http::HeaderMap,
        pub body: Vec<u8>,
    }

    impl Reply {
        pub fn json(&self) -> serde_json::Value {
            serde_json::from_slice(&self.body)
                .unwrap_or_else(|e| panic!("non-JSON body ({e}): {}", String::from_utf8_lossy(&self.body)))
        }

        pub fn text(&self) -> String {
            String::from_utf8_lossy(&self.body).into_owned()
        }

        pub fn header(&self, name: &str) -> Option<&str> {
            self.headers.get(name).and_then(|v| v.to_str().ok())
        }
    }

    pub async fn send(app: &Router, req: Request<Body>) -> Reply {
        let resp = app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let headers = resp.headers().clone();
        let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        Reply { status, headers, body }
    }

    pub async fn get(app: &Router, uri: &str) -> Reply {
        send(app, Request::get(uri).body(Body::empty()).unwrap()).await
    }

    pub async fn get_range(app: &Router, uri: &str, range: &str) -> Reply {
        send(app, Request::get(uri).header("range", range).body(Body::empty()).unwrap()).await
    }

    pub async fn post_json(app: &Router, uri: &str, body: &serde_json::Value) -> Reply {
        send(
            app,
            Request::post(uri)
                .header("content-type", "application/json")
                .body(Body::from(body.to_string()))
                .unwrap(),
        )
        .await
    }

    pub async fn post_multipart(app: &Router, uri: &str, body: Vec<u8>) -> Reply {
        send(
            app,
            Request::post(uri)
                .header("content-type", format!("multipart/form-data; boundary={}", super::BOUNDARY))
                .body(Body::from(body))
                .unwrap(),
        )
        .await
    }
}

// ---------------------------------------------------------------------------
// Cohort fixtures
// ---------------------------------------------------------------------------

/// Quadruplet of the sample session: two Dublin learners of French and two
/// Paris learners of English, plus a triad.
pub fn sample_cohort_json() -> Value {
    json!({
        "cohort_id": "tandem-2021",
        "name": "Teletandem spring 2021",
        "participants": [
            {"participant_id": "dcu-aoife", "display_name": "Aoife Byrne", "institution": "DCU", "target_language": "fr"},
            {"participant_id": "dcu-cian", "display_name": "Cian Walsh", "institution": "DCU", "target_language": "fr"},
            {"participant_id": "psl-lucas", "display_name": "Lucas Martin", "institution": "PSL", "target_language": "en"},
            {"participant_id": "psl-ines", "display_name": "Inès Moreau", "institution": "PSL", "target_language": "en"},
            {"participant_id": "dcu-niamh", "display_name": "Niamh Kelly", "institution": "DCU", "target_language": "fr"},
            {"participant_id": "dcu-oisin", "display_name": "Oisín Ryan", "institution": "DCU", "target_language": "fr"},
            {"participant_id": "psl-chloe", "display_name": "Chloé Petit", "institution": "PSL", "target_language": "en"}
        ],
        "groups": [
            {"group_id": "quad-1", "participant_ids": ["dcu-aoife", "dcu-cian", "psl-lucas", "psl-ines"]},
            {"group_id": "triad-1", "participant_ids": ["dcu-niamh", "dcu-oisin", "psl-chloe"]}
        ]
    })
}

pub fn sample_speaker_map() -> Value {
    json!({
        "Aoife Byrne": "dcu-aoife",
        "Cian Walsh": "dcu-cian",
        "Lucas Martin": "psl-lucas",
        "Inès Moreau": "psl-ines"
    })
}

/// Seeded synthetic transcript for week `week` of the seven-week fixture,
/// spoken by the four quadruplet members under their display names.
pub fn week_transcript(week: u32) -> Transcript {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7000 + week as u64);
    let t = random_transcript(&mut rng, 80, 4);
    let rename = ["Aoife Byrne", "Cian Walsh", "Lucas Martin", "Inès Moreau"];
    let mut cues = t.cues;
    let mut cursor = 0;
    for c in cues.iter_mut() {
        let slot = NAMES.iter().position(|n| *n == c.speaker).unwrap();
        c.speaker = rename[slot].to_string();
        cursor = cursor.max(c.end_ms);
    }
    // Every member speaks every week.
    for (i, name) in rename.iter().enumerate() {
        cues.push(RawCue {
            index: None,
            start_ms: cursor + 500 + i as u64 * 3000,
            end_ms: cursor + 2500 + i as u64 * 3000,
            speaker: name.to_string(),
            text: format!("semaine {week} merci euh bye"),
        });
    }
    Transcript::from_raw_cues(format!("week{week}.vtt"), cues)
}

pub fn cohort() -> tandem_core::store::Cohort {
    serde_json::from_value(sample_cohort_json()).unwrap()
}

pub fn speaker_map() -> BTreeMap<String, String> {
    serde_json::from_value(sample_speaker_map()).unwrap()
}

pub fn save_week(store: &SessionStore, week: u32, t: &Transcript) -> Result<SessionRecord, StoreError> {
    let cfg = AnalysisConfig::default();
    let vtt = t.to_vtt();
    store.save_session(NewSession {
        cohort_id: "tandem-2021".into(),
        group_id: "quad-1".into(),
        week_number: week,
        recorded_at: NaiveDate::from_ymd_opt(2021, 2, 1).unwrap() + chrono::Days::new(7 * (week as u64 - 1)),
        speaker_map: speaker_map(),
        metrics: compute_session_metrics(t, &cfg),
        transcript: store.stage_bytes(vtt.as_bytes(), Some("vtt"))?,
        media: None,
    })
}

/// Builds the seven-week cohort in `store`.
pub fn seven_weeks(store: &SessionStore) {
    store.create_cohort(&cohort()).unwrap();
    // Saved out of order on purpose.
    for week in [3, 1, 7, 2, 5, 4, 6] {
        save_week(store, week, &week_transcript(week)).unwrap();
    }
}

