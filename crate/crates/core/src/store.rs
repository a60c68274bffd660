//! File-backed storage for cohorts and weekly sessions.
//!
//! Layout under the data directory:
//!
//! ```text
//! cohorts/<cohort_id>/cohort.json
//! cohorts/<cohort_id>/index.json             committed sessions
//! cohorts/<cohort_id>/sessions/<id>.json     SessionRecord
//! cohorts/<cohort_id>/files/<id>/transcript.vtt
//! cohorts/<cohort_id>/files/<id>/media.<ext>
//! staging/                                   uploads not yet committed
//! ```
//!
//! Every document is written to a temporary file and renamed into place.
//! A session exists once its entry is in the cohort index; session files
//! without an index entry are invisible. Writes to one cohort are
//! serialised by a per-cohort lock.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, NaiveDate, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tempfile::{NamedTempFile, TempPath};

use crate::error::StoreError;
use crate::json;
use crate::metrics::SessionMetrics;
use crate::text::Language;

type Result<T> = std::result::Result<T, StoreError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Participant {
    pub participant_id: String,
    pub display_name: String,
    pub institution: String,
    pub target_language: Language,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Group {
    pub group_id: String,
    pub participant_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cohort {
    pub cohort_id: String,
    pub name: String,
    pub participants: Vec<Participant>,
    pub groups: Vec<Group>,
}

impl Cohort {
    pub fn validate(&self) -> Result<()> {
        check_id("cohort_id", &self.cohort_id)?;
        let mut ids = HashSet::new();
        for p in &self.participants {
            check_id("participant_id", &p.participant_id)?;
            if p.target_language == Language::Unknown {
                return invalid(format!(
                    "participant {} target_language must be fr or en",
                    p.participant_id
                ));
            }
            if !ids.insert(p.participant_id.as_str()) {
                return invalid(format!("duplicate participant_id {}", p.participant_id));
            }
        }
        let mut group_ids = HashSet::new();
        for g in &self.groups {
            check_id("group_id", &g.group_id)?;
            if !group_ids.insert(g.group_id.as_str()) {
                return invalid(format!("duplicate group_id {}", g.group_id));
            }
            if g.participant_ids.len() < 2 {
                return invalid(format!("group {} needs at least two members", g.group_id));
            }
            let mut members = HashSet::new();
            for m in &g.participant_ids {
                if !ids.contains(m.as_str()) {
                    return invalid(format!("group {} references unknown participant {m}", g.group_id));
                }
                if !members.insert(m.as_str()) {
                    return invalid(format!("group {} lists {m} twice", g.group_id));
                }
            }
        }
        Ok(())
    }

    pub fn participant(&self, participant_id: &str) -> Option<&Participant> {
        self.participants.iter().find(|p| p.participant_id == participant_id)
    }

    pub fn group(&self, group_id: &str) -> Option<&Group> {
        self.groups.iter().find(|g| g.group_id == group_id)
    }

    pub fn participant_position(&self, participant_id: &str) -> Option<usize> {
        self.participants.iter().position(|p| p.participant_id == participant_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub cohort_id: String,
    pub group_id: String,
    pub week_number: u32,
    pub recorded_at: NaiveDate,
    /// Relative to the data directory.
    pub transcript_path: String,
    pub media_path: Option<String>,
    /// Transcript speaker label to participant id.
    pub speaker_map: BTreeMap<String, String>,
    pub metrics: SessionMetrics,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressionPoint {
    pub week_number: u32,
    pub share: f64,
    pub floor_turn_count: usize,
    pub speaking_ms: u64,
    pub filled_pause_count: usize,
}

/// Later point minus earlier point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressionDelta {
    pub from_week: u32,
    pub to_week: u32,
    pub share: f64,
    pub floor_turn_count: i64,
    pub speaking_ms: i64,
    pub filled_pause_count: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressionReport {
    pub participant_id: String,
    pub points: Vec<ProgressionPoint>,
    pub deltas: Vec<ProgressionDelta>,
}

impl ProgressionReport {
    pub fn from_points(participant_id: String, points: Vec<ProgressionPoint>) -> Self {
        let deltas = points
            .windows(2)
            .map(|w| ProgressionDelta {
                from_week: w[0].week_number,
                to_week: w[1].week_number,
                share: w[1].share - w[0].share,
                floor_turn_count: w[1].floor_turn_count as i64 - w[0].floor_turn_count as i64,
                speaking_ms: w[1].speaking_ms as i64 - w[0].speaking_ms as i64,
                filled_pause_count: w[1].filled_pause_count as i64 - w[0].filled_pause_count as i64,
            })
            .collect();
        ProgressionReport {
            participant_id,
            points,
            deltas,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SessionFilter {
    pub cohort_id: Option<String>,
    pub group_id: Option<String>,
    pub week_number: Option<u32>,
}

/// An uploaded file held in the staging area until its session commits.
/// Dropped without committing, it is deleted.
#[derive(Debug)]
pub struct StagedFile {
    path: TempPath,
    extension: Option<String>,
}

impl StagedFile {
    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Everything needed to commit a session; the store assigns id, paths and
/// creation time.
#[derive(Debug)]
pub struct NewSession {
    pub cohort_id: String,
    pub group_id: String,
    pub week_number: u32,
    pub recorded_at: NaiveDate,
    pub speaker_map: BTreeMap<String, String>,
    pub metrics: SessionMetrics,
    pub transcript: StagedFile,
    pub media: Option<StagedFile>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct IndexEntry {
    session_id: String,
    group_id: String,
    week_number: u32,
    recorded_at: NaiveDate,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
struct CohortIndex {
    sessions: Vec<IndexEntry>,
}

#[derive(Debug)]
pub struct SessionStore {
    root: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl SessionStore {
    /// Opens (creating if needed) a data directory.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for dir in [root.join("cohorts"), root.join("staging")] {
            fs::create_dir_all(&dir).map_err(|e| StoreError::io(&dir, e))?;
        }
        Ok(SessionStore {
            root,
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn cohort_lock(&self, cohort_id: &str) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().unwrap_or_else(|p| p.into_inner());
        locks.entry(cohort_id.to_string()).or_default().clone()
    }

    fn cohort_dir(&self, cohort_id: &str) -> PathBuf {
        self.root.join("cohorts").join(cohort_id)
    }

    pub fn resolve(&self, relative: &str) -> PathBuf {
        self.root.join(relative)
    }

    pub fn create_cohort(&self, cohort: &Cohort) -> Result<()> {
        cohort.validate()?;
        let lock = self.cohort_lock(&cohort.cohort_id);
        let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());
        let dir = self.cohort_dir(&cohort.cohort_id);
        if dir.join("cohort.json").exists() {
            return Err(StoreError::Conflict(format!("cohort {} already exists", cohort.cohort_id)));
        }
        fs::create_dir_all(dir.join("sessions")).map_err(|e| StoreError::io(&dir, e))?;
        write_json_atomic(&dir.join("index.json"), &CohortIndex::default())?;
        write_json_atomic(&dir.join("cohort.json"), cohort)
    }

    pub fn get_cohort(&self, cohort_id: &str) -> Result<Cohort> {
        if check_id("cohort_id", cohort_id).is_err() {
            return Err(not_found_cohort(cohort_id));
        }
        let path = self.cohort_dir(cohort_id).join("cohort.json");
        read_json_opt(&path)?.ok_or_else(|| not_found_cohort(cohort_id))
    }

    /// All cohorts ordered by id.
    pub fn list_cohorts(&self) -> Result<Vec<Cohort>> {
        let mut out: Vec<Cohort> = Vec::new();
        for id in self.cohort_ids()? {
            if let Some(c) = read_json_opt(&self.cohort_dir(&id).join("cohort.json"))? {
                out.push(c);
            }
        }
        Ok(out)
    }

    fn cohort_ids(&self) -> Result<Vec<String>> {
        let dir = self.root.join("cohorts");
        let mut ids: Vec<String> = fs::read_dir(&dir)
            .map_err(|e| StoreError::io(&dir, e))?
            .filter_map(|entry| entry.ok())
            .filter(|entry| entry.path().is_dir())
            .filter_map(|entry| entry.file_name().into_string().ok())
            .collect();
        ids.sort();
        Ok(ids)
    }

    fn read_index(&self, cohort_id: &str) -> Result<CohortIndex> {
        Ok(read_json_opt(&self.cohort_dir(cohort_id).join("index.json"))?.unwrap_or_default())
    }

    /// Writes bytes into the staging area.
    pub fn stage_bytes(&self, bytes: &[u8], extension: Option<&str>) -> Result<StagedFile> {
        let mut file = self.staging_file(extension)?;
        file.write_all(bytes)
            .map_err(|e| StoreError::io(self.root.join("staging"), e))?;
        Ok(self.finish_staging(file, extension))
    }

    /// An empty staging file to stream an upload into; pass it to
    /// [`SessionStore::finish_staging`] once written.
    pub fn staging_file(&self, _extension: Option<&str>) -> Result<NamedTempFile> {
        let dir = self.root.join("staging");
        NamedTempFile::new_in(&dir).map_err(|e| StoreError::io(&dir, e))
    }

    pub fn finish_staging(&self, file: NamedTempFile, extension: Option<&str>) -> StagedFile {
        StagedFile {
            path: file.into_temp_path(),
            extension: extension.map(sanitize_extension),
        }
    }

    /// Commits a session. Fails with `NotFound` for an unknown cohort,
    /// `Conflict` when the cohort already has that group's week, and
    /// `Validation` when the record breaks an invariant.
    pub fn save_session(&self, new: NewSession) -> Result<SessionRecord> {
        if new.week_number < 1 {
            return invalid("week_number must be at least 1".into());
        }
        let lock = self.cohort_lock(&new.cohort_id);
        let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());

        let cohort = self.get_cohort(&new.cohort_id)?;
        if cohort.group(&new.group_id).is_none() {
            return invalid(format!("unknown group {} in cohort {}", new.group_id, cohort.cohort_id));
        }
        for speaker in new.metrics.per_speaker.keys() {
            let Some(pid) = new.speaker_map.get(speaker) else {
                return invalid(format!("speaker {speaker:?} is not mapped to a participant"));
            };
            if cohort.participant(pid).is_none() {
                return invalid(format!("speaker {speaker:?} maps to unknown participant {pid}"));
            }
        }
        let mut index = self.read_index(&cohort.cohort_id)?;
        if index
            .sessions
            .iter()
            .any(|e| e.group_id == new.group_id && e.week_number == new.week_number)
        {
            return Err(StoreError::Conflict(format!(
                "group {} already has a week {} session",
                new.group_id, new.week_number
            )));
        }

        let session_id = uuid::Uuid::new_v4().simple().to_string();
        let cohort_rel = format!("cohorts/{}", cohort.cohort_id);
        let files_rel = format!("{cohort_rel}/files/{session_id}");
        let files_dir = self.root.join(&files_rel);
        let session_path = self
            .cohort_dir(&cohort.cohort_id)
            .join("sessions")
            .join(format!("{session_id}.json"));

        let result = (|| {
            fs::create_dir_all(&files_dir).map_err(|e| StoreError::io(&files_dir, e))?;
            let transcript_path = format!("{files_rel}/transcript.vtt");
            persist(new.transcript, &self.root.join(&transcript_path))?;
            let media_path = match new.media {
                Some(media) => {
                    let name = match &media.extension {
                        Some(ext) => format!("media.{ext}"),
                        None => "media".to_string(),
                    };
                    let rel = format!("{files_rel}/{name}");
                    persist(media, &self.root.join(&rel))?;
                    Some(rel)
                }
                None => None,
            };
            let record = SessionRecord {
                session_id: session_id.clone(),
                cohort_id: cohort.cohort_id.clone(),
                group_id: new.group_id.clone(),
                week_number: new.week_number,
                recorded_at: new.recorded_at,
                transcript_path,
                media_path,
                speaker_map: new.speaker_map,
                metrics: new.metrics,
                created_at: Utc::now(),
            };
            write_json_atomic(&session_path, &record)?;
            index.sessions.push(IndexEntry {
                session_id: session_id.clone(),
                group_id: record.group_id.clone(),
                week_number: record.week_number,
                recorded_at: record.recorded_at,
            });
            write_json_atomic(&self.cohort_dir(&cohort.cohort_id).join("index.json"), &index)?;
            Ok(record)
        })();
        if result.is_err() {
            let _ = fs::remove_dir_all(&files_dir);
            let _ = fs::remove_file(&session_path);
        }
        result
    }

    fn locate(&self, session_id: &str) -> Result<(String, IndexEntry)> {
        if check_id("session_id", session_id).is_ok() {
            for cohort_id in self.cohort_ids()? {
                if let Some(entry) = self
                    .read_index(&cohort_id)?
                    .sessions
                    .into_iter()
                    .find(|e| e.session_id == session_id)
                {
                    return Ok((cohort_id, entry));
                }
            }
        }
        Err(StoreError::NotFound(format!("session {session_id}")))
    }

    pub fn load_session(&self, session_id: &str) -> Result<SessionRecord> {
        let (cohort_id, _) = self.locate(session_id)?;
        self.read_session(&cohort_id, session_id)
    }

    fn read_session(&self, cohort_id: &str, session_id: &str) -> Result<SessionRecord> {
        let path = self
            .cohort_dir(cohort_id)
            .join("sessions")
            .join(format!("{session_id}.json"));
        read_json_opt(&path)?.ok_or_else(|| StoreError::NotFound(format!("session {session_id}")))
    }

    /// Sessions matching the filter, ordered by week, recording date, then
    /// cohort and id.
    pub fn list_sessions(&self, filter: &SessionFilter) -> Result<Vec<SessionRecord>> {
        let cohort_ids = match &filter.cohort_id {
            Some(id) => {
                self.get_cohort(id)?;
                vec![id.clone()]
            }
            None => self.cohort_ids()?,
        };
        let mut keyed = Vec::new();
        for cohort_id in cohort_ids {
            for entry in self.read_index(&cohort_id)?.sessions {
                if filter.group_id.as_ref().is_some_and(|g| *g != entry.group_id)
                    || filter.week_number.is_some_and(|w| w != entry.week_number)
                {
                    continue;
                }
                keyed.push((
                    (entry.week_number, entry.recorded_at, cohort_id.clone(), entry.session_id.clone()),
                    cohort_id.clone(),
                ));
            }
        }
        keyed.sort();
        keyed
            .into_iter()
            .map(|((_, _, _, session_id), cohort_id)| self.read_session(&cohort_id, &session_id))
            .collect()
    }

    /// Removes a session and its stored files.
    pub fn delete_session(&self, session_id: &str) -> Result<()> {
        let (cohort_id, _) = self.locate(session_id)?;
        let lock = self.cohort_lock(&cohort_id);
        let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());
        let mut index = self.read_index(&cohort_id)?;
        let before = index.sessions.len();
        index.sessions.retain(|e| e.session_id != session_id);
        if index.sessions.len() == before {
            return Err(StoreError::NotFound(format!("session {session_id}")));
        }
        let dir = self.cohort_dir(&cohort_id);
        write_json_atomic(&dir.join("index.json"), &index)?;
        let _ = fs::remove_file(dir.join("sessions").join(format!("{session_id}.json")));
        let _ = fs::remove_dir_all(dir.join("files").join(session_id));
        Ok(())
    }

    /// Week-by-week participation of one participant, with differences
    /// between consecutive weeks.
    pub fn progression_report(&self, participant_id: &str, cohort_id: &str) -> Result<ProgressionReport> {
        let cohort = self.get_cohort(cohort_id)?;
        if cohort.participant(participant_id).is_none() {
            return Err(StoreError::NotFound(format!(
                "participant {participant_id} in cohort {cohort_id}"
            )));
        }
        let sessions = self.list_sessions(&SessionFilter {
            cohort_id: Some(cohort_id.to_string()),
            ..Default::default()
        })?;
        let mut by_week: BTreeMap<u32, ProgressionPoint> = BTreeMap::new();
        for session in &sessions {
            for (label, pid) in &session.speaker_map {
                if pid != participant_id {
                    continue;
                }
                let Some(m) = session.metrics.per_speaker.get(label) else {
                    continue;
                };
                let p = by_week.entry(session.week_number).or_insert(ProgressionPoint {
                    week_number: session.week_number,
                    share: 0.0,
                    floor_turn_count: 0,
                    speaking_ms: 0,
                    filled_pause_count: 0,
                });
                p.share += m.share;
                p.floor_turn_count += m.floor_turn_count;
                p.speaking_ms += m.speaking_ms;
                p.filled_pause_count += m.filled_pause_count;
            }
        }
        Ok(ProgressionReport::from_points(
            participant_id.to_string(),
            by_week.into_values().collect(),
        ))
    }
}

fn invalid<T>(message: String) -> Result<T> {
    Err(StoreError::Validation(message))
}

fn not_found_cohort(cohort_id: &str) -> StoreError {
    StoreError::NotFound(format!("cohort {cohort_id}"))
}

/// Identifiers double as path components: ASCII letters, digits, `-`, `_`, `.`
/// (not leading), at most 128 characters.
pub fn check_id(what: &str, id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_' || b == b'.');
    if ok {
        Ok(())
    } else {
        invalid(format!("{what} {id:?} must be 1-128 characters of [A-Za-z0-9._-] not starting with '.'"))
    }
}

fn sanitize_extension(ext: &str) -> String {
    ext.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .take(8)
        .collect::<String>()
        .to_ascii_lowercase()
}

fn persist(file: StagedFile, dest: &Path) -> Result<()> {
    file.path
        .persist(dest)
        .map_err(|e| StoreError::io(dest, e.error))
}

fn write_json_atomic<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let dir = path.parent().expect("documents live inside the data directory");
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| StoreError::io(dir, e))?;
    tmp.write_all(json::to_canonical_string(value).as_bytes())
        .and_then(|_| tmp.as_file().sync_all())
        .map_err(|e| StoreError::io(path, e))?;
    tmp.persist(path).map_err(|e| StoreError::io(path, e.error))?;
    Ok(())
}

fn read_json_opt<T: DeserializeOwned>(path: &Path) -> Result<Option<T>> {
    match fs::read(path) {
        Ok(bytes) => serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|source| StoreError::Corrupt {
                path: path.to_path_buf(),
                source,
            }),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(StoreError::io(path, e)),
    }
}
