//! HTTP/JSON service over the analysis engine and session store.
//!
//! Every JSON body, errors included, is canonical JSON (sorted keys). The
//! schemas live under `docs/schemas/`.

use std::collections::BTreeMap;
use std::future::Future;
use std::io::{SeekFrom, Write};
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use tokio::io::{AsyncReadExt, AsyncSeekExt};
use tokio_util::io::ReaderStream;
use tower_http::cors::CorsLayer;

use crate::config::AnalysisConfig;
use crate::error::StoreError;
use crate::json;
use crate::metrics::compute_session_metrics;
use crate::store::{
    Cohort, NewSession, SessionFilter, SessionRecord, SessionStore, StagedFile,
};
use crate::timeline::{self, TimelineTrack};
use crate::transcript::{self, ParseIssue, Transcript};
use crate::turns;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadTranscript,
    NotFound,
    Conflict,
    ValidationFailed,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub status: u16,
    pub code: ErrorCode,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<serde_json::Value>,
}

impl ApiError {
    fn new(status: StatusCode, code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError {
            status: status.as_u16(),
            code,
            message: message.into(),
            detail: None,
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, ErrorCode::ValidationFailed, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, ErrorCode::NotFound, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, ErrorCode::Internal, message)
    }

    fn bad_transcript(issues: &[ParseIssue]) -> Self {
        ApiError {
            detail: Some(serde_json::to_value(issues).expect("issues serialize")),
            ..Self::new(
                StatusCode::BAD_REQUEST,
                ErrorCode::BadTranscript,
                "transcript could not be parsed",
            )
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(_) => ApiError::not_found(e.to_string()),
            StoreError::Conflict(_) => ApiError::new(StatusCode::CONFLICT, ErrorCode::Conflict, e.to_string()),
            StoreError::Validation(_) => ApiError::validation(e.to_string()),
            StoreError::Io { .. } | StoreError::Corrupt { .. } => {
                tracing::error!(error = %e, "store failure");
                ApiError::internal(e.to_string())
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        json_response(status, &self)
    }
}

type ApiResult<T = Response> = Result<T, ApiError>;

fn json_response<T: Serialize + ?Sized>(status: StatusCode, value: &T) -> Response {
    (
        status,
        [(header::CONTENT_TYPE, HeaderValue::from_static("application/json"))],
        json::to_canonical_string(value),
    )
        .into_response()
}

fn ok_json<T: Serialize + ?Sized>(value: &T) -> ApiResult {
    Ok(json_response(StatusCode::OK, value))
}

#[derive(Debug, Clone)]
pub struct ServiceOptions {
    /// Adds permissive cross-origin headers (dashboard development).
    pub cors: bool,
    pub max_upload_bytes: usize,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        ServiceOptions {
            cors: false,
            max_upload_bytes: 2 << 30,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AppState {
    pub store: Arc<SessionStore>,
    pub config: Arc<AnalysisConfig>,
}

impl AppState {
    pub fn new(store: SessionStore, config: AnalysisConfig) -> Self {
        AppState {
            store: Arc::new(store),
            config: Arc::new(config),
        }
    }
}

pub fn router(state: AppState, options: &ServiceOptions) -> Router {
    let app = Router::new()
        .route("/cohorts", get(list_cohorts).post(create_cohort))
        .route("/cohorts/{cohort_id}", get(get_cohort))
        .route("/cohorts/{cohort_id}/sessions", get(list_cohort_sessions).post(upload_session))
        .route(
            "/cohorts/{cohort_id}/participants/{participant_id}/progression",
            get(progression),
        )
        .route("/sessions/{session_id}", get(get_session).delete(delete_session))
        .route("/sessions/{session_id}/metrics", get(session_metrics))
        .route("/sessions/{session_id}/flow", get(session_flow))
        .route("/sessions/{session_id}/timeline", get(session_timeline))
        .route("/sessions/{session_id}/transcript", get(session_transcript))
        .route("/sessions/{session_id}/seek", get(session_seek))
        .route("/sessions/{session_id}/media", get(session_media))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .layer(DefaultBodyLimit::max(options.max_upload_bytes))
        .with_state(state);
    if options.cors {
        app.layer(CorsLayer::permissive())
    } else {
        app
    }
}

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    options: &ServiceOptions,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state, options))
        .with_graceful_shutdown(shutdown)
        .await
}

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> Result<T, StoreError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
        .map_err(ApiError::from)
}

async fn list_cohorts(State(state): State<AppState>) -> ApiResult {
    let store = state.store.clone();
    ok_json(&blocking(move || store.list_cohorts()).await?)
}

#[derive(Debug, Serialize)]
struct Created<'a> {
    cohort_id: &'a str,
}

async fn create_cohort(State(state): State<AppState>, body: Bytes) -> ApiResult {
    let cohort: Cohort = serde_json::from_slice(&body)
        .map_err(|e| ApiError::validation(format!("malformed cohort: {e}")))?;
    let store = state.store.clone();
    let c = cohort.clone();
    blocking(move || store.create_cohort(&c)).await?;
    Ok(json_response(
        StatusCode::CREATED,
        &Created {
            cohort_id: &cohort.cohort_id,
        },
    ))
}

async fn get_cohort(State(state): State<AppState>, Path(cohort_id): Path<String>) -> ApiResult {
    let store = state.store.clone();
    ok_json(&blocking(move || store.get_cohort(&cohort_id)).await?)
}

#[derive(Debug, Deserialize)]
struct SessionQuery {
    group_id: Option<String>,
    week: Option<u32>,
}

async fn list_cohort_sessions(
    State(state): State<AppState>,
    Path(cohort_id): Path<String>,
    query: Result<Query<SessionQuery>, axum::extract::rejection::QueryRejection>,
) -> ApiResult {
    let Query(query) = query.map_err(|e| ApiError::validation(e.body_text()))?;
    let store = state.store.clone();
    let filter = SessionFilter {
        cohort_id: Some(cohort_id),
        group_id: query.group_id,
        week_number: query.week,
    };
    ok_json(&blocking(move || store.list_sessions(&filter)).await?)
}

/// The `metadata` part of a session upload.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UploadMetadata {
    pub group_id: String,
    pub week_number: u32,
    pub speaker_map: BTreeMap<String, String>,
    /// Defaults to the upload date.
    pub recorded_at: Option<NaiveDate>,
}

#[derive(Debug, Serialize)]
pub struct UploadResponse {
    pub session: SessionRecord,
    pub warnings: Vec<ParseIssue>,
}

fn extension_of(filename: Option<&str>) -> Option<String> {
    let name = filename?;
    let (_, ext) = name.rsplit_once('.')?;
    (!ext.is_empty()).then(|| ext.to_string())
}

async fn upload_session(
    State(state): State<AppState>,
    Path(cohort_id): Path<String>,
    multipart: Result<Multipart, axum::extract::multipart::MultipartRejection>,
) -> ApiResult {
    let mut multipart = multipart.map_err(|e| ApiError::validation(e.body_text()))?;
    let store = state.store.clone();
    {
        let store = store.clone();
        let id = cohort_id.clone();
        blocking(move || store.get_cohort(&id)).await?;
    }

    let bad_part = |e: axum::extract::multipart::MultipartError| {
        ApiError::validation(format!("malformed multipart body: {}", e.body_text()))
    };
    let mut transcript_bytes: Option<Bytes> = None;
    let mut metadata: Option<UploadMetadata> = None;
    let mut media: Option<StagedFile> = None;
    while let Some(mut field) = multipart.next_field().await.map_err(bad_part)? {
        match field.name().unwrap_or_default() {
            "transcript" => transcript_bytes = Some(field.bytes().await.map_err(bad_part)?),
            "metadata" => {
                let raw = field.bytes().await.map_err(bad_part)?;
                metadata = Some(
                    serde_json::from_slice(&raw)
                        .map_err(|e| ApiError::validation(format!("malformed metadata: {e}")))?,
                );
            }
            "media" => {
                let ext = extension_of(field.file_name());
                let mut file = store.staging_file(ext.as_deref())?;
                while let Some(chunk) = field.chunk().await.map_err(bad_part)? {
                    file.write_all(&chunk)
                        .map_err(|e| ApiError::internal(format!("staging media: {e}")))?;
                }
                media = Some(store.finish_staging(file, ext.as_deref()));
            }
            other => {
                return Err(ApiError::validation(format!("unexpected multipart field {other:?}")));
            }
        }
    }
    let transcript_bytes =
        transcript_bytes.ok_or_else(|| ApiError::validation("missing transcript part"))?;
    let metadata = metadata.ok_or_else(|| ApiError::validation("missing metadata part"))?;

    let (transcript, mut issues) = transcript::parse_vtt_bytes("upload.vtt", &transcript_bytes);
    if transcript::has_errors(&issues) {
        return Err(ApiError::bad_transcript(&issues));
    }
    issues.extend(transcript::validate(&transcript));
    let metrics = compute_session_metrics(&transcript, &state.config);

    let record = blocking(move || {
        let transcript = store.stage_bytes(&transcript_bytes, Some("vtt"))?;
        store.save_session(NewSession {
            cohort_id,
            group_id: metadata.group_id,
            week_number: metadata.week_number,
            recorded_at: metadata
                .recorded_at
                .unwrap_or_else(|| chrono::Utc::now().date_naive()),
            speaker_map: metadata.speaker_map,
            metrics,
            transcript,
            media,
        })
    })
    .await?;
    Ok(json_response(
        StatusCode::CREATED,
        &UploadResponse {
            session: record,
            warnings: issues,
        },
    ))
}

async fn load_record(state: &AppState, session_id: String) -> ApiResult<SessionRecord> {
    let store = state.store.clone();
    blocking(move || store.load_session(&session_id)).await
}

async fn load_transcript(state: &AppState, record: &SessionRecord) -> ApiResult<Transcript> {
    let path = state.store.resolve(&record.transcript_path);
    let bytes = tokio::fs::read(&path)
        .await
        .map_err(|e| ApiError::internal(format!("reading stored transcript: {e}")))?;
    Ok(transcript::parse_vtt_bytes(&record.session_id, &bytes).0)
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    ok_json(&load_record(&state, id).await?)
}

async fn delete_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let store = state.store.clone();
    blocking(move || store.delete_session(&id)).await?;
    Ok(StatusCode::NO_CONTENT.into_response())
}

async fn session_metrics(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    ok_json(&load_record(&state, id).await?.metrics)
}

async fn session_flow(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    ok_json(&load_record(&state, id).await?.metrics.flow)
}

#[derive(Debug, Serialize)]
pub struct TimelineBody {
    pub session_id: String,
    pub duration_ms: u64,
    pub tracks: Vec<TimelineTrack>,
}

/// Tracks follow the cohort roster so a participant keeps the same
/// `speaker_index` (and colour) every week; unmapped labels come last.
async fn session_timeline(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let record = load_record(&state, id).await?;
    let transcript = load_transcript(&state, &record).await?;
    let store = state.store.clone();
    let cohort_id = record.cohort_id.clone();
    let cohort = blocking(move || store.get_cohort(&cohort_id)).await?;

    let seq = turns::analyze_turns(&transcript, &record.metrics.config_used);
    let roster_slot = |label: &str| {
        record
            .speaker_map
            .get(label)
            .and_then(|pid| cohort.participant_position(pid))
    };
    let mut order: Vec<String> = transcript.speakers.clone();
    order.sort_by(|a, b| {
        let key = |l: &String| (roster_slot(l).unwrap_or(usize::MAX), l.clone());
        key(a).cmp(&key(b))
    });
    let mut tracks = timeline::build_timeline(&seq, &order)
        .map_err(|e| ApiError::internal(e.to_string()))?;
    let roster_len = cohort.participants.len();
    let mut extra = 0;
    for track in &mut tracks {
        track.speaker_index = roster_slot(&track.speaker).unwrap_or_else(|| {
            extra += 1;
            roster_len + extra - 1
        });
    }
    ok_json(&TimelineBody {
        session_id: record.session_id,
        duration_ms: transcript.duration_ms,
        tracks,
    })
}

async fn session_transcript(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let record = load_record(&state, id).await?;
    ok_json(&load_transcript(&state, &record).await?)
}

#[derive(Debug, Deserialize)]
struct SeekQuery {
    t: Option<String>,
}

async fn session_seek(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(query): Query<SeekQuery>,
) -> ApiResult {
    let t: u64 = query
        .t
        .as_deref()
        .ok_or_else(|| ApiError::validation("missing query parameter t"))?
        .parse()
        .map_err(|_| ApiError::validation("t must be a non-negative integer of milliseconds"))?;
    let record = load_record(&state, id).await?;
    let transcript = load_transcript(&state, &record).await?;
    ok_json(&timeline::seek(&transcript, t))
}

async fn progression(
    State(state): State<AppState>,
    Path((cohort_id, participant_id)): Path<(String, String)>,
) -> ApiResult {
    let store = state.store.clone();
    ok_json(&blocking(move || store.progression_report(&participant_id, &cohort_id)).await?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ByteRange {
    Full,
    /// Inclusive bounds.
    Partial(u64, u64),
    Unsatisfiable,
}

/// Interprets a `Range` header against a resource length. Only a single
/// `bytes=` range is honoured; anything else is answered in full.
pub fn parse_range(header: Option<&str>, len: u64) -> ByteRange {
    let Some(spec) = header.and_then(|h| h.trim().strip_prefix("bytes=")) else {
        return ByteRange::Full;
    };
    if spec.contains(',') {
        return ByteRange::Full;
    }
    let Some((first, last)) = spec.trim().split_once('-') else {
        return ByteRange::Full;
    };
    let (first, last) = (first.trim(), last.trim());
    let parse = |s: &str| s.parse::<u64>().ok();
    match (first.is_empty(), last.is_empty()) {
        (true, true) => ByteRange::Full,
        (true, false) => match parse(last) {
            None => ByteRange::Full,
            Some(0) => ByteRange::Unsatisfiable,
            Some(_) if len == 0 => ByteRange::Unsatisfiable,
            Some(n) => ByteRange::Partial(len - n.min(len), len - 1),
        },
        (false, open_end) => {
            let Some(start) = parse(first) else {
                return ByteRange::Full;
            };
            let end = if open_end {
                u64::MAX
            } else {
                match parse(last) {
                    Some(end) if end >= start => end,
                    _ => return ByteRange::Full,
                }
            };
            if start >= len {
                ByteRange::Unsatisfiable
            } else {
                ByteRange::Partial(start, end.min(len - 1))
            }
        }
    }
}

fn media_content_type(path: &str) -> &'static str {
    match path.rsplit_once('.').map(|(_, e)| e) {
        Some("mp4" | "m4v") => "video/mp4",
        Some("webm") => "video/webm",
        Some("mkv") => "video/x-matroska",
        Some("mov") => "video/quicktime",
        Some("m4a") => "audio/mp4",
        Some("mp3") => "audio/mpeg",
        Some("wav") => "audio/wav",
        Some("ogg" | "oga") => "audio/ogg",
        _ => "application/octet-stream",
    }
}

async fn session_media(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> ApiResult {
    let record = load_record(&state, id).await?;
    let rel = record
        .media_path
        .ok_or_else(|| ApiError::not_found("session has no media attached"))?;
    let path = state.store.resolve(&rel);
    let mut file = tokio::fs::File::open(&path)
        .await
        .map_err(|e| ApiError::internal(format!("opening media: {e}")))?;
    let len = file
        .metadata()
        .await
        .map_err(|e| ApiError::internal(format!("reading media metadata: {e}")))?
        .len();

    let range = headers.get(header::RANGE).and_then(|v| v.to_str().ok());
    let content_type = HeaderValue::from_static(media_content_type(&rel));
    let accept = HeaderValue::from_static("bytes");
    match parse_range(range, len) {
        ByteRange::Full => Ok((
            StatusCode::OK,
            [
                (header::CONTENT_TYPE, content_type),
                (header::ACCEPT_RANGES, accept),
                (header::CONTENT_LENGTH, HeaderValue::from(len)),
            ],
            Body::from_stream(ReaderStream::new(file)),
        )
            .into_response()),
        ByteRange::Partial(start, end) => {
            file.seek(SeekFrom::Start(start))
                .await
                .map_err(|e| ApiError::internal(format!("seeking media: {e}")))?;
            let count = end - start + 1;
            let content_range = HeaderValue::from_str(&format!("bytes {start}-{end}/{len}"))
                .expect("ascii header");
            Ok((
                StatusCode::PARTIAL_CONTENT,
                [
                    (header::CONTENT_TYPE, content_type),
                    (header::ACCEPT_RANGES, accept),
                    (header::CONTENT_RANGE, content_range),
                    (header::CONTENT_LENGTH, HeaderValue::from(count)),
                ],
                Body::from_stream(ReaderStream::new(file.take(count))),
            )
                .into_response())
        }
        ByteRange::Unsatisfiable => Ok((
            StatusCode::RANGE_NOT_SATISFIABLE,
            [
                (header::ACCEPT_RANGES, accept),
                (
                    header::CONTENT_RANGE,
                    HeaderValue::from_str(&format!("bytes */{len}")).expect("ascii header"),
                ),
            ],
        )
            .into_response()),
    }
}
