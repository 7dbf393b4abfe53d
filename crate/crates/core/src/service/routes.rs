use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{build_study, now_rfc3339, ServiceError, SharedState, StudyConfig};
use crate::corpus::read_frame;
use crate::evalkit::{aggregate_judgments, GroundTruth, JudgmentRecord, Side};
use crate::navsim::{render_frame, FRAME_HEIGHT, FRAME_WIDTH};
use crate::policies::Trajectory;

pub const QUESTION: &str = "Which video is more likely to be human?";

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            ServiceError::Validation(_) => StatusCode::BAD_REQUEST,
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Conflict(_) => StatusCode::CONFLICT,
            ServiceError::Forbidden(_) => StatusCode::FORBIDDEN,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            tracing::error!(error = %self, "request failed");
        }
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}

type ApiResult<T> = Result<T, ServiceError>;

#[derive(Deserialize)]
struct CreateStudy {
    config: StudyConfig,
    #[serde(default)]
    seed: u64,
}

#[derive(Serialize)]
struct StudyInfo {
    study_id: String,
    trial_count: usize,
    likert_levels: u8,
}

#[derive(Deserialize, Default)]
struct CreateSession {
    #[serde(default)]
    consent: bool,
    #[serde(default)]
    familiarity: serde_json::Value,
}

#[derive(Serialize)]
struct SessionInfo {
    session_id: String,
    study_id: String,
    participant_token: String,
    trial_count: usize,
    consented: bool,
}

#[derive(Serialize)]
struct TrialView {
    position: usize,
    total: usize,
    trial_id: String,
    video_a: String,
    video_b: String,
    goal_index: usize,
    question: &'static str,
    likert_levels: u8,
    answered: Option<Side>,
}

#[derive(Deserialize)]
struct SubmitJudgment {
    trial_id: String,
    choice: Side,
    uncertainty: u8,
    #[serde(default)]
    rationale: String,
}

#[derive(Serialize)]
struct ReplayStep {
    t: usize,
    x: f64,
    y: f64,
    z: f64,
    heading: f64,
}

#[derive(Serialize)]
struct Replay {
    video_id: String,
    goal_index: usize,
    goal: Option<[f64; 2]>,
    map: crate::navsim::MapSpec,
    steps: Vec<ReplayStep>,
}

pub fn router(state: SharedState) -> Router {
    Router::new()
        .route("/health", get(|| async { Json(json!({ "status": "ok" })) }))
        .route("/studies", post(create_study))
        .route("/studies/:id", get(study_info))
        .route("/studies/:id/sessions", post(create_session))
        .route("/studies/:id/export", get(export))
        .route("/sessions/:id", get(session_info))
        .route("/sessions/:id/consent", post(consent))
        .route("/sessions/:id/trials/:k", get(trial))
        .route("/sessions/:id/judgments", post(submit))
        .route("/replays/:video", get(replay))
        .route("/replays/:video/frames/:t", get(frame))
        .with_state(state)
}

async fn create_study(State(st): State<SharedState>, Json(body): Json<CreateStudy>) -> ApiResult<(StatusCode, Json<StudyInfo>)> {
    let study = build_study(&body.config, &st.manifest, body.seed)?;
    let study = st.store.add_study(study)?;
    tracing::info!(study = %study.config.study_id, trials = study.trials.len(), "study created");
    Ok((
        StatusCode::CREATED,
        Json(StudyInfo {
            study_id: study.config.study_id.clone(),
            trial_count: study.trials.len(),
            likert_levels: study.config.likert_levels,
        }),
    ))
}

async fn study_info(State(st): State<SharedState>, Path(id): Path<String>) -> ApiResult<Json<StudyInfo>> {
    let study = st.store.study(&id).ok_or_else(|| ServiceError::NotFound(format!("unknown study {id}")))?;
    Ok(Json(StudyInfo {
        study_id: id,
        trial_count: study.trials.len(),
        likert_levels: study.config.likert_levels,
    }))
}

fn session_info_of(s: &super::Session) -> SessionInfo {
    SessionInfo {
        session_id: s.session_id.clone(),
        study_id: s.study_id.clone(),
        participant_token: s.participant_token.clone(),
        trial_count: s.order.len(),
        consented: s.consent_at.is_some(),
    }
}

async fn create_session(
    State(st): State<SharedState>,
    Path(id): Path<String>,
    body: Option<Json<CreateSession>>,
) -> ApiResult<(StatusCode, Json<SessionInfo>)> {
    let body = body.map(|b| b.0).unwrap_or_default();
    let session = st.store.create_session(&id, body.consent, body.familiarity)?;
    Ok((StatusCode::CREATED, Json(session_info_of(&session))))
}

async fn session_info(State(st): State<SharedState>, Path(id): Path<String>) -> ApiResult<Json<SessionInfo>> {
    let s = st.store.session(&id).ok_or_else(|| ServiceError::NotFound(format!("unknown session {id}")))?;
    Ok(Json(session_info_of(&s)))
}

async fn consent(State(st): State<SharedState>, Path(id): Path<String>) -> ApiResult<Json<SessionInfo>> {
    Ok(Json(session_info_of(&st.store.acknowledge_consent(&id)?)))
}

fn consented_session(st: &SharedState, id: &str) -> ApiResult<(super::Session, std::sync::Arc<super::Study>)> {
    let s = st.store.session(id).ok_or_else(|| ServiceError::NotFound(format!("unknown session {id}")))?;
    if s.consent_at.is_none() {
        return Err(ServiceError::Forbidden("consent has not been acknowledged for this session".into()));
    }
    let study = st
        .store
        .study(&s.study_id)
        .ok_or_else(|| ServiceError::Internal(format!("session {id} references missing study")))?;
    Ok((s, study))
}

async fn trial(State(st): State<SharedState>, Path((id, k)): Path<(String, usize)>) -> ApiResult<Json<TrialView>> {
    let (session, study) = consented_session(&st, &id)?;
    let &index = session
        .order
        .get(k)
        .ok_or_else(|| ServiceError::NotFound(format!("trial position {k} out of range 0..{}", session.order.len())))?;
    let t = &study.trials[index];
    Ok(Json(TrialView {
        position: k,
        total: session.order.len(),
        trial_id: t.def.trial_id.clone(),
        video_a: t.public_a.clone(),
        video_b: t.public_b.clone(),
        goal_index: t.def.goal_index,
        question: QUESTION,
        likert_levels: study.config.likert_levels,
        answered: st.store.answered(&id, &t.def.trial_id),
    }))
}

async fn submit(
    State(st): State<SharedState>,
    Path(id): Path<String>,
    Json(body): Json<SubmitJudgment>,
) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    let (session, study) = consented_session(&st, &id)?;
    if study.trial(&body.trial_id).is_none() {
        return Err(ServiceError::NotFound(format!("trial {} is not part of this session", body.trial_id)));
    }
    let levels = study.config.likert_levels;
    if !(1..=levels).contains(&body.uncertainty) {
        return Err(ServiceError::Validation(format!("uncertainty must be within 1..={levels}")));
    }
    let record = JudgmentRecord {
        session_id: session.session_id,
        trial_id: body.trial_id.clone(),
        choice: body.choice,
        uncertainty: body.uncertainty,
        rationale: body.rationale,
        submitted_at: now_rfc3339(),
    };
    let stored = st.store.submit(record)?;
    let status = if stored { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(json!({ "trial_id": body.trial_id, "stored": stored }))))
}

async fn export(State(st): State<SharedState>, Path(id): Path<String>) -> ApiResult<Json<GroundTruth>> {
    let study = st.store.study(&id).ok_or_else(|| ServiceError::NotFound(format!("unknown study {id}")))?;
    let records = st.store.records_for(&id)?;
    if records.is_empty() {
        return Err(ServiceError::NotFound(format!("study {id} has no judgments yet")));
    }
    let truth = aggregate_judgments(&id, &study.defs(), &records).map_err(|e| ServiceError::Internal(e.to_string()))?;
    Ok(Json(truth))
}

fn load_video(st: &SharedState, video: &str) -> ApiResult<(Trajectory, usize)> {
    let (trajectory_id, goal) = st
        .resolve_video(video)
        .ok_or_else(|| ServiceError::NotFound(format!("unknown video {video}")))?;
    let path = st
        .trajectory_file(&trajectory_id)
        .ok_or_else(|| ServiceError::Internal(format!("video {video} missing from corpus")))?;
    let t = Trajectory::load(&path).map_err(|e| ServiceError::Internal(e.to_string()))?;
    Ok((t, goal))
}

async fn replay(State(st): State<SharedState>, Path(video): Path<String>) -> ApiResult<Json<Replay>> {
    let (t, goal_index) = load_video(&st, &video)?;
    tracing::info!(video = %video, "replay requested");
    Ok(Json(Replay {
        video_id: video,
        goal_index,
        goal: st.map.goals.get(goal_index).copied(),
        map: (*st.map).clone(),
        steps: t
            .steps
            .iter()
            .map(|s| ReplayStep {
                t: s.t,
                x: s.x,
                y: s.y,
                z: s.z,
                heading: s.heading,
            })
            .collect(),
    }))
}

async fn frame(State(st): State<SharedState>, Path((video, t)): Path<(String, usize)>) -> ApiResult<Response> {
    let (traj, goal_index) = load_video(&st, &video)?;
    let step = traj
        .steps
        .get(t)
        .ok_or_else(|| ServiceError::NotFound(format!("frame {t} out of range 0..{}", traj.len())))?;
    let image = match st.frames_dir(&traj.id) {
        Some(dir) => read_frame(&dir, t)?,
        None => render_frame(&st.map, &step.pose(), st.map.goals.get(goal_index).copied(), FRAME_WIDTH, FRAME_HEIGHT),
    };
    let png = image.to_png().map_err(|e| ServiceError::Internal(e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}
