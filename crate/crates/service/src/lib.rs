//! HTTP facade over an exam store.
//!
//! | route | response |
//! |---|---|
//! | `GET /patients` | manifest patient records |
//! | `GET /patients/{id}/exams` | exam records of one patient |
//! | `GET /patients/{id}/exams/{eid}/landmarks` | landmark JSON, detected on cache miss |
//! | `POST /register` | registration report |
//! | `GET /blend?patient&target&sources&alpha&overlay` | PNG |
//! | `GET /stats` | detector and estimator call counts |
//!
//! Anything else is served from the static viewer directory when one is
//! configured. Every error body is an [`ApiError`].

use std::collections::HashMap;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::handler::HandlerWithoutStateExt;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use spinereg_core::compositing::{self, overlay_landmarks, FrameImage, Palette};
use spinereg_core::registration::{Method, RegistrationReport};
use spinereg_core::store::{ExamRecord, ExamStore, PatientRecord, StoreError};
use spinereg_core::{LandmarkSet, Stage};

/// Error body of every failed request.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub status: u16,
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<Stage>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self { status: status.as_u16(), code: code.into(), message: message.into(), stage: None }
    }

    fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let message = e.to_string();
        match e {
            StoreError::PatientNotFound(_) => Self::new(StatusCode::NOT_FOUND, "patient_not_found", message),
            StoreError::ExamNotFound { .. } => Self::new(StatusCode::NOT_FOUND, "exam_not_found", message),
            StoreError::Detection { source, .. } => {
                let mut err = Self::new(StatusCode::UNPROCESSABLE_ENTITY, "detection_failed", message);
                err.stage = Some(source.stage);
                err
            }
            StoreError::Registration { .. } => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "registration_failed", message),
            StoreError::Composite(compositing_err) => match compositing_err {
                spinereg_core::CompositeError::AlphaOutOfRange(_) => Self::bad_request("alpha_out_of_range", message),
                _ => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "composite_failed", message),
            },
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Service settings beyond the store itself.
#[derive(Clone, Debug, Default)]
pub struct ServiceOptions {
    pub palette: Palette,
    /// Directory holding the built viewer.
    pub static_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct TransformKey {
    patient: String,
    source: String,
    target: String,
    method: Method,
    /// Hash of both landmark sets; re-detection invalidates the entry.
    landmarks: u64,
}

type ExamLock = Arc<Mutex<()>>;

/// Shared state: the loaded store plus registration caches.
pub struct AppState {
    store: ExamStore,
    options: ServiceOptions,
    transforms: Mutex<HashMap<TransformKey, RegistrationReport>>,
    warped: Mutex<HashMap<TransformKey, Arc<FrameImage>>>,
    exam_locks: Mutex<HashMap<(String, String), ExamLock>>,
    registrations: AtomicUsize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    pub detections: usize,
    pub registrations: usize,
}

fn landmark_fingerprint(a: &LandmarkSet, b: &LandmarkSet) -> u64 {
    let mut h = DefaultHasher::new();
    for set in [a, b] {
        serde_json::to_string(set).expect("landmarks serialize").hash(&mut h);
    }
    h.finish()
}

impl AppState {
    pub fn new(store: ExamStore, options: ServiceOptions) -> Self {
        Self {
            store,
            options,
            transforms: Mutex::default(),
            warped: Mutex::default(),
            exam_locks: Mutex::default(),
            registrations: AtomicUsize::new(0),
        }
    }

    pub fn store(&self) -> &ExamStore {
        &self.store
    }

    pub fn stats(&self) -> Stats {
        Stats { detections: self.store.detection_count(), registrations: self.registrations.load(Ordering::SeqCst) }
    }

    /// Landmarks of one exam; concurrent requests for the same exam run the
    /// detector once.
    pub fn landmarks(&self, patient: &str, exam: &str) -> Result<LandmarkSet, StoreError> {
        self.store.exam(patient, exam)?;
        let lock = {
            let mut locks = self.exam_locks.lock().unwrap_or_else(|e| e.into_inner());
            locks.entry((patient.to_string(), exam.to_string())).or_default().clone()
        };
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        self.store.get_or_detect_landmarks(patient, exam)
    }

    fn key(&self, patient: &str, source: &str, target: &str, method: Method) -> Result<(TransformKey, LandmarkSet, LandmarkSet), StoreError> {
        let s = self.landmarks(patient, source)?;
        let t = self.landmarks(patient, target)?;
        let key = TransformKey {
            patient: patient.into(),
            source: source.into(),
            target: target.into(),
            method,
            landmarks: landmark_fingerprint(&s, &t),
        };
        Ok((key, s, t))
    }

    /// Registration report, computed at most once per landmark state.
    pub fn register(&self, patient: &str, source: &str, target: &str, method: Method) -> Result<RegistrationReport, StoreError> {
        let (key, s, t) = self.key(patient, source, target, method)?;
        if let Some(r) = self.transforms.lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
            return Ok(r.clone());
        }
        self.registrations.fetch_add(1, Ordering::SeqCst);
        let report = spinereg_core::registration::estimate(&s, &t, method).map_err(|error| StoreError::Registration {
            source_exam: source.to_string(),
            target_exam: target.to_string(),
            error,
        })?;
        self.transforms.lock().unwrap_or_else(|e| e.into_inner()).insert(key, report.clone());
        Ok(report)
    }

    fn warped(&self, patient: &str, source: &str, target: &str, method: Method) -> Result<Arc<FrameImage>, StoreError> {
        let report = self.register(patient, source, target, method)?;
        let (key, _, _) = self.key(patient, source, target, method)?;
        if let Some(img) = self.warped.lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
            return Ok(img.clone());
        }
        let img = Arc::new(self.store.registered_image(patient, source, target, &report)?);
        self.warped.lock().unwrap_or_else(|e| e.into_inner()).insert(key, img.clone());
        Ok(img)
    }

    /// Sources registered onto `target` and folded over it in exam order.
    pub fn blend(&self, req: &BlendRequest) -> Result<Vec<u8>, ApiError> {
        let target = self.store.primary_image(&req.patient, &req.target)?.to_rgb();
        let frame = spinereg_core::store::frame_id(&req.patient, &req.target);
        let ordered = self.store.chronological(&req.patient, &req.sources.iter().map(String::as_str).collect::<Vec<_>>())?;
        let layers = ordered
            .iter()
            .map(|s| self.warped(&req.patient, s, &req.target, req.method).map(|img| (*img).clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let mut out = compositing::render_followup(&FrameImage::new(frame, target), &layers, req.alpha).map_err(StoreError::from)?;
        if req.overlay == Overlay::Landmarks {
            let landmarks = self.landmarks(&req.patient, &req.target)?;
            out = overlay_landmarks(&out, &landmarks, &self.options.palette).map_err(StoreError::from)?;
        }
        out.to_png_bytes()
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Overlay {
    #[default]
    None,
    Landmarks,
}

/// Parsed `/blend` query.
#[derive(Clone, Debug, PartialEq)]
pub struct BlendRequest {
    pub patient: String,
    pub target: String,
    pub sources: Vec<String>,
    pub alpha: f64,
    pub overlay: Overlay,
    pub method: Method,
}

impl BlendRequest {
    pub fn from_query(q: &HashMap<String, String>) -> ApiResult<Self> {
        let required = |k: &str| {
            q.get(k)
                .filter(|v| !v.is_empty())
                .cloned()
                .ok_or_else(|| ApiError::bad_request("missing_parameter", format!("query parameter `{k}` is required")))
        };
        let alpha_text = required("alpha")?;
        let alpha: f64 = alpha_text
            .parse()
            .map_err(|_| ApiError::bad_request("alpha_out_of_range", format!("alpha `{alpha_text}` is not a number")))?;
        compositing::check_alpha(alpha).map_err(|e| ApiError::bad_request("alpha_out_of_range", e.to_string()))?;
        let overlay = match q.get("overlay").map(String::as_str) {
            None | Some("") | Some("none") => Overlay::None,
            Some("landmarks") => Overlay::Landmarks,
            Some(other) => {
                return Err(ApiError::bad_request("bad_overlay", format!("overlay `{other}` (expected `none` or `landmarks`)")))
            }
        };
        Ok(Self {
            patient: required("patient")?,
            target: required("target")?,
            sources: q
                .get("sources")
                .map(|s| s.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect())
                .unwrap_or_default(),
            alpha,
            overlay,
            method: parse_method(q.get("method").map(String::as_str))?,
        })
    }
}

fn parse_method(m: Option<&str>) -> ApiResult<Method> {
    match m {
        None | Some("") => Ok(Method::Angle),
        Some(s) => s.parse().map_err(|e: String| ApiError::bad_request("bad_method", e)),
    }
}

/// `POST /register` body. `method` defaults to `angle`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegisterRequest {
    pub patient: String,
    pub source_exam: String,
    pub target_exam: String,
    #[serde(default)]
    pub method: Option<String>,
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .unwrap_or_else(|e| Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())))
}

type Shared = State<Arc<AppState>>;

async fn list_patients(State(state): Shared) -> Json<Vec<PatientRecord>> {
    Json(state.store.patients().to_vec())
}

async fn list_exams(State(state): Shared, Path(id): Path<String>) -> ApiResult<Json<Vec<ExamRecord>>> {
    Ok(Json(state.store.patient(&id)?.exams.clone()))
}

async fn get_landmarks(State(state): Shared, Path((id, eid)): Path<(String, String)>) -> ApiResult<Json<LandmarkSet>> {
    blocking(move || Ok(Json(state.landmarks(&id, &eid)?))).await
}

async fn post_register(State(state): Shared, body: Bytes) -> ApiResult<Json<RegistrationReport>> {
    let req: RegisterRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request("bad_request", format!("invalid body: {e}")))?;
    let method = parse_method(req.method.as_deref())?;
    blocking(move || Ok(Json(state.register(&req.patient, &req.source_exam, &req.target_exam, method)?))).await
}

async fn get_blend(State(state): Shared, Query(q): Query<HashMap<String, String>>) -> ApiResult<Response> {
    let req = BlendRequest::from_query(&q)?;
    let png = blocking(move || state.blend(&req)).await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

async fn get_stats(State(state): Shared) -> Json<Stats> {
    Json(state.stats())
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route")
}

async fn method_not_allowed() -> ApiError {
    ApiError::bad_request("method_not_allowed", "method not allowed on this route")
}

pub fn router(state: Arc<AppState>) -> Router {
    let static_dir = state.options.static_dir.clone();
    let api = Router::new()
        .route("/patients", get(list_patients))
        .route("/patients/{id}/exams", get(list_exams))
        .route("/patients/{id}/exams/{eid}/landmarks", get(get_landmarks))
        .route("/register", post(post_register))
        .route("/blend", get(get_blend))
        .route("/stats", get(get_stats))
        .method_not_allowed_fallback(method_not_allowed)
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir).not_found_service(not_found.into_service())),
        None => api.fallback(not_found),
    }
}

/// Binds `addr` and serves until Ctrl-C.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
