use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use spinereg_core::compositing::{overlay_mask, Palette};
use spinereg_core::image::{PixelFormat, RasterImage};
use spinereg_core::registration::{Method, RegistrationReport};
use spinereg_core::store::{save_manifest, CachedLandmarks, ExamStore, FileFingerprint, Manifest, Modality};
use spinereg_core::synth::generate_store;
use spinereg_core::{LandmarkSet, Point, RigidTransform};
use spinereg_service::{router, ApiError, AppState, ServiceOptions, Stats};

struct Fixture {
    _dir: tempfile::TempDir,
    state: Arc<AppState>,
    app: Router,
}

fn fixture(patients: usize) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    generate_store(dir.path(), 7, patients).unwrap();
    open(dir)
}

fn open(dir: tempfile::TempDir) -> Fixture {
    let state = Arc::new(AppState::new(ExamStore::open(dir.path()).unwrap(), ServiceOptions::default()));
    Fixture { _dir: dir, app: router(state.clone()), state }
}

/// First patient with its first RGB exam id and every RGB exam id.
fn rgb_exams(state: &AppState) -> (String, Vec<String>) {
    let p = &state.store().patients()[0];
    let ids = p.exams.iter().filter(|e| e.modality == Modality::Rgb).map(|e| e.exam_id.clone()).collect();
    (p.patient_id.clone(), ids)
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>, Option<String>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let ctype = resp.headers().get(header::CONTENT_TYPE).map(|v| v.to_str().unwrap().to_string());
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, body, ctype)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Vec<u8>, Option<String>) {
    send(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

async fn post_json(app: &Router, uri: &str, body: Value) -> (StatusCode, Vec<u8>) {
    let req = Request::post(uri)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let (s, b, _) = send(app, req).await;
    (s, b)
}

fn api_error(status: StatusCode, body: &[u8]) -> ApiError {
    let err: ApiError = serde_json::from_slice(body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(body)));
    assert_eq!(err.status, status.as_u16());
    assert!([400, 404, 422, 500].contains(&err.status));
    err
}

async fn stats(app: &Router) -> Stats {
    serde_json::from_slice(&get(app, "/stats").await.1).unwrap()
}

#[tokio::test]
async fn empty_store_lists_no_patients() {
    let dir = tempfile::tempdir().unwrap();
    save_manifest(dir.path(), &Manifest::default()).unwrap();
    let f = open(dir);
    let (status, body, _) = get(&f.app, "/patients").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(serde_json::from_slice::<Value>(&body).unwrap(), json!([]));
}

#[tokio::test]
async fn patient_list_mirrors_manifest() {
    let f = fixture(3);
    let (status, body, _) = get(&f.app, "/patients").await;
    assert_eq!(status, StatusCode::OK);
    let listed: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(listed.as_array().unwrap().len(), 3);
    assert_eq!(listed, serde_json::to_value(f.state.store().patients()).unwrap());

    let pid = &f.state.store().patients()[1].patient_id;
    let (status, body, _) = get(&f.app, &format!("/patients/{pid}/exams")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(
        serde_json::from_slice::<Value>(&body).unwrap(),
        serde_json::to_value(&f.state.store().patients()[1].exams).unwrap()
    );
}

#[tokio::test]
async fn unknown_patient_is_404() {
    let f = fixture(1);
    let (status, body, _) = get(&f.app, "/patients/nobody/exams").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(api_error(status, &body).code, "patient_not_found");
}

#[tokio::test]
async fn landmarks_are_detected_once_then_cached() {
    let f = fixture(1);
    let (pid, rgb) = rgb_exams(&f.state);
    let uri = format!("/patients/{pid}/exams/{}/landmarks", rgb[0]);
    let (status, first, _) = get(&f.app, &uri).await;
    assert_eq!(status, StatusCode::OK);
    let set: LandmarkSet = serde_json::from_slice(&first).unwrap();
    assert!(!set.spine.is_empty());
    assert_eq!(stats(&f.app).await.detections, 1);
    let (_, second, _) = get(&f.app, &uri).await;
    assert_eq!(first, second);
    assert_eq!(stats(&f.app).await.detections, 1);
}

#[tokio::test]
async fn xray_landmarks_have_no_spine() {
    let f = fixture(1);
    let p = &f.state.store().patients()[0];
    let x = p.exams.iter().find(|e| e.modality == Modality::Xray).unwrap();
    let (status, body, _) = get(&f.app, &format!("/patients/{}/exams/{}/landmarks", p.patient_id, x.exam_id)).await;
    assert_eq!(status, StatusCode::OK);
    assert!(serde_json::from_slice::<LandmarkSet>(&body).unwrap().spine.is_empty());
}

#[tokio::test]
async fn broken_fixture_names_failing_stage() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate_store(dir.path(), 7, 1).unwrap();
    let p = &manifest.patients[0];
    let exam = p.exams.iter().find(|e| e.modality == Modality::Rgb).unwrap();
    // a white SFSL view has no spine dots
    let sfsl = dir.path().join(exam.files.sfsl.as_ref().unwrap());
    let (w, h) = RasterImage::load_png(&sfsl).unwrap().dimensions();
    RasterImage::filled(w, h, PixelFormat::Rgb8, &[255, 255, 255]).unwrap().save_png(&sfsl).unwrap();
    let uri = format!("/patients/{}/exams/{}/landmarks", p.patient_id, exam.exam_id);
    let f = open(dir);
    let (status, body, _) = get(&f.app, &uri).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let err = api_error(status, &body);
    assert_eq!(err.code, "detection_failed");
    assert_eq!(err.stage.unwrap().to_string(), "spine_threshold");
}

#[tokio::test]
async fn identical_exams_register_to_identity() {
    let f = fixture(1);
    let (pid, rgb) = rgb_exams(&f.state);
    for method in ["angle", "lsq"] {
        let (status, body) = post_json(
            &f.app,
            "/register",
            json!({"patient": pid, "source_exam": rgb[0], "target_exam": rgb[0], "method": method}),
        )
        .await;
        assert_eq!(status, StatusCode::OK);
        let r: RegistrationReport = serde_json::from_slice(&body).unwrap();
        assert!((r.transform.scale - 1.0).abs() < 1e-12);
        assert!(r.transform.angle.abs() < 1e-12);
        assert!(r.transform.offset().norm() < 1e-9);
    }
}

/// Overwrites the source exam's cached landmarks with an exact similarity
/// image of the target's, so both estimators have a zero-residual solution.
fn plant_similar_landmarks(state: &AppState, pid: &str, source: &str, target: &str) {
    let t = state.landmarks(pid, target).unwrap();
    let warp = RigidTransform::new(0.8, 0.3, t.c7, Point::new(240.0, 90.0)).unwrap();
    let exam = state.store().exam(pid, source).unwrap();
    let files = exam.image_paths().into_iter().map(|rel| FileFingerprint::of(state.store().root(), rel).unwrap()).collect();
    let cached = CachedLandmarks { landmarks: t.transformed(&warp, format!("{pid}/{source}")), source_files: files };
    state.store().write_landmarks(pid, source, &cached).unwrap();
}

#[tokio::test]
async fn methods_agree_on_exact_data() {
    let f = fixture(1);
    let (pid, rgb) = rgb_exams(&f.state);
    plant_similar_landmarks(&f.state, &pid, &rgb[1], &rgb[0]);
    let mut reports = vec![];
    for method in ["angle", "lsq"] {
        let (status, body) = post_json(
            &f.app,
            "/register",
            json!({"patient": pid, "source_exam": rgb[1], "target_exam": rgb[0], "method": method}),
        )
        .await;
        assert_eq!(status, StatusCode::OK);
        reports.push(serde_json::from_slice::<RegistrationReport>(&body).unwrap());
    }
    for r in &reports {
        assert!(r.residual_left < 1e-9 && r.residual_right < 1e-9, "{r:?}");
        assert!(r.c7_error < 1e-9);
        assert!((r.transform.scale - 1.25).abs() < 1e-9);
    }
    assert!((reports[0].residual_left - reports[1].residual_left).abs() < 1e-9);
    assert!((reports[0].psis_distance_sum - reports[1].psis_distance_sum).abs() < 1e-9);
}

#[tokio::test]
async fn unknown_method_is_400() {
    let f = fixture(1);
    let (pid, rgb) = rgb_exams(&f.state);
    let (status, body) = post_json(
        &f.app,
        "/register",
        json!({"patient": pid, "source_exam": rgb[0], "target_exam": rgb[1], "method": "warp"}),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(api_error(status, &body).code, "bad_method");
    assert_eq!(stats(&f.app).await.registrations, 0);
}

#[tokio::test]
async fn degenerate_landmarks_are_422() {
    let f = fixture(1);
    let (pid, rgb) = rgb_exams(&f.state);
    let exam = f.state.store().exam(&pid, &rgb[1]).unwrap();
    let files = exam.image_paths().into_iter().map(|rel| FileFingerprint::of(f.state.store().root(), rel).unwrap()).collect();
    let p = Point::new(100.0, 100.0);
    let mut collapsed = LandmarkSet::new(format!("{pid}/{}", rgb[1]), p, p, p, Point::new(100.0, 300.0));
    collapsed.spine.clear();
    f.state.store().write_landmarks(&pid, &rgb[1], &CachedLandmarks { landmarks: collapsed, source_files: files }).unwrap();
    let (status, body) = post_json(
        &f.app,
        "/register",
        json!({"patient": pid, "source_exam": rgb[1], "target_exam": rgb[0], "method": "angle"}),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(api_error(status, &body).code, "registration_failed");
}

#[tokio::test]
async fn alpha_zero_returns_target_pixels() {
    let f = fixture(1);
    let (pid, rgb) = rgb_exams(&f.state);
    let (status, body, ctype) = get(&f.app, &format!("/blend?patient={pid}&target={}&sources={}&alpha=0", rgb[0], rgb[1])).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ctype.as_deref(), Some("image/png"));
    let got = RasterImage::from_png_bytes(&body).unwrap();
    assert_eq!(got, f.state.store().primary_image(&pid, &rgb[0]).unwrap().to_rgb());
}

#[tokio::test]
async fn blend_matches_store_rendering() {
    let f = fixture(1);
    let (pid, rgb) = rgb_exams(&f.state);
    let sources = rgb[1..].join(",");
    let (status, body, _) = get(&f.app, &format!("/blend?patient={pid}&target={}&sources={sources}&alpha=0.4", rgb[0])).await;
    assert_eq!(status, StatusCode::OK);
    let ids: Vec<&str> = rgb[1..].iter().map(String::as_str).collect();
    let expected = f.state.store().render_followup(&pid, &rgb[0], &ids, 0.4, Method::Angle).unwrap();
    assert_eq!(RasterImage::from_png_bytes(&body).unwrap(), expected);
}

#[tokio::test]
async fn alpha_sweep_reuses_registration() {
    let f = fixture(1);
    let (pid, rgb) = rgb_exams(&f.state);
    for alpha in ["0.25", "0.75", "0.5"] {
        let (status, _, _) = get(&f.app, &format!("/blend?patient={pid}&target={}&sources={}&alpha={alpha}", rgb[0], rgb[1])).await;
        assert_eq!(status, StatusCode::OK);
    }
    assert_eq!(stats(&f.app).await, Stats { detections: 2, registrations: 1 });
}

#[tokio::test]
async fn redetection_invalidates_cached_transform() {
    let f = fixture(1);
    let (pid, rgb) = rgb_exams(&f.state);
    let body = json!({"patient": pid, "source_exam": rgb[1], "target_exam": rgb[0], "method": "angle"});
    let (_, before) = post_json(&f.app, "/register", body.clone()).await;
    plant_similar_landmarks(&f.state, &pid, &rgb[1], &rgb[0]);
    let (_, after) = post_json(&f.app, "/register", body).await;
    assert_ne!(before, after);
    assert_eq!(stats(&f.app).await.registrations, 2);
}

#[tokio::test]
async fn alpha_out_of_range_is_400() {
    let f = fixture(1);
    let (pid, rgb) = rgb_exams(&f.state);
    for alpha in ["1.5", "-0.1", "NaN", "abc"] {
        let (status, body, _) = get(&f.app, &format!("/blend?patient={pid}&target={}&sources={}&alpha={alpha}", rgb[0], rgb[1])).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{alpha}");
        assert_eq!(api_error(status, &body).code, "alpha_out_of_range");
    }
    assert_eq!(stats(&f.app).await.registrations, 0);
}

#[tokio::test]
async fn landmark_overlay_changes_only_marker_pixels() {
    let f = fixture(1);
    let (pid, rgb) = rgb_exams(&f.state);
    let base = format!("/blend?patient={pid}&target={}&sources={}&alpha=0.5", rgb[0], rgb[1]);
    let plain = RasterImage::from_png_bytes(&get(&f.app, &format!("{base}&overlay=none")).await.1).unwrap();
    let marked = RasterImage::from_png_bytes(&get(&f.app, &format!("{base}&overlay=landmarks")).await.1).unwrap();
    let landmarks = f.state.landmarks(&pid, &rgb[0]).unwrap();
    let (w, h) = plain.dimensions();
    let mask = overlay_mask(&landmarks, &Palette::default(), w, h);
    let mut changed = 0;
    for y in 0..h {
        for x in 0..w {
            let differs = plain.rgb(x, y) != marked.rgb(x, y);
            if differs {
                changed += 1;
                assert!(mask.get(x, y), "({x},{y}) changed outside the marker mask");
            }
        }
    }
    assert!(changed > 0);
    assert!(changed <= mask.count());
}

#[tokio::test]
async fn every_error_body_is_api_error() {
    let f = fixture(1);
    let (pid, rgb) = rgb_exams(&f.state);
    let cases = [
        Request::get("/nowhere").body(Body::empty()).unwrap(),
        Request::get(format!("/patients/{pid}/exams/E99/landmarks")).body(Body::empty()).unwrap(),
        Request::delete("/patients").body(Body::empty()).unwrap(),
        Request::get("/register").body(Body::empty()).unwrap(),
        Request::post("/register").body(Body::from("{not json")).unwrap(),
        Request::get(format!("/blend?patient={pid}&alpha=0.5")).body(Body::empty()).unwrap(),
        Request::get(format!("/blend?patient={pid}&target={}&alpha=0.5&overlay=grid", rgb[0])).body(Body::empty()).unwrap(),
        Request::get(format!("/blend?patient={pid}&target={}&sources=E99&alpha=0.5", rgb[0])).body(Body::empty()).unwrap(),
    ];
    for req in cases {
        let uri = req.uri().to_string();
        let (status, body, ctype) = send(&f.app, req).await;
        assert!(!status.is_success(), "{uri}");
        assert!(ctype.unwrap().starts_with("application/json"), "{uri}");
        api_error(status, &body);
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_gets_return_identical_bytes() {
    let f = fixture(1);
    let (pid, rgb) = rgb_exams(&f.state);
    let uris = [
        format!("/patients/{pid}/exams/{}/landmarks", rgb[0]),
        format!("/blend?patient={pid}&target={}&sources={}&alpha=0.3", rgb[0], rgb[1]),
    ];
    for uri in uris {
        let tasks: Vec<_> = (0..8)
            .map(|_| {
                let (app, uri) = (f.app.clone(), uri.clone());
                tokio::spawn(async move { get(&app, &uri).await })
            })
            .collect();
        let mut bodies = vec![];
        for t in tasks {
            let (status, body, _) = t.await.unwrap();
            assert_eq!(status, StatusCode::OK);
            bodies.push(body);
        }
        assert!(bodies.windows(2).all(|w| w[0] == w[1]), "{uri}");
    }
    // the per-exam lock serializes detection of the same exam
    assert_eq!(stats(&f.app).await, Stats { detections: 2, registrations: 1 });
}

#[tokio::test]
async fn static_assets_are_served_beside_the_api() {
    let dir = tempfile::tempdir().unwrap();
    generate_store(dir.path(), 7, 1).unwrap();
    let assets = tempfile::tempdir().unwrap();
    std::fs::write(assets.path().join("index.html"), "<!doctype html><title>viewer</title>").unwrap();
    let options = ServiceOptions { static_dir: Some(assets.path().to_path_buf()), ..Default::default() };
    let app = router(Arc::new(AppState::new(ExamStore::open(dir.path()).unwrap(), options)));
    let (status, body, _) = get(&app, "/index.html").await;
    assert_eq!(status, StatusCode::OK);
    assert!(String::from_utf8(body).unwrap().contains("viewer"));
    let (status, _, _) = get(&app, "/patients").await;
    assert_eq!(status, StatusCode::OK);
    let (status, body, _) = get(&app, "/missing.js").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(api_error(status, &body).code, "not_found");
    assert!(Path::new(assets.path()).exists());
}
