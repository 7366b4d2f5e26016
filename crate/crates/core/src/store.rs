//! On-disk exam store.
//!
//! ```text
//! root/
//!   manifest.json
//!   <patient_id>/<exam_id>/sfsl.png, fd.png      (RGB exams)
//!   <patient_id>/<exam_id>/xray.png              (XRAY exams)
//!   <patient_id>/<exam_id>/landmarks.json        (detection cache)
//! ```
//!
//! The manifest has no fields for names or addresses; keys that look like
//! identifying data are rejected at load time. Unknown fields are otherwise
//! kept and written back unchanged.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::UNIX_EPOCH;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::compositing::{self, FrameImage};
use crate::error::{CompositeError, DetectionError, ImageError, RegistrationError};
use crate::exec::Execution;
use crate::image::{resample_nearest_into, RasterImage};
use crate::landmarks::{detect_sfsl_landmarks, detect_xray_landmarks, DetectionConfig, LandmarkSet};
use crate::registration::{self, Method, RegistrationReport};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LANDMARKS_FILE: &str = "landmarks.json";

/// Manifest keys that would carry identifying data.
const IDENTIFYING_KEYS: &[&str] = &[
    "name",
    "patient_name",
    "first_name",
    "last_name",
    "surname",
    "address",
    "birth_date",
    "date_of_birth",
    "dob",
    "phone",
    "email",
];

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: malformed manifest at `{field}`: {message}")]
    Manifest { path: PathBuf, field: String, message: String },
    #[error("{path}: malformed landmark file: {message}")]
    Landmarks { path: PathBuf, message: String },
    #[error("missing image file {path}")]
    MissingImage { path: PathBuf },
    #[error("patient `{0}` not found")]
    PatientNotFound(String),
    #[error("exam `{exam}` not found for patient `{patient}`")]
    ExamNotFound { patient: String, exam: String },
    #[error("exam {exam_id}: {source}")]
    Detection {
        exam_id: String,
        #[source]
        source: DetectionError,
    },
    #[error("registering {source_exam} onto {target_exam}: {error}")]
    Registration { source_exam: String, target_exam: String, error: RegistrationError },
    #[error(transparent)]
    Composite(#[from] CompositeError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "RGB")]
    Rgb,
    #[serde(rename = "XRAY")]
    Xray,
}

/// Image paths relative to the store root.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExamFiles {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sfsl: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fd: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xray: Option<String>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExamRecord {
    pub exam_id: String,
    pub date: NaiveDate,
    pub modality: Modality,
    pub files: ExamFiles,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl ExamRecord {
    /// Path of the image registration and blending operate on: the SFSL
    /// view for RGB exams, the radiograph otherwise.
    pub fn primary_image(&self) -> Option<&str> {
        match self.modality {
            Modality::Rgb => self.files.sfsl.as_deref(),
            Modality::Xray => self.files.xray.as_deref(),
        }
    }

    pub fn image_paths(&self) -> Vec<&str> {
        [&self.files.sfsl, &self.files.fd, &self.files.xray].into_iter().flatten().map(String::as_str).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    #[serde(default)]
    pub exams: Vec<ExamRecord>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl PatientRecord {
    pub fn exam(&self, exam_id: &str) -> Option<&ExamRecord> {
        self.exams.iter().find(|e| e.exam_id == exam_id)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default)]
    pub patients: Vec<PatientRecord>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

/// Coordinate frame name of an exam's primary image.
pub fn frame_id(patient_id: &str, exam_id: &str) -> String {
    format!("{patient_id}/{exam_id}")
}

fn safe_relative(path: &str) -> bool {
    let p = Path::new(path);
    !path.is_empty() && p.components().all(|c| matches!(c, Component::Normal(_) | Component::CurDir))
}

fn check_identifying(extra: &Map<String, Value>, at: &str) -> Result<(), (String, String)> {
    match extra.keys().find(|k| IDENTIFYING_KEYS.contains(&k.to_ascii_lowercase().as_str())) {
        Some(k) => Err((format!("{at}{k}"), "identifying fields are not stored".into())),
        None => Ok(()),
    }
}

impl Manifest {
    /// Structural checks. Errors carry a JSON-path-like field name.
    pub fn validate(&self) -> Result<(), (String, String)> {
        check_identifying(&self.extra, "")?;
        for (i, p) in self.patients.iter().enumerate() {
            let at = format!("patients[{i}]");
            if p.patient_id.trim().is_empty() {
                return Err((format!("{at}.patient_id"), "must not be empty".into()));
            }
            if !safe_relative(&p.patient_id) || p.patient_id.contains(['/', '\\']) {
                return Err((format!("{at}.patient_id"), "must be a plain directory name".into()));
            }
            if self.patients[..i].iter().any(|q| q.patient_id == p.patient_id) {
                return Err((format!("{at}.patient_id"), format!("duplicate patient `{}`", p.patient_id)));
            }
            check_identifying(&p.extra, &format!("{at}."))?;
            for (j, e) in p.exams.iter().enumerate() {
                let at = format!("{at}.exams[{j}]");
                if e.exam_id.trim().is_empty() || e.exam_id.contains(['/', '\\']) || !safe_relative(&e.exam_id) {
                    return Err((format!("{at}.exam_id"), "must be a non-empty plain name".into()));
                }
                if p.exams[..j].iter().any(|f| f.exam_id == e.exam_id) {
                    return Err((format!("{at}.exam_id"), format!("duplicate exam `{}`", e.exam_id)));
                }
                if j > 0 && e.date < p.exams[j - 1].date {
                    return Err((format!("{at}.date"), "exam dates must be non-decreasing".into()));
                }
                check_identifying(&e.extra, &format!("{at}."))?;
                let f = &e.files;
                let ok = match e.modality {
                    Modality::Rgb => f.sfsl.is_some() && f.fd.is_some() && f.xray.is_none(),
                    Modality::Xray => f.xray.is_some() && f.sfsl.is_none() && f.fd.is_none(),
                };
                if !ok {
                    let want = match e.modality {
                        Modality::Rgb => "RGB exams reference exactly `sfsl` and `fd`",
                        Modality::Xray => "XRAY exams reference exactly `xray`",
                    };
                    return Err((format!("{at}.files"), want.into()));
                }
                if let Some(bad) = e.image_paths().into_iter().find(|p| !safe_relative(p)) {
                    return Err((format!("{at}.files"), format!("path `{bad}` must be relative to the store root")));
                }
            }
        }
        Ok(())
    }
}

pub fn load_manifest(root: &Path) -> Result<Manifest, StoreError> {
    let path = root.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let manifest: Manifest = serde_path_to_error::deserialize(de).map_err(|e| StoreError::Manifest {
        path: path.clone(),
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    manifest
        .validate()
        .map_err(|(field, message)| StoreError::Manifest { path: path.clone(), field, message })?;
    Ok(manifest)
}

/// Loads and validates the manifest and checks that every referenced image
/// exists.
pub fn load_store(root: &Path) -> Result<Vec<PatientRecord>, StoreError> {
    let manifest = load_manifest(root)?;
    check_files(root, &manifest)?;
    Ok(manifest.patients)
}

fn check_files(root: &Path, manifest: &Manifest) -> Result<(), StoreError> {
    for p in &manifest.patients {
        for e in &p.exams {
            for rel in e.image_paths() {
                let path = root.join(rel);
                if !path.is_file() {
                    return Err(StoreError::MissingImage { path });
                }
            }
        }
    }
    Ok(())
}

fn write_atomically(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn save_manifest(root: &Path, manifest: &Manifest) -> Result<(), StoreError> {
    let path = root.join(MANIFEST_FILE);
    manifest
        .validate()
        .map_err(|(field, message)| StoreError::Manifest { path: path.clone(), field, message })?;
    let mut bytes = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
    bytes.push(b'\n');
    write_atomically(&path, &bytes)
}

/// Every unordered pair of distinct exams, earlier exam first:
/// `N(N−1)/2` pairs for `N` exams.
pub fn registrable_pairs(patient: &PatientRecord) -> Vec<(&ExamRecord, &ExamRecord)> {
    let exams = &patient.exams;
    (0..exams.len())
        .flat_map(|i| (i + 1..exams.len()).map(move |j| (&exams[i], &exams[j])))
        .collect()
}

/// Size and modification time of one input file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileFingerprint {
    pub path: String,
    pub len: u64,
    pub modified_ns: u128,
}

impl FileFingerprint {
    pub fn of(root: &Path, rel: &str) -> Result<Self, StoreError> {
        let path = root.join(rel);
        let meta = fs::metadata(&path).map_err(io_err(&path))?;
        let modified = meta.modified().map_err(io_err(&path))?;
        let modified_ns = modified.duration_since(UNIX_EPOCH).map(|d| d.as_nanos()).unwrap_or(0);
        Ok(Self { path: rel.to_string(), len: meta.len(), modified_ns })
    }
}

/// Content of `landmarks.json`: the landmark set plus the fingerprints of
/// the images it was detected from. Readers that only know the landmark
/// format ignore `source_files`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CachedLandmarks {
    #[serde(flatten)]
    pub landmarks: LandmarkSet,
    #[serde(default)]
    pub source_files: Vec<FileFingerprint>,
}

/// A loaded store: manifest snapshot, detection config, and serialized
/// cache writes. Reads need no lock.
#[derive(Debug)]
pub struct ExamStore {
    root: PathBuf,
    manifest: Manifest,
    config: DetectionConfig,
    write_lock: Mutex<()>,
    detections: AtomicUsize,
}

impl ExamStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        let manifest = load_manifest(&root)?;
        check_files(&root, &manifest)?;
        Ok(Self { root, manifest, config: DetectionConfig::default(), write_lock: Mutex::new(()), detections: AtomicUsize::new(0) })
    }

    pub fn with_config(mut self, config: DetectionConfig) -> Self {
        self.config = config;
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> &DetectionConfig {
        &self.config
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn patients(&self) -> &[PatientRecord] {
        &self.manifest.patients
    }

    pub fn patient(&self, patient_id: &str) -> Result<&PatientRecord, StoreError> {
        self.manifest
            .patients
            .iter()
            .find(|p| p.patient_id == patient_id)
            .ok_or_else(|| StoreError::PatientNotFound(patient_id.to_string()))
    }

    pub fn exam(&self, patient_id: &str, exam_id: &str) -> Result<&ExamRecord, StoreError> {
        self.patient(patient_id)?.exam(exam_id).ok_or_else(|| StoreError::ExamNotFound {
            patient: patient_id.to_string(),
            exam: exam_id.to_string(),
        })
    }

    pub fn exam_dir(&self, patient_id: &str, exam_id: &str) -> PathBuf {
        self.root.join(patient_id).join(exam_id)
    }

    fn landmarks_path(&self, patient_id: &str, exam_id: &str) -> PathBuf {
        self.exam_dir(patient_id, exam_id).join(LANDMARKS_FILE)
    }

    pub fn load_image(&self, rel: &str) -> Result<RasterImage, ImageError> {
        RasterImage::load_png(self.root.join(rel))
    }

    /// The exam's SFSL view or radiograph.
    pub fn primary_image(&self, patient_id: &str, exam_id: &str) -> Result<RasterImage, StoreError> {
        let exam = self.exam(patient_id, exam_id)?;
        let rel = exam.primary_image().expect("validated manifest has a primary image");
        Ok(self.load_image(rel)?)
    }

    /// Number of detector runs since the store was opened.
    pub fn detection_count(&self) -> usize {
        self.detections.load(Ordering::SeqCst)
    }

    fn fingerprints(&self, exam: &ExamRecord) -> Result<Vec<FileFingerprint>, StoreError> {
        exam.image_paths().into_iter().map(|rel| FileFingerprint::of(&self.root, rel)).collect()
    }

    /// Cached landmarks, if present and detected from the current image
    /// files. Unreadable cache files count as absent.
    pub fn cached_landmarks(&self, patient_id: &str, exam_id: &str) -> Result<Option<LandmarkSet>, StoreError> {
        let exam = self.exam(patient_id, exam_id)?;
        let path = self.landmarks_path(patient_id, exam_id);
        let Ok(text) = fs::read_to_string(&path) else {
            return Ok(None);
        };
        let Ok(cached) = serde_json::from_str::<CachedLandmarks>(&text) else {
            return Ok(None);
        };
        let fresh = cached.source_files == self.fingerprints(exam)?;
        Ok(fresh.then_some(cached.landmarks))
    }

    /// Runs the modality's detector and persists the result.
    pub fn detect(&self, patient_id: &str, exam_id: &str) -> Result<LandmarkSet, StoreError> {
        let exam = self.exam(patient_id, exam_id)?;
        let source_files = self.fingerprints(exam)?;
        self.detections.fetch_add(1, Ordering::SeqCst);
        let frame = frame_id(patient_id, exam_id);
        let wrap = |source| StoreError::Detection { exam_id: exam_id.to_string(), source };
        let load = |rel: &Option<String>| {
            let rel = rel.as_deref().expect("validated manifest");
            self.load_image(rel).map_err(|e| {
                wrap(DetectionError::new(
                    crate::error::Stage::ImageLoad,
                    crate::error::DetectionErrorKind::Image(e.to_string()),
                ))
            })
        };
        let landmarks = match exam.modality {
            Modality::Rgb => {
                let (sfsl, fd) = (load(&exam.files.sfsl)?, load(&exam.files.fd)?);
                detect_sfsl_landmarks(&sfsl, &fd, &self.config, &frame).map_err(wrap)?
            }
            Modality::Xray => {
                let xray = load(&exam.files.xray)?;
                detect_xray_landmarks(&xray, &self.config, &frame).map_err(wrap)?
            }
        };
        self.write_landmarks(patient_id, exam_id, &CachedLandmarks { landmarks: landmarks.clone(), source_files })?;
        Ok(landmarks)
    }

    pub fn write_landmarks(&self, patient_id: &str, exam_id: &str, cached: &CachedLandmarks) -> Result<(), StoreError> {
        let path = self.landmarks_path(patient_id, exam_id);
        let mut bytes = serde_json::to_vec_pretty(cached).expect("landmarks serialize");
        bytes.push(b'\n');
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        write_atomically(&path, &bytes)
    }

    pub fn get_or_detect_landmarks(&self, patient_id: &str, exam_id: &str) -> Result<LandmarkSet, StoreError> {
        match self.cached_landmarks(patient_id, exam_id)? {
            Some(l) => Ok(l),
            None => self.detect(patient_id, exam_id),
        }
    }

    pub fn register(&self, patient_id: &str, source: &str, target: &str, method: Method) -> Result<RegistrationReport, StoreError> {
        let s = self.get_or_detect_landmarks(patient_id, source)?;
        let t = self.get_or_detect_landmarks(patient_id, target)?;
        registration::estimate(&s, &t, method).map_err(|error| StoreError::Registration {
            source_exam: source.to_string(),
            target_exam: target.to_string(),
            error,
        })
    }

    /// Source primary image resampled into the target image's frame and
    /// size, promoted to RGB.
    pub fn registered_image(
        &self,
        patient_id: &str,
        source: &str,
        target: &str,
        report: &RegistrationReport,
    ) -> Result<FrameImage, StoreError> {
        let src = self.primary_image(patient_id, source)?.to_rgb();
        let tgt = self.primary_image(patient_id, target)?;
        let warped = resample_nearest_into(&src, &report.transform, tgt.width(), tgt.height(), Execution::default())?;
        Ok(FrameImage::new(frame_id(patient_id, target), warped))
    }

    /// Sources in chronological exam order, ties by exam id.
    pub fn chronological<'a>(&self, patient_id: &str, exams: &[&'a str]) -> Result<Vec<&'a str>, StoreError> {
        let mut keyed = exams
            .iter()
            .map(|&id| self.exam(patient_id, id).map(|e| (e.date, id)))
            .collect::<Result<Vec<_>, _>>()?;
        keyed.sort();
        Ok(keyed.into_iter().map(|(_, id)| id).collect())
    }

    /// Registers every source onto `target` and blends them over it in
    /// chronological order.
    pub fn render_followup(
        &self,
        patient_id: &str,
        target: &str,
        sources: &[&str],
        alpha: f64,
        method: Method,
    ) -> Result<RasterImage, StoreError> {
        compositing::check_alpha(alpha)?;
        let base = FrameImage::new(frame_id(patient_id, target), self.primary_image(patient_id, target)?.to_rgb());
        let layers = self
            .chronological(patient_id, sources)?
            .into_iter()
            .map(|s| {
                let report = self.register(patient_id, s, target, method)?;
                self.registered_image(patient_id, s, target, &report)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(compositing::render_followup(&base, &layers, alpha)?)
    }
}

/// Count of exams per modality, for summaries.
pub fn modality_counts(patients: &[PatientRecord]) -> BTreeMap<&'static str, usize> {
    let mut out = BTreeMap::new();
    for e in patients.iter().flat_map(|p| &p.exams) {
        *out.entry(match e.modality {
            Modality::Rgb => "RGB",
            Modality::Xray => "XRAY",
        })
        .or_insert(0) += 1;
    }
    out
}
