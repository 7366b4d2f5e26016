//! `spinereg` command-line interface.
//!
//! Exit codes: 0 success, 2 detection failure, 3 registration failure,
//! 4 usage error (bad flags, unknown ids, alpha out of range), 1 anything else.
//! Machine-readable output goes to stdout as JSON; diagnostics go to stderr.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use spinereg_core::compositing::{check_alpha, overlay_landmarks, Palette};
use spinereg_core::image::RasterImage;
use spinereg_core::landmarks::{remove_red_script, remove_vertical_line, DetectionConfig};
use spinereg_core::registration::Method;
use spinereg_core::segmentation::band_threshold;
use spinereg_core::store::{modality_counts, registrable_pairs, ExamStore, Modality, StoreError};
use spinereg_core::synth::generate_store;
use spinereg_core::CompositeError;
use spinereg_service::{AppState, ServiceOptions};

#[derive(Parser)]
#[command(name = "spinereg", version, about = "Scoliosis landmark detection, registration and follow-up blending")]
struct Cli {
    /// TOML file with `[detection]` band overrides and an overlay `[palette]`.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StoreArg {
    /// Exam store root holding `manifest.json`.
    #[arg(long, env = "SPINEREG_STORE", value_name = "DIR")]
    store: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Angle,
    Lsq,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Angle => Method::Angle,
            MethodArg::Lsq => Method::Lsq,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum OverlayArg {
    None,
    Landmarks,
}

#[derive(Subcommand)]
enum Command {
    /// Detect an exam's landmarks and update its landmarks.json.
    Detect {
        #[command(flatten)]
        store: StoreArg,
        #[arg(long)]
        patient: String,
        #[arg(long)]
        exam: String,
        /// Write the intermediate masks of each stage to `<exam>/debug/`.
        #[arg(long)]
        debug_masks: bool,
    },
    /// Register a source exam onto a target exam.
    Register {
        #[command(flatten)]
        store: StoreArg,
        #[arg(long)]
        patient: String,
        #[arg(long)]
        source: String,
        #[arg(long)]
        target: String,
        #[arg(long, value_enum, default_value = "angle")]
        method: MethodArg,
    },
    /// Blend registered sources over a target image.
    Blend {
        #[command(flatten)]
        store: StoreArg,
        #[arg(long)]
        patient: String,
        #[arg(long)]
        target: String,
        /// Comma-separated source exam ids.
        #[arg(long, value_delimiter = ',')]
        sources: Vec<String>,
        /// Source weight in [0, 1].
        #[arg(long, allow_negative_numbers = true)]
        alpha: f64,
        #[arg(long, value_name = "PNG")]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "angle")]
        method: MethodArg,
        #[arg(long, value_enum, default_value = "none")]
        overlay: OverlayArg,
    },
    /// Summarize the store as JSON.
    Report {
        #[command(flatten)]
        store: StoreArg,
    },
    /// Write a seeded synthetic store with ground-truth landmarks.
    GenFixtures {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of patients.
        #[arg(long, default_value_t = 3)]
        count: usize,
    },
    /// Serve the HTTP API and, optionally, the viewer's static assets.
    Serve {
        #[command(flatten)]
        store: StoreArg,
        #[arg(long, env = "SPINEREG_ADDR", default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[arg(long, value_name = "DIR")]
        static_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    detection: DetectionConfig,
    palette: Palette,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        let code = match &e {
            StoreError::Detection { .. } => 2,
            StoreError::Registration { .. } => 3,
            StoreError::PatientNotFound(_) | StoreError::ExamNotFound { .. } => 4,
            StoreError::Composite(CompositeError::AlphaOutOfRange(_)) => 4,
            _ => 1,
        };
        let mut message = format!("error: {e}");
        if let StoreError::Detection { source, .. } = &e {
            message.push_str(&format!("\nstage: {}", source.stage));
        }
        Self { code, message }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::new(1, format!("error: {}: {e}", path.display()))
}

fn load_config(path: Option<&Path>) -> CliResult<FileConfig> {
    let Some(path) = path else { return Ok(FileConfig::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    toml::from_str(&text).map_err(|e| Failure::new(4, format!("error: {}: {e}", path.display())))
}

fn open_store(arg: &StoreArg, config: &FileConfig) -> CliResult<ExamStore> {
    Ok(ExamStore::open(&arg.store)?.with_config(config.detection.clone()))
}

fn print_json(value: &impl Serialize) {
    use std::io::Write;
    // a closed pipe (`| head`) is not an error worth a panic
    let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(value).expect("output serializes"));
}

fn save(image: &RasterImage, path: &Path) -> CliResult {
    image.save_png(path).map_err(|e| io_failure(path, e))
}

fn detect(store: &ExamStore, patient: &str, exam: &str, debug_masks: bool) -> CliResult {
    // masks first, so a failing run still leaves its intermediates behind
    if debug_masks {
        write_debug_masks(store, patient, exam)?;
    }
    print_json(&store.detect(patient, exam)?);
    Ok(())
}

/// Writes each thresholding stage's output under `<exam>/debug/`.
fn write_debug_masks(store: &ExamStore, patient: &str, exam_id: &str) -> CliResult {
    let exam = store.exam(patient, exam_id)?;
    let dir = store.exam_dir(patient, exam_id).join("debug");
    std::fs::create_dir_all(&dir).map_err(|e| io_failure(&dir, e))?;
    let config = store.config();
    let load = |rel: &Option<String>| {
        let rel = rel.as_deref().expect("validated manifest");
        store.load_image(rel).map_err(|e| Failure::new(2, format!("error: {e}\nstage: image_load")))
    };
    let mut outputs: Vec<(&str, RasterImage)> = vec![];
    match exam.modality {
        Modality::Rgb => {
            let (sfsl, fd) = (load(&exam.files.sfsl)?, load(&exam.files.fd)?);
            let fd_clean = remove_vertical_line(&fd, &config.vertical_line_band);
            outputs.push(("01_spine_threshold", band_threshold(&sfsl, &config.spine_band).to_image()));
            outputs.push(("02_vertical_line", band_threshold(&fd, &config.vertical_line_band).to_image()));
            outputs.push(("03_psis_markers", band_threshold(&fd_clean, &config.psis_marker_band).to_image()));
            if let Ok(blue) = remove_red_script(&fd_clean) {
                outputs.push(("04_fd_blue", blue));
            }
            outputs.push(("05_fd_clean", fd_clean));
        }
        Modality::Xray => {
            let xray = load(&exam.files.xray)?;
            outputs.push(("01_xray_labels", band_threshold(&xray, &config.xray_label_band).to_image()));
        }
    }
    for (name, image) in outputs {
        let path = dir.join(format!("{name}.png"));
        save(&image, &path)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn register(store: &ExamStore, patient: &str, source: &str, target: &str, method: Method) -> CliResult {
    let report = store.register(patient, source, target, method)?;
    let registered = store.registered_image(patient, source, target, &report)?;
    let path = store.exam_dir(patient, source).join(format!("registered_to_{target}_{method}.png"));
    std::fs::create_dir_all(path.parent().expect("exam dir")).map_err(|e| io_failure(&path, e))?;
    save(&registered.image, &path)?;
    eprintln!("wrote {}", path.display());
    print_json(&report);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn blend(
    store: &ExamStore,
    palette: &Palette,
    patient: &str,
    target: &str,
    sources: &[String],
    alpha: f64,
    out: &Path,
    method: Method,
    overlay: OverlayArg,
) -> CliResult {
    check_alpha(alpha).map_err(|e| Failure::new(4, format!("error: {e}")))?;
    let ids: Vec<&str> = sources.iter().map(String::as_str).collect();
    let mut image = store.render_followup(patient, target, &ids, alpha, method)?;
    if overlay == OverlayArg::Landmarks {
        let landmarks = store.get_or_detect_landmarks(patient, target)?;
        image = overlay_landmarks(&image, &landmarks, palette).map_err(StoreError::from)?;
    }
    save(&image, out)?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

#[derive(Serialize)]
struct PatientSummary {
    patient_id: String,
    exams: usize,
    registrable_pairs: usize,
    cached_landmarks: usize,
}

#[derive(Serialize)]
struct StoreReport {
    patients: usize,
    exams_by_modality: std::collections::BTreeMap<&'static str, usize>,
    registrable_pairs: usize,
    per_patient: Vec<PatientSummary>,
}

fn report(store: &ExamStore) -> CliResult {
    let mut per_patient = vec![];
    for p in store.patients() {
        let mut cached = 0;
        for e in &p.exams {
            if store.cached_landmarks(&p.patient_id, &e.exam_id)?.is_some() {
                cached += 1;
            }
        }
        per_patient.push(PatientSummary {
            patient_id: p.patient_id.clone(),
            exams: p.exams.len(),
            registrable_pairs: registrable_pairs(p).len(),
            cached_landmarks: cached,
        });
    }
    print_json(&StoreReport {
        patients: store.patients().len(),
        exams_by_modality: modality_counts(store.patients()),
        registrable_pairs: per_patient.iter().map(|p| p.registrable_pairs).sum(),
        per_patient,
    });
    Ok(())
}

fn serve(store: ExamStore, palette: Palette, addr: SocketAddr, static_dir: Option<PathBuf>) -> CliResult {
    let state = Arc::new(AppState::new(store, ServiceOptions { palette, static_dir }));
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::new(1, format!("error: {e}")))?;
    runtime
        .block_on(spinereg_service::serve(addr, state))
        .map_err(|e| Failure::new(1, format!("error: {addr}: {e}")))
}

fn run(cli: Cli) -> CliResult {
    let config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Detect { store, patient, exam, debug_masks } => {
            detect(&open_store(&store, &config)?, &patient, &exam, debug_masks)
        }
        Command::Register { store, patient, source, target, method } => {
            register(&open_store(&store, &config)?, &patient, &source, &target, method.into())
        }
        Command::Blend { store, patient, target, sources, alpha, out, method, overlay } => {
            let store = open_store(&store, &config)?;
            blend(&store, &config.palette, &patient, &target, &sources, alpha, &out, method.into(), overlay)
        }
        Command::Report { store } => report(&open_store(&store, &config)?),
        Command::GenFixtures { out, seed, count } => {
            let manifest = generate_store(&out, seed, count)?;
            eprintln!("wrote {} patients to {}", manifest.patients.len(), out.display());
            Ok(())
        }
        Command::Serve { store, addr, static_dir } => serve(open_store(&store, &config)?, config.palette, addr, static_dir),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 4 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.message);
            ExitCode::from(f.code)
        }
    }
}
