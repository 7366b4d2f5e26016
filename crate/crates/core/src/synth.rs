//! Deterministic synthetic exams with ground-truth landmarks.
//!
//! Each patient gets a body model (landmark layout and spine bend in units
//! of trunk height). Each exam renders that model under its own pose:
//!
//! - SFSL view: black background, skin-colored back silhouette, the
//!   physician's dotted spine line in the spine band color, a few marks in
//!   other colors.
//! - FD view: the same silhouette at a smaller magnification, blue PSIS
//!   markers, the light-blue vertical reference line, red script and a red
//!   spine marker.
//! - Radiograph: gray bone-like gradient with four pure-red label discs and
//!   some red specks.
//!
//! Colors are the real detection bands, so fixtures exercise the actual
//! thresholds. The FD silhouette is the SFSL silhouette sampled through the
//! exact bounding-box transform, which keeps the PSIS transfer error within
//! a pixel.

use std::fs;
use std::path::Path;

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Map;

use crate::geometry::{rotate, Point, RigidTransform};
use crate::image::{PixelFormat, RasterImage};
use crate::landmarks::LandmarkSet;
use crate::store::{frame_id, save_manifest, ExamFiles, ExamRecord, Manifest, Modality, PatientRecord, StoreError};

pub const SFSL_SIZE: (u32, u32) = (494, 755);
pub const FD_SIZE: (u32, u32) = (494, 678);
/// Nominal radiograph size; generated ones vary around it.
pub const XRAY_SIZE: (u32, u32) = (1143, 2494);

/// Dotted spine line; inside the spine band.
pub const SPINE_DOT_RGB: [u8; 3] = [215, 46, 74];
/// Vertical reference line of FD images.
pub const VERTICAL_LINE_RGB: [u8; 3] = [101, 196, 225];
pub const PSIS_MARKER_RGB: [u8; 3] = [0, 0, 255];
pub const SCRIPT_RGB: [u8; 3] = [220, 0, 0];
pub const XRAY_LABEL_RGB: [u8; 3] = [255, 0, 0];

pub const TRUTH_FILE: &str = "truth.json";

const PSIS_MARKER_RADIUS: i64 = 5;
const XRAY_LABEL_RADIUS: i64 = 14;

/// Landmark layout in body units: origin at the top center of the trunk
/// silhouette, `v` down, one unit = trunk height.
#[derive(Clone, Debug, PartialEq)]
pub struct BodyModel {
    pub c7: Point,
    pub psis_left: Point,
    pub psis_right: Point,
    pub ic: Point,
    /// Lateral spine deviation at mid-trunk, body units.
    pub bend: f64,
    /// Silhouette half width at shoulders and hips.
    pub half_width: f64,
}

impl BodyModel {
    pub fn random(rng: &mut impl Rng) -> Self {
        let pw = rng.random_range(0.07..0.10);
        let skew = rng.random_range(-0.02..0.02);
        let tilt = rng.random_range(-0.012..0.012);
        Self {
            c7: Point::new(rng.random_range(-0.015..0.015), rng.random_range(0.04..0.07)),
            psis_left: Point::new(-pw + skew, 0.80 - tilt),
            psis_right: Point::new(pw + skew, 0.80 + tilt),
            ic: Point::new(rng.random_range(-0.015..0.015), rng.random_range(0.92..0.95)),
            bend: rng.random_range(-0.06..0.06),
            half_width: rng.random_range(0.31..0.34),
        }
    }

    /// Silhouette half width at depth `v`: full at shoulders and hips,
    /// narrower at the waist.
    pub fn half_width_at(&self, v: f64) -> f64 {
        let waist = if (0.3..=0.7).contains(&v) { (std::f64::consts::PI * (v - 0.3) / 0.4).sin().powi(2) } else { 0.0 };
        self.half_width * (1.0 - 0.12 * waist)
    }
}

/// Per-exam pose: where the trunk sits in the image and how the patient
/// leans. Rotation applies to landmarks and spine about mid-trunk.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    /// Image column of the trunk axis.
    pub center_x: f64,
    /// First silhouette row.
    pub top: u32,
    /// Silhouette height in rows.
    pub height: u32,
    pub lean: f64,
    /// Change of spine bend since the model, body units.
    pub bend_delta: f64,
}

impl Pose {
    fn body_to_image(&self, p: Point) -> Point {
        let pivot = Point::new(0.0, 0.5);
        let q = rotate(p - pivot, self.lean) + pivot;
        Point::new(self.center_x + q.x * self.height as f64, self.top as f64 + q.y * self.height as f64)
    }
}

fn round_point(p: Point) -> Point {
    Point::new((p.x + 0.5).floor(), (p.y + 0.5).floor())
}

fn paint(img: &mut RasterImage, x: i64, y: i64, rgb: [u8; 3]) {
    if img.in_bounds(x, y) {
        img.set_pixel(x as u32, y as u32, &rgb);
    }
}

fn paint_disc(img: &mut RasterImage, c: Point, r: i64, rgb: [u8; 3]) {
    let (cx, cy) = (c.x as i64, c.y as i64);
    for y in cy - r..=cy + r {
        for x in cx - r..=cx + r {
            if (x - cx).pow(2) + (y - cy).pow(2) <= r * r {
                paint(img, x, y, rgb);
            }
        }
    }
}

fn paint_plus(img: &mut RasterImage, c: Point, rgb: [u8; 3]) {
    let (x, y) = (c.x as i64, c.y as i64);
    for (dx, dy) in [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)] {
        paint(img, x + dx, y + dy, rgb);
    }
}

/// Spine curve in body units: straight C7–IC segment bent sideways.
fn spine_point(model: &BodyModel, bend: f64, t: f64) -> Point {
    let dir = model.ic - model.c7;
    let normal = Point::new(dir.y, -dir.x) * (1.0 / dir.norm());
    model.c7 + dir * t + normal * (bend * (std::f64::consts::PI * t).sin())
}

/// A rendered back-topography exam.
#[derive(Clone, Debug)]
pub struct RgbExam {
    pub sfsl: RasterImage,
    pub fd: RasterImage,
    /// Landmarks in SFSL pixel coordinates; spine holds the dot centers.
    pub truth: LandmarkSet,
    /// Exact FD→SFSL mapping of this exam.
    pub fd_to_sfsl: RigidTransform,
}

#[derive(Clone, Debug)]
pub struct XrayExam {
    pub xray: RasterImage,
    pub truth: LandmarkSet,
}

fn skin(rng: &mut impl Rng) -> [u8; 3] {
    [
        rng.random_range(222..=238),
        rng.random_range(182..=198),
        rng.random_range(162..=178),
    ]
}

pub fn render_rgb_exam(model: &BodyModel, pose: &Pose, frame: &str, rng: &mut impl Rng) -> RgbExam {
    let (sw, sh) = SFSL_SIZE;
    let (fw, fh) = FD_SIZE;
    let hpx = pose.height as f64;
    let inside = |q: Point| {
        let v = (q.y - pose.top as f64) / hpx;
        (-1e-9..=1.0 + 1e-9).contains(&v) && (q.x - pose.center_x).abs() <= model.half_width_at(v.clamp(0.0, 1.0)) * hpx + 1e-9
    };
    let left = (pose.center_x - model.half_width * hpx - 1e-9).ceil();

    let mut sfsl = RasterImage::black(sw, sh, PixelFormat::Rgb8).expect("fixed size");
    for y in 0..sh {
        for x in 0..sw {
            if inside(Point::new(x as f64, y as f64)) {
                let c = skin(rng);
                sfsl.set_pixel(x, y, &c);
            }
        }
    }

    // FD silhouette: the SFSL one seen through the bbox transform
    let fd_height = (hpx * rng.random_range(0.84..0.9)).round();
    let k = fd_height / hpx;
    let fd_top = rng.random_range(40..(fh as i64 - fd_height as i64 - 20)) as f64;
    let fd_left = (fw as f64 / 2.0 - k * (pose.center_x - left)).round();
    let fd_to_sfsl = RigidTransform::new(hpx / fd_height, 0.0, Point::new(fd_left, fd_top), Point::new(left, pose.top as f64))
        .expect("positive scale");
    let mut fd = RasterImage::black(fw, fh, PixelFormat::Rgb8).expect("fixed size");
    for y in 0..fh {
        for x in 0..fw {
            if inside(fd_to_sfsl.apply(Point::new(x as f64, y as f64))) {
                let c = skin(rng);
                fd.set_pixel(x, y, &c);
            }
        }
    }

    let to_img = |p: Point| pose.body_to_image(p);
    let c7 = round_point(to_img(model.c7));
    let ic = round_point(to_img(model.ic));
    let (psis_left, psis_right) = (to_img(model.psis_left), to_img(model.psis_right));

    // physician marks in colors outside every band
    for _ in 0..rng.random_range(2..5) {
        let t = rng.random_range(0.2..0.8);
        let p = to_img(spine_point(model, model.bend + pose.bend_delta, t) + Point::new(rng.random_range(-0.15..0.15), 0.0));
        paint_disc(&mut sfsl, round_point(p), 2, [0, 90, 0]);
    }

    // dotted spine: first dot tops out at C7, last bottoms out at IC
    let bend = model.bend + pose.bend_delta;
    let steps = ((ic.y - c7.y) / 7.0).floor().max(2.0) as usize;
    let mut dots = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        let c = if i == 0 {
            c7 + Point::new(0.0, 1.0)
        } else if i == steps {
            ic - Point::new(0.0, 1.0)
        } else {
            round_point(to_img(spine_point(model, bend, i as f64 / steps as f64)))
        };
        paint_plus(&mut sfsl, c, SPINE_DOT_RGB);
        dots.push(c);
    }

    // FD overlays
    let sfsl_to_fd = fd_to_sfsl.inverse();
    for p in [psis_left, psis_right] {
        paint_disc(&mut fd, round_point(sfsl_to_fd.apply(p)), PSIS_MARKER_RADIUS, PSIS_MARKER_RGB);
    }
    for w in dots.windows(2) {
        let (a, b) = (sfsl_to_fd.apply(w[0]), sfsl_to_fd.apply(w[1]));
        for s in 0..8 {
            let p = a + (b - a) * (s as f64 / 8.0);
            paint(&mut fd, (p.x + 0.5).floor() as i64 + 3, (p.y + 0.5).floor() as i64, SCRIPT_RGB);
        }
    }
    // script above the trunk, on the background
    let script_y = (fd_top as i64 - 25).max(3);
    for i in 0..rng.random_range(5..9) {
        let x0 = 20 + i * 14;
        for d in 0..9 {
            paint(&mut fd, x0 + d / 2, script_y + d, SCRIPT_RGB);
            paint(&mut fd, x0 + 8 - d / 2, script_y + d, SCRIPT_RGB);
        }
    }
    let line_x = (fw as f64 / 2.0).round() as u32 + rng.random_range(0..6);
    for y in 0..fh {
        fd.set_pixel(line_x, y, &VERTICAL_LINE_RGB);
    }

    let mut truth = LandmarkSet::new(frame, c7, psis_left, psis_right, ic);
    truth.spine = dots;
    RgbExam { sfsl, fd, truth, fd_to_sfsl }
}

pub fn render_xray_exam(model: &BodyModel, lean: f64, frame: &str, rng: &mut impl Rng) -> XrayExam {
    let w = XRAY_SIZE.0 + rng.random_range(0..80) - 40;
    let h = XRAY_SIZE.1 + rng.random_range(0..80) - 40;
    let height = rng.random_range(1950..2150) as f64;
    let top = rng.random_range(120..200) as f64;
    let pose = Pose { center_x: w as f64 / 2.0, top: top as u32, height: height as u32, lean, bend_delta: 0.0 };

    let mut xray = RasterImage::black(w, h, PixelFormat::Rgb8).expect("nonzero size");
    let spine_x: Vec<f64> = (0..h)
        .map(|y| {
            let t = ((y as f64 - top) / height - model.c7.y) / (model.ic.y - model.c7.y);
            pose.body_to_image(spine_point(model, model.bend, t.clamp(0.0, 1.0))).x
        })
        .collect();
    for y in 0..h {
        for x in 0..w {
            let d = (x as f64 - spine_x[y as usize]).abs();
            let body = (1.0 - (x as f64 - w as f64 / 2.0).abs() / (w as f64 * 0.45)).max(0.0);
            let bone = (1.0 - d / 45.0).max(0.0);
            let g = (25.0 + 90.0 * body + 110.0 * bone).min(235.0) as u8;
            xray.set_pixel(x, y, &[g, g, g]);
        }
    }

    let lm: Vec<Point> = [model.c7, model.psis_left, model.psis_right, model.ic]
        .iter()
        .map(|&p| round_point(pose.body_to_image(p)))
        .collect();
    for &p in &lm {
        paint_disc(&mut xray, p, XRAY_LABEL_RADIUS, XRAY_LABEL_RGB);
    }
    // specks and a near-miss label
    for _ in 0..rng.random_range(3..7) {
        let p = Point::new(rng.random_range(20..w - 20) as f64, rng.random_range(20..h - 20) as f64);
        let r = rng.random_range(0..3);
        if lm.iter().all(|&q| q.distance(p) > 3.0 * XRAY_LABEL_RADIUS as f64) {
            paint_disc(&mut xray, p, r, XRAY_LABEL_RGB);
        }
    }
    let near = Point::new(w as f64 * 0.15, h as f64 * 0.5);
    paint_disc(&mut xray, near, XRAY_LABEL_RADIUS, [254, 0, 0]);

    XrayExam { xray, truth: LandmarkSet::new(frame, lm[0], lm[1], lm[2], lm[3]) }
}

pub fn random_pose(rng: &mut impl Rng) -> Pose {
    let height = rng.random_range(560..640);
    Pose {
        center_x: rng.random_range(240..255) as f64 + 0.5 * rng.random_range(0..2) as f64,
        top: rng.random_range(40..(SFSL_SIZE.1 - height - 40)),
        height,
        lean: rng.random_range(-4.0f64..4.0).to_radians(),
        bend_delta: rng.random_range(-0.01..0.01),
    }
}

/// One RGB exam from a seed, for oracle tests that do not need a store.
pub fn rgb_exam_from_seed(seed: u64) -> RgbExam {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = BodyModel::random(&mut rng);
    let pose = random_pose(&mut rng);
    render_rgb_exam(&model, &pose, "synthetic", &mut rng)
}

pub fn xray_exam_from_seed(seed: u64) -> XrayExam {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = BodyModel::random(&mut rng);
    let lean = rng.random_range(-4.0f64..4.0).to_radians();
    render_xray_exam(&model, lean, "synthetic", &mut rng)
}

fn write_png(root: &Path, rel: &str, img: &RasterImage) -> Result<(), StoreError> {
    let path = root.join(rel);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| StoreError::Io { path: dir.to_path_buf(), source })?;
    }
    Ok(img.save_png(&path)?)
}

fn write_truth(root: &Path, dir: &str, truth: &LandmarkSet) -> Result<(), StoreError> {
    let path = root.join(dir).join(TRUTH_FILE);
    let mut bytes = serde_json::to_vec_pretty(truth).expect("landmarks serialize");
    bytes.push(b'\n');
    fs::write(&path, bytes).map_err(|source| StoreError::Io { path, source })
}

/// Writes a store of `patients` synthetic patients under `root`, each with
/// 2–4 RGB exams and 1–2 radiographs in date order, plus a `truth.json`
/// next to every exam's images. Same seed, same bytes.
pub fn generate_store(root: &Path, seed: u64, patients: usize) -> Result<Manifest, StoreError> {
    fs::create_dir_all(root).map_err(|source| StoreError::Io { path: root.to_path_buf(), source })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let epoch = NaiveDate::from_ymd_opt(2014, 1, 6).expect("valid date");
    let mut records = Vec::with_capacity(patients);
    for p in 0..patients {
        let patient_id = format!("P{:03}", p + 1);
        let model = BodyModel::random(&mut rng);
        let n_rgb = rng.random_range(2..=4);
        let n_xray = rng.random_range(1..=2);
        let mut kinds: Vec<Modality> = (0..n_rgb).map(|_| Modality::Rgb).chain((0..n_xray).map(|_| Modality::Xray)).collect();
        // interleave modalities without disturbing determinism
        for i in (1..kinds.len()).rev() {
            kinds.swap(i, rng.random_range(0..=i));
        }
        let mut date = epoch + Days::new(rng.random_range(0..700));
        let mut exams = Vec::with_capacity(kinds.len());
        for (i, modality) in kinds.into_iter().enumerate() {
            let exam_id = format!("E{:02}", i + 1);
            let dir = format!("{patient_id}/{exam_id}");
            let frame = frame_id(&patient_id, &exam_id);
            let files = match modality {
                Modality::Rgb => {
                    let pose = random_pose(&mut rng);
                    let exam = render_rgb_exam(&model, &pose, &frame, &mut rng);
                    let (sfsl, fd) = (format!("{dir}/sfsl.png"), format!("{dir}/fd.png"));
                    write_png(root, &sfsl, &exam.sfsl)?;
                    write_png(root, &fd, &exam.fd)?;
                    write_truth(root, &dir, &exam.truth)?;
                    ExamFiles { sfsl: Some(sfsl), fd: Some(fd), ..Default::default() }
                }
                Modality::Xray => {
                    let lean = rng.random_range(-4.0f64..4.0).to_radians();
                    let exam = render_xray_exam(&model, lean, &frame, &mut rng);
                    let xray = format!("{dir}/xray.png");
                    write_png(root, &xray, &exam.xray)?;
                    write_truth(root, &dir, &exam.truth)?;
                    ExamFiles { xray: Some(xray), ..Default::default() }
                }
            };
            exams.push(ExamRecord { exam_id, date, modality, files, extra: Map::new() });
            date = date + Days::new(rng.random_range(60..300));
        }
        records.push(PatientRecord { patient_id, exams, extra: Map::new() });
    }
    let manifest = Manifest { patients: records, extra: Map::new() };
    save_manifest(root, &manifest)?;
    Ok(manifest)
}
