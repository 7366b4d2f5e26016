//! Landmark detection on augmented back-topography images (SFSL and FD
//! views) and on manually labeled radiographs.
//!
//! The SFSL view carries the physician's dotted spine line, so C7 and IC
//! come from there. The PSIS markers only appear on the FD view; their
//! positions are carried over by matching the two silhouettes' bounding
//! boxes (same acquisition, different magnification).

use serde::{Deserialize, Serialize};

use crate::error::{DetectionError, DetectionErrorKind, Stage};
use crate::geometry::{Point, RigidTransform};
use crate::image::{extract_channel, RasterImage};
use crate::segmentation::{
    band_threshold, bands, canny_edges, connected_components, fill_holes, morph_close, morph_open, shape_features, BinaryMask,
    CannyThresholds, Connectivity, Region, ShapeFeatures, ThresholdBand,
};

/// The four anatomical landmarks and the spine curve of one diagnosis,
/// in the pixel coordinates of `frame`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSet {
    /// Coordinate frame identifier, e.g. `P001/E002`.
    pub frame: String,
    pub c7: Point,
    pub psis_left: Point,
    pub psis_right: Point,
    pub ic: Point,
    /// Spine pixels ordered by row, then column. Empty for radiographs.
    #[serde(default)]
    pub spine: Vec<Point>,
}

impl LandmarkSet {
    pub fn new(frame: impl Into<String>, c7: Point, psis_left: Point, psis_right: Point, ic: Point) -> Self {
        Self { frame: frame.into(), c7, psis_left, psis_right, ic, spine: Vec::new() }
    }

    pub fn landmarks(&self) -> [(&'static str, Point); 4] {
        [("c7", self.c7), ("psis_left", self.psis_left), ("psis_right", self.psis_right), ("ic", self.ic)]
    }

    /// Anatomical ordering: left PSIS left of right PSIS, C7 above IC.
    pub fn validate(&self) -> Result<(), String> {
        for (name, p) in self.landmarks() {
            if !p.is_finite() {
                return Err(format!("{name} is not finite"));
            }
        }
        if !(self.psis_left.x < self.psis_right.x) {
            return Err(format!(
                "left PSIS (x={}) must lie left of right PSIS (x={})",
                self.psis_left.x, self.psis_right.x
            ));
        }
        if !(self.c7.y < self.ic.y) {
            return Err(format!("C7 (y={}) must lie above IC (y={})", self.c7.y, self.ic.y));
        }
        Ok(())
    }

    /// Every landmark lies on a pixel of a `width`×`height` image.
    pub fn check_bounds(&self, width: u32, height: u32) -> Result<(), String> {
        for (name, p) in self.landmarks() {
            let inside = p.x > -0.5 && p.y > -0.5 && p.x < width as f64 - 0.5 && p.y < height as f64 - 0.5;
            if !inside {
                return Err(format!("{name} ({}, {}) lies outside {width}x{height}", p.x, p.y));
            }
        }
        Ok(())
    }

    /// Maps every point (spine included) and relabels the frame.
    pub fn transformed(&self, t: &RigidTransform, frame: impl Into<String>) -> LandmarkSet {
        LandmarkSet {
            frame: frame.into(),
            c7: t.apply(self.c7),
            psis_left: t.apply(self.psis_left),
            psis_right: t.apply(self.psis_right),
            ic: t.apply(self.ic),
            spine: t.apply_all(&self.spine),
        }
    }
}

/// Tight box around the non-background pixels. Extents are differences of
/// the extreme coordinates, so a single pixel has height 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoiBox {
    pub min_x: u32,
    pub min_y: u32,
    pub max_x: u32,
    pub max_y: u32,
}

impl RoiBox {
    pub fn width(&self) -> u32 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> u32 {
        self.max_y - self.min_y
    }

    pub fn top_left(&self) -> Point {
        Point::new(self.min_x as f64, self.min_y as f64)
    }
}

/// Tunable thresholds for the detectors. Missing fields take the defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    pub spine_band: ThresholdBand,
    pub vertical_line_band: ThresholdBand,
    pub psis_marker_band: ThresholdBand,
    pub xray_label_band: ThresholdBand,
    /// Disc radius of the structuring element.
    pub morph_radius: u32,
    pub canny: CannyThresholds,
    /// Radiograph label components smaller than this fraction of the
    /// largest one are discarded as specks.
    pub min_label_fraction: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            spine_band: bands::SFSL_SPINE,
            vertical_line_band: bands::FD_VERTICAL_LINE,
            psis_marker_band: bands::FD_PSIS_MARKERS,
            xray_label_band: bands::XRAY_LABELS,
            morph_radius: 2,
            canny: CannyThresholds::default(),
            min_label_fraction: 0.2,
        }
    }
}

fn fail(stage: Stage, kind: DetectionErrorKind) -> DetectionError {
    DetectionError::new(stage, kind)
}

/// Spine pixels of an SFSL image in raster order.
pub fn detect_spine_curve(sfsl: &RasterImage, band: &ThresholdBand) -> Result<Vec<Point>, DetectionErrorKind> {
    let mask = band_threshold(sfsl, band);
    let spine: Vec<Point> = mask.iter_set().map(|(x, y)| Point::new(x as f64, y as f64)).collect();
    if spine.is_empty() {
        return Err(DetectionErrorKind::NoSpineDetected);
    }
    Ok(spine)
}

/// C7 is the topmost and IC the bottommost spine point; ties go to the
/// smaller column.
pub fn extract_c7_ic(spine: &[Point]) -> Result<(Point, Point), DetectionErrorKind> {
    let key = |p: &&Point| (p.y, p.x);
    let cmp = |a: &&Point, b: &&Point| key(a).partial_cmp(&key(b)).expect("finite spine points");
    let c7 = spine.iter().min_by(cmp).ok_or(DetectionErrorKind::EmptySpine)?;
    let bottom = spine.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    let ic = spine
        .iter()
        .filter(|p| p.y == bottom)
        .min_by(|a, b| a.x.partial_cmp(&b.x).expect("finite spine points"))
        .ok_or(DetectionErrorKind::EmptySpine)?;
    Ok((*c7, *ic))
}

/// Blacks out the light-blue vertical reference line of an FD image.
pub fn remove_vertical_line(fd: &RasterImage, band: &ThresholdBand) -> RasterImage {
    let mask = band_threshold(fd, band);
    let mut out = fd.clone();
    let black = vec![0u8; out.channels()];
    for (x, y) in mask.iter_set() {
        out.set_pixel(x, y, &black);
    }
    out
}

/// Keeps only the blue channel; the red script and spine marker have no
/// blue component and vanish.
pub fn remove_red_script(fd: &RasterImage) -> Result<RasterImage, DetectionErrorKind> {
    extract_channel(fd, 2).map_err(|e| DetectionErrorKind::Image(e.to_string()))
}

pub fn extract_roi(image: &RasterImage) -> Result<RoiBox, DetectionErrorKind> {
    let (w, h) = image.dimensions();
    let mut roi: Option<RoiBox> = None;
    for y in 0..h {
        for x in 0..w {
            if !image.is_nonzero(x, y) {
                continue;
            }
            roi = Some(match roi {
                None => RoiBox { min_x: x, min_y: y, max_x: x, max_y: y },
                Some(r) => RoiBox {
                    min_x: r.min_x.min(x),
                    min_y: r.min_y.min(y),
                    max_x: r.max_x.max(x),
                    max_y: r.max_y.max(y),
                },
            });
        }
    }
    roi.ok_or(DetectionErrorKind::EmptyRoi)
}

/// Maps FD pixel coordinates onto the SFSL image: scale by the ratio of ROI
/// heights, top-left corner onto top-left corner.
pub fn register_fd_to_sfsl(fd_roi: &RoiBox, sfsl_roi: &RoiBox) -> Result<RigidTransform, DetectionErrorKind> {
    if fd_roi.height() == 0 || sfsl_roi.height() == 0 {
        return Err(DetectionErrorKind::DegenerateRoi);
    }
    let scale = sfsl_roi.height() as f64 / fd_roi.height() as f64;
    RigidTransform::new(scale, 0.0, fd_roi.top_left(), sfsl_roi.top_left()).map_err(|_| DetectionErrorKind::DegenerateRoi)
}

fn largest_first(mut regions: Vec<Region>) -> Vec<Region> {
    regions.sort_by(|a, b| b.area.cmp(&a.area).then(a.label.cmp(&b.label)));
    regions
}

/// Centers of the two largest PSIS marker blobs of a line-free FD image,
/// left one first.
pub fn detect_fd_psis(fd: &RasterImage, config: &DetectionConfig) -> Result<(Point, Point), DetectionErrorKind> {
    let mask = morph_open(&band_threshold(fd, &config.psis_marker_band), config.morph_radius);
    let regions = largest_first(connected_components(&mask, Connectivity::Eight));
    if regions.len() < 2 {
        return Err(DetectionErrorKind::TooFewPsisMarkers(regions.len()));
    }
    let (a, b) = (regions[0].center_pixel(), regions[1].center_pixel());
    Ok(if (a.x, a.y) <= (b.x, b.y) { (a, b) } else { (b, a) })
}

/// Intermediate products of the SFSL/FD pipeline, kept for debugging.
#[derive(Clone, Debug)]
pub struct SfslDetection {
    pub landmarks: LandmarkSet,
    pub spine_mask: BinaryMask,
    /// FD with the vertical line removed.
    pub fd_clean: RasterImage,
    /// Blue channel of `fd_clean`, used for the FD silhouette.
    pub fd_blue: RasterImage,
    pub sfsl_roi: RoiBox,
    pub fd_roi: RoiBox,
    pub fd_psis: (Point, Point),
    pub fd_to_sfsl: RigidTransform,
}

pub fn detect_sfsl_detailed(
    sfsl: &RasterImage,
    fd: &RasterImage,
    config: &DetectionConfig,
    frame: &str,
) -> Result<SfslDetection, DetectionError> {
    let spine_mask = band_threshold(sfsl, &config.spine_band);
    let spine = detect_spine_curve(sfsl, &config.spine_band).map_err(|k| fail(Stage::SpineThreshold, k))?;
    let (c7, ic) = extract_c7_ic(&spine).map_err(|k| fail(Stage::C7IcExtraction, k))?;

    let fd_clean = remove_vertical_line(fd, &config.vertical_line_band);
    let fd_blue = remove_red_script(&fd_clean).map_err(|k| fail(Stage::ScriptRemoval, k))?;
    let sfsl_roi = extract_roi(sfsl).map_err(|k| fail(Stage::SfslRoi, k))?;
    let fd_roi = extract_roi(&fd_blue).map_err(|k| fail(Stage::FdRoi, k))?;
    let fd_psis = detect_fd_psis(&fd_clean, config).map_err(|k| fail(Stage::FdPsis, k))?;
    let fd_to_sfsl = register_fd_to_sfsl(&fd_roi, &sfsl_roi).map_err(|k| fail(Stage::FdToSfsl, k))?;

    let (l, r) = (fd_to_sfsl.apply(fd_psis.0), fd_to_sfsl.apply(fd_psis.1));
    let landmarks = LandmarkSet { frame: frame.to_string(), c7, psis_left: l, psis_right: r, ic, spine };
    landmarks
        .validate()
        .and_then(|_| landmarks.check_bounds(sfsl.width(), sfsl.height()))
        .map_err(|m| fail(Stage::Validation, DetectionErrorKind::Invariant(m)))?;
    Ok(SfslDetection { landmarks, spine_mask, fd_clean, fd_blue, sfsl_roi, fd_roi, fd_psis, fd_to_sfsl })
}

/// Landmarks of a back-topography diagnosis in SFSL pixel coordinates.
pub fn detect_sfsl_landmarks(
    sfsl: &RasterImage,
    fd: &RasterImage,
    config: &DetectionConfig,
    frame: &str,
) -> Result<LandmarkSet, DetectionError> {
    detect_sfsl_detailed(sfsl, fd, config, frame).map(|d| d.landmarks)
}

/// Landmarks of a radiograph labeled with four pure-red discs.
pub fn detect_xray_landmarks(xray: &RasterImage, config: &DetectionConfig, frame: &str) -> Result<LandmarkSet, DetectionError> {
    let mask = band_threshold(xray, &config.xray_label_band);
    let regions = largest_first(connected_components(&mask, Connectivity::Eight));
    let largest = regions.first().map_or(0, |r| r.area) as f64;
    let mut labels: Vec<Point> = regions
        .iter()
        .filter(|r| r.area as f64 >= config.min_label_fraction * largest)
        .map(Region::center_pixel)
        .collect();
    if labels.len() != 4 {
        return Err(fail(Stage::XrayLabels, DetectionErrorKind::XrayLabelCount(labels.len())));
    }
    labels.sort_by(|a, b| (a.y, a.x).partial_cmp(&(b.y, b.x)).expect("finite centroids"));
    let (mut l, mut r) = (labels[1], labels[2]);
    if r.x < l.x {
        std::mem::swap(&mut l, &mut r);
    }
    let set = LandmarkSet::new(frame, labels[0], l, r, labels[3]);
    set.validate()
        .map_err(|m| fail(Stage::Validation, DetectionErrorKind::Invariant(m)))?;
    Ok(set)
}

/// A blob considered while looking for PSIS markers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsisCandidate {
    pub centroid: Point,
    pub area: usize,
    pub features: ShapeFeatures,
}

/// Shape report of hole-filled edge contours in a line-free FD image, roundest
/// first. Diagnostic only; detection uses the marker color band.
pub fn psis_candidates(fd_clean: &RasterImage, config: &DetectionConfig) -> Vec<PsisCandidate> {
    let markers = band_threshold(fd_clean, &config.psis_marker_band);
    let edges = canny_edges(&markers.to_image(), config.canny);
    let blobs = fill_holes(&morph_close(&edges, config.morph_radius));
    let mut out: Vec<PsisCandidate> = connected_components(&blobs, Connectivity::Eight)
        .iter()
        .filter_map(|r| {
            shape_features(r).ok().map(|features| PsisCandidate { centroid: r.centroid(), area: r.area, features })
        })
        .collect();
    out.sort_by(|a, b| b.features.circularity.total_cmp(&a.features.circularity));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::PixelFormat;

    const SPINE_RGB: [u8; 3] = [215, 46, 74];
    const LINE_RGB: [u8; 3] = [101, 196, 225];

    proptest::proptest! {
        // the exam store compares cached and fresh sets for equality
        #[test]
        fn json_round_trip_is_bit_exact(c in proptest::array::uniform8(-1e4f64..1e4)) {
            let p = |i: usize| Point::new(c[i], c[i + 1]);
            let set = LandmarkSet::new("p/e", p(0), p(2), p(4), p(6));
            let back: LandmarkSet = serde_json::from_str(&serde_json::to_string(&set).unwrap()).unwrap();
            proptest::prop_assert_eq!(back, set);
        }
    }

    fn blank(w: u32, h: u32) -> RasterImage {
        RasterImage::black(w, h, PixelFormat::Rgb8).unwrap()
    }

    fn paint_rect(img: &mut RasterImage, x0: u32, y0: u32, x1: u32, y1: u32, rgb: [u8; 3]) {
        for y in y0..=y1 {
            for x in x0..=x1 {
                img.set_pixel(x, y, &rgb);
            }
        }
    }

    fn paint_disc(img: &mut RasterImage, cx: i64, cy: i64, r: i64, rgb: [u8; 3]) {
        for y in cy - r..=cy + r {
            for x in cx - r..=cx + r {
                if (x - cx).pow(2) + (y - cy).pow(2) <= r * r && img.in_bounds(x, y) {
                    img.set_pixel(x as u32, y as u32, &rgb);
                }
            }
        }
    }

    #[test]
    fn spine_detection_orders_pixels() {
        let mut img = blank(20, 30);
        img.set_pixel(7, 20, &SPINE_RGB);
        img.set_pixel(5, 3, &SPINE_RGB);
        img.set_pixel(9, 3, &SPINE_RGB);
        let spine = detect_spine_curve(&img, &bands::SFSL_SPINE).unwrap();
        assert_eq!(spine, vec![Point::new(5.0, 3.0), Point::new(9.0, 3.0), Point::new(7.0, 20.0)]);
        let (c7, ic) = extract_c7_ic(&spine).unwrap();
        assert_eq!((c7, ic), (Point::new(5.0, 3.0), Point::new(7.0, 20.0)));
    }

    #[test]
    fn no_spine_is_an_error() {
        let img = blank(10, 10);
        assert_eq!(detect_spine_curve(&img, &bands::SFSL_SPINE), Err(DetectionErrorKind::NoSpineDetected));
        assert_eq!(extract_c7_ic(&[]), Err(DetectionErrorKind::EmptySpine));
    }

    #[test]
    fn ic_ties_take_smaller_column() {
        let spine = [Point::new(4.0, 1.0), Point::new(8.0, 9.0), Point::new(6.0, 9.0)];
        assert_eq!(extract_c7_ic(&spine).unwrap().1, Point::new(6.0, 9.0));
    }

    #[test]
    fn vertical_line_is_removed() {
        let mut img = RasterImage::filled(12, 8, PixelFormat::Rgb8, &[230, 190, 170]).unwrap();
        paint_rect(&mut img, 5, 0, 5, 7, LINE_RGB);
        let out = remove_vertical_line(&img, &bands::FD_VERTICAL_LINE);
        for y in 0..8 {
            assert_eq!(out.rgb(5, y), [0, 0, 0]);
            assert_eq!(out.rgb(4, y), [230, 190, 170]);
        }
    }

    #[test]
    fn roi_examples() {
        let mut img = blank(50, 40);
        paint_rect(&mut img, 10, 5, 20, 35, [1, 1, 1]);
        assert_eq!(extract_roi(&img).unwrap(), RoiBox { min_x: 10, min_y: 5, max_x: 20, max_y: 35 });
        assert_eq!(extract_roi(&img).unwrap().height(), 30);
        assert_eq!(extract_roi(&blank(3, 3)), Err(DetectionErrorKind::EmptyRoi));
    }

    #[test]
    fn fd_to_sfsl_example() {
        let fd = RoiBox { min_x: 10, min_y: 10, max_x: 110, max_y: 210 };
        let sfsl = RoiBox { min_x: 5, min_y: 20, max_x: 205, max_y: 420 };
        let t = register_fd_to_sfsl(&fd, &sfsl).unwrap();
        assert_eq!(t.scale, 2.0);
        assert_eq!(t.apply(Point::new(10.0, 10.0)), Point::new(5.0, 20.0));
        assert_eq!(t.apply(Point::new(110.0, 210.0)), Point::new(205.0, 420.0));
        let flat = RoiBox { min_x: 0, min_y: 3, max_x: 9, max_y: 3 };
        assert_eq!(register_fd_to_sfsl(&flat, &sfsl), Err(DetectionErrorKind::DegenerateRoi));
    }

    #[test]
    fn fd_psis_markers_are_ordered() {
        let mut img = RasterImage::filled(80, 60, PixelFormat::Rgb8, &[230, 190, 170]).unwrap();
        paint_disc(&mut img, 60, 40, 5, [0, 0, 255]);
        paint_disc(&mut img, 20, 42, 5, [0, 0, 255]);
        img.set_pixel(40, 10, &[0, 0, 255]);
        let (l, r) = detect_fd_psis(&img, &DetectionConfig::default()).unwrap();
        assert_eq!((l, r), (Point::new(20.0, 42.0), Point::new(60.0, 40.0)));
    }

    #[test]
    fn single_marker_is_reported() {
        let mut img = blank(40, 40);
        paint_disc(&mut img, 20, 20, 5, [0, 0, 255]);
        assert_eq!(detect_fd_psis(&img, &DetectionConfig::default()), Err(DetectionErrorKind::TooFewPsisMarkers(1)));
    }

    #[test]
    fn sfsl_pipeline_on_handmade_pair() {
        let skin = [230, 190, 170];
        let mut sfsl = blank(120, 160);
        paint_rect(&mut sfsl, 10, 20, 109, 140, skin);
        for y in (30..=120).step_by(6) {
            sfsl.set_pixel(60, y, &SPINE_RGB);
        }
        // FD: same back at half size, offset, with line and script
        let mut fd = blank(80, 100);
        paint_rect(&mut fd, 5, 8, 54, 68, skin);
        paint_rect(&mut fd, 70, 0, 70, 99, LINE_RGB);
        paint_rect(&mut fd, 30, 3, 40, 5, [220, 0, 0]);
        paint_disc(&mut fd, 20, 55, 2, [0, 0, 255]);
        paint_disc(&mut fd, 40, 55, 2, [0, 0, 255]);

        let d = detect_sfsl_detailed(&sfsl, &fd, &DetectionConfig::default(), "x").unwrap();
        assert_eq!(d.fd_roi, RoiBox { min_x: 5, min_y: 8, max_x: 54, max_y: 68 });
        assert_eq!(d.fd_to_sfsl.scale, 2.0);
        let l = &d.landmarks;
        assert_eq!((l.c7, l.ic), (Point::new(60.0, 30.0), Point::new(60.0, 120.0)));
        assert_eq!(l.psis_left, Point::new(40.0, 114.0));
        assert_eq!(l.psis_right, Point::new(80.0, 114.0));
        assert_eq!(l.frame, "x");
    }

    #[test]
    fn stage_is_named_on_failure() {
        let sfsl = blank(20, 20);
        let err = detect_sfsl_landmarks(&sfsl, &sfsl, &DetectionConfig::default(), "f").unwrap_err();
        assert_eq!(err.stage, Stage::SpineThreshold);
        assert_eq!(err.stage.to_string(), "spine_threshold");
    }

    #[test]
    fn xray_discs_and_specks() {
        let mut img = RasterImage::filled(200, 400, PixelFormat::Rgb8, &[90, 90, 90]).unwrap();
        paint_disc(&mut img, 100, 40, 8, [255, 0, 0]);
        paint_disc(&mut img, 140, 300, 8, [255, 0, 0]);
        paint_disc(&mut img, 60, 305, 8, [255, 0, 0]);
        paint_disc(&mut img, 98, 370, 8, [255, 0, 0]);
        img.set_pixel(10, 10, &[255, 0, 0]);
        paint_disc(&mut img, 150, 150, 8, [254, 0, 0]);
        let set = detect_xray_landmarks(&img, &DetectionConfig::default(), "xr").unwrap();
        assert_eq!(set.c7, Point::new(100.0, 40.0));
        assert_eq!(set.psis_left, Point::new(60.0, 305.0));
        assert_eq!(set.psis_right, Point::new(140.0, 300.0));
        assert_eq!(set.ic, Point::new(98.0, 370.0));
        assert!(set.spine.is_empty());
    }

    #[test]
    fn xray_wrong_count() {
        let mut img = RasterImage::filled(100, 100, PixelFormat::Rgb8, &[90, 90, 90]).unwrap();
        paint_disc(&mut img, 50, 20, 6, [255, 0, 0]);
        paint_disc(&mut img, 50, 80, 6, [255, 0, 0]);
        let err = detect_xray_landmarks(&img, &DetectionConfig::default(), "xr").unwrap_err();
        assert_eq!(err.stage, Stage::XrayLabels);
        assert_eq!(err.kind, DetectionErrorKind::XrayLabelCount(2));
    }

    #[test]
    fn landmark_json_shape() {
        let set = LandmarkSet::new("P1/E1", Point::new(1.0, 2.0), Point::new(3.0, 4.0), Point::new(5.0, 6.0), Point::new(7.0, 8.0));
        let v = serde_json::to_value(&set).unwrap();
        assert_eq!(v["c7"], serde_json::json!([1.0, 2.0]));
        assert_eq!(v["spine"], serde_json::json!([]));
        let back: LandmarkSet = serde_json::from_value(v).unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn validation_catches_swapped_psis() {
        let mut set = LandmarkSet::new("f", Point::new(5.0, 1.0), Point::new(3.0, 9.0), Point::new(7.0, 9.0), Point::new(5.0, 12.0));
        assert!(set.validate().is_ok());
        std::mem::swap(&mut set.psis_left, &mut set.psis_right);
        assert!(set.validate().is_err());
        assert!(set.check_bounds(10, 10).is_err());
        assert!(set.check_bounds(10, 13).is_ok());
    }

    #[test]
    fn candidates_rank_disc_above_bar() {
        let mut img = blank(100, 60);
        paint_disc(&mut img, 25, 30, 10, [0, 0, 255]);
        paint_rect(&mut img, 55, 10, 90, 14, [0, 0, 255]);
        let c = psis_candidates(&img, &DetectionConfig::default());
        assert!(c.len() >= 2);
        assert!((c[0].centroid.x - 25.0).abs() < 2.0);
        assert!(c[0].features.circularity > c[1].features.circularity);
    }
}
