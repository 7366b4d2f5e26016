//! Blending of registered diagnoses and landmark overlays.

use serde::{Deserialize, Serialize};

use crate::error::CompositeError;
use crate::exec::{self, Execution};
use crate::geometry::Point;
use crate::image::RasterImage;
use crate::landmarks::LandmarkSet;
use crate::segmentation::BinaryMask;

/// `α·source + (1−α)·target` per channel, rounded half away from zero.
pub fn alpha_blend(source: &RasterImage, target: &RasterImage, alpha: f64) -> Result<RasterImage, CompositeError> {
    alpha_blend_with(source, target, alpha, Execution::default())
}

pub fn alpha_blend_with(
    source: &RasterImage,
    target: &RasterImage,
    alpha: f64,
    exec: Execution,
) -> Result<RasterImage, CompositeError> {
    check_alpha(alpha)?;
    if source.shape() != target.shape() {
        return Err(CompositeError::ShapeMismatch(source.shape(), target.shape()));
    }
    let mut out = target.clone();
    let row = target.width() as usize * target.channels();
    let src = source.data();
    exec::for_each_row(exec, out.data_mut(), row, |y, dst| {
        let s = &src[y * row..(y + 1) * row];
        for (d, &s) in dst.iter_mut().zip(s) {
            let v = alpha * s as f64 + (1.0 - alpha) * *d as f64;
            *d = (v + 0.5).floor().clamp(0.0, 255.0) as u8;
        }
    });
    Ok(out)
}

pub fn check_alpha(alpha: f64) -> Result<(), CompositeError> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(CompositeError::AlphaOutOfRange(alpha))
    }
}

/// Marker colors per landmark role.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Palette {
    pub c7: [u8; 3],
    pub psis_left: [u8; 3],
    pub psis_right: [u8; 3],
    pub ic: [u8; 3],
    pub spine: [u8; 3],
    /// Marker disc radius in pixels.
    pub radius: u32,
}

impl Default for Palette {
    fn default() -> Self {
        Self {
            c7: [255, 255, 0],
            psis_left: [0, 255, 0],
            psis_right: [0, 255, 255],
            ic: [255, 0, 255],
            spine: [255, 128, 0],
            radius: 4,
        }
    }
}

fn disc(cx: i64, cy: i64, r: i64, mut f: impl FnMut(i64, i64)) {
    for y in cy - r..=cy + r {
        for x in cx - r..=cx + r {
            if (x - cx).pow(2) + (y - cy).pow(2) <= r * r {
                f(x, y);
            }
        }
    }
}

/// Bresenham segment, endpoints included.
fn line(a: (i64, i64), b: (i64, i64), mut f: impl FnMut(i64, i64)) {
    let (mut x, mut y) = a;
    let (dx, dy) = ((b.0 - a.0).abs(), -(b.1 - a.1).abs());
    let (sx, sy) = ((b.0 - a.0).signum(), (b.1 - a.1).signum());
    let mut err = dx + dy;
    loop {
        f(x, y);
        if (x, y) == b {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn nearest(p: Point) -> (i64, i64) {
    ((p.x + 0.5).floor() as i64, (p.y + 0.5).floor() as i64)
}

fn check_in_bounds(set: &LandmarkSet, width: u32, height: u32) -> Result<(), CompositeError> {
    for (role, p) in set.landmarks() {
        let (x, y) = nearest(p);
        if !p.is_finite() || x < 0 || y < 0 || x >= width as i64 || y >= height as i64 {
            return Err(CompositeError::OutOfBounds { role, x: p.x, y: p.y, width, height });
        }
    }
    Ok(())
}

/// Calls `paint(x, y, color)` for every marker pixel inside the image; the
/// spine polyline is drawn first so discs stay on top.
fn for_each_marker_pixel(set: &LandmarkSet, palette: &Palette, width: u32, height: u32, mut paint: impl FnMut(u32, u32, [u8; 3])) {
    let mut put = |x: i64, y: i64, c: [u8; 3]| {
        if x >= 0 && y >= 0 && x < width as i64 && y < height as i64 {
            paint(x as u32, y as u32, c);
        }
    };
    let spine: Vec<_> = set.spine.iter().copied().map(nearest).collect();
    if let [only] = spine.as_slice() {
        put(only.0, only.1, palette.spine);
    }
    for w in spine.windows(2) {
        line(w[0], w[1], |x, y| put(x, y, palette.spine));
    }
    let r = palette.radius as i64;
    for (p, c) in [
        (set.c7, palette.c7),
        (set.psis_left, palette.psis_left),
        (set.psis_right, palette.psis_right),
        (set.ic, palette.ic),
    ] {
        let (cx, cy) = nearest(p);
        disc(cx, cy, r, |x, y| put(x, y, c));
    }
}

/// Pixels that [`overlay_landmarks`] paints.
pub fn overlay_mask(set: &LandmarkSet, palette: &Palette, width: u32, height: u32) -> BinaryMask {
    let mut mask = BinaryMask::new(width, height);
    for_each_marker_pixel(set, palette, width, height, |x, y, _| mask.set(x, y, true));
    mask
}

/// Discs at the four landmarks and a polyline through the spine points.
/// Grayscale input is promoted to RGB.
pub fn overlay_landmarks(image: &RasterImage, set: &LandmarkSet, palette: &Palette) -> Result<RasterImage, CompositeError> {
    check_in_bounds(set, image.width(), image.height())?;
    let mut out = image.to_rgb();
    for_each_marker_pixel(set, palette, image.width(), image.height(), |x, y, c| out.set_pixel(x, y, &c));
    Ok(out)
}

/// An image together with the coordinate frame its pixels live in.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameImage {
    pub frame: String,
    pub image: RasterImage,
}

impl FrameImage {
    pub fn new(frame: impl Into<String>, image: RasterImage) -> Self {
        Self { frame: frame.into(), image }
    }
}

/// Folds the sources over the target in list order:
/// `acc ← alpha_blend(source_k, acc, α)`. Every source must already be
/// resampled into the target's frame.
pub fn render_followup(target: &FrameImage, sources: &[FrameImage], alpha: f64) -> Result<RasterImage, CompositeError> {
    check_alpha(alpha)?;
    if let Some(s) = sources.iter().find(|s| s.frame != target.frame) {
        return Err(CompositeError::Unregistered { source_frame: s.frame.clone(), target: target.frame.clone() });
    }
    sources
        .iter()
        .try_fold(target.image.clone(), |acc, s| alpha_blend(&s.image, &acc, alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::PixelFormat;
    use proptest::prelude::*;

    fn gray(w: u32, h: u32, v: u8) -> RasterImage {
        RasterImage::filled(w, h, PixelFormat::Gray8, &[v]).unwrap()
    }

    fn rgb_from(w: u32, h: u32, data: Vec<u8>) -> RasterImage {
        RasterImage::new(w, h, PixelFormat::Rgb8, data).unwrap()
    }

    #[test]
    fn blend_examples() {
        let (s, t) = (gray(3, 2, 100), gray(3, 2, 200));
        assert_eq!(alpha_blend(&s, &t, 0.0).unwrap(), t);
        assert_eq!(alpha_blend(&s, &t, 1.0).unwrap(), s);
        assert_eq!(alpha_blend(&s, &t, 0.5).unwrap(), gray(3, 2, 150));
    }

    #[test]
    fn half_rounds_away_from_zero() {
        assert_eq!(alpha_blend(&gray(1, 1, 0), &gray(1, 1, 1), 0.5).unwrap(), gray(1, 1, 1));
        assert_eq!(alpha_blend(&gray(1, 1, 254), &gray(1, 1, 255), 0.5).unwrap(), gray(1, 1, 255));
    }

    #[test]
    fn blend_errors() {
        let (a, b) = (gray(3, 2, 1), gray(2, 3, 1));
        assert!(matches!(alpha_blend(&a, &b, 0.5), Err(CompositeError::ShapeMismatch(..))));
        assert_eq!(alpha_blend(&a, &a, 1.5), Err(CompositeError::AlphaOutOfRange(1.5)));
        assert_eq!(alpha_blend(&a, &a, -0.1), Err(CompositeError::AlphaOutOfRange(-0.1)));
        assert!(alpha_blend(&a, &a, f64::NAN).is_err());
    }

    fn landmarks() -> LandmarkSet {
        LandmarkSet::new("f", Point::new(20.0, 5.0), Point::new(10.0, 30.0), Point::new(30.0, 30.0), Point::new(20.0, 40.0))
    }

    #[test]
    fn empty_spine_draws_only_discs() {
        let img = RasterImage::black(50, 50, PixelFormat::Rgb8).unwrap();
        let p = Palette::default();
        let out = overlay_landmarks(&img, &landmarks(), &p).unwrap();
        let changed = (0..50).flat_map(|y| (0..50).map(move |x| (x, y))).filter(|&(x, y)| out.is_nonzero(x, y)).count();
        // radius-4 disc covers 49 pixels; the four discs do not overlap
        assert_eq!(changed, 4 * 49);
        assert_eq!(overlay_mask(&landmarks(), &p, 50, 50).count(), changed);
    }

    #[test]
    fn changed_pixels_match_mask_with_spine() {
        let img = RasterImage::black(50, 50, PixelFormat::Rgb8).unwrap();
        let mut set = landmarks();
        set.spine = vec![Point::new(20.0, 5.0), Point::new(24.0, 20.0), Point::new(18.0, 40.0)];
        let p = Palette::default();
        let out = overlay_landmarks(&img, &set, &p).unwrap();
        let mask = overlay_mask(&set, &p, 50, 50);
        for y in 0..50 {
            for x in 0..50 {
                assert_eq!(out.is_nonzero(x, y), mask.get(x, y), "({x},{y})");
            }
        }
        assert!(mask.count() > 4 * 49);
    }

    #[test]
    fn overlay_is_idempotent() {
        let img = gray(50, 50, 77);
        let mut set = landmarks();
        set.spine = vec![Point::new(20.0, 6.0), Point::new(20.0, 39.0)];
        let p = Palette::default();
        let once = overlay_landmarks(&img, &set, &p).unwrap();
        assert_eq!(overlay_landmarks(&once, &set, &p).unwrap(), once);
    }

    #[test]
    fn out_of_bounds_landmark() {
        let img = gray(25, 25, 0);
        let err = overlay_landmarks(&img, &landmarks(), &Palette::default()).unwrap_err();
        assert!(matches!(err, CompositeError::OutOfBounds { role: "psis_left", .. }), "{err}");
    }

    #[test]
    fn bresenham_is_connected() {
        let mut pts = Vec::new();
        line((0, 0), (7, -3), |x, y| pts.push((x, y)));
        assert_eq!(pts.first(), Some(&(0, 0)));
        assert_eq!(pts.last(), Some(&(7, -3)));
        for w in pts.windows(2) {
            assert!((w[0].0 - w[1].0).abs() <= 1 && (w[0].1 - w[1].1).abs() <= 1);
        }
        assert_eq!(pts.len(), 8);
    }

    #[test]
    fn followup_fold() {
        let t = FrameImage::new("T", gray(4, 4, 40));
        let s = FrameImage::new("T", gray(4, 4, 200));
        assert_eq!(render_followup(&t, &[], 0.3).unwrap(), t.image);
        assert_eq!(render_followup(&t, std::slice::from_ref(&s), 0.3).unwrap(), alpha_blend(&s.image, &t.image, 0.3).unwrap());
        let twice = render_followup(&t, &[s.clone(), s.clone()], 0.5).unwrap();
        let single = alpha_blend(&s.image, &t.image, 0.75).unwrap();
        for (a, b) in twice.data().iter().zip(single.data()) {
            assert!((*a as i32 - *b as i32).abs() <= 1);
        }
        let stray = FrameImage::new("S", gray(4, 4, 1));
        assert!(matches!(render_followup(&t, &[s, stray], 0.5), Err(CompositeError::Unregistered { .. })));
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let data: Vec<u8> = (0..64 * 48 * 3).map(|i| (i * 37 % 256) as u8).collect();
        let other: Vec<u8> = data.iter().rev().copied().collect();
        let (s, t) = (rgb_from(64, 48, data), rgb_from(64, 48, other));
        assert_eq!(
            alpha_blend_with(&s, &t, 0.37, Execution::Sequential).unwrap(),
            alpha_blend_with(&s, &t, 0.37, Execution::Parallel).unwrap()
        );
    }

    proptest! {
        #[test]
        fn blend_properties(a in proptest::collection::vec(any::<u8>(), 48), b in proptest::collection::vec(any::<u8>(), 48), alpha in 0.0..=1.0f64) {
            let (s, t) = (rgb_from(4, 4, a.clone()), rgb_from(4, 4, b.clone()));
            let st = alpha_blend(&s, &t, alpha).unwrap();
            let ts = alpha_blend(&t, &s, 1.0 - alpha).unwrap();
            for i in 0..48 {
                let (lo, hi) = (a[i].min(b[i]), a[i].max(b[i]));
                prop_assert!(lo <= st.data()[i] && st.data()[i] <= hi);
                prop_assert!((st.data()[i] as i32 - ts.data()[i] as i32).abs() <= 1);
            }
            prop_assert_eq!(alpha_blend(&s, &s, alpha).unwrap(), s);
        }
    }
}
