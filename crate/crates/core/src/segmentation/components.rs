use std::collections::VecDeque;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::BinaryMask;
use crate::error::FeatureError;
use crate::geometry::Point;
use crate::image::PixelCoord;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(i64, i64)] {
        match self {
            Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
            Connectivity::Eight => &[(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)],
        }
    }
}

/// Inclusive pixel bounding box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_x: u32,
    pub min_y: u32,
    pub max_x: u32,
    pub max_y: u32,
}

impl BoundingBox {
    pub fn width(&self) -> u32 {
        self.max_x - self.min_x + 1
    }

    pub fn height(&self) -> u32 {
        self.max_y - self.min_y + 1
    }
}

/// One connected component.
#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    /// 1-based, in raster order of each component's first pixel.
    pub label: u32,
    pub pixels: Vec<PixelCoord>,
    pub bbox: BoundingBox,
    pub area: usize,
    /// Foreground pixels with a 4-neighbor in the background (the image
    /// border counts as background).
    pub boundary_pixels: usize,
    /// Perimeter estimate used for circularity: the larger of the convex
    /// hull perimeter of the pixel squares and the crack length scaled by
    /// π/4. The hull term keeps circularity at or below 1; the crack term
    /// penalizes holes and concavities.
    pub perimeter: f64,
}

impl Region {
    pub fn centroid(&self) -> Point {
        let n = self.pixels.len().max(1) as f64;
        let (sx, sy) = self
            .pixels
            .iter()
            .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x as f64, sy + p.y as f64));
        Point::new(sx / n, sy / n)
    }

    /// Centroid rounded to the nearest pixel.
    pub fn center_pixel(&self) -> Point {
        let c = self.centroid();
        Point::new((c.x + 0.5).floor(), (c.y + 0.5).floor())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeFeatures {
    pub aspect_ratio: f64,
    pub circularity: f64,
}

/// Aspect ratio (bbox width / height) and circularity (4π·area / perimeter²).
pub fn shape_features(region: &Region) -> Result<ShapeFeatures, FeatureError> {
    if region.area == 0 || region.pixels.is_empty() {
        return Err(FeatureError::ZeroHeight);
    }
    if !(region.perimeter > 0.0) {
        return Err(FeatureError::ZeroPerimeter);
    }
    Ok(ShapeFeatures {
        aspect_ratio: region.bbox.width() as f64 / region.bbox.height() as f64,
        circularity: 4.0 * PI * region.area as f64 / (region.perimeter * region.perimeter),
    })
}

/// Labels the foreground of `mask`. Every foreground pixel ends up in
/// exactly one region.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> Vec<Region> {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let mut labels = vec![0u32; (w * h) as usize];
    let mut regions = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..(w * h) as usize {
        if !mask.bits()[start] || labels[start] != 0 {
            continue;
        }
        let label = regions.len() as u32 + 1;
        labels[start] = label;
        queue.push_back(start);
        let mut pixels = Vec::new();
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i as i64 % w, i as i64 / w);
            pixels.push(PixelCoord::new(x as u32, y as u32));
            for &(dx, dy) in connectivity.offsets() {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w || ny >= h {
                    continue;
                }
                let j = (ny * w + nx) as usize;
                if mask.bits()[j] && labels[j] == 0 {
                    labels[j] = label;
                    queue.push_back(j);
                }
            }
        }
        regions.push(build_region(label, pixels, mask));
    }
    regions
}

fn build_region(label: u32, mut pixels: Vec<PixelCoord>, mask: &BinaryMask) -> Region {
    pixels.sort_by_key(|p| (p.y, p.x));
    let mut bbox = BoundingBox { min_x: u32::MAX, min_y: u32::MAX, max_x: 0, max_y: 0 };
    let mut boundary_pixels = 0;
    let mut cracks = 0usize;
    for p in &pixels {
        bbox.min_x = bbox.min_x.min(p.x);
        bbox.min_y = bbox.min_y.min(p.y);
        bbox.max_x = bbox.max_x.max(p.x);
        bbox.max_y = bbox.max_y.max(p.y);
        let (x, y) = (p.x as i64, p.y as i64);
        let open = [(1, 0), (-1, 0), (0, 1), (0, -1)]
            .iter()
            .filter(|&&(dx, dy)| !mask.get_signed(x + dx, y + dy))
            .count();
        cracks += open;
        if open > 0 {
            boundary_pixels += 1;
        }
    }
    let perimeter = hull_perimeter(&pixels).max(cracks as f64 * PI / 4.0);
    Region { label, area: pixels.len(), pixels, bbox, boundary_pixels, perimeter }
}

/// Perimeter of the convex hull of the unit squares covering `pixels`
/// (sorted by row, then column).
fn hull_perimeter(pixels: &[PixelCoord]) -> f64 {
    // only the outermost squares of each row can contribute hull vertices
    let mut pts: Vec<(f64, f64)> = Vec::new();
    let mut i = 0;
    while i < pixels.len() {
        let y = pixels[i].y;
        let mut j = i;
        while j + 1 < pixels.len() && pixels[j + 1].y == y {
            j += 1;
        }
        let (lo, hi) = (pixels[i].x as f64 - 0.5, pixels[j].x as f64 + 0.5);
        let yf = y as f64;
        pts.extend([(lo, yf - 0.5), (lo, yf + 0.5), (hi, yf - 0.5), (hi, yf + 0.5)]);
        i = j + 1;
    }
    let hull = convex_hull(pts);
    (0..hull.len())
        .map(|k| {
            let (a, b) = (hull[k], hull[(k + 1) % hull.len()]);
            (a.0 - b.0).hypot(a.1 - b.1)
        })
        .sum()
}

fn convex_hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}
