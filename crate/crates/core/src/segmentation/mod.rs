//! Binary segmentation: color-band thresholding, morphology, Canny edges,
//! connected components and shape features.

mod canny;
mod components;
mod morphology;

pub use canny::{canny_edges, CannyThresholds};
pub use components::{connected_components, shape_features, Connectivity, Region, ShapeFeatures};
pub use morphology::{dilate, erode, fill_holes, morph_close, morph_open};

use serde::{Deserialize, Serialize};

use crate::exec::{self, Execution};
use crate::image::{rgb_to_hsv, ColorSpace, ColorTriple, PixelFormat, RasterImage};

/// Row-major boolean grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, bits: vec![false; width as usize * height as usize] }
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), width as usize * height as usize, "mask size mismatch");
        Self { width, height, bits }
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let bits = (0..height).flat_map(|y| (0..width).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        Self { width, height, bits }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    /// Out-of-range coordinates read as `false`.
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && x < self.width as i64 && y < self.height as i64 && self.get(x as u32, y as u32)
    }

    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        let w = self.width as usize;
        self.bits[y as usize * w + x as usize] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// `self ⊆ other`
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    pub fn iter_set(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width as usize;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| ((i % w) as u32, (i / w) as u32))
    }

    /// 255 for foreground, 0 for background.
    pub fn to_image(&self) -> RasterImage {
        let data = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        RasterImage::new(self.width, self.height, PixelFormat::Gray8, data).expect("mask has valid dimensions")
    }
}

/// Inclusive per-channel bounds in one color space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ThresholdBand {
    pub space: ColorSpace,
    pub lower: [u8; 3],
    pub upper: [u8; 3],
}

impl ThresholdBand {
    pub const fn new(space: ColorSpace, lower: [u8; 3], upper: [u8; 3]) -> Self {
        Self { space, lower, upper }
    }

    /// Builds a band from two triples; `None` when their spaces differ or a
    /// lower bound exceeds its upper bound.
    pub fn from_triples(lower: ColorTriple, upper: ColorTriple) -> Option<Self> {
        let band = Self::new(lower.space, lower.values, upper.values);
        (lower.space == upper.space && band.is_valid()).then_some(band)
    }

    pub fn is_valid(&self) -> bool {
        (0..3).all(|c| self.lower[c] <= self.upper[c])
    }

    pub fn contains(&self, values: [u8; 3]) -> bool {
        (0..3).all(|c| self.lower[c] <= values[c] && values[c] <= self.upper[c])
    }

    /// Tests an RGB pixel, converting to HSV first for HSV bands.
    pub fn contains_rgb(&self, rgb: [u8; 3]) -> bool {
        match self.space {
            ColorSpace::Rgb => self.contains(rgb),
            ColorSpace::Hsv => self.contains(rgb_to_hsv(rgb)),
        }
    }
}

/// Thresholds used on the acquisition system's augmented images and on the
/// manually labeled radiographs.
pub mod bands {
    use super::ThresholdBand;
    use crate::image::ColorSpace;

    /// Light-blue vertical reference line in FD images.
    pub const FD_VERTICAL_LINE: ThresholdBand = ThresholdBand::new(ColorSpace::Hsv, [97, 141, 225], [97, 141, 225]);

    /// Dotted spine line (and thereby C7 and IC) in SFSL images.
    pub const SFSL_SPINE: ThresholdBand = ThresholdBand::new(ColorSpace::Hsv, [12, 130, 195], [180, 255, 230]);

    /// Filled red discs on labeled radiographs (C7, PSIS, IC).
    pub const XRAY_LABELS: ThresholdBand = ThresholdBand::new(ColorSpace::Rgb, [255, 0, 0], [255, 0, 0]);

    /// Blue PSIS markers the acquisition system adds to FD images. Not part
    /// of the published thresholds; configurable.
    pub const FD_PSIS_MARKERS: ThresholdBand = ThresholdBand::new(ColorSpace::Hsv, [110, 150, 100], [130, 255, 255]);
}

/// Foreground where every channel lies within the band, bounds included.
/// Grayscale input is treated as an RGB triple with equal channels.
pub fn band_threshold(image: &RasterImage, band: &ThresholdBand) -> BinaryMask {
    band_threshold_with(image, band, Execution::default())
}

pub fn band_threshold_with(image: &RasterImage, band: &ThresholdBand, exec: Execution) -> BinaryMask {
    let (w, h) = image.dimensions();
    let mut bits = vec![false; w as usize * h as usize];
    let ch = image.channels();
    let data = image.data();
    exec::for_each_row(exec, &mut bits, w as usize, |y, row| {
        let src = &data[y * w as usize * ch..(y + 1) * w as usize * ch];
        for (x, out) in row.iter_mut().enumerate() {
            let p = &src[x * ch..x * ch + ch];
            let rgb = if ch == 3 { [p[0], p[1], p[2]] } else { [p[0]; 3] };
            *out = band.contains_rgb(rgb);
        }
    });
    BinaryMask::from_bits(w, h, bits)
}
