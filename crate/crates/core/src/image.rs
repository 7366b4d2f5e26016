//! Raster images, color-space conversion and nearest-neighbor resampling.
//!
//! Coordinates follow the raster convention: origin at the top-left pixel,
//! `x` grows rightward, `y` grows downward. Pixel `(i, j)` is centered on
//! the real point `(i, j)`, so the outer corner of the image sits at
//! `(-0.5, -0.5)`. Background is black everywhere.

use std::io::Cursor;
use std::path::Path;

use ::image::{DynamicImage, GrayImage, ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::ImageError;
use crate::exec::{self, Execution};
use crate::geometry::{Point, RigidTransform};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PixelFormat {
    Rgb8,
    Gray8,
}

impl PixelFormat {
    pub const fn channels(self) -> usize {
        match self {
            PixelFormat::Rgb8 => 3,
            PixelFormat::Gray8 => 1,
        }
    }
}

/// Integer pixel position.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PixelCoord {
    pub x: u32,
    pub y: u32,
}

impl PixelCoord {
    pub const fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }

    pub fn to_point(self) -> Point {
        Point::new(self.x as f64, self.y as f64)
    }
}

/// Row-major, channel-interleaved 8-bit image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    format: PixelFormat,
    data: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: u32, height: u32, format: PixelFormat, data: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyDimensions { width, height });
        }
        let expected = width as usize * height as usize * format.channels();
        if data.len() != expected {
            return Err(ImageError::BufferSize { width, height, format, expected, actual: data.len() });
        }
        Ok(Self { width, height, format, data })
    }

    /// Image with every pixel set to `pixel` (one value per channel).
    pub fn filled(width: u32, height: u32, format: PixelFormat, pixel: &[u8]) -> Result<Self, ImageError> {
        assert_eq!(pixel.len(), format.channels(), "pixel length must match format");
        let n = width as usize * height as usize;
        let data = pixel.iter().copied().cycle().take(n * pixel.len()).collect();
        Self::new(width, height, format, data)
    }

    pub fn black(width: u32, height: u32, format: PixelFormat) -> Result<Self, ImageError> {
        Self::new(width, height, format, vec![0; width as usize * height as usize * format.channels()])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn format(&self) -> PixelFormat {
        self.format
    }

    pub fn channels(&self) -> usize {
        self.format.channels()
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn shape(&self) -> (u32, u32, PixelFormat) {
        (self.width, self.height, self.format)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn in_bounds(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && x < self.width as i64 && y < self.height as i64
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * self.channels()
    }

    /// Channel values of pixel `(x, y)`. Panics when out of bounds.
    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        assert!(x < self.width && y < self.height, "pixel ({x}, {y}) out of bounds");
        let o = self.offset(x, y);
        &self.data[o..o + self.channels()]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, value: &[u8]) {
        assert!(x < self.width && y < self.height, "pixel ({x}, {y}) out of bounds");
        let c = self.channels();
        let o = self.offset(x, y);
        self.data[o..o + c].copy_from_slice(&value[..c]);
    }

    /// RGB triple of a pixel; grayscale pixels are broadcast.
    pub fn rgb(&self, x: u32, y: u32) -> [u8; 3] {
        let p = self.pixel(x, y);
        match self.format {
            PixelFormat::Rgb8 => [p[0], p[1], p[2]],
            PixelFormat::Gray8 => [p[0]; 3],
        }
    }

    pub fn is_nonzero(&self, x: u32, y: u32) -> bool {
        self.pixel(x, y).iter().any(|&v| v != 0)
    }

    /// RGB copy; grayscale values are replicated into all three channels.
    pub fn to_rgb(&self) -> RasterImage {
        match self.format {
            PixelFormat::Rgb8 => self.clone(),
            PixelFormat::Gray8 => RasterImage {
                width: self.width,
                height: self.height,
                format: PixelFormat::Rgb8,
                data: self.data.iter().flat_map(|&v| [v, v, v]).collect(),
            },
        }
    }

    pub fn from_png_bytes(bytes: &[u8]) -> Result<Self, ImageError> {
        let img = ::image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
        Ok(Self::from_dynamic(img))
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self, ImageError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| ImageError::Decode {
            path: path.to_path_buf(),
            source: ::image::ImageError::IoError(e),
        })?;
        Self::from_png_bytes(&bytes).map_err(|e| match e {
            ImageError::Codec(source) => ImageError::Decode { path: path.to_path_buf(), source },
            other => other,
        })
    }

    pub fn to_png_bytes(&self) -> Result<Vec<u8>, ImageError> {
        let mut out = Cursor::new(Vec::new());
        match self.format {
            PixelFormat::Rgb8 => {
                let buf = RgbImage::from_raw(self.width, self.height, self.data.clone())
                    .expect("buffer length checked at construction");
                buf.write_to(&mut out, ImageFormat::Png)?;
            }
            PixelFormat::Gray8 => {
                let buf = GrayImage::from_raw(self.width, self.height, self.data.clone())
                    .expect("buffer length checked at construction");
                buf.write_to(&mut out, ImageFormat::Png)?;
            }
        }
        Ok(out.into_inner())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), ImageError> {
        let path = path.as_ref();
        let bytes = self.to_png_bytes()?;
        std::fs::write(path, bytes).map_err(|e| ImageError::Encode {
            path: path.to_path_buf(),
            source: ::image::ImageError::IoError(e),
        })
    }

    fn from_dynamic(img: DynamicImage) -> Self {
        let color = img.color();
        if color.has_color() {
            let buf = img.into_rgb8();
            let (w, h) = buf.dimensions();
            RasterImage { width: w, height: h, format: PixelFormat::Rgb8, data: buf.into_raw() }
        } else {
            let buf = img.into_luma8();
            let (w, h) = buf.dimensions();
            RasterImage { width: w, height: h, format: PixelFormat::Gray8, data: buf.into_raw() }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorSpace {
    Rgb,
    Hsv,
}

/// Three 8-bit channel values tagged with their color space. HSV triples
/// store hue halved into `[0, 180]`, saturation and value in `[0, 255]`.
impl ColorSpace {
    /// Largest valid value per channel; 8-bit hue stops at 180.
    pub const fn channel_max(self) -> [u8; 3] {
        match self {
            ColorSpace::Rgb => [255, 255, 255],
            ColorSpace::Hsv => [180, 255, 255],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ColorTriple {
    pub values: [u8; 3],
    pub space: ColorSpace,
}

impl ColorTriple {
    pub const fn rgb(r: u8, g: u8, b: u8) -> Self {
        Self { values: [r, g, b], space: ColorSpace::Rgb }
    }

    pub const fn hsv(h: u8, s: u8, v: u8) -> Self {
        Self { values: [h, s, v], space: ColorSpace::Hsv }
    }
}

#[inline]
fn round_u8(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Hexcone RGB→HSV with hue in degrees `[0, 360)`, saturation in `[0, 1]`
/// and value in `[0, 255]`, without quantization.
pub fn rgb_to_hsv_precise([r, g, b]: [u8; 3]) -> [f64; 3] {
    let (r, g, b) = (r as f64, g as f64, b as f64);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let chroma = max - min;
    let s = if max == 0.0 { 0.0 } else { chroma / max };
    let h = if chroma == 0.0 {
        0.0
    } else if max == r {
        60.0 * (g - b) / chroma
    } else if max == g {
        120.0 + 60.0 * (b - r) / chroma
    } else {
        240.0 + 60.0 * (r - g) / chroma
    };
    let h = if h < 0.0 { h + 360.0 } else { h };
    [h, s, max]
}

/// Inverse of [`rgb_to_hsv_precise`], rounding to the nearest 8-bit value.
pub fn hsv_precise_to_rgb([h, s, v]: [f64; 3]) -> [u8; 3] {
    let c = v * s;
    let hp = h.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let m = v - c;
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    [round_u8(r + m), round_u8(g + m), round_u8(b + m)]
}

/// 8-bit HSV conversion: hue halved into `[0, 180]`, saturation and value
/// scaled to `[0, 255]`.
pub fn rgb_to_hsv(pixel: [u8; 3]) -> [u8; 3] {
    let [h, s, v] = rgb_to_hsv_precise(pixel);
    [round_u8(h / 2.0).min(180), round_u8(s * 255.0), v as u8]
}

pub fn hsv_to_rgb([h, s, v]: [u8; 3]) -> [u8; 3] {
    hsv_precise_to_rgb([h as f64 * 2.0, s as f64 / 255.0, v as f64])
}

impl ColorTriple {
    pub fn to_hsv(self) -> ColorTriple {
        match self.space {
            ColorSpace::Hsv => self,
            ColorSpace::Rgb => ColorTriple { values: rgb_to_hsv(self.values), space: ColorSpace::Hsv },
        }
    }

    pub fn to_rgb(self) -> ColorTriple {
        match self.space {
            ColorSpace::Rgb => self,
            ColorSpace::Hsv => ColorTriple { values: hsv_to_rgb(self.values), space: ColorSpace::Rgb },
        }
    }
}

/// ITU-R BT.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

pub fn luma([r, g, b]: [u8; 3]) -> u8 {
    round_u8(LUMA_WEIGHTS[0] * r as f64 + LUMA_WEIGHTS[1] * g as f64 + LUMA_WEIGHTS[2] * b as f64)
}

/// Weighted-sum luminance. Grayscale input is returned unchanged.
pub fn to_gray(image: &RasterImage) -> RasterImage {
    if image.format == PixelFormat::Gray8 {
        return image.clone();
    }
    let data = image.data.chunks_exact(3).map(|p| luma([p[0], p[1], p[2]])).collect();
    RasterImage { width: image.width, height: image.height, format: PixelFormat::Gray8, data }
}

/// Single channel of an RGB image as a grayscale image.
pub fn extract_channel(image: &RasterImage, channel: usize) -> Result<RasterImage, ImageError> {
    if channel > 2 {
        return Err(ImageError::InvalidChannel(channel));
    }
    if image.format != PixelFormat::Rgb8 {
        return Err(ImageError::NotRgb);
    }
    let data = image.data.chunks_exact(3).map(|p| p[channel]).collect();
    Ok(RasterImage { width: image.width, height: image.height, format: PixelFormat::Gray8, data })
}

/// Nearest-neighbor warp keeping the input dimensions.
pub fn resample_nearest(image: &RasterImage, transform: &RigidTransform) -> Result<RasterImage, ImageError> {
    resample_nearest_into(image, transform, image.width, image.height, Execution::default())
}

/// Nearest-neighbor warp into a `width`×`height` canvas. Output pixel `p`
/// takes the source pixel nearest to `transform⁻¹(p)`; lookups that fall
/// outside the source are black.
pub fn resample_nearest_into(
    image: &RasterImage,
    transform: &RigidTransform,
    width: u32,
    height: u32,
    exec: Execution,
) -> Result<RasterImage, ImageError> {
    transform.validate()?;
    let mut out = RasterImage::black(width, height, image.format)?;
    let inv = transform.inverse();
    let [[a, b], [c, d]] = inv.linear();
    let o = inv.offset();
    let ch = image.channels();
    let (sw, sh) = (image.width as i64, image.height as i64);
    let src = &image.data;
    exec::for_each_row(exec, &mut out.data, width as usize * ch, |y, row| {
        let yf = y as f64;
        for x in 0..width as usize {
            let xf = x as f64;
            let sx = (a * xf + b * yf + o.x + 0.5).floor();
            let sy = (c * xf + d * yf + o.y + 0.5).floor();
            if sx < 0.0 || sy < 0.0 || sx >= sw as f64 || sy >= sh as f64 {
                continue;
            }
            let si = (sy as usize * sw as usize + sx as usize) * ch;
            row[x * ch..x * ch + ch].copy_from_slice(&src[si..si + ch]);
        }
    });
    Ok(out)
}
