use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::BinaryMask;
use crate::image::{to_gray, RasterImage};

/// Hysteresis thresholds on the 3×3 Sobel gradient magnitude.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CannyThresholds {
    pub low: f64,
    pub high: f64,
}

impl Default for CannyThresholds {
    fn default() -> Self {
        Self { low: 50.0, high: 150.0 }
    }
}

/// Canny edge detector: Sobel gradient, non-maximum suppression along the
/// gradient direction quantized to 45°, then hysteresis linking through
/// 8-neighbors. RGB input is converted to luminance first.
pub fn canny_edges(image: &RasterImage, thresholds: CannyThresholds) -> BinaryMask {
    let gray = to_gray(image);
    let (w, h) = gray.dimensions();
    let (wi, hi) = (w as i64, h as i64);
    let px = |x: i64, y: i64| -> f64 {
        let x = x.clamp(0, wi - 1) as u32;
        let y = y.clamp(0, hi - 1) as u32;
        gray.pixel(x, y)[0] as f64
    };

    let n = w as usize * h as usize;
    let mut mag = vec![0.0f64; n];
    let mut dir = vec![0u8; n];
    for y in 0..hi {
        for x in 0..wi {
            let gx = px(x + 1, y - 1) + 2.0 * px(x + 1, y) + px(x + 1, y + 1)
                - px(x - 1, y - 1)
                - 2.0 * px(x - 1, y)
                - px(x - 1, y + 1);
            let gy = px(x - 1, y + 1) + 2.0 * px(x, y + 1) + px(x + 1, y + 1)
                - px(x - 1, y - 1)
                - 2.0 * px(x, y - 1)
                - px(x + 1, y - 1);
            let i = (y * wi + x) as usize;
            mag[i] = gx.hypot(gy);
            // 0: horizontal gradient, 1: 45°, 2: vertical, 3: 135°
            let deg = gy.atan2(gx).to_degrees().rem_euclid(180.0);
            dir[i] = if !(22.5..157.5).contains(&deg) {
                0
            } else if deg < 67.5 {
                1
            } else if deg < 112.5 {
                2
            } else {
                3
            };
        }
    }

    let at = |x: i64, y: i64| -> f64 {
        if x < 0 || y < 0 || x >= wi || y >= hi {
            0.0
        } else {
            mag[(y * wi + x) as usize]
        }
    };
    let mut thin = vec![0.0f64; n];
    for y in 0..hi {
        for x in 0..wi {
            let i = (y * wi + x) as usize;
            let m = mag[i];
            if m <= 0.0 {
                continue;
            }
            let (dx, dy) = match dir[i] {
                0 => (1, 0),
                1 => (1, 1),
                2 => (0, 1),
                _ => (-1, 1),
            };
            // strict on one side, lenient on the other, so plateaus keep one pixel
            if m > at(x - dx, y - dy) && m >= at(x + dx, y + dy) {
                thin[i] = m;
            }
        }
    }

    let mut edges = BinaryMask::new(w, h);
    let mut queue = VecDeque::new();
    for (i, &m) in thin.iter().enumerate() {
        if m >= thresholds.high && m > 0.0 {
            let (x, y) = ((i % w as usize) as u32, (i / w as usize) as u32);
            edges.set(x, y, true);
            queue.push_back((x as i64, y as i64));
        }
    }
    while let Some((x, y)) = queue.pop_front() {
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if (dx, dy) == (0, 0) || nx < 0 || ny < 0 || nx >= wi || ny >= hi {
                    continue;
                }
                let j = (ny * wi + nx) as usize;
                if !edges.get(nx as u32, ny as u32) && thin[j] >= thresholds.low && thin[j] > 0.0 {
                    edges.set(nx as u32, ny as u32, true);
                    queue.push_back((nx, ny));
                }
            }
        }
    }
    edges
}
