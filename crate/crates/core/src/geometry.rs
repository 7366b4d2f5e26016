//! Planar points and the scale-rotate-translate transform family.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

/// A real-valued point (or vector) in image coordinates: `x` rightward,
/// `y` downward. Serialized as `[x, y]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3-D cross product.
    pub fn cross(self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Nearest pixel, or `None` when negative or non-finite.
    pub fn to_pixel(self) -> Option<(u32, u32)> {
        let (x, y) = (self.x.round(), self.y.round());
        if !(x.is_finite() && y.is_finite()) || x < 0.0 || y < 0.0 {
            return None;
        }
        if x > u32::MAX as f64 || y > u32::MAX as f64 {
            return None;
        }
        Some((x as u32, y as u32))
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Point { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(theta: f64) -> f64 {
    let mut a = theta % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Rotates `v` by `theta` with the standard matrix `[[c, -s], [s, c]]`
/// applied to raw coordinates. In the y-down image frame a positive angle
/// therefore turns clockwise on screen.
pub fn rotate(v: Point, theta: f64) -> Point {
    let (s, c) = theta.sin_cos();
    Point::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

/// Uniform scale and rotation about `pivot`, followed by the translation
/// that lands `pivot` on `anchor`:
///
/// `p ↦ scale · R(angle) · (p − pivot) + anchor`
///
/// This is the only transform family used to register diagnoses; it never
/// shears or reflects.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub scale: f64,
    /// Radians.
    pub angle: f64,
    pub pivot: Point,
    pub anchor: Point,
}

impl RigidTransform {
    pub fn new(scale: f64, angle: f64, pivot: Point, anchor: Point) -> Result<Self, GeometryError> {
        let t = Self { scale, angle, pivot, anchor };
        t.validate()?;
        Ok(t)
    }

    pub const fn identity() -> Self {
        Self { scale: 1.0, angle: 0.0, pivot: Point::ORIGIN, anchor: Point::ORIGIN }
    }

    pub fn translation(dx: f64, dy: f64) -> Self {
        Self { scale: 1.0, angle: 0.0, pivot: Point::ORIGIN, anchor: Point::new(dx, dy) }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(GeometryError::NonPositiveScale(self.scale));
        }
        if !self.angle.is_finite() || !self.pivot.is_finite() || !self.anchor.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        Ok(())
    }

    pub fn apply(&self, p: Point) -> Point {
        rotate(p - self.pivot, self.angle) * self.scale + self.anchor
    }

    pub fn apply_all(&self, pts: &[Point]) -> Vec<Point> {
        pts.iter().map(|&p| self.apply(p)).collect()
    }

    /// Exact inverse; swaps pivot and anchor.
    pub fn inverse(&self) -> Self {
        Self {
            scale: 1.0 / self.scale,
            angle: -self.angle,
            pivot: self.anchor,
            anchor: self.pivot,
        }
    }

    /// Row-major linear part `[[a, b], [c, d]]`.
    pub fn linear(&self) -> [[f64; 2]; 2] {
        let (s, c) = self.angle.sin_cos();
        [[self.scale * c, -self.scale * s], [self.scale * s, self.scale * c]]
    }

    pub fn determinant(&self) -> f64 {
        let [[a, b], [c, d]] = self.linear();
        a * d - b * c
    }

    /// The `t` of the equivalent `p ↦ L p + t` form.
    pub fn offset(&self) -> Point {
        self.anchor - rotate(self.pivot, self.angle) * self.scale
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}
