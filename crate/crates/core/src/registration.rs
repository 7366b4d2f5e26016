//! Landmark-based rigid registration of two diagnoses.
//!
//! The angle-minimization estimator works in three moves, all about the
//! source C7:
//!
//! 1. **Rescale** by the ratio of trunk lengths (C7 to the PSIS midpoint).
//! 2. **Rotate** so that the angular bisector of the source PSIS pair, seen
//!    from C7, coincides with the target's. This equalizes the angular
//!    error at both PSIS and minimizes the larger of the two.
//! 3. **Translate** source C7 onto target C7.
//!
//! The result is a [`RigidTransform`] with pivot = source C7 and anchor =
//! target C7. The spine curve never enters the estimate.
//!
//! Angles are signed, measured with the two-argument arctangent on raw
//! image coordinates, and wrapped into `(-π, π]` after every difference.
//! The published rotation formulas divide dot products by a distance
//! rather than a norm product and so do not yield angles; the signed-angle
//! form here reproduces the intended geometry.
//!
//! A least-squares similarity estimator ([`estimate_similarity_lsq`]) is
//! provided as the comparison baseline. It aligns all landmarks at once and
//! therefore tends to distort the back relative to the C7-pinned estimate.

use serde::{Deserialize, Serialize};

use crate::error::RegistrationError;
use crate::exec::{self, Execution};
use crate::geometry::{normalize_angle, Point, RigidTransform};
use crate::landmarks::LandmarkSet;

/// PSIS pairs subtending less than this at C7 are rejected as degenerate.
pub const MIN_PSIS_ANGLE: f64 = 1e-6;

/// Midpoint of the two PSIS landmarks.
pub fn psis_midpoint(left: Point, right: Point) -> Point {
    Point::new((left.x + right.x) / 2.0, (left.y + right.y) / 2.0)
}

/// Trunk length: distance from C7 to the PSIS midpoint.
pub fn trunk_length(c7: Point, mid: Point) -> f64 {
    c7.distance(mid)
}

/// Rescale factor `d_t / d_s` that brings the source trunk length onto the
/// target's.
pub fn scale_factor(d_s: f64, d_t: f64) -> Result<f64, RegistrationError> {
    if !(d_s > 0.0) || !d_s.is_finite() {
        return Err(RegistrationError::DegenerateLandmarks(format!("source trunk length is {d_s}")));
    }
    if !(d_t > 0.0) || !d_t.is_finite() {
        return Err(RegistrationError::DegenerateLandmarks(format!("target trunk length is {d_t}")));
    }
    Ok(d_t / d_s)
}

/// PSIS positions relative to C7.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CenteredPsis {
    pub left: Point,
    pub right: Point,
}

pub fn center_at_c7(set: &LandmarkSet) -> CenteredPsis {
    CenteredPsis { left: set.psis_left - set.c7, right: set.psis_right - set.c7 }
}

/// Signed angle of `v` from the unit vector `(1, 0)`, in `(-π, π]`.
pub fn signed_angle(v: Point) -> Result<f64, RegistrationError> {
    if v.x == 0.0 && v.y == 0.0 {
        return Err(RegistrationError::ZeroVector);
    }
    Ok(normalize_angle(v.y.atan2(v.x)))
}

/// Signed angle that turns `from` onto `to`, in `(-π, π]`.
pub fn angle_between(from: Point, to: Point) -> Result<f64, RegistrationError> {
    if from == Point::ORIGIN || to == Point::ORIGIN {
        return Err(RegistrationError::ZeroVector);
    }
    Ok(normalize_angle(from.cross(to).atan2(from.dot(to))))
}

/// Intermediate angles of the rotation estimate. `A`, `B` are the target
/// left/right PSIS relative to target C7; `C`, `D` the source ones.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleDecomposition {
    /// Direction of `A`.
    pub theta_a: f64,
    /// Direction of `C`.
    pub theta_c: f64,
    /// `theta_a − theta_c`: the rotation taking `C` onto `A`.
    pub theta_d: f64,
    /// Opening of the target PSIS pair, measured from `B` to `A`.
    pub theta_ab: f64,
    /// Opening of the source PSIS pair, measured from `D` to `C`.
    pub theta_cd: f64,
    /// `theta_d − (theta_ab − theta_cd) / 2`.
    pub theta: f64,
}

/// Closed-form bisector-aligning rotation for centered PSIS vectors.
pub fn compute_rotation_angle(a: Point, b: Point, c: Point, d: Point) -> Result<AngleDecomposition, RegistrationError> {
    let theta_a = signed_angle(a)?;
    let theta_c = signed_angle(c)?;
    let theta_d = normalize_angle(theta_a - theta_c);
    let theta_ab = angle_between(b, a)?;
    let theta_cd = angle_between(d, c)?;
    // halve the wrapped difference so the min-max branch is selected
    let theta = normalize_angle(theta_d - normalize_angle(theta_ab - theta_cd) / 2.0);
    Ok(AngleDecomposition { theta_a, theta_c, theta_d, theta_ab, theta_cd, theta })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// C7-pinned angle minimization.
    Angle,
    /// Least-squares similarity over all four landmarks.
    Lsq,
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "angle" => Ok(Method::Angle),
            "lsq" => Ok(Method::Lsq),
            other => Err(format!("unknown registration method `{other}` (expected `angle` or `lsq`)")),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Angle => "angle",
            Method::Lsq => "lsq",
        })
    }
}

/// How well a transform maps source landmarks onto target landmarks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// Sum of the distances between mapped source PSIS and target PSIS.
    pub psis_distance_sum: f64,
    /// Signed angles at target C7 from each target PSIS to the matching
    /// mapped source PSIS, `(left, right)`.
    pub angular_errors: (f64, f64),
    pub c7_error: f64,
}

pub fn registration_residuals(source: &LandmarkSet, target: &LandmarkSet, t: &RigidTransform) -> Residuals {
    let l = t.apply(source.psis_left);
    let r = t.apply(source.psis_right);
    let c7 = target.c7;
    let err = |mapped: Point, want: Point| angle_between(want - c7, mapped - c7).unwrap_or(0.0);
    Residuals {
        psis_distance_sum: l.distance(target.psis_left) + r.distance(target.psis_right),
        angular_errors: (err(l, target.psis_left), err(r, target.psis_right)),
        c7_error: t.apply(source.c7).distance(c7),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegistrationReport {
    pub method: Method,
    pub transform: RigidTransform,
    /// Present for [`Method::Angle`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decomposition: Option<AngleDecomposition>,
    /// Absolute angular error at target C7 for the left PSIS, radians.
    pub residual_left: f64,
    pub residual_right: f64,
    pub psis_distance_sum: f64,
    pub c7_error: f64,
}

impl RegistrationReport {
    fn new(method: Method, transform: RigidTransform, decomposition: Option<AngleDecomposition>, res: Residuals) -> Self {
        Self {
            method,
            transform,
            decomposition,
            residual_left: res.angular_errors.0.abs(),
            residual_right: res.angular_errors.1.abs(),
            psis_distance_sum: res.psis_distance_sum,
            c7_error: res.c7_error,
        }
    }
}

fn check_psis_opening(psis: CenteredPsis, which: &str) -> Result<(), RegistrationError> {
    if psis.left == Point::ORIGIN || psis.right == Point::ORIGIN {
        return Err(RegistrationError::DegenerateLandmarks(format!("{which} PSIS coincides with C7")));
    }
    let opening = angle_between(psis.left, psis.right)?.abs();
    if opening < MIN_PSIS_ANGLE {
        return Err(RegistrationError::DegenerateLandmarks(format!(
            "{which} PSIS pair subtends {opening:.3e} rad at C7"
        )));
    }
    Ok(())
}

/// Angle-minimization estimate mapping `source` onto `target`.
pub fn estimate_rigid(source: &LandmarkSet, target: &LandmarkSet) -> Result<RegistrationReport, RegistrationError> {
    let d_s = trunk_length(source.c7, psis_midpoint(source.psis_left, source.psis_right));
    let d_t = trunk_length(target.c7, psis_midpoint(target.psis_left, target.psis_right));
    let scale = scale_factor(d_s, d_t)?;

    let tgt = center_at_c7(target);
    let src = center_at_c7(source);
    check_psis_opening(tgt, "target")?;
    check_psis_opening(src, "source")?;

    let decomposition = compute_rotation_angle(tgt.left, tgt.right, src.left, src.right)?;
    let transform = RigidTransform::new(scale, decomposition.theta, source.c7, target.c7)?;
    let res = registration_residuals(source, target, &transform);
    Ok(RegistrationReport::new(Method::Angle, transform, Some(decomposition), res))
}

/// Least-squares similarity `q ≈ s·R(θ)·p + t` over the linear parameters
/// `(s·cosθ, s·sinθ, t_x, t_y)`. The returned transform pivots on the source
/// centroid and anchors on the target centroid.
pub fn estimate_similarity_lsq(pairs: &[(Point, Point)]) -> Result<RigidTransform, RegistrationError> {
    if pairs.len() < 2 {
        return Err(RegistrationError::TooFewPairs(pairs.len()));
    }
    let n = pairs.len() as f64;
    let (sp, sq) = pairs.iter().fold((Point::ORIGIN, Point::ORIGIN), |(a, b), &(p, q)| (a + p, b + q));
    let (mp, mq) = (sp * (1.0 / n), sq * (1.0 / n));
    let (mut dot, mut cross, mut norm) = (0.0, 0.0, 0.0);
    for &(p, q) in pairs {
        let (p, q) = (p - mp, q - mq);
        dot += p.dot(q);
        cross += p.cross(q);
        norm += p.dot(p);
    }
    if norm <= f64::EPSILON * (1.0 + mp.dot(mp)) {
        return Err(RegistrationError::RankDeficient);
    }
    let (a, b) = (dot / norm, cross / norm);
    let scale = a.hypot(b);
    if !(scale > 0.0) {
        return Err(RegistrationError::DegenerateLandmarks("target points coincide".into()));
    }
    Ok(RigidTransform::new(scale, b.atan2(a), mp, mq)?)
}

/// C7, both PSIS and IC as correspondences.
pub fn landmark_pairs(source: &LandmarkSet, target: &LandmarkSet) -> Vec<(Point, Point)> {
    vec![
        (source.c7, target.c7),
        (source.psis_left, target.psis_left),
        (source.psis_right, target.psis_right),
        (source.ic, target.ic),
    ]
}

/// Least-squares similarity baseline over the four landmark pairs.
pub fn estimate_lsq(source: &LandmarkSet, target: &LandmarkSet) -> Result<RegistrationReport, RegistrationError> {
    let transform = estimate_similarity_lsq(&landmark_pairs(source, target))?;
    let res = registration_residuals(source, target, &transform);
    Ok(RegistrationReport::new(Method::Lsq, transform, None, res))
}

pub fn estimate(source: &LandmarkSet, target: &LandmarkSet, method: Method) -> Result<RegistrationReport, RegistrationError> {
    match method {
        Method::Angle => estimate_rigid(source, target),
        Method::Lsq => estimate_lsq(source, target),
    }
}

pub fn apply_to_points(t: &RigidTransform, pts: &[Point]) -> Vec<Point> {
    t.apply_all(pts)
}

/// Registers many `(source, target)` pairs.
pub fn estimate_batch(
    pairs: &[(LandmarkSet, LandmarkSet)],
    method: Method,
    exec: Execution,
) -> Vec<Result<RegistrationReport, RegistrationError>> {
    exec::map(exec, pairs, |(s, t)| estimate(s, t, method))
}
