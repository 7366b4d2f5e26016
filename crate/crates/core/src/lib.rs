//! Landmark detection, angle-minimization rigid registration and follow-up
//! blending for scoliosis back-topography and radiograph images.
//!
//! The pipeline for one pair of diagnoses:
//!
//! 1. detect C7, both PSIS and IC ([`landmarks`]),
//! 2. estimate the C7-pinned rigid transform ([`registration::estimate_rigid`]),
//! 3. resample the source into the target frame ([`image::resample_nearest_into`]),
//! 4. blend ([`compositing::alpha_blend`]).
//!
//! [`store`] persists patients, exams and cached landmarks on disk and
//! [`synth`] generates deterministic fixture stores with ground truth.

// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod compositing;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod image;
pub mod landmarks;
pub mod registration;
pub mod segmentation;
pub mod store;
pub mod synth;

pub use error::{CompositeError, DetectionError, DetectionErrorKind, GeometryError, ImageError, RegistrationError, Stage};
pub use exec::Execution;
pub use geometry::{Point, RigidTransform};
pub use image::{PixelFormat, RasterImage};
pub use landmarks::{DetectionConfig, LandmarkSet};
pub use registration::{Method, RegistrationReport};
