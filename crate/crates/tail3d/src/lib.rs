//! Evaluation toolkit for long-tailed 3D object detection.
//!
//! The crate covers the full loop around a detector: loading detections and
//! ground truth, distance-threshold matching with hierarchy-aware partial
//! credit, average-precision reports with cardinality buckets, per-superclass
//! confusion matrices, late fusion of LiDAR and RGB detections, within-class
//! NMS, and a seeded synthetic scene generator for end-to-end checks.
//!
//! Core math is generic over the scalar type through [`Scalar`] so the same
//! routines run in `f32` or `f64`. The crate root exports `f64` aliases,
//! which is what the file formats and the CLI use.

pub mod fusion;
pub mod geometry;
pub mod hierarchy;
pub mod io;
pub mod matching;
pub mod metrics;
mod scalar;

pub use scalar::Scalar;

pub use hierarchy::{Bucket, CardinalityBuckets, ClassHierarchy, HierarchyError};

/// 3D box over `f64`.
pub type Box3D = geometry::Box3D<f64>;
/// Axis-aligned image rectangle over `f64`.
pub type Rect2D = geometry::Rect2D<f64>;
/// Camera model over `f64`.
pub type CameraCalibration = geometry::CameraCalibration<f64>;
/// 3D detection over `f64`.
pub type Detection3D = matching::Detection3D<f64>;
/// Ground-truth box over `f64`.
pub type GroundTruth3D = matching::GroundTruth3D<f64>;
/// Match verdict over `f64`.
pub type MatchVerdict = matching::MatchVerdict<f64>;
/// Precision-recall curve over `f64`.
pub type PRCurve = metrics::PRCurve<f64>;
/// AP report over `f64`.
pub type APReport = metrics::APReport<f64>;
/// Evaluation configuration over `f64`.
pub type EvalConfig = metrics::EvalConfig<f64>;
/// Confusion matrix over `f64`.
pub type ConfusionMatrix = metrics::ConfusionMatrix<f64>;
/// 2D image-space detection over `f64`.
pub type Detection2D = fusion::Detection2D<f64>;
/// Fusion configuration over `f64`.
pub type FusionConfig = fusion::FusionConfig<f64>;
