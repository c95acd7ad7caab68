//! Boxes, rectangles, camera models and the spatial predicates built on them.
//!
//! Distances live on the ground plane: the evaluation protocol compares box
//! centers by their x/y offset only, so a tall box and a flat box at the same
//! spot are "the same place". BEV IoU uses the yaw-rotated footprint.

mod clip;
mod nms;

pub use nms::within_class_nms;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("invalid rectangle: {0}")]
    InvalidRect(String),
    #[error("invalid calibration for camera `{camera_id}`: {reason}")]
    InvalidCalibration { camera_id: String, reason: String },
    #[error("NMS input mixes classes `{expected}` and `{found}`")]
    MixedClasses { expected: String, found: String },
    #[error("invalid NMS threshold: {0}")]
    InvalidThreshold(String),
}

/// Oriented 3D box: center, size (length, width, height) and yaw around the
/// vertical axis. Yaw is stored normalized to the half-open interval
/// (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box3D<S: Scalar> {
    center: [S; 3],
    size: [S; 3],
    yaw: S,
}

impl<S: Scalar> Box3D<S> {
    pub fn new(center: [S; 3], size: [S; 3], yaw: S) -> Result<Self, GeometryError> {
        for c in center {
            if !c.is_finite() {
                return Err(GeometryError::InvalidBox(format!(
                    "non-finite center component {c}"
                )));
            }
        }
        for s in size {
            if !s.is_finite() || s <= S::zero() {
                return Err(GeometryError::InvalidBox(format!(
                    "size components must be positive and finite, got {s}"
                )));
            }
        }
        if !yaw.is_finite() {
            return Err(GeometryError::InvalidBox(format!("non-finite yaw {yaw}")));
        }
        Ok(Self {
            center,
            size,
            yaw: normalize_yaw(yaw),
        })
    }

    pub fn center(&self) -> [S; 3] {
        self.center
    }

    /// (length, width, height); length runs along the heading.
    pub fn size(&self) -> [S; 3] {
        self.size
    }

    pub fn yaw(&self) -> S {
        self.yaw
    }

    /// Footprint corners in the ground plane, counter-clockwise.
    pub fn bev_corners(&self) -> [[S; 2]; 4] {
        let half = S::from_f64_lossy(0.5);
        let hl = self.size[0] * half;
        let hw = self.size[1] * half;
        let (sin, cos) = self.yaw.sin_cos();
        let rot = |x: S, y: S| {
            [
                self.center[0] + x * cos - y * sin,
                self.center[1] + x * sin + y * cos,
            ]
        };
        [rot(hl, hw), rot(-hl, hw), rot(-hl, -hw), rot(hl, -hw)]
    }

    /// All eight corners in world coordinates.
    pub fn corners(&self) -> [[S; 3]; 8] {
        let half = S::from_f64_lossy(0.5);
        let hl = self.size[0] * half;
        let hw = self.size[1] * half;
        let hh = self.size[2] * half;
        let (sin, cos) = self.yaw.sin_cos();
        let mut out = [[S::zero(); 3]; 8];
        let mut i = 0;
        for sx in [S::one(), -S::one()] {
            for sy in [S::one(), -S::one()] {
                for sz in [S::one(), -S::one()] {
                    let x = sx * hl;
                    let y = sy * hw;
                    out[i] = [
                        self.center[0] + x * cos - y * sin,
                        self.center[1] + x * sin + y * cos,
                        self.center[2] + sz * hh,
                    ];
                    i += 1;
                }
            }
        }
        out
    }

    pub fn bev_area(&self) -> S {
        self.size[0] * self.size[1]
    }
}

fn normalize_yaw<S: Scalar>(yaw: S) -> S {
    let tau = S::TAU();
    let pi = S::PI();
    let mut y = yaw % tau;
    if y > pi {
        y = y - tau;
    } else if y <= -pi {
        y = y + tau;
    }
    y
}

/// Axis-aligned rectangle in image coordinates. Zero-area rectangles are
/// representable; IoU treats them as empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect2D<S: Scalar> {
    min: [S; 2],
    max: [S; 2],
}

impl<S: Scalar> Rect2D<S> {
    pub fn new(min: [S; 2], max: [S; 2]) -> Result<Self, GeometryError> {
        for v in min.iter().chain(max.iter()) {
            if !v.is_finite() {
                return Err(GeometryError::InvalidRect(format!(
                    "non-finite coordinate {v}"
                )));
            }
        }
        if min[0] > max[0] || min[1] > max[1] {
            return Err(GeometryError::InvalidRect(format!(
                "min corner ({}, {}) exceeds max corner ({}, {})",
                min[0], min[1], max[0], max[1]
            )));
        }
        Ok(Self { min, max })
    }

    pub fn min(&self) -> [S; 2] {
        self.min
    }

    pub fn max(&self) -> [S; 2] {
        self.max
    }

    pub fn width(&self) -> S {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> S {
        self.max[1] - self.min[1]
    }

    pub fn area(&self) -> S {
        self.width() * self.height()
    }
}

/// Pinhole camera: row-major intrinsics, world-to-camera rotation and
/// translation, and the image bounds detections get clipped to.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraCalibration<S: Scalar> {
    pub camera_id: String,
    intrinsics: [[S; 3]; 3],
    rotation: [[S; 3]; 3],
    translation: [S; 3],
    image_width: u32,
    image_height: u32,
}

const ROTATION_TOLERANCE: f64 = 1e-6;

impl<S: Scalar> CameraCalibration<S> {
    pub fn new(
        camera_id: impl Into<String>,
        intrinsics: [[S; 3]; 3],
        rotation: [[S; 3]; 3],
        translation: [S; 3],
        image_width: u32,
        image_height: u32,
    ) -> Result<Self, GeometryError> {
        let camera_id = camera_id.into();
        let fail = |reason: String| GeometryError::InvalidCalibration {
            camera_id: camera_id.clone(),
            reason,
        };

        for row in intrinsics.iter().chain(rotation.iter()) {
            for v in row {
                if !v.is_finite() {
                    return Err(fail(format!("non-finite matrix entry {v}")));
                }
            }
        }
        for v in translation {
            if !v.is_finite() {
                return Err(fail(format!("non-finite translation component {v}")));
            }
        }
        if intrinsics[0][0] <= S::zero() || intrinsics[1][1] <= S::zero() {
            return Err(fail("focal lengths must be positive".to_string()));
        }
        if image_width == 0 || image_height == 0 {
            return Err(fail("image dimensions must be positive".to_string()));
        }

        let tol = S::from_f64_lossy(ROTATION_TOLERANCE);
        // R * R^T must be the identity.
        for i in 0..3 {
            for j in 0..3 {
                let mut dot = S::zero();
                for k in 0..3 {
                    dot = dot + rotation[i][k] * rotation[j][k];
                }
                let expected = if i == j { S::one() } else { S::zero() };
                if (dot - expected).abs() > tol {
                    return Err(fail("rotation is not orthonormal".to_string()));
                }
            }
        }
        let det = det3(&rotation);
        if (det - S::one()).abs() > tol {
            return Err(fail(format!(
                "rotation determinant is {det}, expected +1"
            )));
        }

        Ok(Self {
            camera_id,
            intrinsics,
            rotation,
            translation,
            image_width,
            image_height,
        })
    }

    pub fn intrinsics(&self) -> &[[S; 3]; 3] {
        &self.intrinsics
    }

    pub fn rotation(&self) -> &[[S; 3]; 3] {
        &self.rotation
    }

    pub fn translation(&self) -> [S; 3] {
        self.translation
    }

    pub fn image_width(&self) -> u32 {
        self.image_width
    }

    pub fn image_height(&self) -> u32 {
        self.image_height
    }

    /// World point to camera coordinates.
    pub fn world_to_camera(&self, p: [S; 3]) -> [S; 3] {
        let mut out = [S::zero(); 3];
        for (i, item) in out.iter_mut().enumerate() {
            *item = self.rotation[i][0] * p[0]
                + self.rotation[i][1] * p[1]
                + self.rotation[i][2] * p[2]
                + self.translation[i];
        }
        out
    }

    /// Camera point to pixel coordinates. The caller checks depth.
    pub fn camera_to_pixel(&self, p: [S; 3]) -> [S; 2] {
        let k = &self.intrinsics;
        let u = k[0][0] * p[0] + k[0][1] * p[1] + k[0][2] * p[2];
        let v = k[1][0] * p[0] + k[1][1] * p[1] + k[1][2] * p[2];
        let w = k[2][0] * p[0] + k[2][1] * p[1] + k[2][2] * p[2];
        [u / w, v / w]
    }
}

/// Calibration for one camera in one frame, as stored in calibration files.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRecord<S: Scalar> {
    pub frame_id: String,
    pub camera: CameraCalibration<S>,
}

fn det3<S: Scalar>(m: &[[S; 3]; 3]) -> S {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Center distance in the ground plane (x/y only).
pub fn ground_distance<S: Scalar>(a: &Box3D<S>, b: &Box3D<S>) -> S {
    let dx = a.center[0] - b.center[0];
    let dy = a.center[1] - b.center[1];
    (dx * dx + dy * dy).sqrt()
}

/// Intersection areas below this many square meters count as no overlap.
pub const BEV_AREA_EPSILON: f64 = 1e-9;

/// IoU of the yaw-rotated ground-plane footprints.
pub fn bev_iou<S: Scalar>(a: &Box3D<S>, b: &Box3D<S>) -> S {
    let ca = a.bev_corners();
    let cb = b.bev_corners();
    let inter_poly = clip::convex_clip(&ca, &cb);
    let inter = clip::polygon_area(&inter_poly);
    if inter < S::from_f64_lossy(BEV_AREA_EPSILON) {
        return S::zero();
    }
    let union = a.bev_area() + b.bev_area() - inter;
    (inter / union).max(S::zero()).min(S::one())
}

/// IoU of two axis-aligned rectangles. Zero-area inputs yield 0.
pub fn rect_iou<S: Scalar>(a: &Rect2D<S>, b: &Rect2D<S>) -> S {
    let area_a = a.area();
    let area_b = b.area();
    if area_a == S::zero() || area_b == S::zero() {
        return S::zero();
    }
    let ix = (a.max[0].min(b.max[0]) - a.min[0].max(b.min[0])).max(S::zero());
    let iy = (a.max[1].min(b.max[1]) - a.min[1].max(b.min[1])).max(S::zero());
    let inter = ix * iy;
    if inter == S::zero() {
        return S::zero();
    }
    inter / (area_a + area_b - inter)
}

/// Projects a box into a camera as the axis-aligned hull of its visible
/// corners, clipped to the image. Returns `None` when every corner sits at
/// or behind the camera plane, or when the clipped hull has zero area.
pub fn project_box<S: Scalar>(b: &Box3D<S>, cal: &CameraCalibration<S>) -> Option<Rect2D<S>> {
    let mut min = [S::infinity(); 2];
    let mut max = [S::neg_infinity(); 2];
    let mut visible = 0u8;
    for corner in b.corners() {
        let cam = cal.world_to_camera(corner);
        if cam[2] <= S::zero() {
            continue;
        }
        visible += 1;
        let [u, v] = cal.camera_to_pixel(cam);
        min[0] = min[0].min(u);
        min[1] = min[1].min(v);
        max[0] = max[0].max(u);
        max[1] = max[1].max(v);
    }
    if visible == 0 {
        return None;
    }
    let w = S::from_u32(cal.image_width).expect("image width fits scalar");
    let h = S::from_u32(cal.image_height).expect("image height fits scalar");
    let cmin = [min[0].max(S::zero()).min(w), min[1].max(S::zero()).min(h)];
    let cmax = [max[0].max(S::zero()).min(w), max[1].max(S::zero()).min(h)];
    if cmax[0] - cmin[0] <= S::zero() || cmax[1] - cmin[1] <= S::zero() {
        return None;
    }
    Some(Rect2D {
        min: cmin,
        max: cmax,
    })
}

/// How NMS decides that two detections are duplicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NmsMode {
    /// Suppress when ground-plane center distance is below the threshold.
    CenterDistance,
    /// Suppress when BEV IoU is above the threshold.
    BevIou,
}

impl std::fmt::Display for NmsMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NmsMode::CenterDistance => write!(f, "center-distance"),
            NmsMode::BevIou => write!(f, "bev-iou"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn boxy(center: [f64; 3], size: [f64; 3], yaw: f64) -> Box3D<f64> {
        Box3D::new(center, size, yaw).unwrap()
    }

    #[test]
    fn yaw_is_normalized() {
        let b = boxy([0.0; 3], [1.0; 3], 3.0 * std::f64::consts::PI / 2.0);
        assert!((b.yaw() + std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        // -pi maps to the closed end +pi.
        let b = boxy([0.0; 3], [1.0; 3], -std::f64::consts::PI);
        assert!((b.yaw() - std::f64::consts::PI).abs() < 1e-12);
        let b = boxy([0.0; 3], [1.0; 3], 7.0 * std::f64::consts::PI);
        assert!((b.yaw() - std::f64::consts::PI).abs() < 1e-9);
        let b = boxy([0.0; 3], [1.0; 3], 0.25);
        assert_eq!(b.yaw(), 0.25);
    }

    #[test]
    fn bad_boxes_rejected() {
        assert!(Box3D::new([0.0; 3], [1.0, 0.0, 1.0], 0.0).is_err());
        assert!(Box3D::new([0.0; 3], [1.0, -2.0, 1.0], 0.0).is_err());
        assert!(Box3D::new([f64::NAN, 0.0, 0.0], [1.0; 3], 0.0).is_err());
        assert!(Box3D::new([0.0; 3], [1.0; 3], f64::INFINITY).is_err());
    }

    #[test]
    fn ground_distance_ignores_height() {
        let a = boxy([0.0, 0.0, 0.0], [1.0; 3], 0.0);
        let b = boxy([3.0, 4.0, 10.0], [1.0; 3], 0.0);
        assert_eq!(ground_distance(&a, &b), 5.0);
        assert_eq!(ground_distance(&a, &a), 0.0);
    }

    #[test]
    fn bev_iou_cases() {
        let a = boxy([0.0, 0.0, 0.0], [1.0, 1.0, 1.0], 0.0);
        assert!((bev_iou(&a, &a) - 1.0).abs() < 1e-9);

        let b = boxy([0.5, 0.0, 0.0], [1.0, 1.0, 1.0], 0.0);
        assert!((bev_iou(&a, &b) - 1.0 / 3.0).abs() < 1e-12);

        let c = boxy([100.0, 0.0, 0.0], [1.0, 1.0, 1.0], 0.0);
        assert_eq!(bev_iou(&a, &c), 0.0);
    }

    #[test]
    fn bev_iou_handles_rotation() {
        // A long thin box crossing another at right angles: overlap is the
        // 1x1 square where they cross.
        let a = boxy([0.0, 0.0, 0.0], [10.0, 1.0, 1.0], 0.0);
        let b = boxy([0.0, 0.0, 0.0], [10.0, 1.0, 1.0], std::f64::consts::FRAC_PI_2);
        let expected = 1.0 / (10.0 + 10.0 - 1.0);
        assert!((bev_iou(&a, &b) - expected).abs() < 1e-9);
    }

    #[test]
    fn rect_iou_cases() {
        let a: Rect2D<f64> = Rect2D::new([0.0, 0.0], [1.0, 1.0]).unwrap();
        assert_eq!(rect_iou(&a, &a), 1.0);

        let b = Rect2D::new([0.5, 0.0], [1.5, 1.0]).unwrap();
        assert!((rect_iou(&a, &b) - 1.0 / 3.0).abs() < 1e-12);

        let zero = Rect2D::new([0.5, 0.5], [0.5, 0.9]).unwrap();
        assert_eq!(rect_iou(&a, &zero), 0.0);

        let far = Rect2D::new([10.0, 10.0], [11.0, 11.0]).unwrap();
        assert_eq!(rect_iou(&a, &far), 0.0);
    }

    #[test]
    fn rect_rejects_inverted_corners() {
        assert!(Rect2D::new([1.0, 0.0], [0.0, 1.0]).is_err());
        assert!(Rect2D::new([0.0, f64::NAN], [1.0, 1.0]).is_err());
    }

    fn identity_cal() -> CameraCalibration<f64> {
        CameraCalibration::new(
            "cam",
            [[100.0, 0.0, 320.0], [0.0, 100.0, 240.0], [0.0, 0.0, 1.0]],
            [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            [0.0, 0.0, 0.0],
            640,
            480,
        )
        .unwrap()
    }

    #[test]
    fn calibration_validation() {
        let k = [[100.0, 0.0, 320.0], [0.0, 100.0, 240.0], [0.0, 0.0, 1.0]];
        let eye = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        // Not orthonormal.
        let bad = [[1.0, 0.2, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(CameraCalibration::new("c", k, bad, [0.0; 3], 640, 480).is_err());
        // Orthonormal but a reflection (det -1).
        let refl = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]];
        assert!(CameraCalibration::new("c", k, refl, [0.0; 3], 640, 480).is_err());
        // Non-positive focal length.
        let bad_k = [[-100.0, 0.0, 320.0], [0.0, 100.0, 240.0], [0.0, 0.0, 1.0]];
        assert!(CameraCalibration::new("c", bad_k, eye, [0.0; 3], 640, 480).is_err());
        // Empty image.
        assert!(CameraCalibration::new("c", k, eye, [0.0; 3], 0, 480).is_err());
    }

    #[test]
    fn project_centered_box() {
        let cal = identity_cal();
        let b = boxy([0.0, 0.0, 10.0], [2.0, 2.0, 2.0], 0.0);
        let rect = project_box(&b, &cal).unwrap();
        // Nearest face sits at depth 9, so the widest extent is 100 * 1 / 9.
        let spread = 100.0 / 9.0;
        assert!((rect.min()[0] - (320.0 - spread)).abs() < 1e-9);
        assert!((rect.max()[0] - (320.0 + spread)).abs() < 1e-9);
        assert!((rect.min()[1] - (240.0 - spread)).abs() < 1e-9);
        assert!((rect.max()[1] - (240.0 + spread)).abs() < 1e-9);
    }

    #[test]
    fn project_behind_camera_is_absent() {
        let cal = identity_cal();
        let b = boxy([0.0, 0.0, -10.0], [2.0, 2.0, 2.0], 0.0);
        assert!(project_box(&b, &cal).is_none());
    }

    #[test]
    fn project_straddling_uses_visible_corners() {
        let cal = identity_cal();
        let b = boxy([0.0, 0.0, 0.5], [2.0, 2.0, 2.0], 0.0);
        let rect = project_box(&b, &cal).unwrap();
        assert!(rect.min()[0] >= 0.0 && rect.max()[0] <= 640.0);
        assert!(rect.area() > 0.0);
    }

    #[test]
    fn project_outside_image_is_absent() {
        let cal = identity_cal();
        let b = boxy([1000.0, 0.0, 1.0], [2.0, 2.0, 2.0], 0.0);
        assert!(project_box(&b, &cal).is_none());
    }
}
