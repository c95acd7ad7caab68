//! Late fusion of LiDAR detections with RGB-based detections.
//!
//! Three post-hoc moves, all pure per-frame transforms: drop LiDAR
//! detections nothing in the RGB set corroborates (filtering), nudge scores
//! by whether the box projects onto a matching image-space detection
//! (rescoring), and fold auxiliary objectness/coarse confidences into the
//! fine score (score combination).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{ground_distance, project_box, rect_iou, CalibrationRecord, Rect2D};
use crate::matching::Detection3D;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("invalid fusion config: {0}")]
    InvalidConfig(String),
    #[error("no calibration for camera `{camera_id}` in frame `{frame_id}`")]
    MissingCalibration { frame_id: String, camera_id: String },
    #[error("detection {id} is missing the {field} needed by this combination mode")]
    MissingAuxScore { id: u64, field: &'static str },
}

/// Image-space detection from an RGB detector.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection2D<S: Scalar> {
    pub camera_id: String,
    pub frame_id: String,
    pub class_name: String,
    pub rect: Rect2D<S>,
    pub score: S,
}

/// When a projected box counts as overlapping a 2D detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OverlapRule {
    /// Any positive IoU. Admits single-pixel coincidences.
    AnyOverlap,
    /// IoU at or above `rescore_iou_floor`.
    #[default]
    IouFloor,
}

impl std::fmt::Display for OverlapRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OverlapRule::AnyOverlap => write!(f, "any-overlap"),
            OverlapRule::IouFloor => write!(f, "iou-floor"),
        }
    }
}

/// Which per-class confidences multiply into the final score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreCombination {
    /// Keep the fine-class score.
    #[default]
    FineOnly,
    /// objectness x fine.
    ObjectTimesFine,
    /// coarse x fine.
    CoarseTimesFine,
    /// objectness x coarse x fine.
    ObjectTimesCoarseTimesFine,
}

impl std::fmt::Display for ScoreCombination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScoreCombination::FineOnly => write!(f, "fine-only"),
            ScoreCombination::ObjectTimesFine => write!(f, "object-times-fine"),
            ScoreCombination::CoarseTimesFine => write!(f, "coarse-times-fine"),
            ScoreCombination::ObjectTimesCoarseTimesFine => {
                write!(f, "object-times-coarse-times-fine")
            }
        }
    }
}

/// Knobs for all fusion operations. Every field has a default, so a config
/// file can be `{}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig<S: Scalar> {
    /// Corroboration radius in meters for filtering.
    pub filter_radius: S,
    /// Require the corroborating RGB detection to share the fine class.
    pub filter_class_aware: bool,
    pub rescore_match_multiplier: S,
    pub rescore_nonmatch_multiplier: S,
    pub rescore_overlap_rule: OverlapRule,
    /// Used only by the iou-floor rule.
    pub rescore_iou_floor: S,
    pub score_combination: ScoreCombination,
}

impl<S: Scalar> Default for FusionConfig<S> {
    fn default() -> Self {
        Self {
            filter_radius: S::from_f64_lossy(4.0),
            filter_class_aware: true,
            rescore_match_multiplier: S::from_f64_lossy(1.25),
            rescore_nonmatch_multiplier: S::one(),
            rescore_overlap_rule: OverlapRule::IouFloor,
            rescore_iou_floor: S::from_f64_lossy(0.1),
            score_combination: ScoreCombination::FineOnly,
        }
    }
}

impl<S: Scalar> FusionConfig<S> {
    pub fn validate(&self) -> Result<(), FusionError> {
        if !self.filter_radius.is_finite() || self.filter_radius <= S::zero() {
            return Err(FusionError::InvalidConfig(format!(
                "filter_radius must be positive and finite, got {}",
                self.filter_radius
            )));
        }
        for (name, m) in [
            ("rescore_match_multiplier", self.rescore_match_multiplier),
            ("rescore_nonmatch_multiplier", self.rescore_nonmatch_multiplier),
        ] {
            if !m.is_finite() || m <= S::zero() {
                return Err(FusionError::InvalidConfig(format!(
                    "{name} must be positive and finite, got {m}"
                )));
            }
        }
        if !self.rescore_iou_floor.is_finite()
            || self.rescore_iou_floor < S::zero()
            || self.rescore_iou_floor > S::one()
        {
            return Err(FusionError::InvalidConfig(format!(
                "rescore_iou_floor must lie in [0, 1], got {}",
                self.rescore_iou_floor
            )));
        }
        Ok(())
    }
}

/// Keeps a LiDAR detection iff some RGB detection in its frame sits within
/// `filter_radius` on the ground plane (strictly), sharing the fine class
/// when `filter_class_aware` is set. Survivors pass through untouched, in
/// input order.
pub fn filter_by_rgb<S: Scalar>(
    lidar: &[Detection3D<S>],
    rgb: &[Detection3D<S>],
    cfg: &FusionConfig<S>,
) -> Result<Vec<Detection3D<S>>, FusionError> {
    cfg.validate()?;
    let mut by_frame: BTreeMap<&str, Vec<&Detection3D<S>>> = BTreeMap::new();
    for r in rgb {
        by_frame.entry(r.frame_id.as_str()).or_default().push(r);
    }
    Ok(lidar
        .iter()
        .filter(|det| {
            by_frame
                .get(det.frame_id.as_str())
                .map(|candidates| {
                    candidates.iter().any(|r| {
                        (!cfg.filter_class_aware || r.class_name == det.class_name)
                            && ground_distance(&det.bbox, &r.bbox) < cfg.filter_radius
                    })
                })
                .unwrap_or(false)
        })
        .cloned()
        .collect())
}

/// Side counts from a rescoring pass, for run logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct RescoreStats {
    pub matched: u64,
    pub unmatched: u64,
    /// Matched detections whose boosted score hit the 1.0 ceiling.
    pub clamped: u64,
}

/// Rescoring output plus its stats.
#[derive(Debug, Clone, PartialEq)]
pub struct RescoreOutcome<S: Scalar> {
    pub detections: Vec<Detection3D<S>>,
    pub stats: RescoreStats,
}

/// Multiplies each LiDAR detection's score by the match or non-match
/// multiplier and clamps to [0, 1].
///
/// A detection matches when its box, projected through any calibrated
/// camera of its frame, overlaps (per `rescore_overlap_rule`) some 2D
/// detection with the same `class_name` in that camera. Boxes whose
/// projection falls outside an image or behind the camera simply do not
/// match there. Order and boxes are preserved.
///
/// Every camera referenced by `rgb2d` must have a calibration for the
/// referencing frame.
pub fn rescore_by_rgb2d<S: Scalar>(
    lidar: &[Detection3D<S>],
    rgb2d: &[Detection2D<S>],
    cals: &[CalibrationRecord<S>],
    cfg: &FusionConfig<S>,
) -> Result<Vec<Detection3D<S>>, FusionError> {
    rescore_by_rgb2d_detailed(lidar, rgb2d, cals, cfg).map(|o| o.detections)
}

/// [`rescore_by_rgb2d`] returning match/clamp counts as well.
pub fn rescore_by_rgb2d_detailed<S: Scalar>(
    lidar: &[Detection3D<S>],
    rgb2d: &[Detection2D<S>],
    cals: &[CalibrationRecord<S>],
    cfg: &FusionConfig<S>,
) -> Result<RescoreOutcome<S>, FusionError> {
    cfg.validate()?;

    let mut cams_by_frame: BTreeMap<&str, Vec<&CalibrationRecord<S>>> = BTreeMap::new();
    let mut cal_keys: BTreeMap<(&str, &str), ()> = BTreeMap::new();
    for rec in cals {
        cams_by_frame.entry(rec.frame_id.as_str()).or_default().push(rec);
        cal_keys.insert((rec.frame_id.as_str(), rec.camera.camera_id.as_str()), ());
    }

    let mut rgb_by_cam: BTreeMap<(&str, &str), Vec<&Detection2D<S>>> = BTreeMap::new();
    for r in rgb2d {
        let key = (r.frame_id.as_str(), r.camera_id.as_str());
        if !cal_keys.contains_key(&key) {
            return Err(FusionError::MissingCalibration {
                frame_id: r.frame_id.clone(),
                camera_id: r.camera_id.clone(),
            });
        }
        rgb_by_cam.entry(key).or_default().push(r);
    }

    let overlaps = |projected: &Rect2D<S>, rect: &Rect2D<S>| -> bool {
        let iou = rect_iou(projected, rect);
        match cfg.rescore_overlap_rule {
            OverlapRule::AnyOverlap => iou > S::zero(),
            OverlapRule::IouFloor => iou >= cfg.rescore_iou_floor,
        }
    };

    let mut stats = RescoreStats::default();
    let detections = lidar
        .iter()
        .map(|det| {
            let cameras = cams_by_frame
                .get(det.frame_id.as_str())
                .map(Vec::as_slice)
                .unwrap_or(&[]);
            let matched = cameras.iter().any(|rec| {
                let Some(projected) = project_box(&det.bbox, &rec.camera) else {
                    return false;
                };
                rgb_by_cam
                    .get(&(det.frame_id.as_str(), rec.camera.camera_id.as_str()))
                    .map(|rects| {
                        rects.iter().any(|r| {
                            r.class_name == det.class_name && overlaps(&projected, &r.rect)
                        })
                    })
                    .unwrap_or(false)
            });
            let multiplier = if matched {
                stats.matched += 1;
                cfg.rescore_match_multiplier
            } else {
                stats.unmatched += 1;
                cfg.rescore_nonmatch_multiplier
            };
            let raw = det.score * multiplier;
            let score = raw.min(S::one()).max(S::zero());
            if matched && raw > S::one() {
                stats.clamped += 1;
            }
            Detection3D {
                score,
                ..det.clone()
            }
        })
        .collect();

    Ok(RescoreOutcome { detections, stats })
}

/// Filtering followed by rescoring. Filter-first is fixed: filtering is a
/// hard decision, rescoring a soft one.
pub fn filter_then_rescore<S: Scalar>(
    lidar: &[Detection3D<S>],
    rgb3d: &[Detection3D<S>],
    rgb2d: &[Detection2D<S>],
    cals: &[CalibrationRecord<S>],
    cfg: &FusionConfig<S>,
) -> Result<Vec<Detection3D<S>>, FusionError> {
    let kept = filter_by_rgb(lidar, rgb3d, cfg)?;
    rescore_by_rgb2d(&kept, rgb2d, cals, cfg)
}

/// Replaces the score with the product of factors the mode selects. The
/// fine score is the detection's own `score`; objectness and coarse factors
/// come from the optional auxiliary fields.
pub fn combine_scores<S: Scalar>(
    det: &Detection3D<S>,
    mode: ScoreCombination,
) -> Result<Detection3D<S>, FusionError> {
    let object = || {
        det.object_score.ok_or(FusionError::MissingAuxScore {
            id: det.id,
            field: "object_score",
        })
    };
    let coarse = || {
        det.coarse_score.ok_or(FusionError::MissingAuxScore {
            id: det.id,
            field: "coarse_score",
        })
    };
    let score = match mode {
        ScoreCombination::FineOnly => det.score,
        ScoreCombination::ObjectTimesFine => object()? * det.score,
        ScoreCombination::CoarseTimesFine => coarse()? * det.score,
        ScoreCombination::ObjectTimesCoarseTimesFine => object()? * coarse()? * det.score,
    };
    Ok(Detection3D {
        score,
        ..det.clone()
    })
}

/// [`combine_scores`] over a whole list.
pub fn combine_all<S: Scalar>(
    dets: &[Detection3D<S>],
    mode: ScoreCombination,
) -> Result<Vec<Detection3D<S>>, FusionError> {
    dets.iter().map(|d| combine_scores(d, mode)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Box3D, CameraCalibration};

    fn boxat(x: f64, y: f64) -> Box3D<f64> {
        Box3D::new([x, y, 0.0], [1.0, 1.0, 1.0], 0.0).unwrap()
    }

    fn det(id: u64, frame: &str, class: &str, x: f64, y: f64, score: f64) -> Detection3D<f64> {
        Detection3D {
            id,
            frame_id: frame.to_string(),
            class_name: class.to_string(),
            bbox: boxat(x, y),
            score,
            coarse_score: None,
            object_score: None,
        }
    }

    #[test]
    fn config_defaults() {
        let cfg = FusionConfig::<f64>::default();
        assert_eq!(cfg.filter_radius, 4.0);
        assert!(cfg.filter_class_aware);
        assert_eq!(cfg.rescore_match_multiplier, 1.25);
        assert_eq!(cfg.rescore_nonmatch_multiplier, 1.0);
        assert_eq!(cfg.rescore_overlap_rule, OverlapRule::IouFloor);
        assert_eq!(cfg.rescore_iou_floor, 0.1);
        assert_eq!(cfg.score_combination, ScoreCombination::FineOnly);
        assert!(cfg.validate().is_ok());

        let parsed: FusionConfig<f64> = serde_json::from_str("{}").unwrap();
        assert_eq!(parsed, cfg);
    }

    #[test]
    fn config_validation() {
        let mut cfg = FusionConfig::<f64>::default();
        cfg.filter_radius = 0.0;
        assert!(cfg.validate().is_err());
        cfg = FusionConfig::default();
        cfg.rescore_match_multiplier = -1.0;
        assert!(cfg.validate().is_err());
        cfg = FusionConfig::default();
        cfg.rescore_iou_floor = 1.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn empty_rgb_drops_everything() {
        let lidar = vec![det(0, "f0", "car", 0.0, 0.0, 0.9)];
        let out = filter_by_rgb(&lidar, &[], &FusionConfig::default()).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn corroborated_detection_survives_untouched() {
        let lidar = vec![det(0, "f0", "stroller", 0.0, 0.0, 0.7)];
        let rgb = vec![det(100, "f0", "stroller", 1.0, 0.0, 0.4)];
        let out = filter_by_rgb(&lidar, &rgb, &FusionConfig::default()).unwrap();
        assert_eq!(out, lidar);
    }

    #[test]
    fn class_aware_toggle() {
        let lidar = vec![det(0, "f0", "stroller", 0.0, 0.0, 0.7)];
        let rgb = vec![det(100, "f0", "adult", 1.0, 0.0, 0.4)];
        let mut cfg = FusionConfig::default();
        assert!(filter_by_rgb(&lidar, &rgb, &cfg).unwrap().is_empty());
        cfg.filter_class_aware = false;
        assert_eq!(filter_by_rgb(&lidar, &rgb, &cfg).unwrap(), lidar);
    }

    #[test]
    fn filter_radius_is_strict_and_frames_isolated() {
        let lidar = vec![det(0, "f0", "car", 0.0, 0.0, 0.7)];
        let at_radius = vec![det(100, "f0", "car", 4.0, 0.0, 0.4)];
        let cfg = FusionConfig::default();
        assert!(filter_by_rgb(&lidar, &at_radius, &cfg).unwrap().is_empty());
        let wrong_frame = vec![det(100, "f9", "car", 1.0, 0.0, 0.4)];
        assert!(filter_by_rgb(&lidar, &wrong_frame, &cfg).unwrap().is_empty());
    }

    #[test]
    fn filter_preserves_order_and_is_idempotent() {
        let lidar = vec![
            det(0, "f0", "car", 0.0, 0.0, 0.9),
            det(1, "f0", "car", 50.0, 0.0, 0.8),
            det(2, "f0", "car", 1.0, 1.0, 0.7),
            det(3, "f1", "car", 0.0, 0.0, 0.6),
        ];
        let rgb = vec![
            det(100, "f0", "car", 0.5, 0.0, 0.4),
            det(101, "f1", "car", 2.0, 0.0, 0.4),
        ];
        let cfg = FusionConfig::default();
        let once = filter_by_rgb(&lidar, &rgb, &cfg).unwrap();
        let ids: Vec<u64> = once.iter().map(|d| d.id).collect();
        assert_eq!(ids, vec![0, 2, 3]);
        let twice = filter_by_rgb(&once, &rgb, &cfg).unwrap();
        assert_eq!(once, twice);
    }

    // One camera at the origin looking down +z, 640x480, f = 100.
    fn cal(frame: &str, camera: &str) -> CalibrationRecord<f64> {
        let k = [[100.0, 0.0, 320.0], [0.0, 100.0, 240.0], [0.0, 0.0, 1.0]];
        let r = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        CalibrationRecord {
            frame_id: frame.to_string(),
            camera: CameraCalibration::new(camera, k, r, [0.0, 0.0, 0.0], 640, 480).unwrap(),
        }
    }

    /// Box ten meters ahead of the camera; projects near image center.
    fn visible_det(id: u64, class: &str, score: f64) -> Detection3D<f64> {
        Detection3D {
            id,
            frame_id: "f0".to_string(),
            class_name: class.to_string(),
            bbox: Box3D::new([0.0, 0.0, 10.0], [2.0, 2.0, 2.0], 0.0).unwrap(),
            score,
            coarse_score: None,
            object_score: None,
        }
    }

    fn rgb2d(camera: &str, class: &str, min: [f64; 2], max: [f64; 2]) -> Detection2D<f64> {
        Detection2D {
            camera_id: camera.to_string(),
            frame_id: "f0".to_string(),
            class_name: class.to_string(),
            rect: Rect2D::new(min, max).unwrap(),
            score: 0.5,
        }
    }

    #[test]
    fn matched_score_is_boosted() {
        let lidar = vec![visible_det(0, "car", 0.6)];
        let rgb = vec![rgb2d("cam0", "car", [300.0, 220.0], [340.0, 260.0])];
        let cals = vec![cal("f0", "cam0")];
        let out =
            rescore_by_rgb2d_detailed(&lidar, &rgb, &cals, &FusionConfig::default()).unwrap();
        assert!((out.detections[0].score - 0.75).abs() < 1e-12);
        assert_eq!(out.stats.matched, 1);
        assert_eq!(out.stats.clamped, 0);
        assert_eq!(out.detections[0].bbox, lidar[0].bbox);
    }

    #[test]
    fn unmatched_score_follows_nonmatch_multiplier() {
        // 2D detection of a different class: no match.
        let lidar = vec![visible_det(0, "car", 0.6)];
        let rgb = vec![rgb2d("cam0", "truck", [300.0, 220.0], [340.0, 260.0])];
        let cals = vec![cal("f0", "cam0")];
        let mut cfg = FusionConfig::default();
        let out = rescore_by_rgb2d(&lidar, &rgb, &cals, &cfg).unwrap();
        assert_eq!(out[0].score, 0.6);

        cfg.rescore_nonmatch_multiplier = 0.75;
        let out = rescore_by_rgb2d(&lidar, &rgb, &cals, &cfg).unwrap();
        assert!((out[0].score - 0.45).abs() < 1e-12);
    }

    #[test]
    fn boosted_score_clamps_at_one() {
        let lidar = vec![visible_det(0, "car", 0.9)];
        let rgb = vec![rgb2d("cam0", "car", [300.0, 220.0], [340.0, 260.0])];
        let cals = vec![cal("f0", "cam0")];
        let out =
            rescore_by_rgb2d_detailed(&lidar, &rgb, &cals, &FusionConfig::default()).unwrap();
        assert_eq!(out.detections[0].score, 1.0);
        assert_eq!(out.stats.clamped, 1);
    }

    #[test]
    fn behind_camera_never_matches() {
        let mut lidar = vec![visible_det(0, "car", 0.6)];
        lidar[0].bbox = Box3D::new([0.0, 0.0, -10.0], [2.0, 2.0, 2.0], 0.0).unwrap();
        let rgb = vec![rgb2d("cam0", "car", [0.0, 0.0], [640.0, 480.0])];
        let cals = vec![cal("f0", "cam0")];
        let out = rescore_by_rgb2d(&lidar, &rgb, &cals, &FusionConfig::default()).unwrap();
        assert_eq!(out[0].score, 0.6);
    }

    #[test]
    fn overlap_rule_selects_matches() {
        // The box projects to roughly [309, 331] squared; a sliver-overlap
        // rectangle passes any-overlap but not the 0.1 IoU floor.
        let lidar = vec![visible_det(0, "car", 0.6)];
        let rgb = vec![rgb2d("cam0", "car", [330.0, 229.0], [500.0, 400.0])];
        let cals = vec![cal("f0", "cam0")];
        let mut cfg = FusionConfig::default();
        let floored = rescore_by_rgb2d(&lidar, &rgb, &cals, &cfg).unwrap();
        assert_eq!(floored[0].score, 0.6);
        cfg.rescore_overlap_rule = OverlapRule::AnyOverlap;
        let any = rescore_by_rgb2d(&lidar, &rgb, &cals, &cfg).unwrap();
        assert!((any[0].score - 0.75).abs() < 1e-12);
    }

    #[test]
    fn missing_calibration_is_an_error() {
        let lidar = vec![visible_det(0, "car", 0.6)];
        let rgb = vec![rgb2d("cam9", "car", [300.0, 220.0], [340.0, 260.0])];
        let cals = vec![cal("f0", "cam0")];
        let err = rescore_by_rgb2d(&lidar, &rgb, &cals, &FusionConfig::default()).unwrap_err();
        match err {
            FusionError::MissingCalibration { frame_id, camera_id } => {
                assert_eq!(frame_id, "f0");
                assert_eq!(camera_id, "cam9");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rescoring_keeps_order_within_groups() {
        let mut lidar = vec![
            visible_det(0, "car", 0.9),
            visible_det(1, "car", 0.5),
            visible_det(2, "car", 0.3),
        ];
        // Push one detection out of view so it lands in the unmatched group.
        lidar[1].bbox = Box3D::new([100.0, 0.0, 10.0], [2.0, 2.0, 2.0], 0.0).unwrap();
        let rgb = vec![rgb2d("cam0", "car", [300.0, 220.0], [340.0, 260.0])];
        let cals = vec![cal("f0", "cam0")];
        let out = rescore_by_rgb2d(&lidar, &rgb, &cals, &FusionConfig::default()).unwrap();
        let ids: Vec<u64> = out.iter().map(|d| d.id).collect();
        assert_eq!(ids, vec![0, 1, 2]);
        // Matched group keeps 0 above 2; unmatched keeps its score.
        assert!(out[0].score > out[2].score);
        assert_eq!(out[1].score, 0.5);
    }

    #[test]
    fn fuse_is_filter_then_rescore() {
        let mut far = visible_det(1, "car", 0.8);
        far.bbox = Box3D::new([60.0, 0.0, 10.0], [2.0, 2.0, 2.0], 0.0).unwrap();
        let lidar = vec![visible_det(0, "car", 0.6), far];
        let rgb3d = vec![det(100, "f0", "car", 0.5, 0.0, 0.4)];
        let rgb = vec![rgb2d("cam0", "car", [300.0, 220.0], [340.0, 260.0])];
        let cals = vec![cal("f0", "cam0")];
        let cfg = FusionConfig::default();

        let fused = filter_then_rescore(&lidar, &rgb3d, &rgb, &cals, &cfg).unwrap();
        let kept = filter_by_rgb(&lidar, &rgb3d, &cfg).unwrap();
        let sequential = rescore_by_rgb2d(&kept, &rgb, &cals, &cfg).unwrap();
        assert_eq!(fused, sequential);
        assert_eq!(fused.len(), 1);
        assert!((fused[0].score - 0.75).abs() < 1e-12);

        assert!(filter_then_rescore(&lidar, &[], &rgb, &cals, &cfg)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn combination_variants() {
        let mut d = det(0, "f0", "car", 0.0, 0.0, 0.8);
        d.object_score = Some(0.5);
        d.coarse_score = Some(0.5);
        let cases = [
            (ScoreCombination::FineOnly, 0.8),
            (ScoreCombination::ObjectTimesFine, 0.4),
            (ScoreCombination::CoarseTimesFine, 0.4),
            (ScoreCombination::ObjectTimesCoarseTimesFine, 0.2),
        ];
        for (mode, expected) in cases {
            let out = combine_scores(&d, mode).unwrap();
            assert!(
                (out.score - expected).abs() < 1e-12,
                "{mode}: {} vs {expected}",
                out.score
            );
        }
    }

    #[test]
    fn combination_requires_aux_scores() {
        let d = det(0, "f0", "car", 0.0, 0.0, 0.8);
        assert!(combine_scores(&d, ScoreCombination::FineOnly).is_ok());
        for mode in [
            ScoreCombination::ObjectTimesFine,
            ScoreCombination::ObjectTimesCoarseTimesFine,
        ] {
            assert!(matches!(
                combine_scores(&d, mode),
                Err(FusionError::MissingAuxScore { field: "object_score", .. })
            ));
        }
        assert!(matches!(
            combine_scores(&d, ScoreCombination::CoarseTimesFine),
            Err(FusionError::MissingAuxScore { field: "coarse_score", .. })
        ));
    }

    #[test]
    fn combination_is_monotone_in_each_factor() {
        let build = |fine: f64, object: f64, coarse: f64| {
            let mut d = det(0, "f0", "car", 0.0, 0.0, fine);
            d.object_score = Some(object);
            d.coarse_score = Some(coarse);
            d
        };
        let base = build(0.6, 0.5, 0.4);
        for mode in [
            ScoreCombination::FineOnly,
            ScoreCombination::ObjectTimesFine,
            ScoreCombination::CoarseTimesFine,
            ScoreCombination::ObjectTimesCoarseTimesFine,
        ] {
            let s0 = combine_scores(&base, mode).unwrap().score;
            for bumped in [
                build(0.7, 0.5, 0.4),
                build(0.6, 0.6, 0.4),
                build(0.6, 0.5, 0.5),
            ] {
                let s1 = combine_scores(&bumped, mode).unwrap().score;
                assert!(s1 >= s0, "{mode}: {s1} < {s0}");
            }
        }
    }
}
