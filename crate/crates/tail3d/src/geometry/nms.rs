//! Greedy non-maximum suppression within a single class.
//!
//! Cross-class suppression is deliberately not offered: rare classes ride
//! along with common ones in the same scene, and suppressing a stroller
//! because a nearby adult scored higher is exactly the failure mode the
//! toolkit exists to measure.

use std::collections::BTreeMap;

use super::{bev_iou, ground_distance, GeometryError, NmsMode};
use crate::matching::Detection3D;
use crate::Scalar;

/// Keeps detections greedily by descending score (ties to the smaller id),
/// dropping any detection that duplicates an already kept one under `mode`.
/// Detections are grouped by frame; frames never interact. The survivors
/// come back sorted by descending score, so the result is a function of the
/// detection multiset only, not of input order.
pub fn within_class_nms<S: Scalar>(
    detections: &[Detection3D<S>],
    mode: NmsMode,
    threshold: S,
) -> Result<Vec<Detection3D<S>>, GeometryError> {
    if !threshold.is_finite() || threshold <= S::zero() {
        return Err(GeometryError::InvalidThreshold(format!(
            "threshold must be positive and finite, got {threshold}"
        )));
    }
    if let Some(first) = detections.first() {
        for d in detections {
            if d.class_name != first.class_name {
                return Err(GeometryError::MixedClasses {
                    expected: first.class_name.clone(),
                    found: d.class_name.clone(),
                });
            }
        }
    }

    let mut by_frame: BTreeMap<&str, Vec<&Detection3D<S>>> = BTreeMap::new();
    for d in detections {
        by_frame.entry(d.frame_id.as_str()).or_default().push(d);
    }

    let mut survivors: Vec<Detection3D<S>> = Vec::new();
    for (_, mut dets) in by_frame {
        dets.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .expect("scores are finite")
                .then(a.id.cmp(&b.id))
        });
        let mut kept: Vec<&Detection3D<S>> = Vec::new();
        for cand in dets {
            let duplicate = kept.iter().any(|k| match mode {
                NmsMode::CenterDistance => ground_distance(&k.bbox, &cand.bbox) < threshold,
                NmsMode::BevIou => bev_iou(&k.bbox, &cand.bbox) > threshold,
            });
            if !duplicate {
                kept.push(cand);
            }
        }
        survivors.extend(kept.into_iter().cloned());
    }

    survivors.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .expect("scores are finite")
            .then(a.id.cmp(&b.id))
    });
    Ok(survivors)
}
