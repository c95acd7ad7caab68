//! Distance-threshold matching of detections against ground truth.
//!
//! One engine serves standard AP, hierarchy-aware AP and confusion analysis.
//! Detections are processed highest score first; a detection either consumes
//! the nearest free same-class ground-truth box within the threshold (TP),
//! gets excused because a related-class box sits within the threshold
//! (Ignored, at LCA level 1 or 2), or counts against precision (FP).

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{ground_distance, Box3D};
use crate::hierarchy::{ClassHierarchy, HierarchyError};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("expected detections of class `{expected}`, found `{found}` (detection {id})")]
    MixedClasses {
        expected: String,
        found: String,
        id: u64,
    },
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error("matching threshold must be positive and finite, got {0}")]
    InvalidThreshold(String),
    #[error("LCA level must be 0, 1 or 2, got {0}")]
    InvalidLcaLevel(u8),
    #[error("detection {id} has score {score} outside [0, 1]")]
    InvalidScore { id: u64, score: String },
}

/// A labeled 3D detection.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection3D<S: Scalar> {
    /// Unique within a run; file loaders assign ids in file order.
    pub id: u64,
    pub frame_id: String,
    /// Fine class under the active hierarchy.
    pub class_name: String,
    pub bbox: Box3D<S>,
    /// Confidence in [0, 1].
    pub score: S,
    /// Optional confidence that the object belongs to the coarse parent.
    pub coarse_score: Option<S>,
    /// Optional objectness confidence.
    pub object_score: Option<S>,
}

/// An annotated ground-truth box.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth3D<S: Scalar> {
    pub id: u64,
    pub frame_id: String,
    pub class_name: String,
    pub bbox: Box3D<S>,
}

/// What happened to one detection during matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    TruePositive { gt_id: u64 },
    FalsePositive,
    Ignored,
}

/// Per-detection matching outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchVerdict<S: Scalar> {
    pub detection_id: u64,
    pub score: S,
    pub verdict: Verdict,
}

impl<S: Scalar> MatchVerdict<S> {
    pub fn is_true_positive(&self) -> bool {
        matches!(self.verdict, Verdict::TruePositive { .. })
    }

    pub fn matched_gt_id(&self) -> Option<u64> {
        match self.verdict {
            Verdict::TruePositive { gt_id } => Some(gt_id),
            _ => None,
        }
    }
}

/// Matches all detections of `class_name` against ground truth and labels
/// each one TP, FP or Ignored.
///
/// Per frame, detections are visited in descending score order (ties to the
/// smaller id). A detection first tries to consume the nearest unmatched
/// same-class GT with ground-plane distance strictly below `threshold`.
/// Failing that, at `lca_level` >= 1 it is ignored when any GT of a class
/// within the level's tree distance (1 = siblings, 2 = anything) sits below
/// the threshold; ignoring does not consume the GT. Otherwise it is an FP.
///
/// The returned verdicts are sorted by detection id, so the result depends
/// only on the detection multiset.
pub fn match_class<S: Scalar>(
    dets: &[Detection3D<S>],
    gts: &[GroundTruth3D<S>],
    hierarchy: &ClassHierarchy,
    class_name: &str,
    threshold: S,
    lca_level: u8,
) -> Result<Vec<MatchVerdict<S>>, MatchError> {
    if !threshold.is_finite() || threshold <= S::zero() {
        return Err(MatchError::InvalidThreshold(format!("{threshold}")));
    }
    if lca_level > 2 {
        return Err(MatchError::InvalidLcaLevel(lca_level));
    }
    hierarchy.ensure_fine(class_name)?;
    for d in dets {
        if d.class_name != class_name {
            return Err(MatchError::MixedClasses {
                expected: class_name.to_string(),
                found: d.class_name.clone(),
                id: d.id,
            });
        }
        if !d.score.is_finite() || d.score < S::zero() || d.score > S::one() {
            return Err(MatchError::InvalidScore {
                id: d.id,
                score: format!("{}", d.score),
            });
        }
    }

    // Tree distance from the evaluated class to every GT class, resolved
    // once. This also validates the GT classes.
    let mut lca_of_class: BTreeMap<&str, u8> = BTreeMap::new();
    for g in gts {
        if !lca_of_class.contains_key(g.class_name.as_str()) {
            let d = hierarchy.lca_distance(class_name, &g.class_name)?;
            lca_of_class.insert(g.class_name.as_str(), d);
        }
    }

    let mut frames: BTreeMap<&str, (Vec<&Detection3D<S>>, Vec<&GroundTruth3D<S>>)> =
        BTreeMap::new();
    for d in dets {
        frames.entry(d.frame_id.as_str()).or_default().0.push(d);
    }
    for g in gts {
        frames.entry(g.frame_id.as_str()).or_default().1.push(g);
    }

    let frames: Vec<_> = frames.into_values().collect();
    let mut verdicts: Vec<MatchVerdict<S>> = frames
        .par_iter()
        .map(|(frame_dets, frame_gts)| {
            match_frame(frame_dets, frame_gts, &lca_of_class, threshold, lca_level)
        })
        .reduce(Vec::new, |mut acc, mut v| {
            acc.append(&mut v);
            acc
        });

    verdicts.sort_by_key(|v| v.detection_id);
    Ok(verdicts)
}

fn match_frame<S: Scalar>(
    dets: &[&Detection3D<S>],
    gts: &[&GroundTruth3D<S>],
    lca_of_class: &BTreeMap<&str, u8>,
    threshold: S,
    lca_level: u8,
) -> Vec<MatchVerdict<S>> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .partial_cmp(&dets[a].score)
            .expect("scores are finite")
            .then(dets[a].id.cmp(&dets[b].id))
    });

    let mut consumed = vec![false; gts.len()];
    let mut verdicts = Vec::with_capacity(dets.len());
    for &di in &order {
        let det = dets[di];
        // Rule 1: nearest free same-class GT strictly inside the threshold.
        let mut best: Option<(S, u64, usize)> = None;
        for (gi, gt) in gts.iter().enumerate() {
            if consumed[gi] || lca_of_class[gt.class_name.as_str()] != 0 {
                continue;
            }
            let dist = ground_distance(&det.bbox, &gt.bbox);
            if dist >= threshold {
                continue;
            }
            let better = match &best {
                None => true,
                Some((bd, bid, _)) => dist < *bd || (dist == *bd && gt.id < *bid),
            };
            if better {
                best = Some((dist, gt.id, gi));
            }
        }
        if let Some((_, gt_id, gi)) = best {
            consumed[gi] = true;
            verdicts.push(MatchVerdict {
                detection_id: det.id,
                score: det.score,
                verdict: Verdict::TruePositive { gt_id },
            });
            continue;
        }

        // Rule 2: related-class GT inside the threshold excuses the miss.
        let ignored = lca_level >= 1
            && gts.iter().any(|gt| {
                let lca = lca_of_class[gt.class_name.as_str()];
                lca >= 1
                    && lca <= lca_level
                    && ground_distance(&det.bbox, &gt.bbox) < threshold
            });
        verdicts.push(MatchVerdict {
            detection_id: det.id,
            score: det.score,
            verdict: if ignored {
                Verdict::Ignored
            } else {
                Verdict::FalsePositive
            },
        });
    }
    verdicts
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn boxat(x: f64, y: f64) -> Box3D<f64> {
        Box3D::new([x, y, 0.0], [1.0, 1.0, 1.0], 0.0).unwrap()
    }

    fn det(id: u64, class: &str, x: f64, y: f64, score: f64) -> Detection3D<f64> {
        Detection3D {
            id,
            frame_id: "f0".to_string(),
            class_name: class.to_string(),
            bbox: boxat(x, y),
            score,
            coarse_score: None,
            object_score: None,
        }
    }

    fn gt(id: u64, class: &str, x: f64, y: f64) -> GroundTruth3D<f64> {
        GroundTruth3D {
            id,
            frame_id: "f0".to_string(),
            class_name: class.to_string(),
            bbox: boxat(x, y),
        }
    }

    fn run(
        dets: &[Detection3D<f64>],
        gts: &[GroundTruth3D<f64>],
        class: &str,
        threshold: f64,
        lca: u8,
    ) -> Vec<MatchVerdict<f64>> {
        let h = ClassHierarchy::nuscenes();
        match_class(dets, gts, &h, class, threshold, lca).unwrap()
    }

    #[test]
    fn same_class_within_threshold_is_tp() {
        let dets = vec![det(0, "child", 0.5, 0.0, 0.9)];
        let gts = vec![gt(10, "child", 0.0, 0.0)];
        for lca in 0..=2 {
            let v = run(&dets, &gts, "child", 2.0, lca);
            assert_eq!(v[0].verdict, Verdict::TruePositive { gt_id: 10 });
        }
    }

    #[test]
    fn sibling_gt_ignores_at_level_one() {
        let dets = vec![det(0, "child", 0.5, 0.0, 0.9)];
        let gts = vec![gt(10, "adult", 0.0, 0.0)];
        assert_eq!(run(&dets, &gts, "child", 2.0, 0)[0].verdict, Verdict::FalsePositive);
        assert_eq!(run(&dets, &gts, "child", 2.0, 1)[0].verdict, Verdict::Ignored);
        assert_eq!(run(&dets, &gts, "child", 2.0, 2)[0].verdict, Verdict::Ignored);
    }

    #[test]
    fn cross_group_gt_ignores_only_at_level_two() {
        let dets = vec![det(0, "child", 0.5, 0.0, 0.9)];
        let gts = vec![gt(10, "car", 0.0, 0.0)];
        assert_eq!(run(&dets, &gts, "child", 2.0, 0)[0].verdict, Verdict::FalsePositive);
        assert_eq!(run(&dets, &gts, "child", 2.0, 1)[0].verdict, Verdict::FalsePositive);
        assert_eq!(run(&dets, &gts, "child", 2.0, 2)[0].verdict, Verdict::Ignored);
    }

    #[test]
    fn nearest_gt_wins() {
        let dets = vec![det(0, "car", 0.0, 0.0, 0.9)];
        let gts = vec![gt(10, "car", 1.5, 0.0), gt(11, "car", 1.0, 0.0)];
        let v = run(&dets, &gts, "car", 2.0, 0);
        assert_eq!(v[0].verdict, Verdict::TruePositive { gt_id: 11 });
    }

    #[test]
    fn consumed_gt_is_gone() {
        let dets = vec![det(0, "car", 0.1, 0.0, 0.9), det(1, "car", 0.2, 0.0, 0.8)];
        let gts = vec![gt(10, "car", 0.0, 0.0)];
        let v = run(&dets, &gts, "car", 2.0, 0);
        assert_eq!(v[0].verdict, Verdict::TruePositive { gt_id: 10 });
        assert_eq!(v[1].verdict, Verdict::FalsePositive);
    }

    #[test]
    fn ignoring_does_not_consume() {
        let dets = vec![det(0, "child", 0.1, 0.0, 0.9), det(1, "child", 0.2, 0.0, 0.8)];
        let gts = vec![gt(10, "adult", 0.0, 0.0)];
        let v = run(&dets, &gts, "child", 2.0, 1);
        assert_eq!(v[0].verdict, Verdict::Ignored);
        assert_eq!(v[1].verdict, Verdict::Ignored);
    }

    #[test]
    fn threshold_is_strict() {
        let dets = vec![det(0, "car", 2.0, 0.0, 0.9)];
        let gts = vec![gt(10, "car", 0.0, 0.0)];
        assert_eq!(run(&dets, &gts, "car", 2.0, 0)[0].verdict, Verdict::FalsePositive);
        assert_eq!(
            run(&dets, &gts, "car", 2.0 + 1e-9, 0)[0].verdict,
            Verdict::TruePositive { gt_id: 10 }
        );
    }

    #[test]
    fn score_ties_break_by_smaller_id() {
        let dets = vec![det(7, "car", 0.5, 0.0, 0.9), det(3, "car", 0.6, 0.0, 0.9)];
        let gts = vec![gt(10, "car", 0.0, 0.0)];
        let v = run(&dets, &gts, "car", 2.0, 0);
        let tp: Vec<u64> = v
            .iter()
            .filter(|m| m.is_true_positive())
            .map(|m| m.detection_id)
            .collect();
        assert_eq!(tp, vec![3]);
    }

    #[test]
    fn frames_are_isolated() {
        let mut d = det(0, "car", 0.0, 0.0, 0.9);
        d.frame_id = "f1".to_string();
        let gts = vec![gt(10, "car", 0.0, 0.0)]; // lives in f0
        let v = run(&[d], &gts, "car", 2.0, 0);
        assert_eq!(v[0].verdict, Verdict::FalsePositive);
    }

    /// Greedy score-first matching means the TP *set* may shift when the
    /// threshold grows: a higher-scored detection farther from the GT takes
    /// it away from a closer, lower-scored one. The TP *count* stays
    /// monotone; this pins the behavior down.
    #[test]
    fn tp_set_can_shift_when_threshold_grows() {
        let dets = vec![det(0, "car", 3.0, 0.0, 0.9), det(1, "car", 1.0, 0.0, 0.8)];
        let gts = vec![gt(10, "car", 0.0, 0.0)];
        let narrow = run(&dets, &gts, "car", 2.0, 0);
        let wide = run(&dets, &gts, "car", 4.0, 0);
        assert_eq!(narrow[0].verdict, Verdict::FalsePositive);
        assert_eq!(narrow[1].verdict, Verdict::TruePositive { gt_id: 10 });
        assert_eq!(wide[0].verdict, Verdict::TruePositive { gt_id: 10 });
        assert_eq!(wide[1].verdict, Verdict::FalsePositive);
    }

    #[test]
    fn validation_errors() {
        let h = ClassHierarchy::nuscenes();
        let dets = vec![det(0, "car", 0.0, 0.0, 0.9), det(1, "truck", 0.0, 0.0, 0.8)];
        let gts = vec![gt(10, "car", 0.0, 0.0)];
        assert!(matches!(
            match_class(&dets, &gts, &h, "car", 2.0, 0),
            Err(MatchError::MixedClasses { .. })
        ));
        let dets = vec![det(0, "car", 0.0, 0.0, 0.9)];
        assert!(matches!(
            match_class(&dets, &gts, &h, "car", 0.0, 0),
            Err(MatchError::InvalidThreshold(_))
        ));
        assert!(matches!(
            match_class(&dets, &gts, &h, "car", 2.0, 3),
            Err(MatchError::InvalidLcaLevel(3))
        ));
        let dets = vec![det(0, "spaceship", 0.0, 0.0, 0.9)];
        assert!(match_class(&dets, &gts, &h, "spaceship", 2.0, 0).is_err());
        let mut bad = det(0, "car", 0.0, 0.0, 0.9);
        bad.score = 1.5;
        assert!(matches!(
            match_class(&[bad], &gts, &h, "car", 2.0, 0),
            Err(MatchError::InvalidScore { .. })
        ));
    }

    // Random scene strategy: up to 12 cars/trucks/adults in a 20 m square.
    fn arb_scene() -> impl Strategy<Value = (Vec<Detection3D<f64>>, Vec<GroundTruth3D<f64>>)> {
        let classes = prop::sample::select(vec!["car", "truck", "adult"]);
        let dets = prop::collection::vec(
            (classes.clone(), -10.0..10.0f64, -10.0..10.0f64, 0.0..=1.0f64, 0u8..3),
            0..12,
        );
        let gts = prop::collection::vec(
            (classes, -10.0..10.0f64, -10.0..10.0f64, 0u8..3),
            0..12,
        );
        (dets, gts).prop_map(|(ds, gs)| {
            let dets = ds
                .into_iter()
                .enumerate()
                .map(|(i, (c, x, y, s, f))| {
                    let mut d = det(i as u64, c, x, y, (s * 8.0).round() / 8.0);
                    d.frame_id = format!("f{}", f);
                    d
                })
                .collect();
            let gts = gs
                .into_iter()
                .enumerate()
                .map(|(i, (c, x, y, f))| {
                    let mut g = gt(100 + i as u64, c, x, y);
                    g.frame_id = format!("f{}", f);
                    g
                })
                .collect();
            (dets, gts)
        })
    }

    proptest! {
        #[test]
        fn verdicts_are_input_order_invariant(
            (dets, gts) in arb_scene(),
            seed in 0u64..1000,
        ) {
            let h = ClassHierarchy::nuscenes();
            let cars: Vec<_> = dets.iter().filter(|d| d.class_name == "car").cloned().collect();
            let a = match_class(&cars, &gts, &h, "car", 2.0, 1).unwrap();
            let mut shuffled = cars.clone();
            // Cheap deterministic shuffle.
            let n = shuffled.len();
            if n > 1 {
                for i in 0..n {
                    let j = (seed as usize + i * 7) % n;
                    shuffled.swap(i, j);
                }
            }
            let b = match_class(&shuffled, &gts, &h, "car", 2.0, 1).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn raising_lca_only_turns_fp_into_ignored((dets, gts) in arb_scene()) {
            let h = ClassHierarchy::nuscenes();
            let cars: Vec<_> = dets.iter().filter(|d| d.class_name == "car").cloned().collect();
            let by_level: Vec<_> = (0u8..=2)
                .map(|l| match_class(&cars, &gts, &h, "car", 2.0, l).unwrap())
                .collect();
            for w in by_level.windows(2) {
                for (lo, hi) in w[0].iter().zip(w[1].iter()) {
                    prop_assert_eq!(lo.detection_id, hi.detection_id);
                    match (lo.verdict, hi.verdict) {
                        (Verdict::TruePositive { gt_id: a }, Verdict::TruePositive { gt_id: b }) => {
                            prop_assert_eq!(a, b)
                        }
                        (Verdict::FalsePositive, Verdict::FalsePositive) => {}
                        (Verdict::FalsePositive, Verdict::Ignored) => {}
                        (Verdict::Ignored, Verdict::Ignored) => {}
                        (a, b) => prop_assert!(false, "illegal transition {:?} -> {:?}", a, b),
                    }
                }
            }
        }

        #[test]
        fn tp_count_bounded_and_monotone_in_threshold((dets, gts) in arb_scene()) {
            let h = ClassHierarchy::nuscenes();
            let cars: Vec<_> = dets.iter().filter(|d| d.class_name == "car").cloned().collect();
            let car_gts = gts.iter().filter(|g| g.class_name == "car").count();
            let mut last = 0usize;
            for thr in [0.5, 1.0, 2.0, 4.0, 8.0] {
                let v = match_class(&cars, &gts, &h, "car", thr, 0).unwrap();
                let tp = v.iter().filter(|m| m.is_true_positive()).count();
                prop_assert!(tp <= car_gts);
                prop_assert!(tp >= last, "TP count dropped from {} to {} at {}", last, tp, thr);
                last = tp;
            }
        }

        #[test]
        fn gts_matched_at_most_once((dets, gts) in arb_scene()) {
            let h = ClassHierarchy::nuscenes();
            let cars: Vec<_> = dets.iter().filter(|d| d.class_name == "car").cloned().collect();
            let v = match_class(&cars, &gts, &h, "car", 2.0, 2).unwrap();
            let mut seen = std::collections::BTreeSet::new();
            for m in &v {
                if let Some(id) = m.matched_gt_id() {
                    prop_assert!(seen.insert(id), "gt {} matched twice", id);
                }
            }
        }
    }
}
