//! Average precision, report aggregation and confusion matrices.
//!
//! The pipeline is: match one class (see [`crate::matching`]), sweep the
//! verdicts into a precision-recall curve, integrate the curve into AP, then
//! aggregate over thresholds, classes, cardinality buckets and hierarchy
//! levels into an [`APReport`].

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::ground_distance;
use crate::hierarchy::{
    Bucket, CardinalityBuckets, ClassHierarchy, HierarchyError, DEFAULT_FEW_THRESHOLD,
    DEFAULT_MANY_THRESHOLD,
};
use crate::matching::{match_class, Detection3D, GroundTruth3D, MatchError, MatchVerdict, Verdict};
use crate::Scalar;

/// Ground-plane distance thresholds the protocol sweeps by default, meters.
pub const DEFAULT_DISTANCE_THRESHOLDS: [f64; 4] = [0.5, 1.0, 2.0, 4.0];

/// Radius used when pairing predictions with ground truth for confusion
/// analysis, meters.
pub const DEFAULT_CONFUSION_RADIUS: f64 = 2.0;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("AP needs at least one ground-truth instance; exclude the class instead")]
    ZeroGroundTruth,
    #[error("ground-truth set is empty")]
    EmptyGroundTruth,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("detection {id} has non-finite score {score}")]
    NonFiniteScore { id: u64, score: String },
    #[error("`{0}` is not a coarse class with at least two fine children")]
    InvalidSuperclass(String),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
}

/// One point of a precision-recall sweep, taken after processing the
/// detection scoring `score`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PRSample<S: Scalar> {
    pub score: S,
    pub precision: S,
    pub recall: S,
}

/// Precision-recall curve for one (class, threshold, LCA level) evaluation.
///
/// Samples sit in sweep order (descending score), so recall is
/// non-decreasing along the curve. Ignored verdicts produce no samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PRCurve<S: Scalar> {
    samples: Vec<PRSample<S>>,
    num_gt: usize,
}

impl<S: Scalar> PRCurve<S> {
    /// Sweeps verdicts in descending score order (ties to the smaller
    /// detection id), dropping Ignored ones.
    pub fn from_verdicts(
        verdicts: &[MatchVerdict<S>],
        num_gt: usize,
    ) -> Result<Self, MetricsError> {
        if num_gt == 0 {
            return Err(MetricsError::ZeroGroundTruth);
        }
        for v in verdicts {
            if !v.score.is_finite() {
                return Err(MetricsError::NonFiniteScore {
                    id: v.detection_id,
                    score: format!("{}", v.score),
                });
            }
        }
        let mut order: Vec<&MatchVerdict<S>> = verdicts
            .iter()
            .filter(|v| v.verdict != Verdict::Ignored)
            .collect();
        order.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .expect("scores are finite")
                .then(a.detection_id.cmp(&b.detection_id))
        });

        let total = S::from_count(num_gt);
        let mut tp = 0usize;
        let mut fp = 0usize;
        let samples = order
            .iter()
            .map(|v| {
                match v.verdict {
                    Verdict::TruePositive { .. } => tp += 1,
                    Verdict::FalsePositive => fp += 1,
                    Verdict::Ignored => unreachable!("filtered above"),
                }
                PRSample {
                    score: v.score,
                    precision: S::from_count(tp) / S::from_count(tp + fp),
                    recall: S::from_count(tp) / total,
                }
            })
            .collect();
        Ok(Self { samples, num_gt })
    }

    pub fn samples(&self) -> &[PRSample<S>] {
        &self.samples
    }

    pub fn num_gt(&self) -> usize {
        self.num_gt
    }

    /// Integrates the curve into AP.
    pub fn ap(&self, integration: ApIntegration, clip: Option<ClipBounds<S>>) -> S {
        match integration {
            ApIntegration::Interpolated => self.interpolated_ap(clip),
            ApIntegration::Trapezoidal => self.trapezoidal_ap(),
        }
    }

    /// Mean of interpolated precision over the 101-point recall grid
    /// {0.00, 0.01, ..., 1.00}, where interpolated precision at r is the
    /// maximum precision among samples with recall >= r (0 if none).
    fn interpolated_ap(&self, clip: Option<ClipBounds<S>>) -> S {
        // Best precision from each sample onward; recall is non-decreasing,
        // so suffix max realizes "max precision at recall >= r".
        let mut best_from = vec![S::zero(); self.samples.len()];
        let mut best = S::zero();
        for (i, s) in self.samples.iter().enumerate().rev() {
            best = best.max(s.precision);
            best_from[i] = best;
        }

        let hundred = S::from_count(100);
        let mut sum = S::zero();
        let mut points = 0usize;
        for i in 0..=100usize {
            let r = S::from_count(i) / hundred;
            if let Some(c) = &clip {
                if r <= c.min_recall {
                    continue;
                }
            }
            let idx = self.samples.partition_point(|s| s.recall < r);
            let mut p = if idx < self.samples.len() {
                best_from[idx]
            } else {
                S::zero()
            };
            if let Some(c) = &clip {
                p = (p - c.min_precision).max(S::zero()) / (S::one() - c.min_precision);
            }
            sum = sum + p;
            points += 1;
        }
        sum / S::from_count(points)
    }

    /// Raw area under the sweep polyline, anchored at recall 0 with the
    /// first sample's precision.
    fn trapezoidal_ap(&self) -> S {
        let Some(first) = self.samples.first() else {
            return S::zero();
        };
        let two = S::from_count(2);
        let mut area = S::zero();
        let mut prev_r = S::zero();
        let mut prev_p = first.precision;
        for s in &self.samples {
            area = area + (s.recall - prev_r) * (prev_p + s.precision) / two;
            prev_r = s.recall;
            prev_p = s.precision;
        }
        area
    }
}

/// How a precision-recall curve is integrated into AP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ApIntegration {
    /// 101-point interpolation, the dominant convention.
    #[default]
    Interpolated,
    /// Raw trapezoidal area under the sweep points.
    Trapezoidal,
}

/// Optional operating-floor clip in the style of the nuScenes devkit: grid
/// points at recall <= min_recall are skipped and precision is renormalized
/// as (p - min_precision)+ / (1 - min_precision).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipBounds<S: Scalar> {
    pub min_recall: S,
    pub min_precision: S,
}

/// Everything `evaluate` needs beyond the data itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig<S: Scalar> {
    /// Matching thresholds in meters; AP is averaged over these.
    pub thresholds: Vec<S>,
    /// Hierarchy levels to evaluate: 0 plain, 1 forgives sibling classes,
    /// 2 forgives everything nearby.
    pub lca_levels: Vec<u8>,
    /// Strictly above this GT count a class is "many".
    pub many_threshold: u64,
    /// Strictly below this GT count a class is "few".
    pub few_threshold: u64,
    pub integration: ApIntegration,
    /// Only valid with interpolated integration.
    pub clip: Option<ClipBounds<S>>,
}

impl<S: Scalar> Default for EvalConfig<S> {
    fn default() -> Self {
        Self {
            thresholds: DEFAULT_DISTANCE_THRESHOLDS
                .iter()
                .map(|&t| S::from_f64_lossy(t))
                .collect(),
            lca_levels: vec![0, 1, 2],
            many_threshold: DEFAULT_MANY_THRESHOLD,
            few_threshold: DEFAULT_FEW_THRESHOLD,
            integration: ApIntegration::Interpolated,
            clip: None,
        }
    }
}

impl<S: Scalar> EvalConfig<S> {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.thresholds.is_empty() {
            return Err(MetricsError::InvalidConfig(
                "thresholds must be non-empty".to_string(),
            ));
        }
        for t in &self.thresholds {
            if !t.is_finite() || *t <= S::zero() {
                return Err(MetricsError::InvalidConfig(format!(
                    "thresholds must be positive and finite, got {t}"
                )));
            }
        }
        let mut seen = Vec::new();
        for t in &self.thresholds {
            if seen.contains(t) {
                return Err(MetricsError::InvalidConfig(format!(
                    "duplicate threshold {t} would double-weight the mean"
                )));
            }
            seen.push(*t);
        }
        if self.lca_levels.is_empty() {
            return Err(MetricsError::InvalidConfig(
                "lca_levels must be non-empty".to_string(),
            ));
        }
        for l in &self.lca_levels {
            if *l > 2 {
                return Err(MetricsError::InvalidConfig(format!(
                    "LCA level must be 0, 1 or 2, got {l}"
                )));
            }
        }
        let mut levels = self.lca_levels.clone();
        levels.sort_unstable();
        levels.dedup();
        if levels.len() != self.lca_levels.len() {
            return Err(MetricsError::InvalidConfig(
                "duplicate LCA level".to_string(),
            ));
        }
        if self.few_threshold > self.many_threshold {
            return Err(MetricsError::InvalidConfig(format!(
                "few threshold {} exceeds many threshold {}",
                self.few_threshold, self.many_threshold
            )));
        }
        if let Some(c) = &self.clip {
            if self.integration != ApIntegration::Interpolated {
                return Err(MetricsError::InvalidConfig(
                    "clip bounds require interpolated integration".to_string(),
                ));
            }
            let unit = |v: S| v.is_finite() && v >= S::zero() && v < S::one();
            if !unit(c.min_recall) || !unit(c.min_precision) {
                return Err(MetricsError::InvalidConfig(format!(
                    "clip bounds must lie in [0, 1), got recall {} precision {}",
                    c.min_recall, c.min_precision
                )));
            }
        }
        Ok(())
    }
}

/// AP for one (class, threshold, LCA level) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApCell<S: Scalar> {
    pub class: String,
    pub threshold: S,
    pub lca_level: u8,
    pub ap: S,
}

/// Per-class AP averaged over thresholds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassAp<S: Scalar> {
    pub class: String,
    pub lca_level: u8,
    pub ap: S,
    pub num_gt: u64,
    pub bucket: Bucket,
}

/// Mean AP over the classes of one cardinality bucket.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketAp<S: Scalar> {
    pub bucket: Bucket,
    pub lca_level: u8,
    pub ap: S,
    pub num_classes: usize,
}

/// Mean AP over all included classes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverallAp<S: Scalar> {
    pub lca_level: u8,
    pub ap: S,
    pub num_classes: usize,
}

/// Full evaluation output.
///
/// Orderings are fixed: classes in hierarchy document order, thresholds and
/// LCA levels in config order. Aggregates are arithmetic means of the cells
/// they cover, summed in that same order. Classes without ground truth are
/// left out of every aggregate and listed in `excluded_classes`. Buckets
/// that end up with no classes produce no row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct APReport<S: Scalar> {
    pub per_class_threshold: Vec<ApCell<S>>,
    pub per_class: Vec<ClassAp<S>>,
    pub buckets: Vec<BucketAp<S>>,
    pub overall: Vec<OverallAp<S>>,
    pub excluded_classes: Vec<String>,
}

impl<S: Scalar> APReport<S> {
    pub fn ap_for(&self, class: &str, threshold: S, lca_level: u8) -> Option<S> {
        self.per_class_threshold
            .iter()
            .find(|c| c.class == class && c.threshold == threshold && c.lca_level == lca_level)
            .map(|c| c.ap)
    }

    pub fn class_ap(&self, class: &str, lca_level: u8) -> Option<S> {
        self.per_class
            .iter()
            .find(|c| c.class == class && c.lca_level == lca_level)
            .map(|c| c.ap)
    }

    pub fn bucket_ap(&self, bucket: Bucket, lca_level: u8) -> Option<S> {
        self.buckets
            .iter()
            .find(|c| c.bucket == bucket && c.lca_level == lca_level)
            .map(|c| c.ap)
    }

    pub fn overall_ap(&self, lca_level: u8) -> Option<S> {
        self.overall
            .iter()
            .find(|c| c.lca_level == lca_level)
            .map(|c| c.ap)
    }
}

/// AP over the 101-point interpolated precision-recall curve.
///
/// `verdicts` must come from one (class, threshold, LCA level) matching run
/// and `num_gt` is the same-class ground-truth count.
pub fn compute_ap<S: Scalar>(
    verdicts: &[MatchVerdict<S>],
    num_gt: usize,
) -> Result<S, MetricsError> {
    compute_ap_with(verdicts, num_gt, ApIntegration::Interpolated, None)
}

/// AP with an explicit integration rule and optional clip.
pub fn compute_ap_with<S: Scalar>(
    verdicts: &[MatchVerdict<S>],
    num_gt: usize,
    integration: ApIntegration,
    clip: Option<ClipBounds<S>>,
) -> Result<S, MetricsError> {
    if let Some(c) = &clip {
        if integration != ApIntegration::Interpolated {
            return Err(MetricsError::InvalidConfig(
                "clip bounds require interpolated integration".to_string(),
            ));
        }
        let unit = |v: S| v.is_finite() && v >= S::zero() && v < S::one();
        if !unit(c.min_recall) || !unit(c.min_precision) {
            return Err(MetricsError::InvalidConfig(format!(
                "clip bounds must lie in [0, 1), got recall {} precision {}",
                c.min_recall, c.min_precision
            )));
        }
    }
    Ok(PRCurve::from_verdicts(verdicts, num_gt)?.ap(integration, clip))
}

/// Runs the full protocol: match and score every fine class with ground
/// truth at every configured threshold and LCA level, then aggregate.
///
/// Work items are scored in parallel; the report is bit-identical for any
/// worker count because aggregation happens afterwards in a fixed order.
pub fn evaluate<S: Scalar>(
    dets: &[Detection3D<S>],
    gts: &[GroundTruth3D<S>],
    hierarchy: &ClassHierarchy,
    cfg: &EvalConfig<S>,
) -> Result<APReport<S>, MetricsError> {
    cfg.validate()?;
    if gts.is_empty() {
        return Err(MetricsError::EmptyGroundTruth);
    }
    for d in dets {
        hierarchy.ensure_fine(&d.class_name)?;
    }
    let mut gt_counts: BTreeMap<String, u64> = BTreeMap::new();
    for g in gts {
        hierarchy.ensure_fine(&g.class_name)?;
        *gt_counts.entry(g.class_name.clone()).or_default() += 1;
    }

    let mut dets_by_class: BTreeMap<&str, Vec<Detection3D<S>>> = BTreeMap::new();
    for d in dets {
        dets_by_class
            .entry(d.class_name.as_str())
            .or_default()
            .push(d.clone());
    }
    let empty: Vec<Detection3D<S>> = Vec::new();

    let mut included = Vec::new();
    let mut excluded = Vec::new();
    for class in hierarchy.fine_classes() {
        if gt_counts.contains_key(class) {
            included.push(class.clone());
        } else {
            excluded.push(class.clone());
        }
    }

    let items: Vec<(&str, S, u8)> = included
        .iter()
        .flat_map(|class| {
            cfg.thresholds.iter().flat_map(move |&t| {
                cfg.lca_levels
                    .iter()
                    .map(move |&l| (class.as_str(), t, l))
            })
        })
        .collect();

    let cells: Vec<ApCell<S>> = items
        .par_iter()
        .map(|&(class, threshold, lca_level)| {
            let class_dets = dets_by_class.get(class).unwrap_or(&empty);
            let verdicts = match_class(class_dets, gts, hierarchy, class, threshold, lca_level)?;
            let num_gt = gt_counts[class] as usize;
            let ap = compute_ap_with(&verdicts, num_gt, cfg.integration, cfg.clip)?;
            Ok(ApCell {
                class: class.to_string(),
                threshold,
                lca_level,
                ap,
            })
        })
        .collect::<Result<_, MetricsError>>()?;

    let thr_count = S::from_count(cfg.thresholds.len());
    let buckets = CardinalityBuckets::new(gt_counts.clone(), cfg.many_threshold, cfg.few_threshold)?;

    let mut per_class = Vec::new();
    for class in &included {
        for &lca in &cfg.lca_levels {
            let sum: S = cells
                .iter()
                .filter(|c| c.class == *class && c.lca_level == lca)
                .map(|c| c.ap)
                .sum();
            let num_gt = gt_counts[class];
            per_class.push(ClassAp {
                class: class.clone(),
                lca_level: lca,
                ap: sum / thr_count,
                num_gt,
                bucket: buckets.bucket_of(num_gt),
            });
        }
    }

    let mut bucket_rows = Vec::new();
    for bucket in [Bucket::Many, Bucket::Medium, Bucket::Few] {
        for &lca in &cfg.lca_levels {
            let members: Vec<&ClassAp<S>> = per_class
                .iter()
                .filter(|c| c.bucket == bucket && c.lca_level == lca)
                .collect();
            if members.is_empty() {
                continue;
            }
            let sum: S = members.iter().map(|c| c.ap).sum();
            bucket_rows.push(BucketAp {
                bucket,
                lca_level: lca,
                ap: sum / S::from_count(members.len()),
                num_classes: members.len(),
            });
        }
    }

    let mut overall = Vec::new();
    for &lca in &cfg.lca_levels {
        let members: Vec<&ClassAp<S>> = per_class.iter().filter(|c| c.lca_level == lca).collect();
        let sum: S = members.iter().map(|c| c.ap).sum();
        overall.push(OverallAp {
            lca_level: lca,
            ap: sum / S::from_count(members.len()),
            num_classes: members.len(),
        });
    }

    Ok(APReport {
        per_class_threshold: cells,
        per_class,
        buckets: bucket_rows,
        overall,
        excluded_classes: excluded,
    })
}

/// How often objects of each fine class under one coarse class are predicted
/// as each of its classes. `rates[i][j]` reads: a fraction `rates[i][j]` of
/// the matched class-`i` objects were predicted as class `j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfusionMatrix<S: Scalar> {
    pub superclass: String,
    /// Fine classes in document order; indexes rows and columns.
    pub classes: Vec<String>,
    pub rates: Vec<Vec<S>>,
    /// Matched predictions per row; 0 marks an all-zero, undefined row.
    pub row_matches: Vec<u64>,
}

/// Pairs predictions with ground truth inside one coarse class and tabulates
/// GT class vs predicted class.
///
/// Predictions are visited highest score first (ties to the smaller id) and
/// take the nearest unconsumed GT of any fine class under `superclass`
/// within `radius` in their frame; each GT feeds at most one prediction and
/// predictions with no GT left in range are dropped. Rows are normalized to
/// rates; a row with no matches stays all-zero.
pub fn confusion_matrix<S: Scalar>(
    dets: &[Detection3D<S>],
    gts: &[GroundTruth3D<S>],
    hierarchy: &ClassHierarchy,
    superclass: &str,
    radius: S,
) -> Result<ConfusionMatrix<S>, MetricsError> {
    if !radius.is_finite() || radius <= S::zero() {
        return Err(MetricsError::InvalidConfig(format!(
            "confusion radius must be positive and finite, got {radius}"
        )));
    }
    let classes: Vec<String> = match hierarchy.children_of(superclass) {
        Some(kids) if superclass != hierarchy.root() && kids.len() >= 2 => kids.to_vec(),
        _ => return Err(MetricsError::InvalidSuperclass(superclass.to_string())),
    };
    let index: BTreeMap<&str, usize> = classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();

    for d in dets {
        hierarchy.ensure_fine(&d.class_name)?;
        if !d.score.is_finite() {
            return Err(MetricsError::NonFiniteScore {
                id: d.id,
                score: format!("{}", d.score),
            });
        }
    }
    for g in gts {
        hierarchy.ensure_fine(&g.class_name)?;
    }

    let mut frames: BTreeMap<&str, (Vec<&Detection3D<S>>, Vec<&GroundTruth3D<S>>)> =
        BTreeMap::new();
    for d in dets.iter().filter(|d| index.contains_key(d.class_name.as_str())) {
        frames.entry(d.frame_id.as_str()).or_default().0.push(d);
    }
    for g in gts.iter().filter(|g| index.contains_key(g.class_name.as_str())) {
        frames.entry(g.frame_id.as_str()).or_default().1.push(g);
    }

    let n = classes.len();
    let mut counts = vec![vec![0u64; n]; n];
    for (frame_dets, frame_gts) in frames.values() {
        let mut order: Vec<&&Detection3D<S>> = frame_dets.iter().collect();
        order.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .expect("scores are finite")
                .then(a.id.cmp(&b.id))
        });
        let mut consumed = vec![false; frame_gts.len()];
        for det in order {
            let mut best: Option<(S, u64, usize)> = None;
            for (gi, gt) in frame_gts.iter().enumerate() {
                if consumed[gi] {
                    continue;
                }
                let dist = ground_distance(&det.bbox, &gt.bbox);
                if dist >= radius {
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
            if let Some((_, _, gi)) = best {
                consumed[gi] = true;
                let row = index[frame_gts[gi].class_name.as_str()];
                let col = index[det.class_name.as_str()];
                counts[row][col] += 1;
            }
        }
    }

    let mut rates = vec![vec![S::zero(); n]; n];
    let mut row_matches = vec![0u64; n];
    for i in 0..n {
        let total: u64 = counts[i].iter().sum();
        row_matches[i] = total;
        if total > 0 {
            let t = S::from_f64_lossy(total as f64);
            for j in 0..n {
                rates[i][j] = S::from_f64_lossy(counts[i][j] as f64) / t;
            }
        }
    }

    Ok(ConfusionMatrix {
        superclass: superclass.to_string(),
        classes,
        rates,
        row_matches,
    })
}
