//! Seeded synthetic scenes with controlled error modes.
//!
//! The generator draws ground truth per class and frame, then derails each
//! detection in exactly the ways the evaluation must be able to see:
//! Gaussian center noise, sibling class flips and background false
//! positives. Every detection's true origin lands in a ledger so tests can
//! check verdicts against construction instead of against the code under
//! test.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::IoError;
use crate::geometry::Box3D;
use crate::hierarchy::ClassHierarchy;
use crate::matching::{Detection3D, GroundTruth3D};

/// Uniform score ranges for detections that stem from a ground-truth box
/// (tp) and for background clutter (fp).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreModel {
    pub tp_range: [f64; 2],
    pub fp_range: [f64; 2],
}

impl Default for ScoreModel {
    fn default() -> Self {
        Self {
            tp_range: [0.5, 1.0],
            fp_range: [0.0, 0.5],
        }
    }
}

/// Per-class generation parameters. A bare number is a rate with default
/// placement (uniform over the whole region); the object form pins the
/// population to a square cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClassSpec {
    Rate(f64),
    Placed(PlacedClass),
}

/// Cluster form: instances drawn uniformly from the square
/// center +- spread (per axis).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacedClass {
    /// Expected instances per frame. The integer part appears in every
    /// frame; the fractional part is a per-frame coin flip.
    pub rate: f64,
    #[serde(default = "default_cluster_center")]
    pub center: [f64; 2],
    #[serde(default = "default_cluster_spread")]
    pub spread: f64,
}

fn default_cluster_center() -> [f64; 2] {
    [0.0, 0.0]
}

fn default_cluster_spread() -> f64 {
    1.0
}

impl ClassSpec {
    pub fn rate(&self) -> f64 {
        match self {
            ClassSpec::Rate(r) => *r,
            ClassSpec::Placed(p) => p.rate,
        }
    }

    /// (center, half-extent) of the square this class draws positions from,
    /// given the scene region for the unplaced form.
    fn placement(&self, region_half_extent: f64) -> ([f64; 2], f64) {
        match self {
            ClassSpec::Rate(_) => ([0.0, 0.0], region_half_extent),
            ClassSpec::Placed(p) => (p.center, p.spread),
        }
    }
}

fn default_region_half_extent() -> f64 {
    50.0
}

fn default_box_size() -> [f64; 3] {
    [4.0, 2.0, 1.8]
}

/// Complete recipe for one synthetic scene. Generation is a pure function
/// of this value: the same spec yields byte-identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub num_frames: u32,
    /// Fine class -> rate (and optional placement).
    pub class_distribution: BTreeMap<String, ClassSpec>,
    /// Std-dev of the Gaussian x/y offset between a ground-truth box and
    /// its detection, meters.
    #[serde(default)]
    pub localization_noise_sigma: f64,
    /// Probability that a detection's class flips to a uniformly chosen
    /// sibling. Classes without siblings never flip.
    #[serde(default)]
    pub sibling_confusion_rate: f64,
    /// Expected background false positives per frame (Poisson), with the
    /// class drawn uniformly over all fine classes.
    #[serde(default)]
    pub fp_rate_per_frame: f64,
    #[serde(default)]
    pub score_model: ScoreModel,
    /// Scene is the square [-e, e] x [-e, e].
    #[serde(default = "default_region_half_extent")]
    pub region_half_extent: f64,
    #[serde(default = "default_box_size")]
    pub box_size: [f64; 3],
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), IoError> {
        let fail = |msg: String| Err(IoError::InvalidSpec(msg));
        if self.num_frames == 0 {
            return fail("num_frames must be at least 1".to_string());
        }
        if self.class_distribution.is_empty() {
            return fail("class_distribution must name at least one class".to_string());
        }
        for (class, cspec) in &self.class_distribution {
            let rate = cspec.rate();
            if !rate.is_finite() || rate < 0.0 {
                return fail(format!("class `{class}`: rate must be >= 0, got {rate}"));
            }
            if let ClassSpec::Placed(p) = cspec {
                if !p.center.iter().all(|c| c.is_finite()) {
                    return fail(format!("class `{class}`: cluster center must be finite"));
                }
                if !p.spread.is_finite() || p.spread < 0.0 {
                    return fail(format!(
                        "class `{class}`: spread must be >= 0, got {}",
                        p.spread
                    ));
                }
            }
        }
        if !self.localization_noise_sigma.is_finite() || self.localization_noise_sigma < 0.0 {
            return fail(format!(
                "localization_noise_sigma must be >= 0, got {}",
                self.localization_noise_sigma
            ));
        }
        if !self.sibling_confusion_rate.is_finite()
            || !(0.0..=1.0).contains(&self.sibling_confusion_rate)
        {
            return fail(format!(
                "sibling_confusion_rate must lie in [0, 1], got {}",
                self.sibling_confusion_rate
            ));
        }
        if !self.fp_rate_per_frame.is_finite() || self.fp_rate_per_frame < 0.0 {
            return fail(format!(
                "fp_rate_per_frame must be >= 0, got {}",
                self.fp_rate_per_frame
            ));
        }
        for (name, range) in [
            ("tp_range", self.score_model.tp_range),
            ("fp_range", self.score_model.fp_range),
        ] {
            let [lo, hi] = range;
            if !lo.is_finite() || !hi.is_finite() || lo > hi || lo < 0.0 || hi > 1.0 {
                return fail(format!(
                    "score_model.{name} must satisfy 0 <= lo <= hi <= 1, got [{lo}, {hi}]"
                ));
            }
        }
        if !self.region_half_extent.is_finite() || self.region_half_extent <= 0.0 {
            return fail(format!(
                "region_half_extent must be positive, got {}",
                self.region_half_extent
            ));
        }
        if !self.box_size.iter().all(|s| s.is_finite() && *s > 0.0) {
            return fail(format!("box_size must be positive, got {:?}", self.box_size));
        }
        Ok(())
    }
}

/// Where a generated detection came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    /// Derived from a ground-truth box, possibly with a flipped class.
    FromGroundTruth {
        gt_id: u64,
        original_class: String,
        flipped: bool,
    },
    /// Background clutter with no underlying object.
    Background,
}

/// Ledger line for one generated detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub detection_id: u64,
    pub frame_id: String,
    pub emitted_class: String,
    #[serde(flatten)]
    pub provenance: Provenance,
}

/// Generator output: the scene and the ground truth of the generator
/// itself.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub ground_truth: Vec<GroundTruth3D<f64>>,
    pub detections: Vec<Detection3D<f64>>,
    pub ledger: Vec<LedgerEntry>,
}

/// Draws a scene from the spec. The hierarchy supplies the sibling sets for
/// class flips and the class universe for background false positives; every
/// class in the distribution must be one of its fine classes.
///
/// Determinism contract: one ChaCha stream seeded from `spec.seed`, with a
/// fixed number of draws per ground-truth instance. Changing only the
/// confusion rate therefore keeps positions identical and makes the flip
/// sets nested across rates, which the acceptance tests lean on.
pub fn generate_scene(
    spec: &SyntheticSpec,
    hierarchy: &ClassHierarchy,
) -> Result<SyntheticScene, IoError> {
    spec.validate()?;
    let mut siblings: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for class in spec.class_distribution.keys() {
        siblings.insert(class.as_str(), hierarchy.siblings(class)?);
    }
    let fine_classes = hierarchy.fine_classes();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut scene = SyntheticScene {
        ground_truth: Vec::new(),
        detections: Vec::new(),
        ledger: Vec::new(),
    };
    let mut gt_id = 0u64;
    let mut det_id = 0u64;

    let uniform_in = |rng: &mut ChaCha8Rng, center: f64, half: f64| -> f64 {
        center - half + rng.gen::<f64>() * 2.0 * half
    };
    let score_in = |rng: &mut ChaCha8Rng, range: [f64; 2]| -> f64 {
        range[0] + rng.gen::<f64>() * (range[1] - range[0])
    };

    for frame in 0..spec.num_frames {
        let frame_id = format!("frame-{frame:06}");
        for (class, cspec) in &spec.class_distribution {
            let rate = cspec.rate();
            // Integer part always, fractional part as a coin flip. The coin
            // is drawn even when the fraction is zero so that counts stay
            // put when other spec fields change.
            let coin: f64 = rng.gen();
            let count = rate.floor() as u64 + u64::from(coin < rate.fract());
            let ([cx, cy], half) = cspec.placement(spec.region_half_extent);
            for _ in 0..count {
                let x = uniform_in(&mut rng, cx, half);
                let y = uniform_in(&mut rng, cy, half);
                let yaw = -std::f64::consts::PI + rng.gen::<f64>() * std::f64::consts::TAU;
                scene.ground_truth.push(GroundTruth3D {
                    id: gt_id,
                    frame_id: frame_id.clone(),
                    class_name: class.clone(),
                    bbox: Box3D::new([x, y, 0.0], spec.box_size, yaw)
                        .expect("validated spec produces valid boxes"),
                });

                // Fixed draw count per detection: two normals, flip coin,
                // sibling pick, score.
                let nx: f64 = rng.sample(StandardNormal);
                let ny: f64 = rng.sample(StandardNormal);
                let flip: f64 = rng.gen();
                let pick: f64 = rng.gen();
                let score = score_in(&mut rng, spec.score_model.tp_range);

                let sibs = &siblings[class.as_str()];
                let (emitted, flipped) = if flip < spec.sibling_confusion_rate && !sibs.is_empty()
                {
                    let idx = ((pick * sibs.len() as f64) as usize).min(sibs.len() - 1);
                    (sibs[idx].clone(), true)
                } else {
                    (class.clone(), false)
                };

                let dx = spec.localization_noise_sigma * nx;
                let dy = spec.localization_noise_sigma * ny;
                scene.detections.push(Detection3D {
                    id: det_id,
                    frame_id: frame_id.clone(),
                    class_name: emitted.clone(),
                    bbox: Box3D::new([x + dx, y + dy, 0.0], spec.box_size, yaw)
                        .expect("finite noise keeps boxes valid"),
                    score,
                    coarse_score: None,
                    object_score: None,
                });
                scene.ledger.push(LedgerEntry {
                    detection_id: det_id,
                    frame_id: frame_id.clone(),
                    emitted_class: emitted,
                    provenance: Provenance::FromGroundTruth {
                        gt_id,
                        original_class: class.clone(),
                        flipped,
                    },
                });
                gt_id += 1;
                det_id += 1;
            }
        }

        if spec.fp_rate_per_frame > 0.0 {
            let poisson =
                Poisson::new(spec.fp_rate_per_frame).expect("validated positive rate");
            let fp_count = rng.sample(poisson) as u64;
            for _ in 0..fp_count {
                let pick: f64 = rng.gen();
                let idx = ((pick * fine_classes.len() as f64) as usize)
                    .min(fine_classes.len() - 1);
                let class = fine_classes[idx].clone();
                let x = uniform_in(&mut rng, 0.0, spec.region_half_extent);
                let y = uniform_in(&mut rng, 0.0, spec.region_half_extent);
                let yaw = -std::f64::consts::PI + rng.gen::<f64>() * std::f64::consts::TAU;
                let score = score_in(&mut rng, spec.score_model.fp_range);
                scene.detections.push(Detection3D {
                    id: det_id,
                    frame_id: frame_id.clone(),
                    class_name: class.clone(),
                    bbox: Box3D::new([x, y, 0.0], spec.box_size, yaw)
                        .expect("validated spec produces valid boxes"),
                    score,
                    coarse_score: None,
                    object_score: None,
                });
                scene.ledger.push(LedgerEntry {
                    detection_id: det_id,
                    frame_id: frame_id.clone(),
                    emitted_class: class,
                    provenance: Provenance::Background,
                });
                det_id += 1;
            }
        }
    }
    Ok(scene)
}
