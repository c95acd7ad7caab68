//! Slow, obvious reference implementations and random data builders.
//!
//! Everything here trades speed for legibility: plain loops, no caching, no
//! frame indexes beyond the bare minimum. The test suites run the fast
//! library code against these oracles on randomized inputs; a disagreement
//! means one of the two readings of the protocol is wrong, which is the
//! conversation we want to have in a test failure rather than in production.

use rand::Rng;

use tail3d::fusion::Detection2D;
use tail3d::geometry::{
    bev_iou, ground_distance, project_box, Box3D, CameraCalibration, NmsMode, Rect2D,
};
use tail3d::hierarchy::ClassHierarchy;
use tail3d::matching::{Detection3D, GroundTruth3D, MatchVerdict, Verdict};
use tail3d::FusionConfig;

/// Matching oracle: the evaluation rules transcribed as directly as
/// possible. One frame at a time, detections by descending score (ties to
/// the smaller id), nearest unmatched ground truth of the same class wins
/// when strictly inside the threshold, otherwise a sibling (or, at level 2,
/// any related) ground truth inside the threshold excuses the detection.
pub fn reference_match_class(
    dets: &[Detection3D<f64>],
    gts: &[GroundTruth3D<f64>],
    hierarchy: &ClassHierarchy,
    class_name: &str,
    threshold: f64,
    lca_level: u8,
) -> Vec<MatchVerdict<f64>> {
    let mut frames: Vec<&str> = dets.iter().map(|d| d.frame_id.as_str()).collect();
    frames.sort_unstable();
    frames.dedup();

    let mut verdicts: Vec<MatchVerdict<f64>> = Vec::new();
    for frame in frames {
        let mut frame_dets: Vec<&Detection3D<f64>> = dets
            .iter()
            .filter(|d| d.frame_id == frame && d.class_name == class_name)
            .collect();
        frame_dets.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .expect("finite scores")
                .then(a.id.cmp(&b.id))
        });
        let frame_gts: Vec<&GroundTruth3D<f64>> = gts
            .iter()
            .filter(|g| g.frame_id == frame)
            .collect();
        let mut taken = vec![false; frame_gts.len()];

        for det in frame_dets {
            let mut best: Option<(usize, f64)> = None;
            for (i, gt) in frame_gts.iter().enumerate() {
                if taken[i] || gt.class_name != class_name {
                    continue;
                }
                let dist = ground_distance(&det.bbox, &gt.bbox);
                if dist >= threshold {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bi, bd)) => {
                        dist < bd || (dist == bd && frame_gts[i].id < frame_gts[bi].id)
                    }
                };
                if better {
                    best = Some((i, dist));
                }
            }
            let verdict = if let Some((i, _)) = best {
                taken[i] = true;
                Verdict::TruePositive {
                    gt_id: frame_gts[i].id,
                }
            } else if lca_level >= 1
                && frame_gts.iter().any(|gt| {
                    let lca = hierarchy
                        .lca_distance(class_name, &gt.class_name)
                        .expect("classes are fine");
                    lca >= 1
                        && lca <= lca_level
                        && ground_distance(&det.bbox, &gt.bbox) < threshold
                })
            {
                Verdict::Ignored
            } else {
                Verdict::FalsePositive
            };
            verdicts.push(MatchVerdict {
                detection_id: det.id,
                score: det.score,
                verdict,
            });
        }
    }
    verdicts.sort_by_key(|v| v.detection_id);
    verdicts
}

/// 101-point interpolated AP by brute force: for every grid recall, scan
/// every prefix of the ranked list for the best precision at or beyond it.
pub fn direct_101_point_ap(verdicts: &[MatchVerdict<f64>], num_gt: usize) -> f64 {
    assert!(num_gt > 0, "AP needs ground truth");
    let mut ranked: Vec<&MatchVerdict<f64>> = verdicts
        .iter()
        .filter(|v| v.verdict != Verdict::Ignored)
        .collect();
    ranked.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .expect("finite scores")
            .then(a.detection_id.cmp(&b.detection_id))
    });

    let mut precisions = Vec::new();
    let mut recalls = Vec::new();
    let mut tp = 0usize;
    for (k, v) in ranked.iter().enumerate() {
        if v.is_true_positive() {
            tp += 1;
        }
        precisions.push(tp as f64 / (k + 1) as f64);
        recalls.push(tp as f64 / num_gt as f64);
    }

    let mut total = 0.0;
    for i in 0..=100 {
        let r = i as f64 / 100.0;
        let mut best = 0.0f64;
        for k in 0..ranked.len() {
            if recalls[k] >= r && precisions[k] > best {
                best = precisions[k];
            }
        }
        total += best;
    }
    total / 101.0
}

/// Confusion pairing oracle. Returns (classes, counts, row_matches); rates
/// follow by dividing each row by its sum.
pub fn reference_confusion_counts(
    dets: &[Detection3D<f64>],
    gts: &[GroundTruth3D<f64>],
    hierarchy: &ClassHierarchy,
    superclass: &str,
    radius: f64,
) -> (Vec<String>, Vec<Vec<u64>>, Vec<u64>) {
    let classes: Vec<String> = hierarchy
        .children_of(superclass)
        .expect("known superclass")
        .to_vec();
    let index_of = |name: &str| classes.iter().position(|c| c == name);

    let mut frames: Vec<&str> = dets
        .iter()
        .map(|d| d.frame_id.as_str())
        .chain(gts.iter().map(|g| g.frame_id.as_str()))
        .collect();
    frames.sort_unstable();
    frames.dedup();

    let mut counts = vec![vec![0u64; classes.len()]; classes.len()];
    for frame in frames {
        let mut frame_dets: Vec<&Detection3D<f64>> = dets
            .iter()
            .filter(|d| d.frame_id == frame && index_of(&d.class_name).is_some())
            .collect();
        frame_dets.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .expect("finite scores")
                .then(a.id.cmp(&b.id))
        });
        let frame_gts: Vec<&GroundTruth3D<f64>> = gts
            .iter()
            .filter(|g| g.frame_id == frame && index_of(&g.class_name).is_some())
            .collect();
        let mut taken = vec![false; frame_gts.len()];

        for det in frame_dets {
            let mut best: Option<(usize, f64)> = None;
            for (i, gt) in frame_gts.iter().enumerate() {
                if taken[i] {
                    continue;
                }
                let dist = ground_distance(&det.bbox, &gt.bbox);
                if dist >= radius {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bi, bd)) => {
                        dist < bd || (dist == bd && frame_gts[i].id < frame_gts[bi].id)
                    }
                };
                if better {
                    best = Some((i, dist));
                }
            }
            if let Some((i, _)) = best {
                taken[i] = true;
                let row = index_of(&frame_gts[i].class_name).expect("member class");
                let col = index_of(&det.class_name).expect("member class");
                counts[row][col] += 1;
            }
        }
    }
    let row_matches: Vec<u64> = counts.iter().map(|row| row.iter().sum()).collect();
    (classes, counts, row_matches)
}

/// NMS oracle: quadratic greedy keep/suppress per frame. Returns surviving
/// detection ids in ascending order.
pub fn reference_nms_ids(
    dets: &[Detection3D<f64>],
    mode: NmsMode,
    threshold: f64,
) -> Vec<u64> {
    let mut frames: Vec<&str> = dets.iter().map(|d| d.frame_id.as_str()).collect();
    frames.sort_unstable();
    frames.dedup();

    let mut ids = Vec::new();
    for frame in frames {
        let mut frame_dets: Vec<&Detection3D<f64>> = dets
            .iter()
            .filter(|d| d.frame_id == frame)
            .collect();
        frame_dets.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .expect("finite scores")
                .then(a.id.cmp(&b.id))
        });
        let mut kept: Vec<&Detection3D<f64>> = Vec::new();
        for cand in frame_dets {
            let suppressed = kept.iter().any(|k| match mode {
                NmsMode::CenterDistance => ground_distance(&k.bbox, &cand.bbox) < threshold,
                NmsMode::BevIou => bev_iou(&k.bbox, &cand.bbox) > threshold,
            });
            if !suppressed {
                kept.push(cand);
            }
        }
        ids.extend(kept.iter().map(|d| d.id));
    }
    ids.sort_unstable();
    ids
}

/// Filter oracle: a lidar detection survives exactly when some RGB
/// detection in the same frame (same class, if class-aware) sits strictly
/// inside the radius.
pub fn filter_keeps(
    lidar: &Detection3D<f64>,
    rgb: &[Detection3D<f64>],
    cfg: &FusionConfig,
) -> bool {
    rgb.iter().any(|r| {
        r.frame_id == lidar.frame_id
            && (!cfg.filter_class_aware || r.class_name == lidar.class_name)
            && ground_distance(&r.bbox, &lidar.bbox) < cfg.filter_radius
    })
}

/// Projection oracle: takes each of the eight corners through the
/// extrinsics and intrinsics by hand, drops corners at or behind the
/// camera, then clips the pixel hull to the image. `None` when nothing is
/// in front or the clipped hull is degenerate.
pub fn project_box_oracle(
    b: &Box3D<f64>,
    cal: &CameraCalibration<f64>,
) -> Option<(f64, f64, f64, f64)> {
    let r = cal.rotation();
    let t = cal.translation();
    let k = cal.intrinsics();

    let mut min_u = f64::INFINITY;
    let mut min_v = f64::INFINITY;
    let mut max_u = f64::NEG_INFINITY;
    let mut max_v = f64::NEG_INFINITY;
    let mut any = false;
    for c in b.corners() {
        let x = r[0][0] * c[0] + r[0][1] * c[1] + r[0][2] * c[2] + t[0];
        let y = r[1][0] * c[0] + r[1][1] * c[1] + r[1][2] * c[2] + t[1];
        let z = r[2][0] * c[0] + r[2][1] * c[1] + r[2][2] * c[2] + t[2];
        if z <= 0.0 {
            continue;
        }
        any = true;
        let w = k[2][0] * x + k[2][1] * y + k[2][2] * z;
        let u = (k[0][0] * x + k[0][1] * y + k[0][2] * z) / w;
        let v = (k[1][0] * x + k[1][1] * y + k[1][2] * z) / w;
        min_u = min_u.min(u);
        min_v = min_v.min(v);
        max_u = max_u.max(u);
        max_v = max_v.max(v);
    }
    if !any {
        return None;
    }
    let w = cal.image_width() as f64;
    let h = cal.image_height() as f64;
    let clip = |lo: f64, v: f64, hi: f64| v.max(lo).min(hi);
    let (x0, y0) = (clip(0.0, min_u, w), clip(0.0, min_v, h));
    let (x1, y1) = (clip(0.0, max_u, w), clip(0.0, max_v, h));
    if x1 - x0 <= 0.0 || y1 - y0 <= 0.0 {
        return None;
    }
    Some((x0, y0, x1, y1))
}

/// Knobs for [`random_scene`].
#[derive(Debug, Clone)]
pub struct SceneParams {
    pub classes: Vec<String>,
    pub num_frames: u32,
    pub max_dets_per_frame: usize,
    pub max_gts_per_frame: usize,
    /// Positions are uniform over [-extent, extent] in x and y.
    pub extent: f64,
    /// Snap scores to k/n so ties actually happen; `None` keeps raw draws.
    pub score_grid: Option<u32>,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            classes: vec!["car".into(), "truck".into(), "adult".into()],
            num_frames: 3,
            max_dets_per_frame: 12,
            max_gts_per_frame: 10,
            extent: 8.0,
            score_grid: None,
        }
    }
}

/// Unstructured random scene: no correlation between detections and ground
/// truth beyond sharing the region. Good for exercising matchers, bad for
/// realistic recall.
pub fn random_scene(
    rng: &mut impl Rng,
    params: &SceneParams,
) -> (Vec<Detection3D<f64>>, Vec<GroundTruth3D<f64>>) {
    let mut dets = Vec::new();
    let mut gts = Vec::new();
    let mut det_id = 0u64;
    let mut gt_id = 0u64;
    for frame in 0..params.num_frames {
        let frame_id = format!("frame-{frame:06}");
        let n_dets = rng.gen_range(0..=params.max_dets_per_frame);
        for _ in 0..n_dets {
            let score = match params.score_grid {
                Some(n) => (rng.gen_range(0..=n) as f64) / n as f64,
                None => rng.gen::<f64>(),
            };
            dets.push(Detection3D {
                id: det_id,
                frame_id: frame_id.clone(),
                class_name: params.classes[rng.gen_range(0..params.classes.len())].clone(),
                bbox: random_box(rng, params.extent),
                score,
                coarse_score: None,
                object_score: None,
            });
            det_id += 1;
        }
        let n_gts = rng.gen_range(0..=params.max_gts_per_frame);
        for _ in 0..n_gts {
            gts.push(GroundTruth3D {
                id: gt_id,
                frame_id: frame_id.clone(),
                class_name: params.classes[rng.gen_range(0..params.classes.len())].clone(),
                bbox: random_box(rng, params.extent),
            });
            gt_id += 1;
        }
    }
    (dets, gts)
}

/// Box with uniform center over [-extent, extent]^2, z in [-1, 1], sizes in
/// [0.5, 5] and uniform yaw.
pub fn random_box(rng: &mut impl Rng, extent: f64) -> Box3D<f64> {
    let center = [
        rng.gen_range(-extent..=extent),
        rng.gen_range(-extent..=extent),
        rng.gen_range(-1.0..=1.0),
    ];
    let size = [
        rng.gen_range(0.5..=5.0),
        rng.gen_range(0.5..=5.0),
        rng.gen_range(0.5..=5.0),
    ];
    let yaw = rng.gen_range(-std::f64::consts::PI..=std::f64::consts::PI);
    Box3D::new(center, size, yaw).expect("ranges keep boxes valid")
}

/// Random but valid camera: rotation composed from Euler angles, positive
/// focal lengths, principal point inside the image.
pub fn random_calibration(rng: &mut impl Rng, camera_id: &str) -> CameraCalibration<f64> {
    let (a, b, c): (f64, f64, f64) = (
        rng.gen_range(-std::f64::consts::PI..=std::f64::consts::PI),
        rng.gen_range(-1.0..=1.0),
        rng.gen_range(-std::f64::consts::PI..=std::f64::consts::PI),
    );
    let rz = [
        [a.cos(), -a.sin(), 0.0],
        [a.sin(), a.cos(), 0.0],
        [0.0, 0.0, 1.0],
    ];
    let ry = [
        [b.cos(), 0.0, b.sin()],
        [0.0, 1.0, 0.0],
        [-b.sin(), 0.0, b.cos()],
    ];
    let rx = [
        [1.0, 0.0, 0.0],
        [0.0, c.cos(), -c.sin()],
        [0.0, c.sin(), c.cos()],
    ];
    let rotation = matmul(&rz, &matmul(&ry, &rx));

    let width = rng.gen_range(200..=1280u32);
    let height = rng.gen_range(200..=960u32);
    let intrinsics = [
        [
            rng.gen_range(50.0..=500.0),
            0.0,
            rng.gen_range(0.0..=width as f64),
        ],
        [
            0.0,
            rng.gen_range(50.0..=500.0),
            rng.gen_range(0.0..=height as f64),
        ],
        [0.0, 0.0, 1.0],
    ];
    let translation = [
        rng.gen_range(-5.0..=5.0),
        rng.gen_range(-5.0..=5.0),
        rng.gen_range(-5.0..=5.0),
    ];
    CameraCalibration::new(camera_id, intrinsics, rotation, translation, width, height)
        .expect("construction keeps the rotation orthonormal")
}

fn matmul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for (k, bk) in b.iter().enumerate() {
                out[i][j] += a[i][k] * bk[j];
            }
        }
    }
    out
}

/// Camera 60 m behind the origin on the world y axis, looking along +y.
/// Everything within ~50 m of the origin and near ground level projects
/// inside its 2000x2000 image, so scenes from the default generator region
/// are fully visible.
pub fn scene_camera(camera_id: &str) -> CameraCalibration<f64> {
    CameraCalibration::new(
        camera_id,
        [[100.0, 0.0, 1000.0], [0.0, 100.0, 1000.0], [0.0, 0.0, 1.0]],
        [[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]],
        [0.0, 0.0, 60.0],
        2000,
        2000,
    )
    .expect("axis permutation is a valid rotation")
}

/// One 2D detection per 3D detection, using the box's own projection as the
/// rectangle. Every input is guaranteed a perfect-overlap 2D match.
pub fn matching_rgb2d(
    dets: &[Detection3D<f64>],
    camera_id: &str,
    cal: &CameraCalibration<f64>,
) -> Vec<Detection2D<f64>> {
    dets.iter()
        .map(|d| Detection2D {
            camera_id: camera_id.to_owned(),
            frame_id: d.frame_id.clone(),
            class_name: d.class_name.clone(),
            rect: project_box(&d.bbox, cal).expect("scene camera sees the whole region"),
            score: 0.9,
        })
        .collect()
}

/// Random axis-aligned rectangle inside a w x h image.
pub fn random_rect(rng: &mut impl Rng, w: f64, h: f64) -> Rect2D<f64> {
    let x0 = rng.gen_range(0.0..w);
    let y0 = rng.gen_range(0.0..h);
    let x1 = rng.gen_range(x0..=w);
    let y1 = rng.gen_range(y0..=h);
    Rect2D::new([x0, y0], [x1, y1]).expect("ordered corners")
}

/// Random ranked verdict list plus a consistent ground-truth count
/// (`num_gt` is always at least the number of true positives, and at least
/// one).
pub fn random_verdicts(
    rng: &mut impl Rng,
    max_len: usize,
) -> (Vec<MatchVerdict<f64>>, usize) {
    let n = rng.gen_range(0..=max_len);
    let mut verdicts = Vec::with_capacity(n);
    let mut tp = 0usize;
    for id in 0..n {
        let verdict = match rng.gen_range(0..3u8) {
            0 => {
                tp += 1;
                Verdict::TruePositive { gt_id: tp as u64 }
            }
            1 => Verdict::FalsePositive,
            _ => Verdict::Ignored,
        };
        let score = if rng.gen_bool(0.5) {
            (rng.gen_range(0..=10) as f64) / 10.0
        } else {
            rng.gen::<f64>()
        };
        verdicts.push(MatchVerdict {
            detection_id: id as u64,
            score,
            verdict,
        });
    }
    let num_gt = tp + rng.gen_range(usize::from(tp == 0)..=5);
    (verdicts, num_gt)
}
