//! File formats: loading and saving detections, ground truth, 2D
//! detections, calibrations, fusion configs, reports and confusion
//! matrices, plus the synthetic scene generator in [`synth`].
//!
//! Everything is a single JSON document with a `schema_version` gate.
//! Loaders validate every record on the way in and point at the offending
//! frame, record index and field on failure. Detection and ground-truth ids
//! are assigned sequentially in file order, so a file defines its ids.

mod synth;

pub use synth::{
    generate_scene, ClassSpec, LedgerEntry, PlacedClass, Provenance, ScoreModel, SyntheticScene,
    SyntheticSpec,
};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::{Detection2D, FusionConfig};
use crate::geometry::{Box3D, CalibrationRecord, CameraCalibration, Rect2D};
use crate::hierarchy::{ClassHierarchy, HierarchyError};
use crate::matching::{Detection3D, GroundTruth3D};
use crate::metrics::{APReport, ConfusionMatrix};

pub const DETECTIONS_SCHEMA: &str = "tail3d/detections/1";
pub const GROUND_TRUTH_SCHEMA: &str = "tail3d/ground-truth/1";
pub const DETECTIONS_2D_SCHEMA: &str = "tail3d/detections-2d/1";
pub const CALIBRATIONS_SCHEMA: &str = "tail3d/calibrations/1";
pub const HIERARCHY_SCHEMA: &str = "tail3d/hierarchy/1";
pub const FUSION_CONFIG_SCHEMA: &str = "tail3d/fusion-config/1";
pub const REPORT_SCHEMA: &str = "tail3d/report/1";
pub const CONFUSION_SCHEMA: &str = "tail3d/confusion/1";
pub const SYNTHETIC_SPEC_SCHEMA: &str = "tail3d/synthetic-spec/1";
pub const LEDGER_SCHEMA: &str = "tail3d/ledger/1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("failed to read `{path}`: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("failed to write `{path}`: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported schema version `{found}`, expected `{expected}`")]
    Schema {
        expected: &'static str,
        found: String,
    },
    #[error("{kind}: frame `{frame_id}`, record {index}: field `{field}`: {reason}")]
    InvalidRecord {
        kind: &'static str,
        frame_id: String,
        index: usize,
        field: &'static str,
        reason: String,
    },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
}

fn read(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), IoError> {
    std::fs::write(path, text).map_err(|source| IoError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn check_schema(expected: &'static str, found: &str) -> Result<(), IoError> {
    if found == expected {
        Ok(())
    } else {
        Err(IoError::Schema {
            expected,
            found: found.to_string(),
        })
    }
}

fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    text
}

// ---- detections ----

#[derive(Debug, Serialize, Deserialize)]
struct DetectionsFile {
    schema_version: String,
    frames: Vec<DetectionFrame>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DetectionFrame {
    frame_id: String,
    detections: Vec<DetectionRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DetectionRecord {
    class_name: String,
    center: [f64; 3],
    size: [f64; 3],
    yaw: f64,
    score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coarse_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    object_score: Option<f64>,
}

fn check_unit_score(
    kind: &'static str,
    frame_id: &str,
    index: usize,
    field: &'static str,
    score: f64,
) -> Result<(), IoError> {
    if !score.is_finite() || !(0.0..=1.0).contains(&score) {
        return Err(IoError::InvalidRecord {
            kind,
            frame_id: frame_id.to_string(),
            index,
            field,
            reason: format!("score must lie in [0, 1], got {score}"),
        });
    }
    Ok(())
}

pub fn parse_detections(text: &str) -> Result<Vec<Detection3D<f64>>, IoError> {
    let file: DetectionsFile = serde_json::from_str(text)?;
    check_schema(DETECTIONS_SCHEMA, &file.schema_version)?;
    let kind = "detections";
    let mut out = Vec::new();
    let mut id = 0u64;
    for frame in &file.frames {
        for (index, rec) in frame.detections.iter().enumerate() {
            let bbox = Box3D::new(rec.center, rec.size, rec.yaw).map_err(|e| {
                IoError::InvalidRecord {
                    kind,
                    frame_id: frame.frame_id.clone(),
                    index,
                    field: "bbox",
                    reason: e.to_string(),
                }
            })?;
            check_unit_score(kind, &frame.frame_id, index, "score", rec.score)?;
            for (field, value) in [
                ("coarse_score", rec.coarse_score),
                ("object_score", rec.object_score),
            ] {
                if let Some(v) = value {
                    check_unit_score(kind, &frame.frame_id, index, field, v)?;
                }
            }
            out.push(Detection3D {
                id,
                frame_id: frame.frame_id.clone(),
                class_name: rec.class_name.clone(),
                bbox,
                score: rec.score,
                coarse_score: rec.coarse_score,
                object_score: rec.object_score,
            });
            id += 1;
        }
    }
    Ok(out)
}

pub fn load_detections(path: impl AsRef<Path>) -> Result<Vec<Detection3D<f64>>, IoError> {
    parse_detections(&read(path.as_ref())?)
}

/// Serializes detections grouped by frame (frames in sorted id order,
/// detections in input order within each frame).
pub fn detections_to_json(dets: &[Detection3D<f64>]) -> String {
    let mut frames: Vec<DetectionFrame> = Vec::new();
    for d in dets {
        let record = DetectionRecord {
            class_name: d.class_name.clone(),
            center: d.bbox.center(),
            size: d.bbox.size(),
            yaw: d.bbox.yaw(),
            score: d.score,
            coarse_score: d.coarse_score,
            object_score: d.object_score,
        };
        match frames.binary_search_by(|f| f.frame_id.as_str().cmp(&d.frame_id)) {
            Ok(i) => frames[i].detections.push(record),
            Err(i) => frames.insert(
                i,
                DetectionFrame {
                    frame_id: d.frame_id.clone(),
                    detections: vec![record],
                },
            ),
        }
    }
    to_pretty_json(&DetectionsFile {
        schema_version: DETECTIONS_SCHEMA.to_string(),
        frames,
    })
}

pub fn save_detections(path: impl AsRef<Path>, dets: &[Detection3D<f64>]) -> Result<(), IoError> {
    write(path.as_ref(), &detections_to_json(dets))
}

// ---- ground truth ----

#[derive(Debug, Serialize, Deserialize)]
struct GroundTruthFile {
    schema_version: String,
    frames: Vec<GroundTruthFrame>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GroundTruthFrame {
    frame_id: String,
    boxes: Vec<BoxRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BoxRecord {
    class_name: String,
    center: [f64; 3],
    size: [f64; 3],
    yaw: f64,
}

pub fn parse_groundtruth(text: &str) -> Result<Vec<GroundTruth3D<f64>>, IoError> {
    let file: GroundTruthFile = serde_json::from_str(text)?;
    check_schema(GROUND_TRUTH_SCHEMA, &file.schema_version)?;
    let mut out = Vec::new();
    let mut id = 0u64;
    for frame in &file.frames {
        for (index, rec) in frame.boxes.iter().enumerate() {
            let bbox = Box3D::new(rec.center, rec.size, rec.yaw).map_err(|e| {
                IoError::InvalidRecord {
                    kind: "ground-truth",
                    frame_id: frame.frame_id.clone(),
                    index,
                    field: "bbox",
                    reason: e.to_string(),
                }
            })?;
            out.push(GroundTruth3D {
                id,
                frame_id: frame.frame_id.clone(),
                class_name: rec.class_name.clone(),
                bbox,
            });
            id += 1;
        }
    }
    Ok(out)
}

pub fn load_groundtruth(path: impl AsRef<Path>) -> Result<Vec<GroundTruth3D<f64>>, IoError> {
    parse_groundtruth(&read(path.as_ref())?)
}

pub fn groundtruth_to_json(gts: &[GroundTruth3D<f64>]) -> String {
    let mut frames: Vec<GroundTruthFrame> = Vec::new();
    for g in gts {
        let record = BoxRecord {
            class_name: g.class_name.clone(),
            center: g.bbox.center(),
            size: g.bbox.size(),
            yaw: g.bbox.yaw(),
        };
        match frames.binary_search_by(|f| f.frame_id.as_str().cmp(&g.frame_id)) {
            Ok(i) => frames[i].boxes.push(record),
            Err(i) => frames.insert(
                i,
                GroundTruthFrame {
                    frame_id: g.frame_id.clone(),
                    boxes: vec![record],
                },
            ),
        }
    }
    to_pretty_json(&GroundTruthFile {
        schema_version: GROUND_TRUTH_SCHEMA.to_string(),
        frames,
    })
}

pub fn save_groundtruth(
    path: impl AsRef<Path>,
    gts: &[GroundTruth3D<f64>],
) -> Result<(), IoError> {
    write(path.as_ref(), &groundtruth_to_json(gts))
}

// ---- 2D detections ----

#[derive(Debug, Serialize, Deserialize)]
struct Detections2DFile {
    schema_version: String,
    frames: Vec<Detection2DFrame>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Detection2DFrame {
    frame_id: String,
    detections: Vec<Detection2DRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Detection2DRecord {
    camera_id: String,
    class_name: String,
    min: [f64; 2],
    max: [f64; 2],
    score: f64,
}

pub fn parse_detections_2d(text: &str) -> Result<Vec<Detection2D<f64>>, IoError> {
    let file: Detections2DFile = serde_json::from_str(text)?;
    check_schema(DETECTIONS_2D_SCHEMA, &file.schema_version)?;
    let kind = "detections-2d";
    let mut out = Vec::new();
    for frame in &file.frames {
        for (index, rec) in frame.detections.iter().enumerate() {
            let rect = Rect2D::new(rec.min, rec.max).map_err(|e| IoError::InvalidRecord {
                kind,
                frame_id: frame.frame_id.clone(),
                index,
                field: "rect",
                reason: e.to_string(),
            })?;
            check_unit_score(kind, &frame.frame_id, index, "score", rec.score)?;
            out.push(Detection2D {
                camera_id: rec.camera_id.clone(),
                frame_id: frame.frame_id.clone(),
                class_name: rec.class_name.clone(),
                rect,
                score: rec.score,
            });
        }
    }
    Ok(out)
}

pub fn load_detections_2d(path: impl AsRef<Path>) -> Result<Vec<Detection2D<f64>>, IoError> {
    parse_detections_2d(&read(path.as_ref())?)
}

pub fn detections_2d_to_json(dets: &[Detection2D<f64>]) -> String {
    let mut frames: Vec<Detection2DFrame> = Vec::new();
    for d in dets {
        let record = Detection2DRecord {
            camera_id: d.camera_id.clone(),
            class_name: d.class_name.clone(),
            min: d.rect.min(),
            max: d.rect.max(),
            score: d.score,
        };
        match frames.binary_search_by(|f| f.frame_id.as_str().cmp(&d.frame_id)) {
            Ok(i) => frames[i].detections.push(record),
            Err(i) => frames.insert(
                i,
                Detection2DFrame {
                    frame_id: d.frame_id.clone(),
                    detections: vec![record],
                },
            ),
        }
    }
    to_pretty_json(&Detections2DFile {
        schema_version: DETECTIONS_2D_SCHEMA.to_string(),
        frames,
    })
}

pub fn save_detections_2d(
    path: impl AsRef<Path>,
    dets: &[Detection2D<f64>],
) -> Result<(), IoError> {
    write(path.as_ref(), &detections_2d_to_json(dets))
}

// ---- calibrations ----

#[derive(Debug, Serialize, Deserialize)]
struct CalibrationsFile {
    schema_version: String,
    frames: Vec<CalibrationFrame>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CalibrationFrame {
    frame_id: String,
    cameras: Vec<CameraRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CameraRecord {
    camera_id: String,
    intrinsics: [[f64; 3]; 3],
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
    image_width: u32,
    image_height: u32,
}

pub fn parse_calibrations(text: &str) -> Result<Vec<CalibrationRecord<f64>>, IoError> {
    let file: CalibrationsFile = serde_json::from_str(text)?;
    check_schema(CALIBRATIONS_SCHEMA, &file.schema_version)?;
    let mut out = Vec::new();
    for frame in &file.frames {
        for (index, rec) in frame.cameras.iter().enumerate() {
            let camera = CameraCalibration::new(
                rec.camera_id.clone(),
                rec.intrinsics,
                rec.rotation,
                rec.translation,
                rec.image_width,
                rec.image_height,
            )
            .map_err(|e| IoError::InvalidRecord {
                kind: "calibrations",
                frame_id: frame.frame_id.clone(),
                index,
                field: "camera",
                reason: e.to_string(),
            })?;
            out.push(CalibrationRecord {
                frame_id: frame.frame_id.clone(),
                camera,
            });
        }
    }
    Ok(out)
}

pub fn load_calibrations(path: impl AsRef<Path>) -> Result<Vec<CalibrationRecord<f64>>, IoError> {
    parse_calibrations(&read(path.as_ref())?)
}

pub fn calibrations_to_json(cals: &[CalibrationRecord<f64>]) -> String {
    let mut frames: Vec<CalibrationFrame> = Vec::new();
    for c in cals {
        let record = CameraRecord {
            camera_id: c.camera.camera_id.clone(),
            intrinsics: *c.camera.intrinsics(),
            rotation: *c.camera.rotation(),
            translation: c.camera.translation(),
            image_width: c.camera.image_width(),
            image_height: c.camera.image_height(),
        };
        match frames.binary_search_by(|f| f.frame_id.as_str().cmp(&c.frame_id)) {
            Ok(i) => frames[i].cameras.push(record),
            Err(i) => frames.insert(
                i,
                CalibrationFrame {
                    frame_id: c.frame_id.clone(),
                    cameras: vec![record],
                },
            ),
        }
    }
    to_pretty_json(&CalibrationsFile {
        schema_version: CALIBRATIONS_SCHEMA.to_string(),
        frames,
    })
}

pub fn save_calibrations(
    path: impl AsRef<Path>,
    cals: &[CalibrationRecord<f64>],
) -> Result<(), IoError> {
    write(path.as_ref(), &calibrations_to_json(cals))
}

// ---- hierarchy ----

#[derive(Debug, Serialize, Deserialize)]
struct HierarchyFile {
    schema_version: String,
    root: String,
    children: std::collections::BTreeMap<String, Vec<String>>,
}

pub fn parse_hierarchy(text: &str) -> Result<ClassHierarchy, IoError> {
    let file: HierarchyFile = serde_json::from_str(text)?;
    check_schema(HIERARCHY_SCHEMA, &file.schema_version)?;
    Ok(ClassHierarchy::from_document(&file.root, &file.children)?)
}

pub fn load_hierarchy(path: impl AsRef<Path>) -> Result<ClassHierarchy, IoError> {
    parse_hierarchy(&read(path.as_ref())?)
}

pub fn hierarchy_to_json(hierarchy: &ClassHierarchy) -> String {
    let children = hierarchy
        .coarse_classes()
        .into_iter()
        .map(|coarse| {
            let kids = hierarchy
                .children_of(coarse)
                .expect("coarse class has children")
                .to_vec();
            (coarse.to_string(), kids)
        })
        .collect();
    to_pretty_json(&HierarchyFile {
        schema_version: HIERARCHY_SCHEMA.to_string(),
        root: hierarchy.root().to_string(),
        children,
    })
}

pub fn save_hierarchy(path: impl AsRef<Path>, hierarchy: &ClassHierarchy) -> Result<(), IoError> {
    write(path.as_ref(), &hierarchy_to_json(hierarchy))
}

// ---- fusion config ----

#[derive(Debug, Serialize, Deserialize)]
struct FusionConfigFile {
    schema_version: String,
    #[serde(flatten)]
    config: FusionConfig<f64>,
}

pub fn parse_fusion_config(text: &str) -> Result<FusionConfig<f64>, IoError> {
    let file: FusionConfigFile = serde_json::from_str(text)?;
    check_schema(FUSION_CONFIG_SCHEMA, &file.schema_version)?;
    Ok(file.config)
}

pub fn load_fusion_config(path: impl AsRef<Path>) -> Result<FusionConfig<f64>, IoError> {
    parse_fusion_config(&read(path.as_ref())?)
}

pub fn fusion_config_to_json(config: &FusionConfig<f64>) -> String {
    to_pretty_json(&FusionConfigFile {
        schema_version: FUSION_CONFIG_SCHEMA.to_string(),
        config: config.clone(),
    })
}

pub fn save_fusion_config(
    path: impl AsRef<Path>,
    config: &FusionConfig<f64>,
) -> Result<(), IoError> {
    write(path.as_ref(), &fusion_config_to_json(config))
}

// ---- report and confusion output ----

#[derive(Serialize)]
struct ReportFile<'a> {
    schema_version: &'static str,
    #[serde(flatten)]
    report: &'a APReport<f64>,
}

pub fn report_to_json(report: &APReport<f64>) -> String {
    to_pretty_json(&ReportFile {
        schema_version: REPORT_SCHEMA,
        report,
    })
}

pub fn save_report(path: impl AsRef<Path>, report: &APReport<f64>) -> Result<(), IoError> {
    write(path.as_ref(), &report_to_json(report))
}

/// One row per (class, threshold, LCA level) cell.
pub fn report_to_csv(report: &APReport<f64>) -> String {
    let mut out = String::from("class,threshold,lca_level,ap\n");
    for cell in &report.per_class_threshold {
        out.push_str(&format!(
            "{},{},{},{}\n",
            cell.class, cell.threshold, cell.lca_level, cell.ap
        ));
    }
    out
}

pub fn save_report_csv(path: impl AsRef<Path>, report: &APReport<f64>) -> Result<(), IoError> {
    write(path.as_ref(), &report_to_csv(report))
}

#[derive(Serialize)]
struct ConfusionFile<'a> {
    schema_version: &'static str,
    #[serde(flatten)]
    matrix: &'a ConfusionMatrix<f64>,
}

pub fn confusion_to_json(matrix: &ConfusionMatrix<f64>) -> String {
    to_pretty_json(&ConfusionFile {
        schema_version: CONFUSION_SCHEMA,
        matrix,
    })
}

pub fn save_confusion(path: impl AsRef<Path>, matrix: &ConfusionMatrix<f64>) -> Result<(), IoError> {
    write(path.as_ref(), &confusion_to_json(matrix))
}

/// One row per ground-truth class; columns are predicted classes plus the
/// row's match count.
pub fn confusion_to_csv(matrix: &ConfusionMatrix<f64>) -> String {
    let mut out = String::from("class");
    for c in &matrix.classes {
        out.push(',');
        out.push_str(c);
    }
    out.push_str(",matches\n");
    for (i, class) in matrix.classes.iter().enumerate() {
        out.push_str(class);
        for rate in &matrix.rates[i] {
            out.push_str(&format!(",{rate}"));
        }
        out.push_str(&format!(",{}\n", matrix.row_matches[i]));
    }
    out
}

pub fn save_confusion_csv(
    path: impl AsRef<Path>,
    matrix: &ConfusionMatrix<f64>,
) -> Result<(), IoError> {
    write(path.as_ref(), &confusion_to_csv(matrix))
}

// ---- synthetic spec and ledger ----

#[derive(Debug, Serialize, Deserialize)]
struct SyntheticSpecFile {
    schema_version: String,
    #[serde(flatten)]
    spec: SyntheticSpec,
}

pub fn parse_spec(text: &str) -> Result<SyntheticSpec, IoError> {
    let file: SyntheticSpecFile = serde_json::from_str(text)?;
    check_schema(SYNTHETIC_SPEC_SCHEMA, &file.schema_version)?;
    Ok(file.spec)
}

pub fn load_spec(path: impl AsRef<Path>) -> Result<SyntheticSpec, IoError> {
    parse_spec(&read(path.as_ref())?)
}

pub fn spec_to_json(spec: &SyntheticSpec) -> String {
    to_pretty_json(&SyntheticSpecFile {
        schema_version: SYNTHETIC_SPEC_SCHEMA.to_string(),
        spec: spec.clone(),
    })
}

pub fn save_spec(path: impl AsRef<Path>, spec: &SyntheticSpec) -> Result<(), IoError> {
    write(path.as_ref(), &spec_to_json(spec))
}

#[derive(Debug, Serialize, Deserialize)]
struct LedgerFile {
    schema_version: String,
    entries: Vec<LedgerEntry>,
}

pub fn parse_ledger(text: &str) -> Result<Vec<LedgerEntry>, IoError> {
    let file: LedgerFile = serde_json::from_str(text)?;
    check_schema(LEDGER_SCHEMA, &file.schema_version)?;
    Ok(file.entries)
}

pub fn load_ledger(path: impl AsRef<Path>) -> Result<Vec<LedgerEntry>, IoError> {
    parse_ledger(&read(path.as_ref())?)
}

pub fn ledger_to_json(entries: &[LedgerEntry]) -> String {
    to_pretty_json(&LedgerFile {
        schema_version: LEDGER_SCHEMA.to_string(),
        entries: entries.to_vec(),
    })
}

pub fn save_ledger(path: impl AsRef<Path>, entries: &[LedgerEntry]) -> Result<(), IoError> {
    write(path.as_ref(), &ledger_to_json(entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::ClassHierarchy;

    fn sample_detections_json() -> serde_json::Value {
        serde_json::json!({
            "schema_version": DETECTIONS_SCHEMA,
            "frames": [
                {
                    "frame_id": "frame-000000",
                    "detections": [
                        {
                            "class_name": "car",
                            "center": [1.0, 2.0, 0.0],
                            "size": [4.0, 2.0, 1.8],
                            "yaw": 0.3,
                            "score": 0.9
                        },
                        {
                            "class_name": "adult",
                            "center": [5.0, 2.0, 0.0],
                            "size": [0.6, 0.6, 1.7],
                            "yaw": 0.0,
                            "score": 0.4,
                            "coarse_score": 0.5,
                            "object_score": 0.6
                        }
                    ]
                },
                { "frame_id": "frame-000001", "detections": [] }
            ]
        })
    }

    #[test]
    fn detections_parse_and_assign_ids_in_file_order() {
        let dets = parse_detections(&sample_detections_json().to_string()).unwrap();
        assert_eq!(dets.len(), 2);
        assert_eq!(dets[0].id, 0);
        assert_eq!(dets[1].id, 1);
        assert_eq!(dets[0].class_name, "car");
        assert_eq!(dets[1].coarse_score, Some(0.5));
        assert_eq!(dets[1].object_score, Some(0.6));
    }

    #[test]
    fn empty_frames_give_empty_lists() {
        let text = serde_json::json!({
            "schema_version": DETECTIONS_SCHEMA,
            "frames": []
        })
        .to_string();
        assert!(parse_detections(&text).unwrap().is_empty());
    }

    #[test]
    fn schema_version_is_gated() {
        let mut doc = sample_detections_json();
        doc["schema_version"] = "tail3d/detections/9".into();
        let err = parse_detections(&doc.to_string()).unwrap_err();
        assert!(matches!(err, IoError::Schema { .. }), "{err}");
    }

    #[test]
    fn out_of_range_score_names_the_record() {
        let mut doc = sample_detections_json();
        doc["frames"][0]["detections"][1]["score"] = 1.3.into();
        let err = parse_detections(&doc.to_string()).unwrap_err();
        match &err {
            IoError::InvalidRecord {
                frame_id,
                index,
                field,
                ..
            } => {
                assert_eq!(frame_id, "frame-000000");
                assert_eq!(*index, 1);
                assert_eq!(*field, "score");
            }
            other => panic!("unexpected error {other:?}"),
        }
        let msg = err.to_string();
        assert!(msg.contains("frame-000000") && msg.contains("score"), "{msg}");
    }

    #[test]
    fn mutated_fields_are_rejected_one_by_one() {
        // Each mutation breaks exactly one invariant; the loader must name
        // the right field every time.
        let mutations: Vec<(&str, Box<dyn Fn(&mut serde_json::Value)>)> = vec![
            ("bbox", Box::new(|d| d["frames"][0]["detections"][0]["size"] = serde_json::json!([4.0, 0.0, 1.8]))),
            ("bbox", Box::new(|d| d["frames"][0]["detections"][0]["size"] = serde_json::json!([4.0, -1.0, 1.8]))),
            ("score", Box::new(|d| d["frames"][0]["detections"][0]["score"] = (-0.1).into())),
            ("coarse_score", Box::new(|d| d["frames"][0]["detections"][1]["coarse_score"] = 2.0.into())),
            ("object_score", Box::new(|d| d["frames"][0]["detections"][1]["object_score"] = (-1.0).into())),
        ];
        for (expected_field, mutate) in mutations {
            let mut doc = sample_detections_json();
            mutate(&mut doc);
            let err = parse_detections(&doc.to_string()).unwrap_err();
            match err {
                IoError::InvalidRecord { field, .. } => assert_eq!(field, expected_field),
                other => panic!("expected InvalidRecord, got {other:?}"),
            }
        }
    }

    #[test]
    fn groundtruth_round_trip() {
        let text = serde_json::json!({
            "schema_version": GROUND_TRUTH_SCHEMA,
            "frames": [
                {
                    "frame_id": "frame-000000",
                    "boxes": [
                        {"class_name": "car", "center": [0.0, 0.0, 0.0], "size": [4.0, 2.0, 1.8], "yaw": 0.0},
                        {"class_name": "child", "center": [3.0, 1.0, 0.0], "size": [0.5, 0.5, 1.1], "yaw": 1.0}
                    ]
                }
            ]
        })
        .to_string();
        let gts = parse_groundtruth(&text).unwrap();
        assert_eq!(gts.len(), 2);
        assert_eq!(gts[1].id, 1);
        let reparsed = parse_groundtruth(&groundtruth_to_json(&gts)).unwrap();
        assert_eq!(gts, reparsed);
    }

    #[test]
    fn detections_2d_round_trip_and_validation() {
        let text = serde_json::json!({
            "schema_version": DETECTIONS_2D_SCHEMA,
            "frames": [
                {
                    "frame_id": "frame-000000",
                    "detections": [
                        {"camera_id": "cam0", "class_name": "car", "min": [10.0, 20.0], "max": [110.0, 90.0], "score": 0.8}
                    ]
                }
            ]
        })
        .to_string();
        let dets = parse_detections_2d(&text).unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].camera_id, "cam0");
        let reparsed = parse_detections_2d(&detections_2d_to_json(&dets)).unwrap();
        assert_eq!(dets, reparsed);

        let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        doc["frames"][0]["detections"][0]["max"] = serde_json::json!([5.0, 90.0]);
        let err = parse_detections_2d(&doc.to_string()).unwrap_err();
        assert!(matches!(err, IoError::InvalidRecord { field: "rect", .. }), "{err}");
    }

    #[test]
    fn calibrations_round_trip_and_validation() {
        let text = serde_json::json!({
            "schema_version": CALIBRATIONS_SCHEMA,
            "frames": [
                {
                    "frame_id": "frame-000000",
                    "cameras": [
                        {
                            "camera_id": "cam0",
                            "intrinsics": [[100.0, 0.0, 320.0], [0.0, 100.0, 240.0], [0.0, 0.0, 1.0]],
                            "rotation": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
                            "translation": [0.0, 0.0, 0.0],
                            "image_width": 640,
                            "image_height": 480
                        }
                    ]
                }
            ]
        })
        .to_string();
        let cals = parse_calibrations(&text).unwrap();
        assert_eq!(cals.len(), 1);
        assert_eq!(cals[0].camera.camera_id, "cam0");
        let reparsed = parse_calibrations(&calibrations_to_json(&cals)).unwrap();
        assert_eq!(cals, reparsed);

        // Break orthonormality; the loader must point at the camera record.
        let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        doc["frames"][0]["cameras"][0]["rotation"][0][0] = 2.0.into();
        let err = parse_calibrations(&doc.to_string()).unwrap_err();
        assert!(matches!(err, IoError::InvalidRecord { field: "camera", .. }), "{err}");
    }

    #[test]
    fn fusion_config_file_round_trip() {
        let cfg = FusionConfig::<f64>::default();
        let text = fusion_config_to_json(&cfg);
        assert!(text.contains(FUSION_CONFIG_SCHEMA));
        assert_eq!(parse_fusion_config(&text).unwrap(), cfg);

        // Version gate applies to configs too.
        let bad = text.replace(FUSION_CONFIG_SCHEMA, "tail3d/fusion-config/0");
        assert!(matches!(parse_fusion_config(&bad), Err(IoError::Schema { .. })));

        // Defaults fill in anything missing.
        let sparse = serde_json::json!({
            "schema_version": FUSION_CONFIG_SCHEMA,
            "filter_radius": 2.5
        })
        .to_string();
        let parsed = parse_fusion_config(&sparse).unwrap();
        assert_eq!(parsed.filter_radius, 2.5);
        assert_eq!(parsed.rescore_match_multiplier, 1.25);
    }

    #[test]
    fn hierarchy_file_round_trip() {
        let h = ClassHierarchy::nuscenes();
        let text = hierarchy_to_json(&h);
        assert!(text.contains(HIERARCHY_SCHEMA));
        let back = parse_hierarchy(&text).unwrap();
        assert_eq!(back.root(), h.root());
        assert_eq!(back.fine_classes(), h.fine_classes());
        assert_eq!(back.coarse_classes(), h.coarse_classes());

        let bad = text.replace(HIERARCHY_SCHEMA, "tail3d/hierarchy/9");
        assert!(matches!(parse_hierarchy(&bad), Err(IoError::Schema { .. })));

        // Structural validation still runs behind the envelope.
        let dup = serde_json::json!({
            "schema_version": HIERARCHY_SCHEMA,
            "root": "object",
            "children": { "vehicle": ["car", "car"] }
        })
        .to_string();
        assert!(matches!(parse_hierarchy(&dup), Err(IoError::Hierarchy(_))));
    }

    #[test]
    fn report_files_and_csv() {
        let gts = vec![GroundTruth3D::<f64> {
            id: 0,
            frame_id: "f0".to_string(),
            class_name: "car".to_string(),
            bbox: Box3D::new([0.0, 0.0, 0.0], [4.0, 2.0, 1.8], 0.0).unwrap(),
        }];
        let dets = vec![Detection3D::<f64> {
            id: 0,
            frame_id: "f0".to_string(),
            class_name: "car".to_string(),
            bbox: Box3D::new([0.1, 0.0, 0.0], [4.0, 2.0, 1.8], 0.0).unwrap(),
            score: 0.9,
            coarse_score: None,
            object_score: None,
        }];
        let h = ClassHierarchy::nuscenes();
        let report =
            crate::metrics::evaluate(&dets, &gts, &h, &crate::metrics::EvalConfig::default())
                .unwrap();
        let json = report_to_json(&report);
        assert!(json.contains(REPORT_SCHEMA));
        assert!(json.contains("per_class_threshold"));

        let csv = report_to_csv(&report);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("class,threshold,lca_level,ap"));
        // 1 class x 4 thresholds x 3 levels.
        assert_eq!(csv.lines().count(), 13);
        assert!(csv.contains("car,0.5,0,1"));
    }

    #[test]
    fn confusion_files_and_csv() {
        let matrix = ConfusionMatrix::<f64> {
            superclass: "pedestrian".to_string(),
            classes: vec!["adult".to_string(), "child".to_string()],
            rates: vec![vec![0.75, 0.25], vec![0.0, 0.0]],
            row_matches: vec![4, 0],
        };
        let json = confusion_to_json(&matrix);
        assert!(json.contains(CONFUSION_SCHEMA));
        let csv = confusion_to_csv(&matrix);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "class,adult,child,matches");
        assert_eq!(lines[1], "adult,0.75,0.25,4");
        assert_eq!(lines[2], "child,0,0,0");
    }
}
