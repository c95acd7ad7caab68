//! Command-line front end: evaluation, fusion, NMS, confusion analysis and
//! synthetic scene generation over the JSON file formats.
//!
//! Every run writes a manifest recording the resolved configuration and
//! SHA-256 digests of inputs and outputs. Configuration comes from files
//! and flags only; no environment variables.
//!
//! Exit codes: 0 success, 2 command-line usage error, 3 file access error,
//! 4 malformed or invalid input file, 5 evaluation error (bad metric
//! config, unknown class or superclass, zero ground truth), 6 fusion error
//! (missing calibration or auxiliary score).

mod manifest;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tail3d::fusion::{self, FusionError, OverlapRule};
use tail3d::geometry::{within_class_nms, GeometryError, NmsMode};
use tail3d::hierarchy::{
    Bucket, ClassHierarchy, HierarchyError, DEFAULT_FEW_THRESHOLD, DEFAULT_MANY_THRESHOLD,
};
use tail3d::io::{self, IoError};
use tail3d::matching::{Detection3D, MatchError};
use tail3d::metrics::{
    self, ApIntegration, ClipBounds, MetricsError, DEFAULT_CONFUSION_RADIUS,
};
use tail3d::{APReport, EvalConfig, FusionConfig};

use manifest::ManifestBuilder;

#[derive(Parser)]
#[command(
    name = "tail3d",
    version,
    about = "Evaluation toolkit for long-tailed 3D object detection",
    after_help = "Exit codes: 0 ok, 2 usage, 3 file access, 4 bad input file, \
                  5 evaluation error, 6 fusion error."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score detections against ground truth: distance-threshold mAP plus
    /// hierarchy-aware AP at the configured LCA levels
    Eval(EvalArgs),
    /// Keep only LiDAR detections corroborated by a nearby RGB detection
    Filter(FilterArgs),
    /// Reweight LiDAR scores by 2D overlap in calibrated cameras
    Rescore(RescoreArgs),
    /// Filter, then rescore the survivors
    Fuse(FuseArgs),
    /// Within-class non-maximum suppression
    Nms(NmsArgs),
    /// Misclassification matrix among the fine classes of one superclass
    Confusion(ConfusionArgs),
    /// Draw a synthetic scene from a spec file
    Generate(GenerateArgs),
}

#[derive(Args)]
struct EvalArgs {
    /// Ground-truth file
    #[arg(long)]
    gt: PathBuf,
    /// Detections file
    #[arg(long)]
    dets: PathBuf,
    /// Hierarchy preset name (`nuscenes`) or path to a hierarchy file
    #[arg(long, default_value = "nuscenes")]
    hierarchy: String,
    /// Matching thresholds in meters, comma separated
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0, 4.0])]
    thresholds: Vec<f64>,
    /// LCA levels to evaluate, comma separated
    #[arg(long, value_delimiter = ',', default_values_t = [0u8, 1, 2])]
    lca_levels: Vec<u8>,
    /// Ground-truth count above which a class is in the "many" bucket
    #[arg(long, default_value_t = DEFAULT_MANY_THRESHOLD)]
    many_threshold: u64,
    /// Ground-truth count below which a class is in the "few" bucket
    #[arg(long, default_value_t = DEFAULT_FEW_THRESHOLD)]
    few_threshold: u64,
    /// Precision-recall integration rule
    #[arg(long, default_value = "interpolated",
          value_parser = ["interpolated", "trapezoidal"])]
    integration: String,
    /// Drop grid points at or below this recall (needs --min-precision)
    #[arg(long, requires = "min_precision")]
    min_recall: Option<f64>,
    /// Precision floor subtracted before averaging (needs --min-recall)
    #[arg(long, requires = "min_recall")]
    min_precision: Option<f64>,
    /// Report document path
    #[arg(long, default_value = "report.json")]
    report_out: PathBuf,
    /// Flattened per-class CSV path
    #[arg(long, default_value = "report.csv")]
    csv_out: PathBuf,
    /// Manifest path (default: <report-out>.manifest.json)
    #[arg(long)]
    manifest_out: Option<PathBuf>,
}

#[derive(Args)]
struct FilterArgs {
    /// LiDAR detections file
    #[arg(long)]
    lidar: PathBuf,
    /// RGB-based 3D detections file
    #[arg(long)]
    rgb: PathBuf,
    /// Fusion config file; flags below override individual fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corroboration radius in meters
    #[arg(long)]
    filter_radius: Option<f64>,
    /// Require the corroborating detection to share the fine class
    #[arg(long)]
    class_aware: Option<bool>,
    /// Output detections file
    #[arg(long, default_value = "filtered.json")]
    out: PathBuf,
    /// Manifest path (default: <out>.manifest.json)
    #[arg(long)]
    manifest_out: Option<PathBuf>,
}

#[derive(Args)]
struct RescoreArgs {
    /// LiDAR detections file
    #[arg(long)]
    lidar: PathBuf,
    /// 2D detections file
    #[arg(long)]
    rgb2d: PathBuf,
    /// Camera calibrations file
    #[arg(long)]
    calibrations: PathBuf,
    /// Fusion config file; flags below override individual fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// Score multiplier for detections with a 2D match
    #[arg(long)]
    match_multiplier: Option<f64>,
    /// Score multiplier for detections without a 2D match
    #[arg(long)]
    nonmatch_multiplier: Option<f64>,
    /// What counts as 2D overlap
    #[arg(long, value_parser = ["any-overlap", "iou-floor"])]
    overlap_rule: Option<String>,
    /// Minimum IoU for the iou-floor rule
    #[arg(long)]
    iou_floor: Option<f64>,
    /// Output detections file
    #[arg(long, default_value = "rescored.json")]
    out: PathBuf,
    /// Manifest path (default: <out>.manifest.json)
    #[arg(long)]
    manifest_out: Option<PathBuf>,
}

#[derive(Args)]
struct FuseArgs {
    /// LiDAR detections file
    #[arg(long)]
    lidar: PathBuf,
    /// RGB-based 3D detections file (filter stage)
    #[arg(long)]
    rgb: PathBuf,
    /// 2D detections file (rescore stage)
    #[arg(long)]
    rgb2d: PathBuf,
    /// Camera calibrations file
    #[arg(long)]
    calibrations: PathBuf,
    /// Fusion config file; flags below override individual fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corroboration radius in meters
    #[arg(long)]
    filter_radius: Option<f64>,
    /// Require the corroborating detection to share the fine class
    #[arg(long)]
    class_aware: Option<bool>,
    /// Score multiplier for detections with a 2D match
    #[arg(long)]
    match_multiplier: Option<f64>,
    /// Score multiplier for detections without a 2D match
    #[arg(long)]
    nonmatch_multiplier: Option<f64>,
    /// What counts as 2D overlap
    #[arg(long, value_parser = ["any-overlap", "iou-floor"])]
    overlap_rule: Option<String>,
    /// Minimum IoU for the iou-floor rule
    #[arg(long)]
    iou_floor: Option<f64>,
    /// Output detections file
    #[arg(long, default_value = "fused.json")]
    out: PathBuf,
    /// Manifest path (default: <out>.manifest.json)
    #[arg(long)]
    manifest_out: Option<PathBuf>,
}

#[derive(Args)]
struct NmsArgs {
    /// Detections file (suppression runs independently per class)
    #[arg(long)]
    dets: PathBuf,
    /// Duplicate criterion
    #[arg(long, default_value = "center-distance",
          value_parser = ["center-distance", "bev-iou"])]
    mode: String,
    /// Meters for center-distance, IoU for bev-iou
    #[arg(long)]
    threshold: f64,
    /// Output detections file
    #[arg(long, default_value = "nms.json")]
    out: PathBuf,
    /// Manifest path (default: <out>.manifest.json)
    #[arg(long)]
    manifest_out: Option<PathBuf>,
}

#[derive(Args)]
struct ConfusionArgs {
    /// Ground-truth file
    #[arg(long)]
    gt: PathBuf,
    /// Detections file
    #[arg(long)]
    dets: PathBuf,
    /// Hierarchy preset name (`nuscenes`) or path to a hierarchy file
    #[arg(long, default_value = "nuscenes")]
    hierarchy: String,
    /// Coarse class whose members to disambiguate
    #[arg(long)]
    superclass: String,
    /// Pairing radius in meters
    #[arg(long, default_value_t = DEFAULT_CONFUSION_RADIUS)]
    radius: f64,
    /// Matrix document path
    #[arg(long, default_value = "confusion.json")]
    out: PathBuf,
    /// Matrix CSV path
    #[arg(long, default_value = "confusion.csv")]
    csv_out: PathBuf,
    /// Manifest path (default: <out>.manifest.json)
    #[arg(long)]
    manifest_out: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    /// Synthetic spec file
    #[arg(long)]
    spec: PathBuf,
    /// Directory for ground_truth.json, detections.json and ledger.json
    #[arg(long)]
    out_dir: PathBuf,
    /// Hierarchy preset name (`nuscenes`) or path to a hierarchy file
    #[arg(long, default_value = "nuscenes")]
    hierarchy: String,
    /// Manifest path (default: <out-dir>/manifest.json)
    #[arg(long)]
    manifest_out: Option<PathBuf>,
}

/// Failure classes, each with its own exit code.
#[derive(Debug)]
enum Failure {
    /// Could not read or write a file (exit 3).
    Access(String),
    /// A file was readable but malformed or invalid (exit 4).
    Input(String),
    /// The evaluation itself rejected the request (exit 5).
    Eval(String),
    /// A fusion precondition failed (exit 6).
    Fusion(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Access(_) => 3,
            Failure::Input(_) => 4,
            Failure::Eval(_) => 5,
            Failure::Fusion(_) => 6,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Access(m) | Failure::Input(m) | Failure::Eval(m) | Failure::Fusion(m) => m,
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Read { .. } | IoError::Write { .. } => Failure::Access(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Access(e.to_string())
    }
}

impl From<MetricsError> for Failure {
    fn from(e: MetricsError) -> Self {
        Failure::Eval(e.to_string())
    }
}

impl From<MatchError> for Failure {
    fn from(e: MatchError) -> Self {
        Failure::Eval(e.to_string())
    }
}

impl From<GeometryError> for Failure {
    fn from(e: GeometryError) -> Self {
        Failure::Eval(e.to_string())
    }
}

impl From<HierarchyError> for Failure {
    fn from(e: HierarchyError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<FusionError> for Failure {
    fn from(e: FusionError) -> Self {
        Failure::Fusion(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Eval(args) => run_eval(args),
        Command::Filter(args) => run_filter(args),
        Command::Rescore(args) => run_rescore(args),
        Command::Fuse(args) => run_fuse(args),
        Command::Nms(args) => run_nms(args),
        Command::Confusion(args) => run_confusion(args),
        Command::Generate(args) => run_generate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.exit_code())
        }
    }
}

fn default_manifest_path(primary_out: &Path) -> PathBuf {
    PathBuf::from(format!("{}.manifest.json", primary_out.display()))
}

/// Preset name first, then a file path. A file named like a preset must be
/// addressed as `./nuscenes`.
fn resolve_hierarchy(
    name_or_path: &str,
    mb: &mut ManifestBuilder,
) -> Result<ClassHierarchy, Failure> {
    if let Some(h) = ClassHierarchy::preset(name_or_path) {
        return Ok(h);
    }
    let path = Path::new(name_or_path);
    if path.is_file() {
        mb.add_input("hierarchy", path)?;
        return Ok(io::load_hierarchy(path)?);
    }
    Err(Failure::Input(format!(
        "`{name_or_path}` is neither a hierarchy preset nor a file (presets: nuscenes)"
    )))
}

fn load_base_fusion_config(
    path: Option<&PathBuf>,
    mb: &mut ManifestBuilder,
) -> Result<FusionConfig, Failure> {
    match path {
        Some(p) => {
            mb.add_input("fusion_config", p)?;
            Ok(io::load_fusion_config(p)?)
        }
        None => Ok(FusionConfig::default()),
    }
}

fn parse_overlap_rule(s: &str) -> OverlapRule {
    match s {
        "any-overlap" => OverlapRule::AnyOverlap,
        _ => OverlapRule::IouFloor,
    }
}

fn fusion_config_value(cfg: &FusionConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config serializes")
}

fn run_eval(args: EvalArgs) -> Result<(), Failure> {
    let mut mb = ManifestBuilder::new("eval");
    let hierarchy = resolve_hierarchy(&args.hierarchy, &mut mb)?;
    mb.add_input("ground_truth", &args.gt)?;
    mb.add_input("detections", &args.dets)?;
    let gts = io::load_groundtruth(&args.gt)?;
    let dets = io::load_detections(&args.dets)?;

    let clip = match (args.min_recall, args.min_precision) {
        (Some(min_recall), Some(min_precision)) => Some(ClipBounds {
            min_recall,
            min_precision,
        }),
        _ => None,
    };
    let cfg = EvalConfig {
        thresholds: args.thresholds.clone(),
        lca_levels: args.lca_levels.clone(),
        many_threshold: args.many_threshold,
        few_threshold: args.few_threshold,
        integration: match args.integration.as_str() {
            "trapezoidal" => ApIntegration::Trapezoidal,
            _ => ApIntegration::Interpolated,
        },
        clip,
    };

    let report = metrics::evaluate(&dets, &gts, &hierarchy, &cfg)?;
    io::save_report(&args.report_out, &report)?;
    io::save_report_csv(&args.csv_out, &report)?;
    mb.add_output("report", &args.report_out)?;
    mb.add_output("report_csv", &args.csv_out)?;

    print_summary(&report, &cfg);

    let mut config = serde_json::to_value(&cfg).expect("config serializes");
    config["hierarchy"] = serde_json::Value::String(args.hierarchy.clone());
    mb.set_config(config);
    let manifest_path = args
        .manifest_out
        .unwrap_or_else(|| default_manifest_path(&args.report_out));
    mb.write(&manifest_path)?;
    Ok(())
}

/// AP x100 per bucket and LCA level, one row per level.
fn print_summary(report: &APReport, cfg: &EvalConfig) {
    let cell = |v: Option<f64>| match v {
        Some(ap) => format!("{:.1}", ap * 100.0),
        None => "-".to_string(),
    };
    println!(
        "{:<5} {:>8} {:>8} {:>8} {:>8}",
        "lca", "many", "medium", "few", "all"
    );
    for &lca in &cfg.lca_levels {
        println!(
            "{:<5} {:>8} {:>8} {:>8} {:>8}",
            lca,
            cell(report.bucket_ap(Bucket::Many, lca)),
            cell(report.bucket_ap(Bucket::Medium, lca)),
            cell(report.bucket_ap(Bucket::Few, lca)),
            cell(report.overall_ap(lca)),
        );
    }
    if !report.excluded_classes.is_empty() {
        println!(
            "(no ground truth, excluded: {})",
            report.excluded_classes.join(", ")
        );
    }
}

fn run_filter(args: FilterArgs) -> Result<(), Failure> {
    let mut mb = ManifestBuilder::new("filter");
    let mut cfg = load_base_fusion_config(args.config.as_ref(), &mut mb)?;
    if let Some(radius) = args.filter_radius {
        cfg.filter_radius = radius;
    }
    if let Some(aware) = args.class_aware {
        cfg.filter_class_aware = aware;
    }
    mb.add_input("lidar", &args.lidar)?;
    mb.add_input("rgb", &args.rgb)?;
    let lidar = io::load_detections(&args.lidar)?;
    let rgb = io::load_detections(&args.rgb)?;

    let kept = fusion::filter_by_rgb(&lidar, &rgb, &cfg)?;
    io::save_detections(&args.out, &kept)?;
    mb.add_output("detections", &args.out)?;
    println!("kept {} of {} detections", kept.len(), lidar.len());

    mb.set_config(fusion_config_value(&cfg));
    let manifest_path = args
        .manifest_out
        .unwrap_or_else(|| default_manifest_path(&args.out));
    mb.write(&manifest_path)?;
    Ok(())
}

fn run_rescore(args: RescoreArgs) -> Result<(), Failure> {
    let mut mb = ManifestBuilder::new("rescore");
    let mut cfg = load_base_fusion_config(args.config.as_ref(), &mut mb)?;
    apply_rescore_overrides(
        &mut cfg,
        args.match_multiplier,
        args.nonmatch_multiplier,
        args.overlap_rule.as_deref(),
        args.iou_floor,
    );
    mb.add_input("lidar", &args.lidar)?;
    mb.add_input("rgb2d", &args.rgb2d)?;
    mb.add_input("calibrations", &args.calibrations)?;
    let lidar = io::load_detections(&args.lidar)?;
    let rgb2d = io::load_detections_2d(&args.rgb2d)?;
    let cals = io::load_calibrations(&args.calibrations)?;

    let outcome = fusion::rescore_by_rgb2d_detailed(&lidar, &rgb2d, &cals, &cfg)?;
    io::save_detections(&args.out, &outcome.detections)?;
    mb.add_output("detections", &args.out)?;
    println!(
        "rescored {} detections: {} matched, {} unmatched, {} clamped",
        outcome.detections.len(),
        outcome.stats.matched,
        outcome.stats.unmatched,
        outcome.stats.clamped
    );

    let mut config = fusion_config_value(&cfg);
    config["stats"] = serde_json::to_value(&outcome.stats).expect("stats serialize");
    mb.set_config(config);
    let manifest_path = args
        .manifest_out
        .unwrap_or_else(|| default_manifest_path(&args.out));
    mb.write(&manifest_path)?;
    Ok(())
}

fn apply_rescore_overrides(
    cfg: &mut FusionConfig,
    match_multiplier: Option<f64>,
    nonmatch_multiplier: Option<f64>,
    overlap_rule: Option<&str>,
    iou_floor: Option<f64>,
) {
    if let Some(m) = match_multiplier {
        cfg.rescore_match_multiplier = m;
    }
    if let Some(m) = nonmatch_multiplier {
        cfg.rescore_nonmatch_multiplier = m;
    }
    if let Some(rule) = overlap_rule {
        cfg.rescore_overlap_rule = parse_overlap_rule(rule);
    }
    if let Some(floor) = iou_floor {
        cfg.rescore_iou_floor = floor;
    }
}

fn run_fuse(args: FuseArgs) -> Result<(), Failure> {
    let mut mb = ManifestBuilder::new("fuse");
    let mut cfg = load_base_fusion_config(args.config.as_ref(), &mut mb)?;
    if let Some(radius) = args.filter_radius {
        cfg.filter_radius = radius;
    }
    if let Some(aware) = args.class_aware {
        cfg.filter_class_aware = aware;
    }
    apply_rescore_overrides(
        &mut cfg,
        args.match_multiplier,
        args.nonmatch_multiplier,
        args.overlap_rule.as_deref(),
        args.iou_floor,
    );
    mb.add_input("lidar", &args.lidar)?;
    mb.add_input("rgb", &args.rgb)?;
    mb.add_input("rgb2d", &args.rgb2d)?;
    mb.add_input("calibrations", &args.calibrations)?;
    let lidar = io::load_detections(&args.lidar)?;
    let rgb = io::load_detections(&args.rgb)?;
    let rgb2d = io::load_detections_2d(&args.rgb2d)?;
    let cals = io::load_calibrations(&args.calibrations)?;

    // Same composition as `filter` piped into `rescore`.
    let kept = fusion::filter_by_rgb(&lidar, &rgb, &cfg)?;
    let outcome = fusion::rescore_by_rgb2d_detailed(&kept, &rgb2d, &cals, &cfg)?;
    io::save_detections(&args.out, &outcome.detections)?;
    mb.add_output("detections", &args.out)?;
    println!(
        "fused: kept {} of {} detections; {} matched, {} unmatched, {} clamped",
        outcome.detections.len(),
        lidar.len(),
        outcome.stats.matched,
        outcome.stats.unmatched,
        outcome.stats.clamped
    );

    let mut config = fusion_config_value(&cfg);
    config["stats"] = serde_json::to_value(&outcome.stats).expect("stats serialize");
    mb.set_config(config);
    let manifest_path = args
        .manifest_out
        .unwrap_or_else(|| default_manifest_path(&args.out));
    mb.write(&manifest_path)?;
    Ok(())
}

fn run_nms(args: NmsArgs) -> Result<(), Failure> {
    let mut mb = ManifestBuilder::new("nms");
    mb.add_input("detections", &args.dets)?;
    let dets = io::load_detections(&args.dets)?;
    let mode = match args.mode.as_str() {
        "bev-iou" => NmsMode::BevIou,
        _ => NmsMode::CenterDistance,
    };

    let mut by_class: BTreeMap<&str, Vec<Detection3D<f64>>> = BTreeMap::new();
    for d in &dets {
        by_class
            .entry(d.class_name.as_str())
            .or_default()
            .push(d.clone());
    }
    let mut survivors: Vec<Detection3D<f64>> = Vec::new();
    for class_dets in by_class.values() {
        survivors.extend(within_class_nms(class_dets, mode, args.threshold)?);
    }
    // Ids are file order, so this restores the input ordering.
    survivors.sort_by_key(|d| d.id);

    io::save_detections(&args.out, &survivors)?;
    mb.add_output("detections", &args.out)?;
    println!("kept {} of {} detections", survivors.len(), dets.len());

    mb.set_config(serde_json::json!({
        "mode": args.mode,
        "threshold": args.threshold,
    }));
    let manifest_path = args
        .manifest_out
        .unwrap_or_else(|| default_manifest_path(&args.out));
    mb.write(&manifest_path)?;
    Ok(())
}

fn run_confusion(args: ConfusionArgs) -> Result<(), Failure> {
    let mut mb = ManifestBuilder::new("confusion");
    let hierarchy = resolve_hierarchy(&args.hierarchy, &mut mb)?;
    mb.add_input("ground_truth", &args.gt)?;
    mb.add_input("detections", &args.dets)?;
    let gts = io::load_groundtruth(&args.gt)?;
    let dets = io::load_detections(&args.dets)?;

    let matrix =
        metrics::confusion_matrix(&dets, &gts, &hierarchy, &args.superclass, args.radius)?;
    io::save_confusion(&args.out, &matrix)?;
    io::save_confusion_csv(&args.csv_out, &matrix)?;
    mb.add_output("confusion", &args.out)?;
    mb.add_output("confusion_csv", &args.csv_out)?;

    let widths: Vec<usize> = matrix.classes.iter().map(|c| c.len().max(5)).collect();
    let name_width = widths.iter().max().copied().unwrap_or(5);
    let header: Vec<String> = matrix
        .classes
        .iter()
        .zip(&widths)
        .map(|(c, w)| format!("{c:>w$}"))
        .collect();
    println!("{:<name_width$}  {}  matches", "gt \\ det", header.join("  "));
    for (i, class) in matrix.classes.iter().enumerate() {
        let row: Vec<String> = matrix.rates[i]
            .iter()
            .zip(&widths)
            .map(|(r, w)| format!("{:>w$}", format!("{r:.3}")))
            .collect();
        println!(
            "{:<name_width$}  {}  {}",
            class,
            row.join("  "),
            matrix.row_matches[i]
        );
    }

    mb.set_config(serde_json::json!({
        "hierarchy": args.hierarchy,
        "superclass": args.superclass,
        "radius": args.radius,
    }));
    let manifest_path = args
        .manifest_out
        .unwrap_or_else(|| default_manifest_path(&args.out));
    mb.write(&manifest_path)?;
    Ok(())
}

fn run_generate(args: GenerateArgs) -> Result<(), Failure> {
    let mut mb = ManifestBuilder::new("generate");
    let hierarchy = resolve_hierarchy(&args.hierarchy, &mut mb)?;
    mb.add_input("spec", &args.spec)?;
    let spec = io::load_spec(&args.spec)?;

    let scene = io::generate_scene(&spec, &hierarchy)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let gt_path = args.out_dir.join("ground_truth.json");
    let det_path = args.out_dir.join("detections.json");
    let ledger_path = args.out_dir.join("ledger.json");
    io::save_groundtruth(&gt_path, &scene.ground_truth)?;
    io::save_detections(&det_path, &scene.detections)?;
    io::save_ledger(&ledger_path, &scene.ledger)?;
    mb.add_output("ground_truth", &gt_path)?;
    mb.add_output("detections", &det_path)?;
    mb.add_output("ledger", &ledger_path)?;
    println!(
        "wrote {} ground-truth boxes and {} detections to {}",
        scene.ground_truth.len(),
        scene.detections.len(),
        args.out_dir.display()
    );

    mb.set_config(serde_json::to_value(&spec).expect("spec serializes"));
    let manifest_path = args
        .manifest_out
        .unwrap_or_else(|| args.out_dir.join("manifest.json"));
    mb.write(&manifest_path)?;
    Ok(())
}
