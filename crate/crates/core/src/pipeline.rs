//! File-level orchestration behind the command-line subcommands.
//!
//! Directory layout, shared by every stage:
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/samples/<name>/<layer>.png
//! ```
//!
//! A dataset holds `image`, `semantic4` (pairs only), `semantic3`,
//! `dilated_overlap`, `orientation` and `instances` (+ `instances.json`).
//! A prediction holds `semantic4`, `semantic3`, `dilated_overlap` and
//! `orientation`. A segmentation holds `instances` and `diagnostics.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::emulate::{corrupt_semantic, predict, CorruptionProfile};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::instseg::{segment_instances, PredictionLayers, SegParams};
use crate::io;
use crate::metrics::{instance_report, layer_report, semantic_report, InstanceReport, LayerReport, SemanticReport};
use crate::orientation::OrientationField;
use crate::par;
use crate::synthgen::{
    build_dataset, procedural_bank_with, sample_seed, split_counts, AssignmentRule, DatasetOptions, Pose,
    ShapeParams, SourceShape, Split,
};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifestKind {
    Dataset,
    Prediction,
    Segmentation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankRecord {
    pub source: String,
    pub counts: [usize; 3],
    pub seed: u64,
    pub shape: Option<ShapeParams>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub name: String,
    pub split: Split,
    pub seed: u64,
    pub source_ids: Vec<String>,
    pub poses: Vec<Pose>,
    pub touching: bool,
    /// Layer name → path relative to the manifest directory.
    pub files: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub kind: ManifestKind,
    pub master_seed: u64,
    pub canvas: [usize; 2],
    pub rule: AssignmentRule,
    pub bank: BankRecord,
    pub profile: Option<CorruptionProfile>,
    pub seg_params: Option<SegParams>,
    pub samples: Vec<SampleRecord>,
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let manifest: Manifest = io::read_json(&path)?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(Error::data(
            &path,
            0,
            format!("unsupported schema version {}", manifest.schema_version),
        ));
    }
    Ok(manifest)
}

fn expect_kind(dir: &Path, manifest: &Manifest, kind: ManifestKind) -> Result<()> {
    if manifest.kind == kind {
        Ok(())
    } else {
        Err(Error::data(
            dir.join(MANIFEST),
            0,
            format!("expected a {kind:?} manifest, found {:?}", manifest.kind),
        ))
    }
}

fn sample_file(record: &SampleRecord, layer: &str) -> String {
    format!("samples/{}/{layer}.png", record.name)
}

fn layer_path(dir: &Path, record: &SampleRecord, layer: &str) -> Result<PathBuf> {
    record
        .files
        .get(layer)
        .map(|f| dir.join(f))
        .ok_or_else(|| Error::data(dir.join(MANIFEST), 0, format!("sample {} lists no {layer} file", record.name)))
}

fn ensure_out(out: &Path) -> Result<()> {
    if out.as_os_str().is_empty() {
        return Err(Error::Config("an output path is required".into()));
    }
    Ok(())
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if !p.as_os_str().is_empty() && p.is_relative() {
        *p = base.join(&*p);
    }
}

/// Settings of `generate`. Missing keys in a config file take the defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub out: PathBuf,
    pub seed: u64,
    /// Total pairs, spread over the splits in proportion to `splits`.
    pub pairs: usize,
    /// Procedural bank shapes per split (train, val, test).
    pub splits: [usize; 3],
    pub canvas: [usize; 2],
    pub rule: AssignmentRule,
    pub touch_fraction: f64,
    pub min_separation: Option<f64>,
    /// Fixed shape parameters for every bank shape; sampled when absent.
    pub shape: Option<ShapeParams>,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::new(),
            seed: 0,
            pairs: 12,
            splits: [8, 2, 2],
            canvas: [128, 128],
            rule: AssignmentRule::LengthWise,
            touch_fraction: 0.1,
            min_separation: None,
            shape: None,
        }
    }
}

impl GenerateConfig {
    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.out);
    }
}

fn bank_seed(master_seed: u64) -> u64 {
    sample_seed(master_seed, usize::MAX)
}

/// The procedural source bank a `generate` run draws from.
pub fn bank_for(config: &GenerateConfig) -> Result<Vec<SourceShape>> {
    if let Some(shape) = &config.shape {
        shape.validate().map_err(|e| Error::Config(e.to_string()))?;
    }
    procedural_bank_with(config.splits, bank_seed(config.seed), config.shape.as_ref())
}

pub fn generate(config: &GenerateConfig) -> Result<Manifest> {
    ensure_out(&config.out)?;
    if config.canvas[0] < 16 || config.canvas[1] < 16 {
        return Err(Error::Config(format!("canvas {:?} is below 16x16", config.canvas)));
    }
    for (k, split) in Split::ALL.iter().enumerate() {
        if config.splits[k] < 2 {
            return Err(Error::Config(format!(
                "split {split} has {} source shapes; at least 2 are needed",
                config.splits[k]
            )));
        }
    }
    let bank = bank_for(config)?;
    let counts = split_counts(config.pairs, config.splits);
    let options = DatasetOptions {
        canvas: (config.canvas[0], config.canvas[1]),
        rule: config.rule,
        touch_fraction: config.touch_fraction,
        min_separation: config.min_separation,
        ..DatasetOptions::default()
    };
    let samples = build_dataset(&bank, counts, config.seed, &options)?;

    let records = par::try_map_indexed(samples.len(), |i| {
        let g = &samples[i];
        let s = &g.sample;
        let mut record = SampleRecord {
            name: g.name.clone(),
            split: g.split,
            seed: g.seed,
            source_ids: s.provenance.source_ids.clone(),
            poses: s.provenance.poses.clone(),
            touching: g.touching,
            files: BTreeMap::new(),
        };
        let mut put = |layer: &str| {
            let rel = sample_file(&record, layer);
            record.files.insert(layer.to_string(), rel.clone());
            config.out.join(rel)
        };
        io::write_intensity(&put("image"), &s.image)?;
        if let Some(s4) = &s.semantic4 {
            io::write_label_map(&put("semantic4"), s4)?;
        }
        io::write_label_map(&put("semantic3"), &s.semantic3)?;
        io::write_mask(&put("dilated_overlap"), &s.dilated_overlap)?;
        io::write_orientation(&put("orientation"), &s.orientation)?;
        io::write_instances(&put("instances"), &s.instances, s.dims())?;
        Ok::<_, Error>(record)
    })?;

    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        kind: ManifestKind::Dataset,
        master_seed: config.seed,
        canvas: config.canvas,
        rule: config.rule,
        bank: BankRecord {
            source: "procedural".into(),
            counts: config.splits,
            seed: bank_seed(config.seed),
            shape: config.shape,
        },
        profile: None,
        seg_params: None,
        samples: records,
    };
    io::write_json(&config.out.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

fn read_layers(dir: &Path, record: &SampleRecord) -> Result<PredictionLayers> {
    let semantic3 = io::read_label_map(&layer_path(dir, record, "semantic3")?, 3)?;
    let dilated = io::read_mask(&layer_path(dir, record, "dilated_overlap")?)?;
    let orientation = io::read_orientation(&layer_path(dir, record, "orientation")?)?;
    let path = layer_path(dir, record, "semantic3")?;
    if dilated.dims() != semantic3.dims() || orientation.dims() != semantic3.dims() {
        return Err(Error::data(path, 16, "layer dimensions disagree"));
    }
    PredictionLayers::from_semantic3(&semantic3, dilated, orientation).map_err(|e| Error::data(path, 0, e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorruptConfig {
    /// Dataset directory.
    pub input: PathBuf,
    pub out: PathBuf,
    pub profile: CorruptionProfile,
}

impl Default for CorruptConfig {
    fn default() -> Self {
        Self {
            input: PathBuf::new(),
            out: PathBuf::new(),
            profile: CorruptionProfile::zero(0),
        }
    }
}

impl CorruptConfig {
    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.input);
        resolve(base, &mut self.out);
    }
}

/// Emulated predictions for every dataset sample. Sample `i` uses
/// `profile.for_sample(i)`.
pub fn corrupt(config: &CorruptConfig) -> Result<Manifest> {
    ensure_out(&config.out)?;
    config.profile.validate().map_err(|e| Error::Config(e.to_string()))?;
    let input = read_manifest(&config.input)?;
    expect_kind(&config.input, &input, ManifestKind::Dataset)?;
    let records = par::try_map_indexed(input.samples.len(), |i| {
        let src = &input.samples[i];
        let profile = config.profile.for_sample(i);
        let truth = read_layers(&config.input, src)?;
        let pred = predict(&truth, &profile)?;
        let mut record = SampleRecord {
            files: BTreeMap::new(),
            ..src.clone()
        };
        let mut put = |layer: &str| {
            let rel = sample_file(&record, layer);
            record.files.insert(layer.to_string(), rel.clone());
            config.out.join(rel)
        };
        if src.files.contains_key("semantic4") {
            let s4 = io::read_label_map(&layer_path(&config.input, src, "semantic4")?, 4)?;
            let p4 = CorruptionProfile {
                seed: sample_seed(profile.seed, 4),
                ..profile
            };
            io::write_label_map(&put("semantic4"), &corrupt_semantic(&s4, 4, &p4)?)?;
        }
        io::write_label_map(&put("semantic3"), &pred.semantic3())?;
        io::write_mask(&put("dilated_overlap"), &pred.dilated_overlap)?;
        io::write_orientation(&put("orientation"), &pred.orientation)?;
        Ok::<_, Error>(record)
    })?;
    let manifest = Manifest {
        kind: ManifestKind::Prediction,
        profile: Some(config.profile),
        samples: records,
        ..input
    };
    io::write_json(&config.out.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentConfig {
    /// Prediction (or dataset) directory.
    pub input: PathBuf,
    pub out: PathBuf,
    pub params: SegParams,
}

impl SegmentConfig {
    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.input);
        resolve(base, &mut self.out);
    }
}

/// Runs the instance separation on every sample of a prediction or dataset
/// directory.
pub fn segment(config: &SegmentConfig) -> Result<Manifest> {
    ensure_out(&config.out)?;
    config.params.validate().map_err(|e| Error::Config(e.to_string()))?;
    let input = read_manifest(&config.input)?;
    if input.kind == ManifestKind::Segmentation {
        expect_kind(&config.input, &input, ManifestKind::Prediction)?;
    }
    let records = par::try_map_indexed(input.samples.len(), |i| {
        let src = &input.samples[i];
        let layers = read_layers(&config.input, src)?;
        let (instances, diagnostics) = segment_instances(&layers, &config.params)?;
        let mut record = SampleRecord {
            files: BTreeMap::new(),
            ..src.clone()
        };
        let rel = sample_file(&record, "instances");
        record.files.insert("instances".into(), rel.clone());
        // Keep the largest instances if a corrupted input over-segments.
        let mut masks = instances.masks;
        if masks.len() > io::MAX_INSTANCES {
            let mut order: Vec<usize> = (0..masks.len()).collect();
            order.sort_by_key(|&k| std::cmp::Reverse(masks[k].count()));
            order.truncate(io::MAX_INSTANCES);
            order.sort_unstable();
            masks = order.into_iter().map(|k| masks[k].clone()).collect();
        }
        io::write_instances(&config.out.join(&rel), &masks, layers.dims())?;
        let diag_rel = format!("samples/{}/diagnostics.json", record.name);
        io::write_report(&config.out.join(&diag_rel), &diagnostics)?;
        record.files.insert("diagnostics".into(), diag_rel);
        Ok::<_, Error>(record)
    })?;
    let manifest = Manifest {
        kind: ManifestKind::Segmentation,
        seg_params: Some(config.params.clone()),
        samples: records,
        ..input
    };
    io::write_json(&config.out.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    /// Dataset directory holding the ground truth.
    pub truth: PathBuf,
    /// Prediction directory for the semantic and layer reports.
    pub prediction: Option<PathBuf>,
    /// Segmentation directory for the instance report.
    pub instances: Option<PathBuf>,
    /// Report file.
    pub out: PathBuf,
}

impl EvaluateConfig {
    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.truth);
        resolve(base, &mut self.out);
        if let Some(p) = self.prediction.as_mut() {
            resolve(base, p);
        }
        if let Some(p) = self.instances.as_mut() {
            resolve(base, p);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleEvaluation {
    pub name: String,
    pub split: Split,
    pub semantic: Option<SemanticReport>,
    pub layers: Option<LayerReport>,
    pub instances: Option<InstanceReport>,
}

/// Means over the samples of one split (or all samples).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub samples: usize,
    pub average_iou: Option<f64>,
    pub per_class_iou: BTreeMap<String, f64>,
    pub merged_ch_iou: Option<f64>,
    pub swapped_samples: usize,
    pub background_iou: Option<f64>,
    pub chromosome_iou: Option<f64>,
    pub overlap_iou: Option<f64>,
    pub dilated_overlap_iou: Option<f64>,
    pub orientation_error: Option<f64>,
    pub mean_best_match_iou: Option<f64>,
    pub unmatched_predictions: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub samples: Vec<SampleEvaluation>,
    /// Keyed by split name plus `all`.
    pub aggregate: BTreeMap<String, Aggregate>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

fn aggregate(samples: &[&SampleEvaluation]) -> Aggregate {
    let sem: Vec<&SemanticReport> = samples.iter().filter_map(|s| s.semantic.as_ref()).collect();
    let lay: Vec<&LayerReport> = samples.iter().filter_map(|s| s.layers.as_ref()).collect();
    let ins: Vec<&InstanceReport> = samples.iter().filter_map(|s| s.instances.as_ref()).collect();
    let mut per_class = BTreeMap::new();
    for name in crate::metrics::SEMANTIC4_CLASSES {
        if let Some(m) = mean(sem.iter().map(|r| r.per_class_iou[name])) {
            per_class.insert(name.to_string(), m);
        }
    }
    Aggregate {
        samples: samples.len(),
        average_iou: mean(sem.iter().map(|r| r.average_iou)),
        per_class_iou: per_class,
        merged_ch_iou: mean(sem.iter().map(|r| r.merged_ch_iou)),
        swapped_samples: sem.iter().filter(|r| r.swapped).count(),
        background_iou: mean(lay.iter().map(|r| r.background_iou)),
        chromosome_iou: mean(lay.iter().map(|r| r.chromosome_iou)),
        overlap_iou: mean(lay.iter().map(|r| r.overlap_iou)),
        dilated_overlap_iou: mean(lay.iter().map(|r| r.dilated_overlap_iou)),
        orientation_error: mean(lay.iter().filter_map(|r| r.orientation_error)),
        mean_best_match_iou: mean(ins.iter().map(|r| r.mean_best_match_iou)),
        unmatched_predictions: ins.iter().map(|r| r.unmatched_predictions).sum(),
    }
}

fn aligned(truth: &Manifest, other: &Manifest, other_dir: &Path) -> Result<()> {
    let names = |m: &Manifest| m.samples.iter().map(|s| s.name.clone()).collect::<Vec<_>>();
    if names(truth) != names(other) {
        return Err(Error::data(
            other_dir.join(MANIFEST),
            0,
            "sample names do not match the truth manifest",
        ));
    }
    Ok(())
}

/// Per-sample and aggregate metrics against a dataset directory.
pub fn evaluate(config: &EvaluateConfig) -> Result<Report> {
    ensure_out(&config.out)?;
    let truth = read_manifest(&config.truth)?;
    expect_kind(&config.truth, &truth, ManifestKind::Dataset)?;
    let prediction = match &config.prediction {
        Some(dir) => {
            let m = read_manifest(dir)?;
            expect_kind(dir, &m, ManifestKind::Prediction)?;
            aligned(&truth, &m, dir)?;
            Some((dir, m))
        }
        None => None,
    };
    let segmentation = match &config.instances {
        Some(dir) => {
            let m = read_manifest(dir)?;
            expect_kind(dir, &m, ManifestKind::Segmentation)?;
            aligned(&truth, &m, dir)?;
            Some((dir, m))
        }
        None => None,
    };

    let samples = par::try_map_indexed(truth.samples.len(), |i| {
        let t = &truth.samples[i];
        let mut eval = SampleEvaluation {
            name: t.name.clone(),
            split: t.split,
            semantic: None,
            layers: None,
            instances: None,
        };
        if let Some((dir, m)) = &prediction {
            let p = &m.samples[i];
            let truth_layers = read_layers(&config.truth, t)?;
            let pred_layers = read_layers(dir, p)?;
            eval.layers = Some(layer_report(&pred_layers, &truth_layers)?);
            if let (Some(tf), Some(_)) = (t.files.get("semantic4"), p.files.get("semantic4")) {
                let t4 = io::read_label_map(&config.truth.join(tf), 4)?;
                let p4 = io::read_label_map(&layer_path(dir, p, "semantic4")?, 4)?;
                eval.semantic = Some(semantic_report(&p4, &t4)?);
            }
        }
        if let Some((dir, m)) = &segmentation {
            let truth_instances = io::read_instances(&layer_path(&config.truth, t, "instances")?)?;
            let pred_instances = io::read_instances(&layer_path(dir, &m.samples[i], "instances")?)?;
            eval.instances = Some(instance_report(&pred_instances.masks, &truth_instances.masks)?);
        }
        Ok::<_, Error>(eval)
    })?;

    let mut agg = BTreeMap::new();
    agg.insert("all".to_string(), aggregate(&samples.iter().collect::<Vec<_>>()));
    for split in Split::ALL {
        let subset: Vec<&SampleEvaluation> = samples.iter().filter(|s| s.split == split).collect();
        if !subset.is_empty() {
            agg.insert(split.to_string(), aggregate(&subset));
        }
    }
    let report = Report {
        schema_version: SCHEMA_VERSION,
        samples,
        aggregate: agg,
    };
    io::write_report(&config.out, &report)?;
    Ok(report)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderKind {
    #[default]
    Semantic4,
    Semantic3,
    Mask,
    Orientation,
    Instances,
    Image,
}

impl std::str::FromStr for RenderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown render kind {s:?}")))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub input: PathBuf,
    pub kind: RenderKind,
    pub out: PathBuf,
}

impl RenderConfig {
    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.input);
        resolve(base, &mut self.out);
    }
}

const BLUE: [u8; 3] = [40, 70, 200];
const GREEN: [u8; 3] = [40, 180, 70];
const ORANGE: [u8; 3] = [245, 150, 30];
const RED: [u8; 3] = [220, 30, 30];
const PALETTE: [[u8; 3]; 8] = [
    GREEN,
    ORANGE,
    [150, 80, 220],
    [30, 190, 200],
    [230, 210, 40],
    [240, 90, 170],
    [140, 110, 60],
    [120, 200, 140],
];

/// HSV with full saturation and value; `hue` in degrees.
pub fn hue_to_rgb(hue: f64) -> [u8; 3] {
    let h = hue.rem_euclid(360.0) / 60.0;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    let (r, g, b) = match h as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    [r, g, b].map(|c: f64| (c * 255.0).round() as u8)
}

/// Colour for an orientation: hue = 2θ, so θ and θ + 180° share a colour.
pub fn orientation_color(field: &OrientationField, i: usize) -> [u8; 3] {
    field.angle_at(i).map_or([0, 0, 0], |a| hue_to_rgb(2.0 * a.degrees()))
}

fn colorize<T>(grid: &Grid<T>, f: impl Fn(usize, &T) -> [u8; 3]) -> Vec<u8> {
    grid.iter().enumerate().flat_map(|(i, v)| f(i, v)).collect()
}

/// Writes a colour overlay of one layer file.
pub fn render(config: &RenderConfig) -> Result<()> {
    ensure_out(&config.out)?;
    let path = &config.input;
    let (w, h, rgb) = match config.kind {
        RenderKind::Semantic4 => {
            let m = io::read_label_map(path, 4)?;
            let colors = [BLUE, GREEN, ORANGE, RED];
            (m.width(), m.height(), colorize(&m, |_, &c| colors[c as usize]))
        }
        RenderKind::Semantic3 => {
            let m = io::read_label_map(path, 3)?;
            let colors = [BLUE, ORANGE, GREEN];
            (m.width(), m.height(), colorize(&m, |_, &c| colors[c as usize]))
        }
        RenderKind::Mask => {
            let m = io::read_mask(path)?;
            (m.width(), m.height(), colorize(&m, |_, &b| if b { [255; 3] } else { [0; 3] }))
        }
        RenderKind::Image => {
            let m = io::read_intensity(path)?;
            (m.width(), m.height(), colorize(&m, |_, &v| [(v * 255.0).round() as u8; 3]))
        }
        RenderKind::Orientation => {
            let f = io::read_orientation(path)?;
            (f.width(), f.height(), colorize(&f.valid, |i, _| orientation_color(&f, i)))
        }
        RenderKind::Instances => {
            let set = io::read_instances(path)?;
            let dims = set.masks.first().map(|m| m.dims());
            let (w, h) = match dims {
                Some(d) => d,
                None => {
                    let side: io::InstanceSidecar = io::read_json(&path.with_extension("json"))?;
                    (side.width, side.height)
                }
            };
            let grid = Grid::from_fn(w, h, |x, y| {
                let covering: Vec<usize> = (0..set.len()).filter(|&k| *set.masks[k].get(x, y)).collect();
                match covering.len() {
                    0 => BLUE,
                    1 => PALETTE[covering[0]],
                    _ => RED,
                }
            });
            (w, h, colorize(&grid, |_, &c| c))
        }
    };
    io::write_rgb(&config.out, w, h, rgb)
}
