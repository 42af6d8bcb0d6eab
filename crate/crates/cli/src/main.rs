//! `chromsep` command line: generate, corrupt, segment, evaluate, render.
//!
//! Every subcommand accepts `--config FILE` holding the same settings as
//! JSON. Relative paths in the file are taken relative to the file itself;
//! flags given on the command line override file values.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chromsep::io::read_config;
use chromsep::pipeline::{
    self, CorruptConfig, EvaluateConfig, GenerateConfig, RenderConfig, RenderKind, SegmentConfig,
};
use chromsep::synthgen::AssignmentRule;
use chromsep::{Error, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "chromsep", version, about = "Separate overlapping chromosomes from orientation and class layers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a synthetic dataset of overlapping and touching pairs.
    Generate(GenerateArgs),
    /// Emulate imperfect network predictions for a dataset.
    Corrupt(CorruptArgs),
    /// Separate instances from predicted (or ground-truth) layers.
    Segment(SegmentArgs),
    /// Score predictions and instances against the ground truth.
    Evaluate(EvaluateArgs),
    /// Colour-code a layer file as an RGB PNG.
    Render(RenderArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output dataset directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Total number of pairs across all splits.
    #[arg(long)]
    pairs: Option<usize>,
    /// Bank shapes per split as train,val,test.
    #[arg(long, value_parser = parse_triple)]
    splits: Option<[usize; 3]>,
    /// Canvas size as width,height.
    #[arg(long, value_parser = parse_pair)]
    canvas: Option<[usize; 2]>,
    /// Class assignment rule (length_wise, orientation_wise, position_wise or random).
    #[arg(long)]
    rule: Option<AssignmentRule>,
    /// Fraction of pairs placed touching without overlap.
    #[arg(long)]
    touch_fraction: Option<f64>,
    /// Minimum axial separation between the two shapes, degrees.
    #[arg(long)]
    min_separation: Option<f64>,
}

#[derive(Args)]
struct CorruptArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    boundary_flip_rate: Option<f64>,
    #[arg(long)]
    boundary_band: Option<usize>,
    #[arg(long)]
    orientation_noise_sigma: Option<f64>,
    #[arg(long)]
    orientation_dropout_rate: Option<f64>,
    #[arg(long)]
    speckle_rate: Option<f64>,
}

#[derive(Args)]
struct SegmentArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Prediction or dataset directory.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    min_overlap_area: Option<usize>,
    #[arg(long)]
    min_segment_area: Option<usize>,
    #[arg(long)]
    orientation_merge_threshold: Option<f64>,
    #[arg(long)]
    near_overlap_radius: Option<usize>,
    #[arg(long)]
    merge_band_width: Option<usize>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory with the ground truth.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Prediction directory from `corrupt`.
    #[arg(long)]
    prediction: Option<PathBuf>,
    /// Segmentation directory from `segment`.
    #[arg(long)]
    instances: Option<PathBuf>,
    /// Report file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Layer file to render.
    #[arg(long)]
    input: Option<PathBuf>,
    /// semantic4, semantic3, mask, orientation, instances or image.
    #[arg(long)]
    kind: Option<RenderKind>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_list<const N: usize>(s: &str) -> std::result::Result<[usize; N], String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    parts.try_into().map_err(|v: Vec<usize>| format!("expected {N} comma-separated values, got {}", v.len()))
}

fn parse_triple(s: &str) -> std::result::Result<[usize; 3], String> {
    parse_list(s)
}

fn parse_pair(s: &str) -> std::result::Result<[usize; 2], String> {
    parse_list(s)
}

/// Loads `path` (or the defaults) and resolves its relative paths.
fn load<T>(path: Option<&Path>, resolve: impl FnOnce(&mut T, &Path)) -> Result<T>
where
    T: Default + serde::de::DeserializeOwned,
{
    let Some(path) = path else {
        return Ok(T::default());
    };
    let mut config: T = read_config(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    resolve(&mut config, base);
    Ok(config)
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn require(path: &Path, name: &str) -> Result<()> {
    if path.as_os_str().is_empty() {
        return Err(Error::Config(format!("missing --{name}")));
    }
    Ok(())
}

fn run(command: Command) -> Result<String> {
    match command {
        Command::Generate(a) => {
            let mut c: GenerateConfig = load(a.config.as_deref(), GenerateConfig::resolve_paths)?;
            set(&mut c.out, a.out);
            set(&mut c.seed, a.seed);
            set(&mut c.pairs, a.pairs);
            set(&mut c.splits, a.splits);
            set(&mut c.canvas, a.canvas);
            set(&mut c.rule, a.rule);
            set(&mut c.touch_fraction, a.touch_fraction);
            if a.min_separation.is_some() {
                c.min_separation = a.min_separation;
            }
            require(&c.out, "out")?;
            let manifest = pipeline::generate(&c)?;
            Ok(format!("wrote {} samples to {}", manifest.samples.len(), c.out.display()))
        }
        Command::Corrupt(a) => {
            let mut c: CorruptConfig = load(a.config.as_deref(), CorruptConfig::resolve_paths)?;
            set(&mut c.input, a.input);
            set(&mut c.out, a.out);
            let p = &mut c.profile;
            set(&mut p.seed, a.seed);
            set(&mut p.boundary_flip_rate, a.boundary_flip_rate);
            set(&mut p.boundary_band, a.boundary_band);
            set(&mut p.orientation_noise_sigma, a.orientation_noise_sigma);
            set(&mut p.orientation_dropout_rate, a.orientation_dropout_rate);
            set(&mut p.speckle_rate, a.speckle_rate);
            require(&c.input, "input")?;
            require(&c.out, "out")?;
            let manifest = pipeline::corrupt(&c)?;
            Ok(format!("wrote {} predictions to {}", manifest.samples.len(), c.out.display()))
        }
        Command::Segment(a) => {
            let mut c: SegmentConfig = load(a.config.as_deref(), SegmentConfig::resolve_paths)?;
            set(&mut c.input, a.input);
            set(&mut c.out, a.out);
            let p = &mut c.params;
            set(&mut p.min_overlap_area, a.min_overlap_area);
            set(&mut p.min_segment_area, a.min_segment_area);
            set(&mut p.orientation_merge_threshold, a.orientation_merge_threshold);
            set(&mut p.near_overlap_radius, a.near_overlap_radius);
            set(&mut p.merge_band_width, a.merge_band_width);
            require(&c.input, "input")?;
            require(&c.out, "out")?;
            let manifest = pipeline::segment(&c)?;
            Ok(format!("segmented {} samples into {}", manifest.samples.len(), c.out.display()))
        }
        Command::Evaluate(a) => {
            let mut c: EvaluateConfig = load(a.config.as_deref(), EvaluateConfig::resolve_paths)?;
            set(&mut c.truth, a.truth);
            set(&mut c.out, a.out);
            if a.prediction.is_some() {
                c.prediction = a.prediction;
            }
            if a.instances.is_some() {
                c.instances = a.instances;
            }
            require(&c.truth, "truth")?;
            require(&c.out, "out")?;
            let report = pipeline::evaluate(&c)?;
            Ok(format!("scored {} samples into {}", report.samples.len(), c.out.display()))
        }
        Command::Render(a) => {
            let mut c: RenderConfig = load(a.config.as_deref(), RenderConfig::resolve_paths)?;
            set(&mut c.input, a.input);
            set(&mut c.kind, a.kind);
            set(&mut c.out, a.out);
            require(&c.input, "input")?;
            require(&c.out, "out")?;
            pipeline::render(&c)?;
            Ok(format!("wrote {}", c.out.display()))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
