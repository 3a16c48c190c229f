use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use collage_forge::collage::{SynthesisConfig, DEFAULT_MAX_BOXES, DEFAULT_MAX_PLACE_ATTEMPTS, DEFAULT_MIN_COLLAGES};
use collage_forge::dataset_io::{merge_manifests, CocoDataset, OutputLayout};
use collage_forge::evaluation::{evaluate, read_detections, EvalConfig, GroundTruth};
use collage_forge::fixture::{make_fixture, FixtureParams, FixtureSpec};
use collage_forge::ingest::{load_dataset, write_frames_manifest, DatasetRoot, DEFAULT_FPS};
use collage_forge::mining::{mine_backgrounds, MiningConfig};
use collage_forge::model::Mode;
use collage_forge::pipeline::{prepare, synthesize};
use collage_forge::{Error, ErrorKind};

const SEED_ENV: &str = "COLLAGE_FORGE_SEED";
const RUN_META: &str = "run.meta";

#[derive(Parser, Debug)]
#[command(name = "collage-forge", version, about = "Context-matched collage synthesis and detection metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the species-free background frames as a frames manifest.
    Mine {
        #[command(flatten)]
        data: DataArgs,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Plan, render and write a collage dataset.
    Synthesize(SynthesizeArgs),
    /// Score detections against a COCO-style annotation file.
    Evaluate {
        annotations: PathBuf,
        detections: PathBuf,
        /// Print every aggregate row, not just mAP@0.5.
        #[arg(long)]
        full_suite: bool,
    },
    /// Print per-combo background and box counts.
    Stats {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Generate a synthetic dataset.
    Fixture(FixtureArgs),
    /// Concatenate two annotation files with dense re-keyed ids.
    Merge {
        original: PathBuf,
        collage: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Dataset directory holding frames.csv, boxes.csv, cabof.csv and substrate.csv.
    root: PathBuf,
    /// Seconds removed on each side of every CABOF timestamp.
    #[arg(long, default_value_t = 10.0)]
    buffer_seconds: f64,
    #[arg(long, default_value_t = DEFAULT_FPS)]
    fps: f64,
}

impl DataArgs {
    fn root(&self) -> DatasetRoot {
        DatasetRoot::at(&self.root).with_fps(self.fps)
    }

    fn mining(&self) -> Result<MiningConfig, Error> {
        let s = self.buffer_seconds;
        if !(s.is_finite() && s >= 0.0) {
            return Err(Error::InvalidConfig(format!("--buffer-seconds must be a non-negative number, got {s}")));
        }
        Ok(MiningConfig {
            buffer_ms: (s * 1000.0).round() as u64,
        })
    }
}

#[derive(Args, Debug)]
struct SynthesizeArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = Mode::Matched)]
    mode: Mode,
    #[arg(long, default_value_t = DEFAULT_MIN_COLLAGES)]
    min_collages: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_BOXES)]
    max_boxes: usize,
    /// Minimum visible fraction of each pasted box (exclusive).
    #[arg(long, default_value_t = 0.0)]
    tau: f64,
    /// Master seed; falls back to $COLLAGE_FORGE_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Render threads; outputs do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_MAX_PLACE_ATTEMPTS)]
    max_place_attempts: u32,
}

#[derive(Args, Debug)]
struct FixtureArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 2)]
    videos: usize,
    #[arg(long, default_value_t = 120)]
    frames_per_video: u64,
    #[arg(long, default_value_t = 30)]
    frame_stride: u64,
    #[arg(long, default_value_t = 320)]
    width: u32,
    #[arg(long, default_value_t = 240)]
    height: u32,
    #[arg(long, default_value_t = 0.3)]
    annotated_fraction: f64,
    #[arg(long, default_value_t = 4)]
    max_boxes_per_frame: usize,
    /// Chance that an annotated frame also carries a CABOF event.
    #[arg(long, default_value_t = 0.15)]
    cabof_probability: f64,
}

#[derive(Serialize)]
struct RunMeta<'a> {
    tool: &'a str,
    version: &'a str,
    command: &'a str,
    seed: u64,
    seed_source: &'a str,
    root: String,
    fps: f64,
    buffer_ms: u64,
    synthesis: &'a SynthesisConfig,
}

fn resolve_seed(flag: Option<u64>) -> Result<(u64, &'static str), Error> {
    if let Some(s) = flag {
        return Ok((s, "flag"));
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(|s| (s, "env"))
            .map_err(|_| Error::InvalidConfig(format!("{SEED_ENV} must be an unsigned integer, got {v:?}"))),
        Err(_) => Ok((0, "default")),
    }
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Parse | ErrorKind::Config => 2,
        ErrorKind::Io => 3,
        ErrorKind::Unsatisfiable => 4,
        ErrorKind::Vocabulary => 5,
    }
}

fn cmd_mine(data: &DataArgs, out: &Path) -> Result<(), Error> {
    let mining = data.mining()?;
    let dataset = load_dataset(&data.root())?;
    let bg = mine_backgrounds(&dataset.frames, &dataset.cabof, mining);
    let base = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let base = std::fs::canonicalize(base).map_err(|e| Error::io(base, e))?;
    let bg_abs: Vec<_> = bg
        .iter()
        .map(|f| {
            let mut f = f.clone();
            f.image_path = std::fs::canonicalize(&f.image_path).unwrap_or(f.image_path);
            f
        })
        .collect();
    write_frames_manifest(out, &bg_abs, Some(&base))?;
    let removed = dataset.frames.len() - bg.len();
    let ratio = if dataset.frames.is_empty() {
        0.0
    } else {
        removed as f64 / dataset.frames.len() as f64
    };
    println!("frames={} backgrounds={} removed={} removal_ratio={ratio:.4}", dataset.frames.len(), bg.len(), removed);
    Ok(())
}

fn cmd_synthesize(a: &SynthesizeArgs) -> Result<(), Error> {
    let mining = a.data.mining()?;
    let (seed, seed_source) = resolve_seed(a.seed)?;
    let cfg = SynthesisConfig {
        max_boxes: a.max_boxes,
        min_collages: a.min_collages,
        mode: a.mode,
        tau: a.tau,
        max_place_attempts: a.max_place_attempts,
        master_seed: seed,
    };
    cfg.validate()?;
    let workers = match a.workers {
        Some(0) => return Err(Error::InvalidConfig("--workers must be at least 1".into())),
        Some(w) => w,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let layout = OutputLayout::new(&a.out);
    let out = synthesize(&a.data.root(), mining, &cfg, &layout, workers)?;

    let meta = RunMeta {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: "synthesize",
        seed,
        seed_source,
        root: a.data.root.display().to_string(),
        fps: a.data.fps,
        buffer_ms: mining.buffer_ms,
        synthesis: &cfg,
    };
    let path = a.out.join(RUN_META);
    let mut text = serde_json::to_string_pretty(&meta).expect("run meta serializes");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;

    println!("{}", out.summary_line());
    println!(
        "images={} annotations={} categories={} out={}",
        out.summary.images,
        out.summary.annotations,
        out.summary.categories,
        a.out.display()
    );
    Ok(())
}

fn cmd_evaluate(annotations: &Path, detections: &Path, full: bool) -> Result<(), Error> {
    let gt = GroundTruth::from_coco(&CocoDataset::read(annotations)?)?;
    let dets = read_detections(detections)?;
    let cfg = if full { EvalConfig::full_suite() } else { EvalConfig::map50() };
    let result = evaluate(&gt, &dets, &cfg)?;
    print!("{}", result.report(full));
    Ok(())
}

fn cmd_stats(data: &DataArgs) -> Result<(), Error> {
    let dataset = load_dataset(&data.root())?;
    let (_, index) = prepare(&dataset, data.mining()?)?;
    let stdout = std::io::stdout();
    index
        .write_stats(stdout.lock())
        .map_err(|e| Error::io(Path::new("<stdout>"), e))
}

fn cmd_fixture(a: &FixtureArgs) -> Result<(), Error> {
    let (seed, _) = resolve_seed(a.seed)?;
    for (flag, p) in [("--annotated-fraction", a.annotated_fraction), ("--cabof-probability", a.cabof_probability)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidConfig(format!("{flag} must lie in [0, 1]")));
        }
    }
    let params = FixtureParams {
        seed,
        videos: a.videos,
        frames_per_video: a.frames_per_video,
        frame_stride: a.frame_stride,
        width: a.width,
        height: a.height,
        annotated_fraction: a.annotated_fraction,
        max_boxes_per_frame: a.max_boxes_per_frame,
        cabof_probability: a.cabof_probability,
        ..FixtureParams::default()
    };
    let spec = FixtureSpec::generate(&params);
    make_fixture(&spec, &a.out)?;
    let frames: usize = spec.videos.iter().map(|v| v.frame_indices().count()).sum();
    let boxes: usize = spec.videos.iter().map(|v| v.boxes.len()).sum();
    let cabof: usize = spec.videos.iter().map(|v| v.cabof.len()).sum();
    println!("videos={} frames={frames} boxes={boxes} cabof={cabof} out={}", spec.videos.len(), a.out.display());
    Ok(())
}

fn cmd_merge(original: &Path, collage: &Path, out: &Path) -> Result<(), Error> {
    let merged = merge_manifests(&CocoDataset::read(original)?, &CocoDataset::read(collage)?)?;
    merged.write(out)?;
    println!(
        "images={} annotations={} categories={}",
        merged.images.len(),
        merged.annotations.len(),
        merged.categories.len()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match &cli.command {
        Command::Mine { data, out } => cmd_mine(data, out),
        Command::Synthesize(a) => cmd_synthesize(a),
        Command::Evaluate {
            annotations,
            detections,
            full_suite,
        } => cmd_evaluate(annotations, detections, *full_suite),
        Command::Stats { data } => cmd_stats(data),
        Command::Fixture(a) => cmd_fixture(a),
        Command::Merge { original, collage, out } => cmd_merge(original, collage, out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            eprintln!("{}", msg.lines().next().unwrap_or("error: invalid arguments"));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => {
            let _ = std::io::stdout().flush();
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
