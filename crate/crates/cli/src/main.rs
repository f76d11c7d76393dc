use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mvtrack_core::assoc::AssocMode;
use mvtrack_core::bench::{self, BenchSpec};
use mvtrack_core::cmmt::TriangulationMethod;
use mvtrack_core::config::PipelineConfig;
use mvtrack_core::io;
use mvtrack_core::metrics::LimbTable;
use mvtrack_core::pipeline::{self, PipelineOutput};
use mvtrack_core::sim::{self, NoiseConfig, SceneConfig};

#[derive(Parser)]
#[command(name = "mvtrack", version, about = "Multi-camera multi-person 3D tracking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Print per-window merge audits, candidate counts and empty frames.
    #[arg(long, global = true)]
    debug: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Track people from calibration and detection files.
    Track(TrackArgs),
    /// Write a synthetic scene as calibration, detection and ground-truth files.
    Simulate(SimulateArgs),
    /// Score predicted tracks against ground truth.
    Evaluate(EvaluateArgs),
    /// Compare triangulation methods on a simulated scene.
    Ablate(AblateArgs),
    /// Measure throughput over camera and person counts.
    Bench(BenchArgs),
}

/// Overrides for configuration keys.
#[derive(Args, Default)]
struct ConfigArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    window_size: Option<u32>,
    #[arg(long)]
    window_step: Option<u32>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    mode: Option<AssocMode>,
    #[arg(long)]
    phi: Option<u32>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    method: Option<TriangulationMethod>,
    #[arg(long)]
    gate: Option<f64>,
    #[arg(long)]
    max_window_misses: Option<u32>,
    #[arg(long)]
    iou_min: Option<f64>,
    #[arg(long)]
    max_age: Option<u32>,
    #[arg(long)]
    min_hits: Option<u32>,
    #[arg(long)]
    metrics_threshold: Option<f64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        macro_rules! set {
            ($src:ident => $($dst:tt)+) => {
                if let Some(v) = self.$src {
                    c.$($dst)+ = v;
                }
            };
        }
        set!(window_size => window.size);
        set!(window_step => window.step);
        set!(lambda => assoc.lambda);
        set!(mode => assoc.mode);
        set!(phi => cmmt.phi);
        set!(kappa => cmmt.kappa);
        set!(method => cmmt.method);
        set!(max_window_misses => linker.max_window_misses);
        set!(iou_min => svtrack.iou_min);
        set!(max_age => svtrack.max_age);
        set!(min_hits => svtrack.min_hits);
        set!(metrics_threshold => metrics.threshold);
        if self.gate.is_some() {
            c.linker.gate = self.gate;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct TrackArgs {
    #[arg(long)]
    calibration: Option<PathBuf>,
    #[arg(long)]
    detections: Option<PathBuf>,
    /// Ground-truth tracks; enables metrics.
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct SceneArgs {
    #[arg(long, default_value_t = 4)]
    cameras: usize,
    #[arg(long, default_value_t = 5)]
    persons: usize,
    #[arg(long, default_value_t = 600)]
    frames: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    pixel_sigma: f64,
    #[arg(long, default_value_t = 0.0)]
    miss_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    fp_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    id_swap_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    bbox_jitter: f64,
    #[arg(long, default_value_t = 0)]
    noise_seed: u64,
}

impl SceneArgs {
    fn scene(&self) -> SceneConfig {
        SceneConfig {
            n_cameras: self.cameras,
            n_persons: self.persons,
            frames: self.frames,
            seed: self.seed,
            ..SceneConfig::default()
        }
    }

    fn noise(&self) -> NoiseConfig {
        NoiseConfig {
            pixel_sigma: self.pixel_sigma,
            miss_rate: self.miss_rate,
            fp_rate: self.fp_rate,
            id_swap_rate: self.id_swap_rate,
            bbox_scale_jitter: self.bbox_jitter,
            seed: self.noise_seed,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    scene: SceneArgs,
    #[arg(long, default_value_t = AssocMode::Box)]
    mode: AssocMode,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    ground_truth: PathBuf,
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Also report PCP using this limb table (TOML); `default` uses the
    /// bundled 15-joint table.
    #[arg(long)]
    limbs: Option<String>,
    #[arg(long, default_value_t = 0.5)]
    pcp_alpha: f64,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    scene: SceneArgs,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [2, 4, 6])]
    cameras: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [2, 4, 8])]
    persons: Vec<usize>,
    #[arg(long, default_value_t = 300)]
    frames: u32,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[command(flatten)]
    cfg: ConfigArgs,
}

fn print_debug(out: &PipelineOutput) {
    for w in &out.windows {
        eprint!("{}", w.audit());
    }
}

fn track(args: TrackArgs, debug: bool) -> Result<()> {
    let mut cfg = args.cfg.resolve()?;
    if args.calibration.is_some() {
        cfg.io.calibration = args.calibration;
    }
    if args.detections.is_some() {
        cfg.io.detections = args.detections;
    }
    if args.ground_truth.is_some() {
        cfg.io.ground_truth = args.ground_truth;
    }
    if args.output.is_some() {
        cfg.io.output = args.output;
    }
    let Some(calib) = &cfg.io.calibration else {
        bail!("missing --calibration");
    };
    let Some(dets) = &cfg.io.detections else {
        bail!("missing --detections");
    };
    let cameras = io::load_calibration(calib)?;
    let streams = io::load_detections(dets)?;
    let out = pipeline::run_detections(&cfg, &cameras, &streams, 0, debug)?;
    if debug {
        print_debug(&out);
    }
    match &cfg.io.output {
        Some(p) => io::write_tracks(p, &out.tracks)?,
        None => print!("{}", io::format_tracks(&out.tracks)),
    }
    eprintln!(
        "frames = {}\ntracks = {}\nfps = {:.1}\nempty_frames = {}",
        out.frames,
        out.tracks.len(),
        out.fps(),
        out.empty_frame_count()
    );
    if let Some(gt) = &cfg.io.ground_truth {
        let gt = io::load_tracks(gt)?;
        let e = pipeline::evaluate(&gt, &out.tracks, &cfg, &LimbTable::default());
        eprint!("{}", e.mot.to_text());
        if let Some(p) = e.pcp {
            eprintln!("pcp = {:.6}", p.average);
        }
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let scene = sim::generate_scene(&args.scene.scene())?;
    let rendered = sim::render_detections(&scene, &args.scene.noise(), args.mode)?;
    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let dir = &args.out_dir;
    io::write_calibration(&dir.join("calibration.txt"), &scene.cameras)?;
    let streams = rendered.cameras.keys().map(|c| (*c, rendered.observations(*c))).collect();
    io::write_detections(&dir.join("detections.txt"), &streams)?;
    io::write_tracks(&dir.join("ground_truth.txt"), scene.ground_truth(args.mode))?;
    println!(
        "wrote {} cameras, {} detections, {} ground-truth tracks to {}",
        scene.cameras.len(),
        rendered.detection_count(),
        scene.ground_truth(args.mode).len(),
        dir.display()
    );
    Ok(())
}

fn load_limbs(spec: &str) -> Result<LimbTable> {
    if spec == "default" {
        Ok(LimbTable::default())
    } else {
        Ok(LimbTable::load(Path::new(spec))?)
    }
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let gt = io::load_tracks(&args.ground_truth)?;
    let pred = io::load_tracks(&args.predictions)?;
    let report = mvtrack_core::metrics::mota(&gt, &pred, args.threshold);
    print!("{}", report.to_text());
    if let Some(spec) = &args.limbs {
        let limbs = load_limbs(spec)?;
        let p = mvtrack_core::metrics::pcp(&gt, &pred, &limbs, args.pcp_alpha);
        for (id, v) in &p.per_actor {
            println!("pcp_actor_{id} = {v:.6}");
        }
        println!("pcp = {:.6}", p.average);
    }
    Ok(())
}

fn ablate(args: AblateArgs, debug: bool) -> Result<()> {
    let base = args.cfg.resolve()?;
    let mode = base.assoc.mode;
    let scene = sim::generate_scene(&args.scene.scene())?;
    let rendered = sim::render_detections(&scene, &args.scene.noise(), mode)?;
    let streams = rendered.cameras.keys().map(|c| (*c, rendered.observations(*c))).collect();
    println!("method mota idf1 ids fp fn mean_error");
    for method in [TriangulationMethod::Cmmt, TriangulationMethod::Ransac, TriangulationMethod::Plain] {
        let mut cfg = base.clone();
        cfg.cmmt.method = method;
        let out = pipeline::run_detections(&cfg, &scene.cameras, &streams, scene.config.frames, debug)?;
        if debug {
            print_debug(&out);
        }
        let m = mvtrack_core::metrics::mota(scene.ground_truth(mode), &out.tracks, cfg.metrics.threshold);
        println!(
            "{method} {:.4} {:.4} {} {} {} {:.4}",
            m.mota, m.idf1, m.ids, m.fp, m.fn_, m.mean_error
        );
    }
    Ok(())
}

fn run_bench(args: BenchArgs) -> Result<()> {
    let cfg = args.cfg.resolve()?;
    let spec = BenchSpec {
        cameras: args.cameras,
        persons: args.persons,
        frames: args.frames,
        repeats: args.repeats,
        ..BenchSpec::default()
    };
    let cells = bench::run_grid(&cfg, &spec)?;
    print!("{}", bench::format_table(&cells));
    if let Some(s) = bench::assoc_loglog_slope(&cells) {
        eprintln!("assoc_loglog_slope = {s:.3}");
    }
    Ok(())
}

/// Short category of the root cause for the error line.
fn error_kind(e: &anyhow::Error) -> &'static str {
    for cause in e.chain() {
        if cause.is::<io::IoError>() {
            return "input";
        }
        if cause.is::<mvtrack_core::config::ConfigError>() {
            return "config";
        }
        if cause.is::<pipeline::PipelineError>() {
            return "pipeline";
        }
        if cause.is::<sim::SimError>() {
            return "simulation";
        }
        if cause.is::<mvtrack_core::metrics::MetricsError>() {
            return "metrics";
        }
    }
    "usage"
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Track(a) => track(a, cli.debug),
        Command::Simulate(a) => simulate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Ablate(a) => ablate(a, cli.debug),
        Command::Bench(a) => run_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let chain: Vec<String> = e.chain().map(ToString::to_string).collect();
            eprintln!("error[{}]: {}", error_kind(&e), chain.join(": "));
            ExitCode::from(2)
        }
    }
}
