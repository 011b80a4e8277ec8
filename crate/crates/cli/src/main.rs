use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use rigidpath::io::{read_labels, read_trajectories, write_labels, write_trajectories};
use rigidpath::overlay::export_overlay;
use rigidpath::synth::{scenario, SCENARIOS};
use rigidpath::{run_pipeline, Error, PipelineConfig};

const EXIT_IO: u8 = 1;
const EXIT_PARSE: u8 = 3;
const EXIT_PIPELINE: u8 = 4;
const EXIT_FLAGS: u8 = 5;

/// Identify background feature trajectories in moving-camera video.
#[derive(Parser)]
#[command(name = "rigidpath", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Label trajectories as background or not.
    Run(RunArgs),
    /// Render a synthetic scenario with ground truth.
    Synth(SynthArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Trajectory file.
    #[arg(long)]
    input: PathBuf,
    /// TOML configuration; defaults apply to anything it leaves out.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Label file to write.
    #[arg(long)]
    output: PathBuf,
    /// Ground-truth label file; enables precision and recall.
    #[arg(long, requires = "metrics")]
    ground_truth: Option<PathBuf>,
    /// Metrics JSON to write.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured thread count (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Write `<output>.clips`: `index first last forced`.
    #[arg(long)]
    dump_clips: bool,
    /// Write `<output>.candidates`: `clip cell_origin n_members origin_tag`.
    #[arg(long)]
    dump_candidates: bool,
    /// Write `<output>.graph`: NODE and EDGE lines.
    #[arg(long)]
    dump_graph: bool,
    /// Write `<output>.<stage>` label files for every stage.
    #[arg(long)]
    dump_stages: bool,
    /// Directory for per-frame SVG overlays.
    #[arg(long)]
    overlay: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Scenario name (see --list).
    #[arg(long, required_unless_present = "list")]
    scenario: Option<String>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory.
    #[arg(long, required_unless_present = "list")]
    out: Option<PathBuf>,
    /// Overrides the scenario's trajectory count.
    #[arg(long)]
    trajectories: Option<usize>,
    /// Print the scenario names and exit.
    #[arg(long)]
    list: bool,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => EXIT_IO,
        Error::Parse { .. } | Error::Config(_) => EXIT_PARSE,
        _ => EXIT_PIPELINE,
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run(args: &RunArgs) -> Result<u8, Error> {
    let mut config = match &args.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(t) = args.threads {
        config.threads = t;
    }
    let (meta, trajs) = read_trajectories(&args.input)?;
    info!(
        "{} trajectories over {} frames",
        trajs.len(),
        meta.frame_count
    );
    let out = run_pipeline(&config, &meta, &trajs)?;
    write_labels(&args.output, &out.labels(&trajs))?;

    if args.dump_clips {
        write(&sibling(&args.output, "clips"), &out.dump_clips())?;
    }
    if args.dump_candidates {
        write(&sibling(&args.output, "candidates"), &out.dump_candidates())?;
    }
    if args.dump_graph {
        write(&sibling(&args.output, "graph"), &out.graph.dump())?;
    }
    if args.dump_stages {
        for stage in &out.stages {
            write_labels(
                sibling(&args.output, stage.stage.name()),
                &stage.labels(&trajs),
            )?;
        }
    }
    if let Some(dir) = &args.overlay {
        export_overlay(&out.final_stage().background, &trajs, &meta, dir)?;
    }
    if let Some(path) = &args.metrics {
        let report = match &args.ground_truth {
            Some(gt) => out.evaluate(&trajs, &read_labels(gt)?)?,
            None => out.report(&trajs),
        };
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        write(path, &(json + "\n"))?;
    }

    let violations = out.violations();
    if violations.is_empty() {
        Ok(0)
    } else {
        let names: Vec<_> = violations.iter().map(|f| f.name()).collect();
        warn!("assumption violations: {}", names.join(", "));
        Ok(EXIT_FLAGS)
    }
}

fn synth(args: &SynthArgs) -> Result<u8, Error> {
    if args.list {
        for name in SCENARIOS {
            println!("{name}");
        }
        return Ok(0);
    }
    let name = args.scenario.as_deref().expect("clap requires it");
    let dir = args.out.as_deref().expect("clap requires it");
    let mut spec = scenario(name)
        .ok_or_else(|| Error::Config(format!("unknown scenario {name:?}; try --list")))?;
    if let Some(n) = args.trajectories {
        spec.trajectories = n;
    }
    let (meta, trajs, truth) = spec.render(args.seed)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_trajectories(dir.join("trajectories.txt"), &meta, &trajs)?;
    write_labels(dir.join("ground_truth.txt"), &truth.background_labels())?;
    let scene = serde_json::to_string_pretty(&spec).expect("scene serializes");
    write(&dir.join("scene.json"), &(scene + "\n"))?;
    println!("{} trajectories written to {}", trajs.len(), dir.display());
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => run(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
