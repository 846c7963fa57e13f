use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

/// Multi-projection 360° optical flow toolkit.
#[derive(Parser, Debug)]
#[command(name = "panoflow", version)]
struct Cli {
    /// Worker threads; 0 uses all cores. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic dataset with exact ground-truth flow.
    Generate(GenerateArgs),
    /// Resample an image or flow field into another projection.
    Convert(ConvertArgs),
    /// Estimate flow between two equirect frames in one projection.
    Estimate(EstimateArgs),
    /// Fuse two equirect flow predictions.
    Fuse(FuseArgs),
    /// Score a prediction against ground truth.
    Eval(EvalArgs),
    /// Estimate, fuse and evaluate every pair of a dataset.
    Pipeline(PipelineArgs),
    /// Render flow as colour, or export solid-angle weight maps.
    Visualize(VisualizeArgs),
    /// Paste a sprite into one frame and carry it forward with backward flow.
    PropagateEdit(PropagateArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Scene schedule: city or eft.
    #[arg(long, default_value = "city")]
    schedule: String,
    #[arg(long, default_value_t = 8)]
    pairs: usize,
    #[arg(long)]
    seed: u64,
    /// Equirect width; height is half of it.
    #[arg(long, default_value_t = 512)]
    width: usize,
    #[arg(long, default_value_t = 30)]
    objects: usize,
    #[arg(long, short, default_value = "dataset")]
    out: PathBuf,
    /// key = value file applied after the flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ConvertArgs {
    /// PNG image, SFL1 (.sfl) or Middlebury (.flo) flow.
    #[arg(long, short)]
    input: PathBuf,
    /// Layout of an input image: a projection name/letter or a full spec. Defaults to equirect.
    #[arg(long)]
    from: Option<String>,
    /// Target projection: name, letter (E, C, P) or full spec such as tricyl:512x432.
    #[arg(long)]
    to: String,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[arg(long)]
    frame_a: PathBuf,
    #[arg(long)]
    frame_b: PathBuf,
    /// Projection to estimate in.
    #[arg(long, default_value = "E")]
    projection: String,
    #[arg(long, default_value = "blockmatch")]
    estimator: String,
    /// Ground-truth flow, used by the perturbed-gt estimator.
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Extra estimator setting as key=value; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    settings: Vec<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Keep the result in the estimation projection instead of equirect.
    #[arg(long)]
    native: bool,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct FuseArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Backward predictions for the consistency cue.
    #[arg(long)]
    back_a: Option<PathBuf>,
    #[arg(long)]
    back_b: Option<PathBuf>,
    /// Projection prediction a was estimated in, when the file is already equirect.
    #[arg(long)]
    source_a: Option<String>,
    #[arg(long)]
    source_b: Option<String>,
    /// blend-heuristic, oracle-lower or oracle-upper.
    #[arg(long, default_value = "blend-heuristic")]
    mode: String,
    /// Oracle ranking: sd or epe.
    #[arg(long, default_value = "sd")]
    criterion: String,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, short)]
    output: PathBuf,
    /// Write lower.sfl and upper.sfl here (needs --gt).
    #[arg(long)]
    bounds_dir: Option<PathBuf>,
    /// Confidence in prediction a as PFM.
    #[arg(long)]
    confidence: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Occlusion PFM; pixels marked occluded are left out.
    #[arg(long)]
    occlusion: Option<PathBuf>,
    /// Error heatmap: PNG, or PFM of raw values with -1 where not evaluated.
    #[arg(long)]
    heatmap: Option<PathBuf>,
    /// Heatmap of SD instead of EPE.
    #[arg(long)]
    sd: bool,
    /// Heatmap normalisation; defaults to the map maximum.
    #[arg(long)]
    max: Option<f64>,
    /// Append a row to this CSV comparison table.
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long, default_value = "prediction")]
    method: String,
    #[arg(long, default_value = "dataset")]
    dataset: String,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, short, default_value = "run")]
    out: PathBuf,
    /// Projection pair: E+C, E+P or C+P.
    #[arg(long, default_value = "E+C")]
    pair: String,
    #[arg(long, default_value = "blockmatch")]
    estimator: String,
    #[arg(long, default_value = "blend-heuristic")]
    fusion: String,
    #[arg(long, default_value = "sd")]
    criterion: String,
    /// Working equirect width; defaults to the dataset's.
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    no_heatmaps: bool,
    #[arg(long)]
    seed: u64,
    /// Pipeline setting as key=value (estimator.*, a.*, b.*, fusion.*); repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    settings: Vec<String>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VisualizeArgs {
    /// Flow field to colour-code.
    #[arg(long, conflicts_with = "weights")]
    flow: Option<PathBuf>,
    /// Export the solid-angle weight map of this projection instead.
    #[arg(long)]
    weights: Option<String>,
    /// Equirect-equivalent width for --weights given by name.
    #[arg(long, default_value_t = 512)]
    width: usize,
    /// Flow magnitude (pixels) mapped to full saturation.
    #[arg(long)]
    max: Option<f64>,
    /// PNG, or PFM for raw weights.
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct PropagateArgs {
    /// Dataset manifest providing frames and backward flows.
    #[arg(long, conflicts_with_all = ["frames", "flows"])]
    manifest: Option<PathBuf>,
    /// Directory of equirect PNG frames, in name order.
    #[arg(long, requires = "flows")]
    frames: Option<PathBuf>,
    /// Directory of backward flows; the k-th maps frame k+1 to frame k.
    #[arg(long)]
    flows: Option<PathBuf>,
    #[arg(long)]
    sprite: PathBuf,
    #[arg(long, default_value_t = 0)]
    anchor: usize,
    /// Sprite centre as x,y in anchor-frame pixels.
    #[arg(long, value_parser = commands::parse_point)]
    center: (f64, f64),
    #[arg(long, short, default_value = "edited")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let outcome = std::panic::catch_unwind(|| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build()?;
        pool.install(|| commands::run(cli.command))
    });
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            // library errors already print their source, so skip repeats
            let mut msg = e.to_string();
            for cause in e.chain().skip(1).map(|c| c.to_string()) {
                if !msg.ends_with(&cause) {
                    msg = format!("{msg}: {cause}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(commands::exit_code(&e))
        }
        Err(_) => {
            eprintln!("error: internal assertion failed");
            ExitCode::from(4)
        }
    }
}
