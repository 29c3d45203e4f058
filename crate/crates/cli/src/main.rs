//! `stabilize`: compute stabilizing corrections for a camera trajectory.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser};

use cinestab::pipeline::{
    parse_saliency_mode, parse_weights, parse_window, run_pipeline, Input, PipelineArgs,
    PipelineError, WindowChoice,
};

#[derive(Debug, Parser)]
#[command(name = "stabilize", version, about)]
#[command(group(ArgGroup::new("source").required(true).args(["input", "synth"])))]
#[command(group(ArgGroup::new("mode").args(["window", "global"])))]
struct Cli {
    /// Trajectory JSON with one homography per frame.
    #[arg(long, value_name = "FILE")]
    input: Option<PathBuf>,
    /// Synthetic trajectory spec (JSON) to generate instead of reading a trajectory.
    #[arg(long, value_name = "FILE")]
    synth: Option<PathBuf>,
    /// Overrides the seed of the synthetic spec.
    #[arg(long)]
    seed: Option<u64>,
    /// Stabilizer config (JSON); flags below take precedence.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Crop budget as a fraction of each frame side, in (0, 0.5].
    #[arg(long, value_name = "FRACTION")]
    crop: Option<f64>,
    /// Extra crop-window size kept free for shrinking corrections.
    #[arg(long, value_name = "FRACTION")]
    margin: Option<f64>,
    /// Windowed solve with window length and stride.
    #[arg(long, value_name = "LW,LS")]
    window: Option<String>,
    /// Solve the whole trajectory as one problem.
    #[arg(long)]
    global: bool,
    /// Salient points per frame (JSON, normalized coordinates).
    #[arg(long, value_name = "FILE")]
    saliency: Option<PathBuf>,
    /// soft[:penalty], hard or center[:weight].
    #[arg(long, value_name = "MODE")]
    saliency_mode: Option<String>,
    /// Weight overrides such as `w1=10,w3=50`.
    #[arg(long, value_name = "NAME=VALUE,...")]
    weights: Option<String>,
    /// Plan JSON output.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Per-frame CSV output.
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
    /// Directory for triplet dumps of every assembled QP.
    #[arg(long, value_name = "DIR")]
    dump_qp: Option<PathBuf>,
    /// Writes the (possibly synthetic) input trajectory.
    #[arg(long, value_name = "FILE")]
    trajectory_out: Option<PathBuf>,
}

fn pipeline_args(cli: Cli) -> Result<PipelineArgs, PipelineError> {
    let input = match (cli.input, cli.synth) {
        (Some(p), _) => Input::Trajectory(p),
        (None, Some(p)) => Input::Synth(p),
        (None, None) => unreachable!("clap requires a source"),
    };
    let window = match (cli.window, cli.global) {
        (Some(w), _) => Some(WindowChoice::Windowed(parse_window(&w)?)),
        (None, true) => Some(WindowChoice::Global),
        (None, false) => None,
    };
    Ok(PipelineArgs {
        input,
        seed: cli.seed,
        config: cli.config,
        crop: cli.crop,
        margin: cli.margin,
        window,
        weights: cli
            .weights
            .as_deref()
            .map(parse_weights)
            .transpose()?
            .unwrap_or_default(),
        saliency: cli.saliency,
        saliency_mode: cli
            .saliency_mode
            .as_deref()
            .map(parse_saliency_mode)
            .transpose()?,
        out: cli.out,
        csv: cli.csv,
        dump_qp: cli.dump_qp,
        trajectory_out: cli.trajectory_out,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match pipeline_args(cli).and_then(|args| run_pipeline(&args)) {
        Ok(out) => {
            let q = &out.plan.quality;
            eprintln!(
                "ok: {} frames, {} window(s), fov {:.4}, sparsity e1 {:.3} e2 {:.3} e3 {:.3}",
                out.plan.frame_count,
                out.plan.diagnostics.windows.len(),
                q.fov_ratio,
                q.sparsity[0],
                q.sparsity[1],
                q.sparsity[2],
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind.code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
