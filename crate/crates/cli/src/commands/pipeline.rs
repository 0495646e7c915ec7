use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args as ClapArgs;
use scene_core::pipeline::{
    run_sequence, AppRequest, Application, InputAvailability, PipelineConfig,
};

#[derive(ClapArgs)]
pub struct Args {
    /// Application name: MVD, Completion, Flexion, Tracking, RGB-D-SLAM,
    /// Mono-SLAM, Depth-only-SLAM or Reconstruction.
    #[arg(long)]
    app: String,
    /// Dataset directory.
    #[arg(long)]
    dataset: PathBuf,
    /// Plain-text (TOML) config file with key = value overrides.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for trajectory, depths, checkpoint and metrics.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated input exposure override, e.g. "rgb,intrinsics".
    /// Defaults per application when omitted.
    #[arg(long)]
    inputs: Option<String>,
}

fn default_inputs(app: Application) -> InputAvailability {
    match app {
        Application::Mvd => InputAvailability {
            rgb: true,
            intrinsics: true,
            pose: true,
            ..Default::default()
        },
        Application::Completion => InputAvailability {
            rgb: true,
            sparse_depth: true,
            intrinsics: true,
            ..Default::default()
        },
        Application::Flexion | Application::DepthOnlySlam => InputAvailability {
            depth: true,
            intrinsics: true,
            ..Default::default()
        },
        Application::Tracking | Application::MonoSlam => InputAvailability {
            rgb: true,
            intrinsics: true,
            ..Default::default()
        },
        Application::RgbdSlam => InputAvailability {
            rgb: true,
            depth: true,
            intrinsics: true,
            ..Default::default()
        },
        Application::Reconstruction => InputAvailability {
            rgb: true,
            depth: true,
            pose: true,
            intrinsics: true,
            ..Default::default()
        },
    }
}

fn parse_inputs(text: &str) -> Result<InputAvailability> {
    let mut inputs = InputAvailability::default();
    for token in text.split(',') {
        match token.trim() {
            "rgb" => inputs.rgb = true,
            "depth" => inputs.depth = true,
            "sparse_depth" => inputs.sparse_depth = true,
            "pose" => inputs.pose = true,
            "intrinsics" => inputs.intrinsics = true,
            "" => {}
            other => anyhow::bail!("unknown input flag {other:?}"),
        }
    }
    Ok(inputs)
}

pub fn run(args: Args, seed: u64) -> Result<()> {
    let application = Application::parse(&args.app)
        .with_context(|| format!("unknown application {:?}", args.app))?;
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            PipelineConfig::from_toml(&text).map_err(|e| anyhow::anyhow!(e))?
        }
        None => PipelineConfig::default(),
    };
    if seed != 0 {
        config.seed = seed;
    }
    let inputs = match &args.inputs {
        Some(text) => parse_inputs(text)?,
        None => default_inputs(application),
    };
    let request = AppRequest {
        application,
        inputs,
        config,
    };
    let report = run_sequence(&request, &args.dataset, &args.out)
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    for (key, value) in &report.metrics {
        eprintln!("{key} = {value:.6}");
    }
    Ok(())
}
