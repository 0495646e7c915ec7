use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args as ClapArgs, Subcommand};
use scene_core::synth::{generate_dataset, parse_scene_toml_with_frames};

#[derive(ClapArgs)]
pub struct Args {
    #[command(subcommand)]
    mode: Mode,
}

#[derive(Subcommand)]
enum Mode {
    /// Render a scene description into the dataset directory format,
    /// including ground-truth flow files.
    Generate(GenerateArgs),
}

#[derive(ClapArgs)]
struct GenerateArgs {
    /// Scene description file (TOML).
    #[arg(long)]
    spec: PathBuf,
    /// Override the trajectory frame count from the spec.
    #[arg(long)]
    frames: Option<usize>,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// Flow files are written for frame pairs at most this far apart.
    #[arg(long, default_value_t = 3)]
    flow_window: usize,
}

pub fn run(args: Args, seed: u64) -> Result<()> {
    match args.mode {
        Mode::Generate(generate) => {
            let text = std::fs::read_to_string(&generate.spec)
                .with_context(|| format!("reading {}", generate.spec.display()))?;
            let mut scene = parse_scene_toml_with_frames(&text, generate.frames)
                .map_err(|e| anyhow::anyhow!(e.to_string()))?;
            if seed != 0 {
                scene.seed = seed;
            }
            generate_dataset(&scene, &generate.out, generate.flow_window)
                .map_err(|e| anyhow::anyhow!(e.to_string()))?;
            eprintln!(
                "generated {} frames into {}",
                scene.trajectory.len(),
                generate.out.display()
            );
            Ok(())
        }
    }
}
