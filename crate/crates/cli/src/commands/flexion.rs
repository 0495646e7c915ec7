use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args as ClapArgs;
use scene_core::flexion::depth_to_flexion;
use scene_core::geometry::{load_dataset, write_gray_png};

#[derive(ClapArgs)]
pub struct Args {
    /// Dataset directory with depth/ images and intrinsics.txt.
    #[arg(long)]
    input: PathBuf,
    /// Output directory for the 8-bit flexion PNGs.
    #[arg(long)]
    output: PathBuf,
    /// Neighbor offset in pixels.
    #[arg(long, default_value_t = 2)]
    step: usize,
}

pub fn run(args: Args) -> Result<()> {
    let dataset = load_dataset(&args.input)?;
    let intrinsics = dataset
        .intrinsics
        .context("dataset has no intrinsics.txt; flexion needs the camera model")?;
    std::fs::create_dir_all(&args.output)?;
    let mut converted = 0;
    for frame in &dataset.frames {
        let Some(depth) = &frame.depth else { continue };
        let flexion = depth_to_flexion(depth, &intrinsics, args.step);
        let path = args.output.join(format!("{:06}.png", frame.id));
        write_gray_png(&path, &flexion.values, &flexion.validity)?;
        converted += 1;
    }
    anyhow::ensure!(converted > 0, "dataset contains no depth images");
    eprintln!("converted {converted} depth images to flexion");
    Ok(())
}
