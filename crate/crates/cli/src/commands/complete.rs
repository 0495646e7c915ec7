use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use byteorder::{LittleEndian, WriteBytesExt};
use clap::Args as ClapArgs;
use scene_core::geometry::{read_depth_png, write_depth_png, Grid};
use scene_core::scalecov::{complete_depth, RbfKernel, ScaleCovConfig};

#[derive(ClapArgs)]
pub struct Args {
    /// Optional RGB image (reserved for intensity-aware kernels).
    #[arg(long)]
    rgb: Option<PathBuf>,
    /// Sparse metric depth (16-bit PNG, millimeters, 0 = invalid).
    #[arg(long)]
    sparse_depth: PathBuf,
    /// Dense depth prior (16-bit PNG, millimeters).
    #[arg(long)]
    prior_depth: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Observation noise standard deviation.
    #[arg(long, default_value_t = 0.05)]
    sigma_n: f64,
    /// RBF kernel length scale over normalized pixel coordinates.
    #[arg(long, default_value_t = 0.15)]
    length_scale: f64,
}

/// Float32 grid container: magic `VAR1`, u32 height, u32 width, then
/// row-major little-endian f32 values.
fn write_variance(path: &Path, grid: &Grid<f64>) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    file.write_all(b"VAR1")?;
    file.write_u32::<LittleEndian>(grid.height() as u32)?;
    file.write_u32::<LittleEndian>(grid.width() as u32)?;
    for (_, _, v) in grid.iter() {
        file.write_f32::<LittleEndian>(*v as f32)?;
    }
    file.flush()?;
    Ok(())
}

pub fn run(args: Args) -> Result<()> {
    let sparse = read_depth_png(&args.sparse_depth)
        .with_context(|| format!("reading {}", args.sparse_depth.display()))?;
    let prior = read_depth_png(&args.prior_depth)
        .with_context(|| format!("reading {}", args.prior_depth.display()))?;
    let kernel = RbfKernel {
        length_scale: args.length_scale,
        signal_variance: 1.0,
    };
    let cfg = ScaleCovConfig {
        sigma_n: args.sigma_n,
        ..Default::default()
    };
    let posterior = complete_depth(&sparse, &prior, &kernel, &cfg)
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;

    std::fs::create_dir_all(&args.out)?;
    write_depth_png(&args.out.join("completed_depth.png"), &posterior.completed)?;
    write_variance(&args.out.join("variance.var"), &posterior.variance)?;
    eprintln!(
        "completed {} observed pixels against a {}x{} prior",
        sparse.valid_count(),
        prior.width(),
        prior.height()
    );
    Ok(())
}
