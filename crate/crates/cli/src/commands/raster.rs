use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args as ClapArgs, Subcommand};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scene_core::geometry::{write_depth_png, write_rgb_png, Intrinsics};
use scene_core::neuralpoints::load_checkpoint;
use scene_core::rasterizer::{rasterize, render_view, RasterConfig};

use super::{parse_pose, parse_size};

#[derive(ClapArgs)]
pub struct Args {
    #[command(subcommand)]
    mode: Option<Mode>,

    /// Neural point checkpoint to rasterize.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Camera pose tx,ty,tz,qx,qy,qz,qw (camera-to-world).
    #[arg(long, allow_hyphen_values = true)]
    pose: Option<String>,
    /// Intrinsics fx,fy,cx,cy.
    #[arg(long)]
    intrinsics: Option<String>,
    /// Image size WxH.
    #[arg(long, default_value = "320x240")]
    size: String,
    /// Output depth PNG (16-bit millimeters).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional decoded color PNG.
    #[arg(long)]
    color: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Mode {
    /// Time the rasterizer on random point clouds.
    Bench(BenchArgs),
}

#[derive(ClapArgs)]
pub struct BenchArgs {
    /// Number of random points.
    #[arg(long, default_value_t = 100_000)]
    points: usize,
    /// Image size WxH.
    #[arg(long, default_value = "640x480")]
    size: String,
    /// Repetitions to average over.
    #[arg(long, default_value_t = 10)]
    repeat: usize,
    /// Also time the brute-force oracle for comparison.
    #[arg(long)]
    oracle: bool,
}

pub fn run(args: Args, seed: u64) -> Result<()> {
    if let Some(Mode::Bench(bench)) = args.mode {
        return run_bench(bench, seed);
    }
    let model_path = args.model.context("--model is required to rasterize")?;
    let pose = parse_pose(&args.pose.context("--pose is required")?)?;
    let (w, h) = parse_size(&args.size)?;
    let k_parts: Vec<f64> = args
        .intrinsics
        .context("--intrinsics is required")?
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .context("intrinsics must be fx,fy,cx,cy")?;
    anyhow::ensure!(k_parts.len() == 4, "intrinsics must be fx,fy,cx,cy");
    let intrinsics = Intrinsics::new(k_parts[0], k_parts[1], k_parts[2], k_parts[3], w, h)
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let out = args.out.context("--out is required")?;

    let set = load_checkpoint(&model_path).map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let view = render_view(&set, &pose, &intrinsics, None)
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    write_depth_png(&out, &view.depth)?;
    if let Some(color_path) = args.color {
        write_rgb_png(&color_path, &view.color)?;
    }
    eprintln!(
        "rasterized {} points into {}x{} ({} valid pixels)",
        set.total_points(),
        w,
        h,
        view.depth.valid_count()
    );
    Ok(())
}

pub fn run_bench(args: BenchArgs, seed: u64) -> Result<()> {
    let (w, h) = parse_size(&args.size)?;
    let f = 0.8 * w.max(h) as f64;
    let intrinsics = Intrinsics::new(f, f, w as f64 / 2.0, h as f64 / 2.0, w, h)
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let cfg = RasterConfig::new(intrinsics, 0.005);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vector3<f64>> = (0..args.points)
        .map(|_| {
            Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-0.8..0.8),
                rng.random_range(0.3..4.0),
            )
        })
        .collect();

    // warm up once, then time
    let _ = rasterize(&points, &cfg);
    let start = Instant::now();
    for _ in 0..args.repeat.max(1) {
        let out = rasterize(&points, &cfg);
        std::hint::black_box(out.depth.valid_count());
    }
    let per_frame = start.elapsed().as_secs_f64() / args.repeat.max(1) as f64;
    println!(
        "rasterize: {} points, {}x{}: {:.3} ms/frame, {:.1} FPS",
        args.points,
        w,
        h,
        per_frame * 1e3,
        1.0 / per_frame
    );

    if args.oracle {
        let start = Instant::now();
        let out = scene_core::rasterizer::rasterize_oracle(&points, &cfg);
        std::hint::black_box(out.depth.valid_count());
        let oracle = start.elapsed().as_secs_f64();
        println!(
            "oracle:    {} points, {}x{}: {:.3} ms/frame, {:.1} FPS",
            args.points,
            w,
            h,
            oracle * 1e3,
            1.0 / oracle
        );
    }
    Ok(())
}
