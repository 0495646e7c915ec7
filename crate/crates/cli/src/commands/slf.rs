use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args as ClapArgs, Subcommand};
use nalgebra::Vector2;
use scene_core::geometry::{load_dataset, unproject_pixel, write_depth_png, write_rgb_png};
use scene_core::neuralpoints::{
    load_checkpoint, save_checkpoint, NeuralPointConfig, NeuralPointSet, TrainFrameQueue,
    Trainer, TrainerConfig,
};
use scene_core::rasterizer::render_view;

use super::parse_pose;

#[derive(ClapArgs)]
pub struct Args {
    #[command(subcommand)]
    mode: Mode,
}

#[derive(Subcommand)]
enum Mode {
    /// Train a surface light field on the posed RGB-D frames of a dataset.
    Train(TrainArgs),
    /// Render a trained model from a camera pose.
    Render(RenderArgs),
}

#[derive(ClapArgs)]
struct TrainArgs {
    /// Dataset with rgb/, depth/, poses.txt and intrinsics.txt.
    #[arg(long)]
    dataset: PathBuf,
    /// Output checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Training steps.
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    /// Samples per step.
    #[arg(long, default_value_t = 1024)]
    n_train: usize,
    /// Finest neural point resolution in meters.
    #[arg(long, default_value_t = 0.005)]
    resolution: f64,
    /// Point-cloud pixel stride when converting frames.
    #[arg(long, default_value_t = 1)]
    stride: usize,
}

#[derive(ClapArgs)]
struct RenderArgs {
    /// Trained checkpoint.
    #[arg(long)]
    model: PathBuf,
    /// Camera pose tx,ty,tz,qx,qy,qz,qw (camera-to-world).
    #[arg(long, allow_hyphen_values = true)]
    pose: String,
    /// Dataset directory supplying intrinsics.txt.
    #[arg(long)]
    dataset: PathBuf,
    /// Output color PNG.
    #[arg(long)]
    out: PathBuf,
    /// Optional rasterized depth PNG.
    #[arg(long)]
    depth: Option<PathBuf>,
}

pub fn run(args: Args, seed: u64) -> Result<()> {
    match args.mode {
        Mode::Train(train) => run_train(train, seed),
        Mode::Render(render) => run_render(render),
    }
}

fn run_train(args: TrainArgs, seed: u64) -> Result<()> {
    let dataset = load_dataset(&args.dataset)?;
    let intrinsics = dataset.intrinsics.context("dataset has no intrinsics.txt")?;
    let mut set = NeuralPointSet::new(&NeuralPointConfig {
        base_resolution: args.resolution,
        seed,
        ..Default::default()
    });
    let mut queue = TrainFrameQueue::default();
    let stride = args.stride.max(1);
    let mut fed = 0;
    for frame in &dataset.frames {
        let (Some(color), Some(depth), Some(pose)) = (&frame.color, &frame.depth, frame.pose)
        else {
            continue;
        };
        let mut points = Vec::new();
        let mut colors = Vec::new();
        for y in (0..depth.height()).step_by(stride) {
            for x in (0..depth.width()).step_by(stride) {
                let Some(z) = depth.depth(x, y) else { continue };
                let p = unproject_pixel(&Vector2::new(x as f64, y as f64), 1.0 / z, &intrinsics)
                    .expect("valid depth");
                points.push(pose.apply(&p));
                colors.push(color.pixel(x, y));
            }
        }
        if !points.is_empty() {
            queue.push_frame(points, colors);
            fed += 1;
        }
    }
    anyhow::ensure!(fed > 0, "no posed RGB-D frames in the dataset");

    let mut trainer = Trainer::new(TrainerConfig {
        n_train: args.n_train,
        ..Default::default()
    });
    let mut last_loss = 0.0;
    for step in 0..args.steps {
        last_loss = trainer
            .train_step(&mut set, &mut queue)
            .context("training queue drained unexpectedly")?;
        if (step + 1) % 200 == 0 {
            eprintln!(
                "step {:>5}: loss {:.5}, {} points",
                step + 1,
                last_loss,
                set.total_points()
            );
        }
    }
    save_checkpoint(&args.out, &set).map_err(|e| anyhow::anyhow!(e.to_string()))?;
    eprintln!(
        "trained {} steps over {fed} frames ({} points, final loss {last_loss:.5})",
        args.steps,
        set.total_points()
    );
    Ok(())
}

fn run_render(args: RenderArgs) -> Result<()> {
    let dataset = load_dataset(&args.dataset)?;
    let intrinsics = dataset.intrinsics.context("dataset has no intrinsics.txt")?;
    let pose = parse_pose(&args.pose)?;
    let set = load_checkpoint(&args.model).map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let view = render_view(&set, &pose, &intrinsics, None)
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    write_rgb_png(&args.out, &view.color)?;
    if let Some(depth_path) = args.depth {
        write_depth_png(&depth_path, &view.depth)?;
    }
    eprintln!("rendered {} valid pixels", view.depth.valid_count());
    Ok(())
}
