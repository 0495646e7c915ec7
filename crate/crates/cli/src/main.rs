mod commands;

use clap::{Parser, Subcommand};

/// Incremental scene modeling toolbox: trackable-image conversion,
/// multi-view depth estimation, depth completion, neural-point surface light
/// fields, point rasterization, synthetic scene generation and the full
/// product-line pipeline.
#[derive(Parser)]
#[command(name = "scene", version, about, propagate_version = true)]
struct Cli {
    /// Global random seed; every subcommand is deterministic under it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert depth images of a dataset into flexion images.
    Flexion(commands::flexion::Args),
    /// Multi-view depth estimation by dense bundle adjustment.
    Mvd(commands::mvd::Args),
    /// Complete a sparse metric depth image against a dense prior.
    Complete(commands::complete::Args),
    /// Rasterize a neural-point checkpoint (or benchmark the rasterizer).
    Raster(commands::raster::Args),
    /// Train or render a neural-point surface light field.
    Slf(commands::slf::Args),
    /// Run a full application product line over a dataset.
    Pipeline(commands::pipeline::Args),
    /// Generate a synthetic dataset from a scene description.
    Synth(commands::synth::Args),
    /// Rasterization benchmark (alias of `raster bench`).
    Bench(commands::raster::BenchArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Flexion(args) => commands::flexion::run(args),
        Command::Mvd(args) => commands::mvd::run(args, cli.seed),
        Command::Complete(args) => commands::complete::run(args),
        Command::Raster(args) => commands::raster::run(args, cli.seed),
        Command::Slf(args) => commands::slf::run(args, cli.seed),
        Command::Pipeline(args) => commands::pipeline::run(args, cli.seed),
        Command::Synth(args) => commands::synth::run(args, cli.seed),
        Command::Bench(args) => commands::raster::run_bench(args, cli.seed),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
