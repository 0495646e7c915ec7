use std::io::Write as _;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args as ClapArgs;
use scene_core::correspondence::read_flow;
use scene_core::dba::{
    select_neighbors, solve_dba, DbaProblem, NeighborConfig, SolverConfig,
};
use scene_core::geometry::{load_dataset, write_depth_png, Intrinsics, Pose};

#[derive(ClapArgs)]
pub struct Args {
    /// Dataset directory (rgb/, flow/, poses.txt, intrinsics.txt).
    #[arg(long)]
    dataset: PathBuf,
    /// Reference frame id whose depth is estimated.
    #[arg(long = "ref")]
    reference: usize,
    /// Comma-separated source frame ids, or "auto" for good-neighbor
    /// selection over the posed frames.
    #[arg(long, default_value = "auto")]
    sources: String,
    /// Solve the intrinsics instead of trusting intrinsics.txt.
    #[arg(long)]
    no_intrinsics: bool,
    /// Solve the source poses instead of trusting poses.txt.
    #[arg(long)]
    no_poses: bool,
    /// Reference-grid stride in pixels.
    #[arg(long, default_value_t = 4)]
    stride: usize,
    /// Output directory (depth PNG + report).
    #[arg(long)]
    out: PathBuf,
}

fn guessed_intrinsics(width: usize, height: usize) -> Intrinsics {
    let f = 0.85 * width.max(height) as f64;
    Intrinsics::new(f, f, width as f64 / 2.0, height as f64 / 2.0, width, height)
        .expect("valid guess")
}

pub fn run(args: Args, _seed: u64) -> Result<()> {
    let dataset = load_dataset(&args.dataset)?;
    let ref_frame = dataset
        .frame(args.reference)
        .with_context(|| format!("frame {} not in dataset", args.reference))?;
    let intrinsics = if args.no_intrinsics {
        let c = ref_frame.color.as_ref().context("need rgb for image size")?;
        guessed_intrinsics(c.width(), c.height())
    } else {
        dataset.intrinsics.context("dataset has no intrinsics.txt")?
    };

    let ref_pose = ref_frame.pose.unwrap_or_else(Pose::identity);
    let source_ids: Vec<usize> = if args.sources == "auto" {
        let candidates: Vec<(usize, Pose)> = dataset
            .frames
            .iter()
            .filter(|f| f.id != args.reference && dataset.has_flow(args.reference, f.id))
            .filter_map(|f| f.pose.map(|p| (f.id, p)))
            .collect();
        let picked = select_neighbors(&candidates, &ref_pose, &NeighborConfig::default());
        anyhow::ensure!(
            !picked.is_empty(),
            "good-neighbor selection returned no frames; pass --sources explicitly"
        );
        picked
    } else {
        args.sources
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .context("--sources must be comma-separated frame ids or 'auto'")?
    };

    let mut flows = Vec::new();
    for id in &source_ids {
        let frame = dataset
            .frame(*id)
            .with_context(|| format!("source frame {id} not in dataset"))?;
        let pose = if args.no_poses {
            ref_pose
        } else {
            frame
                .pose
                .with_context(|| format!("frame {id} has no pose; use --no-poses"))?
        };
        let flow = read_flow(&dataset.flow_path(args.reference, *id))
            .with_context(|| format!("no flow file {} -> {id}", args.reference))?;
        flows.push((pose, flow));
    }
    let sources: Vec<_> = flows
        .iter()
        .map(|(pose, flow)| (*pose, flow, None))
        .collect();

    let mut problem = DbaProblem::from_flows(
        intrinsics,
        args.stride,
        ref_pose,
        &sources,
        None,
        args.no_poses,
        args.no_intrinsics,
    )
    .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    if !args.no_poses {
        for fixed in problem.fixed_poses.iter_mut() {
            *fixed = true;
        }
    }
    let solution = solve_dba(&problem, &SolverConfig::default())
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;

    std::fs::create_dir_all(&args.out)?;
    let depth = solution.dense_depth_image(intrinsics.width, intrinsics.height, args.stride);
    write_depth_png(
        &args.out.join(format!("{:06}_depth.png", args.reference)),
        &depth,
    )?;

    let mut report = std::fs::File::create(args.out.join("report.txt"))?;
    writeln!(report, "reference = {}", args.reference)?;
    writeln!(
        report,
        "sources = {}",
        source_ids
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(",")
    )?;
    writeln!(report, "final_cost = {:.9e}", solution.final_cost)?;
    writeln!(report, "iterations = {}", solution.iterations)?;
    writeln!(report, "converged = {}", solution.converged)?;
    let k = solution.intrinsics;
    writeln!(report, "fx = {}\nfy = {}\ncx = {}\ncy = {}", k.fx, k.fy, k.cx, k.cy)?;
    eprintln!(
        "solved frame {} from {} sources: cost {:.3e}, {} iterations",
        args.reference,
        source_ids.len(),
        solution.final_cost,
        solution.iterations
    );
    Ok(())
}
