pub mod complete;
pub mod flexion;
pub mod mvd;
pub mod pipeline;
pub mod raster;
pub mod slf;
pub mod synth;

use anyhow::{Context, Result};
use nalgebra::Vector3;
use scene_core::geometry::Pose;

/// Parses "tx,ty,tz,qx,qy,qz,qw" into a camera-to-world pose.
pub fn parse_pose(text: &str) -> Result<Pose> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .context("pose must be 7 comma-separated numbers: tx,ty,tz,qx,qy,qz,qw")?;
    anyhow::ensure!(parts.len() == 7, "pose needs exactly 7 numbers, got {}", parts.len());
    Pose::from_quat_xyzw(
        parts[3],
        parts[4],
        parts[5],
        parts[6],
        Vector3::new(parts[0], parts[1], parts[2]),
    )
    .map_err(|e| anyhow::anyhow!(e.to_string()))
}

/// Parses "WxH" into (width, height).
pub fn parse_size(text: &str) -> Result<(usize, usize)> {
    let (w, h) = text
        .split_once(['x', 'X'])
        .context("size must look like 640x480")?;
    Ok((w.trim().parse()?, h.trim().parse()?))
}
