//! TOML scene description for the `synth generate` command.
//!
//! ```toml
//! seed = 7
//!
//! [intrinsics]
//! fx = 128.0
//! fy = 128.0
//! cx = 80.0
//! cy = 60.0
//! width = 160
//! height = 120
//!
//! [noise]
//! depth_sigma = 0.0
//! flow_sigma = 0.0
//! outlier_fraction = 0.0
//!
//! [trajectory]
//! kind = "line"            # or "orbit"
//! start = [-0.7, -0.1, -0.7]
//! end = [0.7, 0.1, -0.5]
//! target = [0.0, 0.2, 1.9]
//! frames = 8
//!
//! [[rect]]
//! center = [0.0, 0.0, 2.4]
//! normal = [0.0, 0.0, -1.0]
//! half_u = 2.2
//! half_v = 1.25
//! color = [0.55, 0.75, 0.9]
//! freq = 2.2
//!
//! [[box]]
//! center = [0.7, 0.85, 1.5]
//! half = [0.35, 0.35, 0.35]
//! color = [0.9, 0.85, 0.35]
//! freq = 3.0
//!
//! [[sphere]]
//! center = [-0.8, 0.65, 1.4]
//! radius = 0.4
//! color = [0.85, 0.45, 0.85]
//! freq = 3.0
//! ```

use nalgebra::Vector3;
use serde::Deserialize;

use crate::geometry::Intrinsics;

use super::{line_trajectory, orbit_trajectory, NoiseModel, Primitive, SceneSpec, Shape, SynthError};

fn default_freq() -> f64 {
    2.5
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct RawNoise {
    depth_sigma: f64,
    flow_sigma: f64,
    outlier_fraction: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrajectory {
    kind: String,
    frames: usize,
    #[serde(default)]
    start: Option<[f64; 3]>,
    #[serde(default)]
    end: Option<[f64; 3]>,
    #[serde(default)]
    target: Option<[f64; 3]>,
    #[serde(default)]
    center: Option<[f64; 3]>,
    #[serde(default)]
    radius: Option<f64>,
    #[serde(default)]
    height: Option<f64>,
    #[serde(default)]
    start_deg: Option<f64>,
    #[serde(default)]
    sweep_deg: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRect {
    center: [f64; 3],
    normal: [f64; 3],
    half_u: f64,
    half_v: f64,
    color: [f64; 3],
    #[serde(default = "default_freq")]
    freq: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBox {
    center: [f64; 3],
    half: [f64; 3],
    color: [f64; 3],
    #[serde(default = "default_freq")]
    freq: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSphere {
    center: [f64; 3],
    radius: f64,
    color: [f64; 3],
    #[serde(default = "default_freq")]
    freq: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScene {
    #[serde(default)]
    seed: u64,
    intrinsics: RawIntrinsics,
    #[serde(default)]
    noise: RawNoise,
    trajectory: RawTrajectory,
    #[serde(default, rename = "rect")]
    rects: Vec<RawRect>,
    #[serde(default, rename = "box")]
    boxes: Vec<RawBox>,
    #[serde(default, rename = "sphere")]
    spheres: Vec<RawSphere>,
}

fn v3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

pub fn parse_scene_toml(text: &str) -> Result<SceneSpec, SynthError> {
    parse_scene_toml_with_frames(text, None)
}

/// Parses a scene description, optionally overriding the trajectory frame
/// count from the command line.
pub fn parse_scene_toml_with_frames(
    text: &str,
    frames_override: Option<usize>,
) -> Result<SceneSpec, SynthError> {
    let mut raw: RawScene = toml::from_str(text).map_err(|e| SynthError::Spec(e.to_string()))?;
    if let Some(frames) = frames_override {
        raw.trajectory.frames = frames;
    }
    let intrinsics = Intrinsics::new(
        raw.intrinsics.fx,
        raw.intrinsics.fy,
        raw.intrinsics.cx,
        raw.intrinsics.cy,
        raw.intrinsics.width,
        raw.intrinsics.height,
    )
    .map_err(|e| SynthError::Spec(e.to_string()))?;

    let t = &raw.trajectory;
    if t.frames == 0 {
        return Err(SynthError::Spec("trajectory needs frames >= 1".into()));
    }
    let trajectory = match t.kind.as_str() {
        "line" => {
            let (start, end, target) = match (t.start, t.end, t.target) {
                (Some(s), Some(e), Some(g)) => (v3(s), v3(e), v3(g)),
                _ => {
                    return Err(SynthError::Spec(
                        "line trajectory needs start, end and target".into(),
                    ))
                }
            };
            line_trajectory(start, end, target, t.frames)
        }
        "orbit" => {
            let center = t.center.map(v3).ok_or_else(|| {
                SynthError::Spec("orbit trajectory needs center".into())
            })?;
            orbit_trajectory(
                center,
                t.radius.unwrap_or(1.0),
                t.height.unwrap_or(0.0),
                t.frames,
                t.start_deg.unwrap_or(-30.0),
                t.sweep_deg.unwrap_or(60.0),
            )
        }
        other => {
            return Err(SynthError::Spec(format!(
                "unknown trajectory kind {other:?} (expected line or orbit)"
            )))
        }
    };

    let mut geometry = Vec::new();
    for r in &raw.rects {
        geometry.push(Primitive {
            shape: Shape::rect(v3(r.center), v3(r.normal), r.half_u, r.half_v),
            base_color: r.color,
            texture_freq: r.freq,
        });
    }
    for b in &raw.boxes {
        geometry.push(Primitive {
            shape: Shape::Aabb {
                center: v3(b.center),
                half: v3(b.half),
            },
            base_color: b.color,
            texture_freq: b.freq,
        });
    }
    for s in &raw.spheres {
        geometry.push(Primitive {
            shape: Shape::Sphere {
                center: v3(s.center),
                radius: s.radius,
            },
            base_color: s.color,
            texture_freq: s.freq,
        });
    }
    if geometry.is_empty() {
        return Err(SynthError::Spec("scene has no geometry".into()));
    }

    Ok(SceneSpec {
        seed: raw.seed,
        intrinsics,
        trajectory,
        geometry,
        noise: NoiseModel {
            depth_sigma: raw.noise.depth_sigma,
            flow_sigma: raw.noise.flow_sigma,
            outlier_fraction: raw.noise.outlier_fraction,
        },
    })
}
