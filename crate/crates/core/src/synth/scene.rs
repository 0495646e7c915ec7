use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

use crate::geometry::{ColorImage, DepthImage, Frame, Grid, Intrinsics, Pose};

use super::SynthError;

/// Minimum ray parameter accepted as a hit.
const T_EPS: f64 = 1e-9;

#[derive(Debug, Clone)]
pub enum Shape {
    /// Finite two-sided rectangle: center, unit normal and in-plane half
    /// extents along derived axes.
    Rect {
        center: Vector3<f64>,
        normal: Vector3<f64>,
        u_axis: Vector3<f64>,
        v_axis: Vector3<f64>,
        half_u: f64,
        half_v: f64,
    },
    /// Axis-aligned solid box.
    Aabb {
        center: Vector3<f64>,
        half: Vector3<f64>,
    },
    Sphere { center: Vector3<f64>, radius: f64 },
}

impl Shape {
    pub fn rect(center: Vector3<f64>, normal: Vector3<f64>, half_u: f64, half_v: f64) -> Self {
        let n = normal.normalize();
        let hint = if n.y.abs() > 0.9 {
            Vector3::x()
        } else {
            Vector3::y()
        };
        let u_axis = hint.cross(&n).normalize();
        let v_axis = n.cross(&u_axis);
        Shape::Rect {
            center,
            normal: n,
            u_axis,
            v_axis,
            half_u,
            half_v,
        }
    }

    /// Nearest positive ray parameter, with `dir` not necessarily unit length.
    fn cast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        match self {
            Shape::Rect {
                center,
                normal,
                u_axis,
                v_axis,
                half_u,
                half_v,
            } => {
                let denom = normal.dot(dir);
                if denom.abs() < 1e-14 {
                    return None;
                }
                let t = normal.dot(&(center - origin)) / denom;
                if t <= T_EPS {
                    return None;
                }
                let hit = origin + dir * t - center;
                if hit.dot(u_axis).abs() <= *half_u && hit.dot(v_axis).abs() <= *half_v {
                    Some(t)
                } else {
                    None
                }
            }
            Shape::Aabb { center, half } => {
                let mut tmin = f64::NEG_INFINITY;
                let mut tmax = f64::INFINITY;
                for axis in 0..3 {
                    let o = origin[axis] - center[axis];
                    let d = dir[axis];
                    if d.abs() < 1e-14 {
                        if o.abs() > half[axis] {
                            return None;
                        }
                        continue;
                    }
                    let t1 = (-half[axis] - o) / d;
                    let t2 = (half[axis] - o) / d;
                    let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
                    tmin = tmin.max(lo);
                    tmax = tmax.min(hi);
                    if tmin > tmax {
                        return None;
                    }
                }
                if tmin > T_EPS {
                    Some(tmin)
                } else if tmax > T_EPS {
                    Some(tmax)
                } else {
                    None
                }
            }
            Shape::Sphere { center, radius } => {
                let oc = origin - center;
                let a = dir.dot(dir);
                let b = 2.0 * oc.dot(dir);
                let c = oc.dot(&oc) - radius * radius;
                let disc = b * b - 4.0 * a * c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let t1 = (-b - sq) / (2.0 * a);
                let t2 = (-b + sq) / (2.0 * a);
                if t1 > T_EPS {
                    Some(t1)
                } else if t2 > T_EPS {
                    Some(t2)
                } else {
                    None
                }
            }
        }
    }

    /// Whether a point sits strictly inside a solid primitive.
    fn contains(&self, p: &Vector3<f64>) -> bool {
        match self {
            Shape::Rect { .. } => false,
            Shape::Aabb { center, half } => {
                (0..3).all(|a| (p[a] - center[a]).abs() < half[a])
            }
            Shape::Sphere { center, radius } => (p - center).norm() < *radius,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Primitive {
    pub shape: Shape,
    pub base_color: [f64; 3],
    pub texture_freq: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoiseModel {
    pub depth_sigma: f64,
    pub flow_sigma: f64,
    pub outlier_fraction: f64,
}

/// Full description of a synthetic scene; the seed fixes every random
/// quantity derived from it (textures, emitted noise).
#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub seed: u64,
    pub intrinsics: Intrinsics,
    pub trajectory: Vec<Pose>,
    pub geometry: Vec<Primitive>,
    pub noise: NoiseModel,
}

fn lattice_hash(x: i64, y: i64, z: i64, seed: u64) -> f64 {
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for v in [x as u64, y as u64, z as u64] {
        h ^= v.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = h.rotate_left(31).wrapping_mul(0x94D0_49BB_1331_11EB);
    }
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn fade(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Trilinear value noise in \[0, 1\].
fn value_noise(p: &Vector3<f64>, seed: u64) -> f64 {
    let cell = p.map(|v| v.floor());
    let frac = p - cell;
    let (ix, iy, iz) = (cell.x as i64, cell.y as i64, cell.z as i64);
    let (fx, fy, fz) = (fade(frac.x), fade(frac.y), fade(frac.z));
    let mut acc = 0.0;
    for dz in 0..2 {
        for dy in 0..2 {
            for dx in 0..2 {
                let w = (if dx == 0 { 1.0 - fx } else { fx })
                    * (if dy == 0 { 1.0 - fy } else { fy })
                    * (if dz == 0 { 1.0 - fz } else { fz });
                acc += w * lattice_hash(ix + dx, iy + dy, iz + dz, seed);
            }
        }
    }
    acc
}

/// 3-octave value noise in \[0, 1\].
fn octave_noise(p: &Vector3<f64>, freq: f64, seed: u64) -> f64 {
    let mut amp = 0.5;
    let mut f = freq;
    let mut acc = 0.0;
    let mut norm = 0.0;
    for octave in 0..3 {
        acc += amp * value_noise(&(p * f), seed.wrapping_add(octave * 7919));
        norm += amp;
        amp *= 0.5;
        f *= 2.0;
    }
    acc / norm
}

impl SceneSpec {
    fn surface_color(&self, prim_index: usize, p_world: &Vector3<f64>) -> [f64; 3] {
        let prim = &self.geometry[prim_index];
        let mut rgb = [0.0; 3];
        for (ch, value) in rgb.iter_mut().enumerate() {
            let seed = self
                .seed
                .wrapping_add(prim_index as u64 * 1_000_003)
                .wrapping_add(ch as u64 * 104_729);
            let n = octave_noise(p_world, prim.texture_freq, seed);
            *value = (prim.base_color[ch] * (0.35 + 0.85 * n)).clamp(0.0, 1.0);
        }
        rgb
    }

    /// Nearest hit over the whole scene: (ray parameter, primitive index).
    /// `dir` need not be unit length; with camera rays of the form
    /// (mx, my, 1) the returned parameter equals the camera-space depth.
    pub fn cast_world(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for (idx, prim) in self.geometry.iter().enumerate() {
            if let Some(t) = prim.shape.cast(origin, dir) {
                if best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, idx));
                }
            }
        }
        best
    }

    pub fn camera_inside_geometry(&self, index: usize) -> bool {
        let origin = self.trajectory[index].translation();
        self.geometry.iter().any(|p| p.shape.contains(&origin))
    }

    /// Exact ray-cast render of frame `index`: color, z-depth, pose and
    /// intrinsics are all ground truth. A camera inside a solid yields an
    /// all-invalid depth image.
    pub fn render_frame(&self, index: usize) -> Result<Frame, SynthError> {
        if index >= self.trajectory.len() {
            return Err(SynthError::IndexOutOfRange {
                index,
                len: self.trajectory.len(),
            });
        }
        let pose = self.trajectory[index];
        let k = self.intrinsics;
        let (w, h) = (k.width, k.height);

        if self.camera_inside_geometry(index) {
            return Ok(Frame::new(
                index,
                Some(ColorImage::filled(w, h, [0.0, 0.0, 0.0])),
                Some(DepthImage::invalid(w, h)),
                Some(pose),
                Some(k),
            )
            .expect("frame has fields"));
        }

        let origin = pose.translation();
        let rot = pose.rotation_matrix();
        let mut depth_values = Grid::filled(w, h, 0.0);
        let mut colors = Grid::filled(w, h, [0.0, 0.0, 0.0]);
        for y in 0..h {
            for x in 0..w {
                let dir = rot * k.ray(x as f64, y as f64);
                if let Some((t, idx)) = self.cast_world(&origin, &dir) {
                    depth_values.set(x, y, t);
                    let p_world = origin + dir * t;
                    colors.set(x, y, self.surface_color(idx, &p_world));
                }
            }
        }
        Ok(Frame::new(
            index,
            Some(ColorImage::new(colors)),
            Some(DepthImage::new(depth_values)),
            Some(pose),
            Some(k),
        )
        .expect("frame has fields"))
    }
}

/// Camera-to-world pose looking from `eye` toward `target`. World +y is the
/// image down direction; camera axes are x=right, y=down, z=forward.
pub fn look_at_pose(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Pose {
    let f = (target - eye).normalize();
    let up = if f.cross(&up).norm() < 1e-6 {
        Vector3::x()
    } else {
        up
    };
    let r = up.cross(&f).normalize();
    let d = f.cross(&r);
    let m = Matrix3::from_columns(&[r, d, f]);
    let rot = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m));
    Pose::new(rot, eye)
}

/// Circular trajectory in the xz-plane at height `y`, looking at `center`.
pub fn orbit_trajectory(
    center: Vector3<f64>,
    radius: f64,
    y: f64,
    frames: usize,
    start_deg: f64,
    sweep_deg: f64,
) -> Vec<Pose> {
    (0..frames)
        .map(|i| {
            let s = if frames > 1 {
                i as f64 / (frames - 1) as f64
            } else {
                0.0
            };
            let ang = (start_deg + s * sweep_deg).to_radians();
            let eye = center + Vector3::new(radius * ang.sin(), 0.0, -radius * ang.cos());
            let eye = Vector3::new(eye.x, y, eye.z);
            look_at_pose(eye, center, Vector3::new(0.0, 1.0, 0.0))
        })
        .collect()
}

/// Straight-line trajectory from `start` to `end`, looking at a fixed target,
/// which varies the facing direction slightly across frames.
pub fn line_trajectory(
    start: Vector3<f64>,
    end: Vector3<f64>,
    target: Vector3<f64>,
    frames: usize,
) -> Vec<Pose> {
    (0..frames)
        .map(|i| {
            let s = if frames > 1 {
                i as f64 / (frames - 1) as f64
            } else {
                0.0
            };
            let eye = start + (end - start) * s;
            look_at_pose(eye, target, Vector3::new(0.0, 1.0, 0.0))
        })
        .collect()
}

/// Closed textured room (floor, ceiling, three walls) with a box and a
/// sphere, viewed from a lateral sweep with good parallax. The workhorse
/// scene for end-to-end tests.
pub fn demo_room_scene(seed: u64, width: usize, height: usize, frames: usize) -> SceneSpec {
    let f = 0.8 * width as f64;
    let intrinsics = Intrinsics::new(
        f,
        f,
        width as f64 / 2.0,
        height as f64 / 2.0,
        width,
        height,
    )
    .expect("valid intrinsics");
    let rect = |center: [f64; 3], normal: [f64; 3], hu: f64, hv: f64, color: [f64; 3]| Primitive {
        shape: Shape::rect(
            Vector3::new(center[0], center[1], center[2]),
            Vector3::new(normal[0], normal[1], normal[2]),
            hu,
            hv,
        ),
        base_color: color,
        texture_freq: 2.2,
    };
    let geometry = vec![
        // floor (y = +1.2, normal up into the room)
        rect([0.0, 1.2, 1.0], [0.0, -1.0, 0.0], 2.2, 3.2, [0.85, 0.75, 0.55]),
        // ceiling
        rect([0.0, -1.2, 1.0], [0.0, 1.0, 0.0], 2.2, 3.2, [0.75, 0.78, 0.82]),
        // back wall (z = +2.4)
        rect([0.0, 0.0, 2.4], [0.0, 0.0, -1.0], 2.2, 1.25, [0.55, 0.75, 0.9]),
        // side walls
        rect([-2.2, 0.0, 1.0], [1.0, 0.0, 0.0], 3.2, 1.25, [0.9, 0.6, 0.55]),
        rect([2.2, 0.0, 1.0], [-1.0, 0.0, 0.0], 3.2, 1.25, [0.6, 0.9, 0.6]),
        Primitive {
            shape: Shape::Aabb {
                center: Vector3::new(0.7, 0.85, 1.5),
                half: Vector3::new(0.35, 0.35, 0.35),
            },
            base_color: [0.9, 0.85, 0.35],
            texture_freq: 3.0,
        },
        Primitive {
            shape: Shape::Sphere {
                center: Vector3::new(-0.8, 0.65, 1.4),
                radius: 0.4,
            },
            base_color: [0.85, 0.45, 0.85],
            texture_freq: 3.0,
        },
    ];
    let trajectory = line_trajectory(
        Vector3::new(-0.7, -0.1, -0.7),
        Vector3::new(0.7, 0.1, -0.5),
        Vector3::new(0.0, 0.2, 1.9),
        frames,
    );
    SceneSpec {
        seed,
        intrinsics,
        trajectory,
        geometry,
        noise: NoiseModel::default(),
    }
}

/// Single fronto-parallel textured plane at depth `z` filling the view.
pub fn plane_scene(seed: u64, width: usize, height: usize, z: f64, frames: usize) -> SceneSpec {
    let f = 0.9 * width as f64;
    let intrinsics = Intrinsics::new(
        f,
        f,
        width as f64 / 2.0,
        height as f64 / 2.0,
        width,
        height,
    )
    .expect("valid intrinsics");
    let geometry = vec![Primitive {
        shape: Shape::rect(
            Vector3::new(0.0, 0.0, z),
            Vector3::new(0.0, 0.0, -1.0),
            4.0 * z,
            4.0 * z,
        ),
        base_color: [0.8, 0.7, 0.6],
        texture_freq: 2.0,
    }];
    let trajectory = line_trajectory(
        Vector3::zeros(),
        Vector3::new(0.1 * z * (frames.max(2) - 1) as f64, 0.0, 0.0),
        Vector3::new(0.0, 0.0, z),
        frames,
    );
    SceneSpec {
        seed,
        intrinsics,
        trajectory,
        geometry,
        noise: NoiseModel::default(),
    }
}

/// Two rectangles meeting at a 90° vertical crease along (x=0, z=2).
pub fn crease_scene(seed: u64, width: usize, height: usize) -> SceneSpec {
    let f = 1.0 * width as f64;
    let intrinsics = Intrinsics::new(
        f,
        f,
        width as f64 / 2.0,
        height as f64 / 2.0,
        width,
        height,
    )
    .expect("valid intrinsics");
    let half_u = 0.6 * std::f64::consts::SQRT_2 + 1e-9;
    let geometry = vec![
        Primitive {
            // X + Z = 2, left of the crease
            shape: Shape::rect(
                Vector3::new(-0.6, 0.0, 2.6),
                Vector3::new(1.0, 0.0, 1.0),
                half_u,
                2.0,
            ),
            base_color: [0.8, 0.8, 0.8],
            texture_freq: 2.0,
        },
        Primitive {
            // X - Z = -2, right of the crease
            shape: Shape::rect(
                Vector3::new(0.6, 0.0, 2.6),
                Vector3::new(1.0, 0.0, -1.0),
                half_u,
                2.0,
            ),
            base_color: [0.8, 0.8, 0.8],
            texture_freq: 2.0,
        },
    ];
    SceneSpec {
        seed,
        intrinsics,
        trajectory: vec![Pose::identity()],
        geometry,
        noise: NoiseModel::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fronto_parallel_plane_has_constant_z_depth() {
        let scene = plane_scene(1, 32, 24, 2.0, 1);
        let frame = scene.render_frame(0).unwrap();
        let depth = frame.depth.unwrap();
        for (x, y, v) in depth.validity.iter() {
            assert!(*v, "pixel ({x},{y}) should hit the plane");
            assert!(
                (depth.depth(x, y).unwrap() - 2.0).abs() < 1e-12,
                "z-depth of a fronto-parallel plane is its plane depth"
            );
        }
    }

    #[test]
    fn render_is_deterministic() {
        let scene = demo_room_scene(9, 40, 30, 3);
        let a = scene.render_frame(1).unwrap();
        let b = scene.render_frame(1).unwrap();
        assert_eq!(a.depth.as_ref().unwrap().values, b.depth.as_ref().unwrap().values);
        assert_eq!(a.color.as_ref().unwrap().values, b.color.as_ref().unwrap().values);
    }

    #[test]
    fn index_out_of_range() {
        let scene = plane_scene(1, 16, 12, 2.0, 2);
        assert!(matches!(
            scene.render_frame(5),
            Err(SynthError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn camera_inside_solid_renders_invalid() {
        let mut scene = plane_scene(1, 16, 12, 2.0, 1);
        scene.geometry.push(Primitive {
            shape: Shape::Sphere {
                center: Vector3::zeros(),
                radius: 0.5,
            },
            base_color: [1.0, 1.0, 1.0],
            texture_freq: 1.0,
        });
        let frame = scene.render_frame(0).unwrap();
        assert_eq!(frame.depth.unwrap().valid_count(), 0);
    }

    #[test]
    fn rendered_depth_unprojects_onto_surface() {
        use crate::geometry::unproject_pixel;
        let scene = demo_room_scene(3, 32, 24, 2);
        let frame = scene.render_frame(0).unwrap();
        let depth = frame.depth.unwrap();
        let pose = frame.pose.unwrap();
        let k = frame.intrinsics.unwrap();
        for (x, y) in [(0usize, 0usize), (16, 12), (31, 23), (5, 20)] {
            let d = depth.depth(x, y).expect("closed room hits everywhere");
            let p_cam = unproject_pixel(
                &nalgebra::Vector2::new(x as f64, y as f64),
                1.0 / d,
                &k,
            )
            .unwrap();
            let p_world = pose.apply(&p_cam);
            // re-cast the same ray analytically; the hit must coincide
            let dir = pose.rotation_matrix() * k.ray(x as f64, y as f64);
            let (t, _) = scene.cast_world(&pose.translation(), &dir).unwrap();
            let hit = pose.translation() + dir * t;
            assert!((p_world - hit).norm() < 1e-9);
        }
    }

    #[test]
    fn look_at_points_camera_z_at_target() {
        let eye = Vector3::new(1.0, -0.5, -2.0);
        let target = Vector3::new(0.0, 0.0, 2.0);
        let pose = look_at_pose(eye, target, Vector3::new(0.0, 1.0, 0.0));
        let f_world = pose.rotation_matrix() * Vector3::z();
        let expected = (target - eye).normalize();
        assert!((f_world - expected).norm() < 1e-12);
    }
}
