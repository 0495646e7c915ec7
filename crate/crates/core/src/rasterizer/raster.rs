use nalgebra::Vector3;

use crate::geometry::{DepthImage, Grid, Intrinsics};

use super::RasterError;

#[derive(Debug, Clone, Copy)]
pub struct RasterConfig {
    /// Finest point resolution r in meters; drives the coverage window.
    pub point_resolution: f64,
    pub intrinsics: Intrinsics,
    /// First-layer threshold th in meters: a gap of at least this size along
    /// a ray separates depth layers.
    pub layer_threshold: f64,
    /// Maximum surviving neighbors blended per ray.
    pub k_ray: usize,
    /// Gaussian blending bandwidth over squared pixel distance.
    pub sigma: f64,
    /// Depth-adaptive coverage (the fix for near-surface holes); when false
    /// the window is sized as if every point sat at z = 1.
    pub adaptive_radius: bool,
}

impl RasterConfig {
    pub fn new(intrinsics: Intrinsics, point_resolution: f64) -> Self {
        Self {
            point_resolution,
            intrinsics,
            layer_threshold: 0.05,
            k_ray: 8,
            sigma: 1.0,
            adaptive_radius: true,
        }
    }

    fn focal(&self) -> f64 {
        self.intrinsics.fx.max(self.intrinsics.fy)
    }
}

/// Side length in pixels of the square splat window for a point at depth
/// `z`: √2·r·f_im/z, floored at one pixel.
pub fn coverage_extent(z: f64, r: f64, f_im: f64) -> Result<f64, RasterError> {
    if z <= 0.0 {
        return Err(RasterError::NonPositiveDepth(z));
    }
    Ok((std::f64::consts::SQRT_2 * r * f_im / z).max(1.0))
}

/// First-layer mask over ascending depths along one ray: the first point is
/// occupied, each later point only while the gap to its predecessor stays
/// below `th`, and the cumulative product kills everything after the first
/// break.
pub fn first_layer_mask(z_sorted: &[f64], th: f64) -> Vec<bool> {
    let mut mask = Vec::with_capacity(z_sorted.len());
    let mut alive = true;
    for (t, z) in z_sorted.iter().enumerate() {
        if t > 0 {
            alive = alive && (z - z_sorted[t - 1] < th);
        }
        mask.push(alive);
    }
    mask
}

/// Per-pixel rasterization result: blended depth, the blended camera-space
/// surface point, and the contributing point indices with their weights.
#[derive(Debug, Clone)]
pub struct RasterOutput {
    pub depth: DepthImage,
    pub surface: Grid<[f64; 3]>,
    pub contributions: Grid<Vec<(u32, f64)>>,
}

impl RasterOutput {
    pub fn surface_point(&self, x: usize, y: usize) -> Option<Vector3<f64>> {
        if self.depth.is_valid(x, y) {
            let s = self.surface.get(x, y);
            Some(Vector3::new(s[0], s[1], s[2]))
        } else {
            None
        }
    }
}

/// Projected point: pixel-space ndc x/y, camera z, window half-extent.
struct Splat {
    x: f64,
    y: f64,
    z: f64,
    half: f64,
}

fn project_splats(points: &[Vector3<f64>], cfg: &RasterConfig) -> Vec<Option<Splat>> {
    let k = &cfg.intrinsics;
    let f_im = cfg.focal();
    points
        .iter()
        .map(|p| {
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) || p.z <= 0.0 {
                return None;
            }
            let x = k.fx * p.x / p.z + k.cx;
            let y = k.fy * p.y / p.z + k.cy;
            let z_for_extent = if cfg.adaptive_radius { p.z } else { 1.0 };
            let ext = coverage_extent(z_for_extent, cfg.point_resolution, f_im)
                .expect("positive depth checked above");
            Some(Splat {
                x,
                y,
                z: p.z,
                half: ext / 2.0,
            })
        })
        .collect()
}

/// Blended surface point and the contributing (index, weight) pairs.
type PixelBlend = (Vector3<f64>, Vec<(u32, f64)>);

/// Identical reduction used by both the scatter path and the oracle:
/// candidates ascending by index, sort by (z, index), first-layer filter,
/// keep the K_ray nearest in pixel distance, Gaussian-blend positions.
fn reduce_pixel(
    candidates: &[u32],
    splats: &[Option<Splat>],
    points: &[Vector3<f64>],
    ix: usize,
    iy: usize,
    cfg: &RasterConfig,
) -> Option<PixelBlend> {
    if candidates.is_empty() {
        return None;
    }
    let mut order: Vec<u32> = candidates.to_vec();
    order.sort_by(|a, b| {
        let za = splats[*a as usize].as_ref().unwrap().z;
        let zb = splats[*b as usize].as_ref().unwrap().z;
        za.partial_cmp(&zb).unwrap().then(a.cmp(b))
    });
    let zs: Vec<f64> = order
        .iter()
        .map(|i| splats[*i as usize].as_ref().unwrap().z)
        .collect();
    let mask = first_layer_mask(&zs, cfg.layer_threshold);
    let mut survivors: Vec<(f64, u32)> = order
        .iter()
        .zip(&mask)
        .filter(|(_, keep)| **keep)
        .map(|(i, _)| {
            let s = splats[*i as usize].as_ref().unwrap();
            let dx = s.x - ix as f64;
            let dy = s.y - iy as f64;
            (dx * dx + dy * dy, *i)
        })
        .collect();
    if survivors.len() > cfg.k_ray {
        survivors.sort_by(|a, b| a.partial_cmp(b).unwrap());
        survivors.truncate(cfg.k_ray);
    }
    let d2_min = survivors
        .iter()
        .map(|(d2, _)| *d2)
        .fold(f64::INFINITY, f64::min);
    let mut total = 0.0;
    let mut weights = Vec::with_capacity(survivors.len());
    for (d2, idx) in &survivors {
        let w = (-(d2 - d2_min) / cfg.sigma).exp();
        total += w;
        weights.push((*idx, w));
    }
    let mut blended = Vector3::zeros();
    for (idx, w) in &mut weights {
        *w /= total;
        blended += points[*idx as usize] * *w;
    }
    Some((blended, weights))
}

fn output_from(
    splats: &[Option<Splat>],
    points: &[Vector3<f64>],
    cfg: &RasterConfig,
    candidates_of: impl Fn(usize, usize) -> Vec<u32>,
) -> RasterOutput {
    let (w, h) = (cfg.intrinsics.width, cfg.intrinsics.height);
    let mut depth_values = Grid::filled(w, h, 0.0);
    let mut surface = Grid::filled(w, h, [0.0; 3]);
    let mut contributions = Grid::filled(w, h, Vec::new());
    for iy in 0..h {
        for ix in 0..w {
            let cands = candidates_of(ix, iy);
            if let Some((p, weights)) = reduce_pixel(&cands, splats, points, ix, iy, cfg) {
                depth_values.set(ix, iy, p.z);
                surface.set(ix, iy, [p.x, p.y, p.z]);
                contributions.set(ix, iy, weights);
            }
        }
    }
    RasterOutput {
        depth: DepthImage::new(depth_values),
        surface,
        contributions,
    }
}

/// Rasterizes camera-space points into a depth/surface image by scattering
/// each point over its coverage window and reducing per pixel. Points behind
/// the camera are ignored.
pub fn rasterize(points: &[Vector3<f64>], cfg: &RasterConfig) -> RasterOutput {
    let (w, h) = (cfg.intrinsics.width, cfg.intrinsics.height);
    let splats = project_splats(points, cfg);
    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); w * h];
    for (i, splat) in splats.iter().enumerate() {
        let Some(s) = splat else { continue };
        let x0 = (s.x - s.half).ceil().max(0.0) as usize;
        let x1 = (s.x + s.half).floor().min((w - 1) as f64);
        let y0 = (s.y - s.half).ceil().max(0.0) as usize;
        let y1 = (s.y + s.half).floor().min((h - 1) as f64);
        if x1 < 0.0 || y1 < 0.0 || s.x - s.half > (w - 1) as f64 || s.y - s.half > (h - 1) as f64 {
            continue;
        }
        let (x1, y1) = (x1 as usize, y1 as usize);
        for iy in y0..=y1 {
            for ix in x0..=x1 {
                buckets[iy * w + ix].push(i as u32);
            }
        }
    }
    output_from(&splats, points, cfg, |ix, iy| buckets[iy * w + ix].clone())
}

/// Brute-force reference: every pixel tests every point's window membership
/// exhaustively, then applies the identical reduction. Test and benchmark
/// use only.
pub fn rasterize_oracle(points: &[Vector3<f64>], cfg: &RasterConfig) -> RasterOutput {
    let splats = project_splats(points, cfg);
    output_from(&splats, points, cfg, |ix, iy| {
        let mut cands = Vec::new();
        for (i, splat) in splats.iter().enumerate() {
            if let Some(s) = splat {
                if (ix as f64 - s.x).abs() <= s.half && (iy as f64 - s.y).abs() <= s.half {
                    cands.push(i as u32);
                }
            }
        }
        cands
    })
}
