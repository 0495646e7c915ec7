use nalgebra::{Vector2, Vector3};

use super::GeometryError;

/// Pinhole intrinsics in pixels. Pixel convention: (u, v) with u = column,
/// origin at the top-left pixel center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, GeometryError> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={fx}, fy={fy})"
            )));
        }
        if !(cx > 0.0 && cx < width as f64) || !(cy > 0.0 && cy < height as f64) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    pub fn contains(&self, uv: &Vector2<f64>) -> bool {
        uv.x >= 0.0
            && uv.x <= (self.width - 1) as f64
            && uv.y >= 0.0
            && uv.y <= (self.height - 1) as f64
    }

    /// Normalized ray direction components ((u-cx)/fx, (v-cy)/fy, 1).
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }
}

/// Projects a camera-space point, returning the pixel and its depth.
pub fn project_point(
    p: &Vector3<f64>,
    k: &Intrinsics,
) -> Result<(Vector2<f64>, f64), GeometryError> {
    if p.z <= 0.0 {
        return Err(GeometryError::NonPositiveDepth(p.z));
    }
    let u = k.fx * p.x / p.z + k.cx;
    let v = k.fy * p.y / p.z + k.cy;
    Ok((Vector2::new(u, v), p.z))
}

/// Back-projects a pixel at inverse depth `d` into camera space.
pub fn unproject_pixel(
    x: &Vector2<f64>,
    d: f64,
    k: &Intrinsics,
) -> Result<Vector3<f64>, GeometryError> {
    if d <= 0.0 {
        return Err(GeometryError::NonPositiveInverseDepth(d));
    }
    Ok(k.ray(x.x, x.y) / d)
}

/// Maps a camera-space point to (fx·X/Z + cx, fy·Y/Z + cy, 1/Z); the third
/// component is the inverse depth, so nearer points have larger z.
pub fn to_ndc(p: &Vector3<f64>, k: &Intrinsics) -> Result<Vector3<f64>, GeometryError> {
    if p.z <= 0.0 {
        return Err(GeometryError::NonPositiveDepth(p.z));
    }
    Ok(Vector3::new(
        k.fx * p.x / p.z + k.cx,
        k.fy * p.y / p.z + k.cy,
        1.0 / p.z,
    ))
}
