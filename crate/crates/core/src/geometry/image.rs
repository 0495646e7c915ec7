use super::{GeometryError, Intrinsics, Pose};

/// Row-major H×W grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }
}

impl<T> Grid<T> {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    pub fn get_mut(&mut self, x: usize, y: usize) -> &mut T {
        &mut self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: T) {
        self.data[y * self.width + x] = value;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn same_shape<U>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Iterates (x, y, value) in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &T)> {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .map(move |(i, v)| (i % w, i / w, v))
    }
}

/// Depth in meters with a per-pixel validity mask. Valid pixels are finite
/// and strictly positive; 0 encodes invalid on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub values: Grid<f64>,
    pub validity: Grid<bool>,
}

impl DepthImage {
    /// Builds from raw values; non-finite or non-positive entries become invalid.
    pub fn new(values: Grid<f64>) -> Self {
        let validity = Grid::from_fn(values.width(), values.height(), |x, y| {
            let v = *values.get(x, y);
            v.is_finite() && v > 0.0
        });
        Self { values, validity }
    }

    pub fn with_validity(values: Grid<f64>, validity: Grid<bool>) -> Self {
        assert!(values.same_shape(&validity));
        let validity = Grid::from_fn(values.width(), values.height(), |x, y| {
            let v = *values.get(x, y);
            *validity.get(x, y) && v.is_finite() && v > 0.0
        });
        Self { values, validity }
    }

    pub fn invalid(width: usize, height: usize) -> Self {
        Self {
            values: Grid::filled(width, height, 0.0),
            validity: Grid::filled(width, height, false),
        }
    }

    pub fn width(&self) -> usize {
        self.values.width()
    }

    pub fn height(&self) -> usize {
        self.values.height()
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        *self.validity.get(x, y)
    }

    pub fn depth(&self, x: usize, y: usize) -> Option<f64> {
        self.is_valid(x, y).then(|| *self.values.get(x, y))
    }

    pub fn valid_count(&self) -> usize {
        self.validity.data().iter().filter(|v| **v).count()
    }
}

/// RGB image with channels in \[0, 1\].
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    pub values: Grid<[f64; 3]>,
}

impl ColorImage {
    pub fn new(values: Grid<[f64; 3]>) -> Self {
        Self { values }
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        Self {
            values: Grid::filled(width, height, rgb),
        }
    }

    pub fn width(&self) -> usize {
        self.values.width()
    }

    pub fn height(&self) -> usize {
        self.values.height()
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        *self.values.get(x, y)
    }
}

/// One time step of inputs; any subset of fields may be present.
#[derive(Debug, Clone)]
pub struct Frame {
    pub id: usize,
    pub color: Option<ColorImage>,
    pub depth: Option<DepthImage>,
    pub pose: Option<Pose>,
    pub intrinsics: Option<Intrinsics>,
}

impl Frame {
    pub fn new(
        id: usize,
        color: Option<ColorImage>,
        depth: Option<DepthImage>,
        pose: Option<Pose>,
        intrinsics: Option<Intrinsics>,
    ) -> Result<Self, GeometryError> {
        if color.is_none() && depth.is_none() && pose.is_none() && intrinsics.is_none() {
            return Err(GeometryError::EmptyFrame(id));
        }
        Ok(Self {
            id,
            color,
            depth,
            pose,
            intrinsics,
        })
    }
}

/// Bilinear sample of a masked scalar grid. Taps with weight below 1e-12 are
/// ignored, so integer coordinates only need the pixel itself to be valid.
/// Returns None when out of bounds or when a contributing tap is invalid.
pub(crate) fn bilinear_masked(
    values: &Grid<f64>,
    validity: &Grid<bool>,
    x: f64,
    y: f64,
) -> Option<f64> {
    let (w, h) = (values.width(), values.height());
    if !(x >= 0.0 && y >= 0.0 && x <= (w - 1) as f64 && y <= (h - 1) as f64) {
        return None;
    }
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let taps = [
        (x0, y0, (1.0 - fx) * (1.0 - fy)),
        (x1, y0, fx * (1.0 - fy)),
        (x0, y1, (1.0 - fx) * fy),
        (x1, y1, fx * fy),
    ];
    let mut acc = 0.0;
    for (tx, ty, wgt) in taps {
        if wgt < 1e-12 {
            continue;
        }
        if !validity.get(tx, ty) {
            return None;
        }
        acc += wgt * values.get(tx, ty);
    }
    Some(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_masks_non_positive_values() {
        let mut g = Grid::filled(2, 2, 1.0);
        g.set(0, 0, 0.0);
        g.set(1, 0, -3.0);
        g.set(0, 1, f64::NAN);
        let d = DepthImage::new(g);
        assert!(!d.is_valid(0, 0));
        assert!(!d.is_valid(1, 0));
        assert!(!d.is_valid(0, 1));
        assert_eq!(d.depth(1, 1), Some(1.0));
    }

    #[test]
    fn frame_requires_some_field() {
        assert!(Frame::new(0, None, None, None, None).is_err());
        assert!(Frame::new(0, None, None, Some(Pose::identity()), None).is_ok());
    }

    #[test]
    fn bilinear_interpolates_and_respects_mask() {
        let values = Grid::from_fn(3, 3, |x, _| x as f64);
        let valid = Grid::filled(3, 3, true);
        let v = bilinear_masked(&values, &valid, 0.5, 1.0).unwrap();
        assert!((v - 0.5).abs() < 1e-12);

        let mut holed = valid.clone();
        holed.set(1, 1, false);
        assert!(bilinear_masked(&values, &holed, 0.5, 1.0).is_none());
        // zero-weight taps do not consult the mask
        assert!(bilinear_masked(&values, &holed, 0.0, 0.0).is_some());
        assert!(bilinear_masked(&values, &holed, 3.5, 0.0).is_none());
    }
}
