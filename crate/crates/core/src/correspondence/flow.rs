use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::geometry::Grid;

use super::CorrespondenceError;

const FLOW_MAGIC: &[u8; 4] = b"FLW1";

/// Dense per-pixel correspondence offsets from frame i to frame j:
/// `x*_j = x_i + offset(x_i)`. Offsets may point outside the image; the
/// validity mask and bounds checks downstream handle that.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub offsets: Grid<[f64; 2]>,
    pub validity: Grid<bool>,
}

impl FlowField {
    pub fn new(offsets: Grid<[f64; 2]>, validity: Grid<bool>) -> Self {
        assert!(offsets.same_shape(&validity));
        Self { offsets, validity }
    }

    pub fn zero(width: usize, height: usize) -> Self {
        Self {
            offsets: Grid::filled(width, height, [0.0, 0.0]),
            validity: Grid::filled(width, height, true),
        }
    }

    pub fn invalid(width: usize, height: usize) -> Self {
        Self {
            offsets: Grid::filled(width, height, [0.0, 0.0]),
            validity: Grid::filled(width, height, false),
        }
    }

    pub fn width(&self) -> usize {
        self.offsets.width()
    }

    pub fn height(&self) -> usize {
        self.offsets.height()
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        *self.validity.get(x, y)
    }

    pub fn offset(&self, x: usize, y: usize) -> [f64; 2] {
        *self.offsets.get(x, y)
    }

    /// Target pixel `x + offset` for a valid source pixel.
    pub fn target(&self, x: usize, y: usize) -> Option<[f64; 2]> {
        if !self.is_valid(x, y) {
            return None;
        }
        let o = self.offset(x, y);
        Some([x as f64 + o[0], y as f64 + o[1]])
    }

    /// Bilinear flow sample at a continuous position. Taps with zero weight
    /// are ignored; any contributing invalid tap invalidates the sample.
    pub fn sample(&self, x: f64, y: f64) -> Option<[f64; 2]> {
        let (w, h) = (self.width(), self.height());
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
        let mut acc = [0.0, 0.0];
        for (tx, ty, wgt) in taps {
            if wgt < 1e-12 {
                continue;
            }
            if !self.is_valid(tx, ty) {
                return None;
            }
            let o = self.offset(tx, ty);
            acc[0] += wgt * o[0];
            acc[1] += wgt * o[1];
        }
        Some(acc)
    }

    pub fn valid_count(&self) -> usize {
        self.validity.data().iter().filter(|v| **v).count()
    }
}

/// Writes the little-endian `FLW1` binary format: magic, u32 height,
/// u32 width, H·W·2 float32 offsets, H·W validity bytes.
pub fn write_flow(path: &Path, flow: &FlowField) -> Result<(), CorrespondenceError> {
    let io = |source| CorrespondenceError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    let io = |source| CorrespondenceError::Io {
        path: path.to_path_buf(),
        source,
    };
    w.write_all(FLOW_MAGIC).map_err(io)?;
    w.write_u32::<LittleEndian>(flow.height() as u32).map_err(io)?;
    w.write_u32::<LittleEndian>(flow.width() as u32).map_err(io)?;
    for (_, _, o) in flow.offsets.iter() {
        w.write_f32::<LittleEndian>(o[0] as f32).map_err(io)?;
        w.write_f32::<LittleEndian>(o[1] as f32).map_err(io)?;
    }
    for (_, _, v) in flow.validity.iter() {
        w.write_u8(u8::from(*v)).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_flow(path: &Path) -> Result<FlowField, CorrespondenceError> {
    let io = |source| CorrespondenceError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut r = BufReader::new(File::open(path).map_err(io)?);
    let io = |source| CorrespondenceError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != FLOW_MAGIC {
        return Err(CorrespondenceError::Format {
            path: path.to_path_buf(),
            message: format!("bad magic {magic:?}"),
        });
    }
    let height = r.read_u32::<LittleEndian>().map_err(io)? as usize;
    let width = r.read_u32::<LittleEndian>().map_err(io)? as usize;
    if width == 0 || height == 0 || width.saturating_mul(height) > (1 << 28) {
        return Err(CorrespondenceError::Format {
            path: path.to_path_buf(),
            message: format!("unreasonable size {width}x{height}"),
        });
    }
    let mut offsets = Vec::with_capacity(width * height);
    for _ in 0..width * height {
        let ox = r.read_f32::<LittleEndian>().map_err(io)? as f64;
        let oy = r.read_f32::<LittleEndian>().map_err(io)? as f64;
        offsets.push([ox, oy]);
    }
    let mut validity = vec![0u8; width * height];
    r.read_exact(&mut validity).map_err(io)?;

    let mut k = 0;
    let off = Grid::from_fn(width, height, |_, _| {
        let v = offsets[k];
        k += 1;
        v
    });
    let mut k = 0;
    let val = Grid::from_fn(width, height, |_, _| {
        let v = validity[k] != 0;
        k += 1;
        v
    });
    Ok(FlowField::new(off, val))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flow_file_roundtrip() {
        let dir = std::env::temp_dir().join(format!("scene_core_flow_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.flw");
        let offsets = Grid::from_fn(5, 4, |x, y| [x as f64 * 0.5, -(y as f64)]);
        let validity = Grid::from_fn(5, 4, |x, y| (x + y) % 3 != 0);
        let flow = FlowField::new(offsets, validity);
        write_flow(&path, &flow).unwrap();
        let back = read_flow(&path).unwrap();
        assert_eq!(back.width(), 5);
        assert_eq!(back.height(), 4);
        assert_eq!(back.validity, flow.validity);
        for (x, y, o) in flow.offsets.iter() {
            let b = back.offset(x, y);
            assert!((b[0] - o[0]).abs() < 1e-6 && (b[1] - o[1]).abs() < 1e-6);
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn sample_is_bilinear_valid_aware() {
        let offsets = Grid::from_fn(3, 3, |x, _| [x as f64, 0.0]);
        let mut validity = Grid::filled(3, 3, true);
        validity.set(2, 2, false);
        let flow = FlowField::new(offsets, validity);
        let s = flow.sample(0.5, 0.0).unwrap();
        assert!((s[0] - 0.5).abs() < 1e-12);
        assert!(flow.sample(1.5, 1.5).is_none());
        assert!(flow.sample(-0.1, 0.0).is_none());
    }
}
