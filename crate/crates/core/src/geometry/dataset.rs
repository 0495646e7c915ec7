//! Dataset directory layout:
//!
//! ```text
//! rgb/NNNNNN.png        8-bit RGB
//! depth/NNNNNN.png      16-bit grayscale, millimeters, 0 = invalid
//! prior/NNNNNN.png      optional dense depth prior, same encoding as depth
//! flow/IIIIII_JJJJJJ.flw  optional dense flow i→j (FLW1 binary)
//! poses.txt             one line per frame: id tx ty tz qx qy qz qw (camera-to-world)
//! intrinsics.txt        fx fy cx cy width height
//! ```
//!
//! Any file may be absent; absence maps to the corresponding `Frame` field
//! being empty.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};
use nalgebra::Vector3;
use thiserror::Error;

use super::{ColorImage, DepthImage, Frame, GeometryError, Grid, Intrinsics, Pose};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        source: image::ImageError,
    },
    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("dataset at {0} contains no frames")]
    Empty(PathBuf),
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub frames: Vec<Frame>,
    pub intrinsics: Option<Intrinsics>,
}

impl Dataset {
    pub fn frame(&self, id: usize) -> Option<&Frame> {
        self.frames.iter().find(|f| f.id == id)
    }

    pub fn flow_path(&self, i: usize, j: usize) -> PathBuf {
        self.root.join("flow").join(format!("{i:06}_{j:06}.flw"))
    }

    pub fn has_flow(&self, i: usize, j: usize) -> bool {
        self.flow_path(i, j).is_file()
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn numbered_pngs(dir: &Path) -> Result<BTreeMap<usize, PathBuf>, DatasetError> {
    let mut out = BTreeMap::new();
    if !dir.is_dir() {
        return Ok(out);
    }
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some("png") {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            if let Ok(id) = stem.parse::<usize>() {
                out.insert(id, path);
            }
        }
    }
    Ok(out)
}

pub fn read_rgb_png(path: &Path) -> Result<ColorImage, DatasetError> {
    let img = image::open(path)
        .map_err(|source| DatasetError::Image {
            path: path.to_path_buf(),
            source,
        })?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let values = Grid::from_fn(w, h, |x, y| {
        let p = img.get_pixel(x as u32, y as u32);
        [
            p[0] as f64 / 255.0,
            p[1] as f64 / 255.0,
            p[2] as f64 / 255.0,
        ]
    });
    Ok(ColorImage::new(values))
}

pub fn write_rgb_png(path: &Path, img: &ColorImage) -> Result<(), DatasetError> {
    let (w, h) = (img.width(), img.height());
    let mut out = RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let c = img.pixel(x, y);
            let to_u8 = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            out.put_pixel(x as u32, y as u32, Rgb([to_u8(c[0]), to_u8(c[1]), to_u8(c[2])]));
        }
    }
    out.save(path).map_err(|source| DatasetError::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads 16-bit grayscale millimeters; 0 decodes to invalid.
pub fn read_depth_png(path: &Path) -> Result<DepthImage, DatasetError> {
    let img = image::open(path)
        .map_err(|source| DatasetError::Image {
            path: path.to_path_buf(),
            source,
        })?
        .to_luma16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let values = Grid::from_fn(w, h, |x, y| {
        img.get_pixel(x as u32, y as u32)[0] as f64 / 1000.0
    });
    Ok(DepthImage::new(values))
}

/// Writes millimeters into 16-bit grayscale, clamping to u16 range;
/// invalid pixels encode as 0.
pub fn write_depth_png(path: &Path, depth: &DepthImage) -> Result<(), DatasetError> {
    let (w, h) = (depth.width(), depth.height());
    let mut out: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let mm = match depth.depth(x, y) {
                Some(d) => ((d * 1000.0).round().clamp(1.0, u16::MAX as f64)) as u16,
                None => 0,
            };
            out.put_pixel(x as u32, y as u32, Luma([mm]));
        }
    }
    out.save(path).map_err(|source| DatasetError::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes a \[0,1\] scalar grid as 8-bit grayscale (value × 255).
pub fn write_gray_png(
    path: &Path,
    values: &Grid<f64>,
    validity: &Grid<bool>,
) -> Result<(), DatasetError> {
    let (w, h) = (values.width(), values.height());
    let mut out = GrayImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let px = if *validity.get(x, y) {
                (values.get(x, y).clamp(0.0, 1.0) * 255.0).round() as u8
            } else {
                0
            };
            out.put_pixel(x as u32, y as u32, Luma([px]));
        }
    }
    out.save(path).map_err(|source| DatasetError::Image {
        path: path.to_path_buf(),
        source,
    })
}

fn read_poses(path: &Path) -> Result<BTreeMap<usize, Pose>, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(DatasetError::Parse {
                path: path.to_path_buf(),
                message: format!("line {}: expected 8 fields, got {}", lineno + 1, fields.len()),
            });
        }
        let nums: Result<Vec<f64>, _> = fields[1..].iter().map(|s| s.parse::<f64>()).collect();
        let id: usize = fields[0].parse().map_err(|_| DatasetError::Parse {
            path: path.to_path_buf(),
            message: format!("line {}: bad frame id {:?}", lineno + 1, fields[0]),
        })?;
        let n = nums.map_err(|e| DatasetError::Parse {
            path: path.to_path_buf(),
            message: format!("line {}: {}", lineno + 1, e),
        })?;
        let pose = Pose::from_quat_xyzw(n[3], n[4], n[5], n[6], Vector3::new(n[0], n[1], n[2]))?;
        out.insert(id, pose);
    }
    Ok(out)
}

pub fn write_poses(path: &Path, poses: &[(usize, Pose)]) -> Result<(), DatasetError> {
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    for (id, pose) in poses {
        let t = pose.translation();
        let q = pose.quat_xyzw();
        writeln!(
            file,
            "{id} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9}",
            t.x, t.y, t.z, q[0], q[1], q[2], q[3]
        )
        .map_err(io_err(path))?;
    }
    Ok(())
}

fn read_intrinsics(path: &Path) -> Result<Intrinsics, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let nums: Result<Vec<f64>, _> = text.split_whitespace().map(|s| s.parse::<f64>()).collect();
    let n = nums.map_err(|e| DatasetError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if n.len() != 6 {
        return Err(DatasetError::Parse {
            path: path.to_path_buf(),
            message: format!("expected 6 values, got {}", n.len()),
        });
    }
    Ok(Intrinsics::new(
        n[0],
        n[1],
        n[2],
        n[3],
        n[4] as usize,
        n[5] as usize,
    )?)
}

pub fn write_intrinsics(path: &Path, k: &Intrinsics) -> Result<(), DatasetError> {
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    writeln!(
        file,
        "{} {} {} {} {} {}",
        k.fx, k.fy, k.cx, k.cy, k.width, k.height
    )
    .map_err(io_err(path))
}

/// Loads every frame found under `root`. Frame ids are the union of ids seen
/// in rgb/, depth/ and poses.txt.
pub fn load_dataset(root: &Path) -> Result<Dataset, DatasetError> {
    let rgb = numbered_pngs(&root.join("rgb"))?;
    let depth = numbered_pngs(&root.join("depth"))?;
    let poses_path = root.join("poses.txt");
    let poses = if poses_path.is_file() {
        read_poses(&poses_path)?
    } else {
        BTreeMap::new()
    };
    let intr_path = root.join("intrinsics.txt");
    let intrinsics = if intr_path.is_file() {
        Some(read_intrinsics(&intr_path)?)
    } else {
        None
    };

    let mut ids: Vec<usize> = rgb
        .keys()
        .chain(depth.keys())
        .chain(poses.keys())
        .copied()
        .collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.is_empty() {
        return Err(DatasetError::Empty(root.to_path_buf()));
    }

    let mut frames = Vec::with_capacity(ids.len());
    for id in ids {
        let color = rgb.get(&id).map(|p| read_rgb_png(p)).transpose()?;
        let d = depth.get(&id).map(|p| read_depth_png(p)).transpose()?;
        frames.push(Frame::new(
            id,
            color,
            d,
            poses.get(&id).copied(),
            intrinsics,
        )?);
    }
    Ok(Dataset {
        root: root.to_path_buf(),
        frames,
        intrinsics,
    })
}

/// Writes one frame's files into the dataset layout, creating directories as
/// needed. Pose lines are appended by the caller via [`write_poses`].
pub fn save_dataset_frame(root: &Path, frame: &Frame) -> Result<(), DatasetError> {
    if let Some(color) = &frame.color {
        let dir = root.join("rgb");
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        write_rgb_png(&dir.join(format!("{:06}.png", frame.id)), color)?;
    }
    if let Some(depth) = &frame.depth {
        let dir = root.join("depth");
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        write_depth_png(&dir.join(format!("{:06}.png", frame.id)), depth)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_png_roundtrip_quantizes_to_millimeters() {
        let dir = std::env::temp_dir().join(format!("scene_core_ds_{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let mut values = Grid::filled(4, 3, 1.2345);
        values.set(2, 1, 0.0); // invalid
        let depth = DepthImage::new(values);
        let path = dir.join("d.png");
        write_depth_png(&path, &depth).unwrap();
        let back = read_depth_png(&path).unwrap();
        assert!(!back.is_valid(2, 1));
        // half-millimeter quantization
        assert!((back.depth(0, 0).unwrap() - 1.2345).abs() <= 5e-4 + 1e-12);
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn poses_roundtrip() {
        let dir = std::env::temp_dir().join(format!("scene_core_poses_{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("poses.txt");
        let g = Pose::from_axis_angle(Vector3::y(), 0.3, Vector3::new(1.0, 2.0, 3.0));
        write_poses(&path, &[(0, Pose::identity()), (5, g)]).unwrap();
        let poses = read_poses(&path).unwrap();
        assert_eq!(poses.len(), 2);
        assert!(poses[&5].translation_distance_to(&g) < 1e-8);
        assert!(poses[&5].rotation_angle_to(&g) < 1e-8);
        fs::remove_dir_all(&dir).ok();
    }
}
