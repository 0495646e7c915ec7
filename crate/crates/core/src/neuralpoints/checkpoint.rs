//! Versioned binary model checkpoint: header, per-level counts and
//! resolutions, float32 positions and features, then the decoder weights.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{DMatrix, DVector, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::decoder::Mlp;
use super::set::{NeuralPointLevel, NeuralPointSet};
use super::NeuralPointError;

const MAGIC: &[u8; 4] = b"NPC1";
const VERSION: u32 = 1;

fn write_f32s<W: Write>(w: &mut W, values: impl Iterator<Item = f64>) -> std::io::Result<()> {
    for v in values {
        w.write_f32::<LittleEndian>(v as f32)?;
    }
    Ok(())
}

fn read_f32s<R: Read>(r: &mut R, n: usize) -> std::io::Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(r.read_f32::<LittleEndian>()? as f64);
    }
    Ok(out)
}

pub fn save_checkpoint(path: &Path, set: &NeuralPointSet) -> Result<(), NeuralPointError> {
    let io = |source| NeuralPointError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    let io = |source| NeuralPointError::Io {
        path: path.to_path_buf(),
        source,
    };
    (|| -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        w.write_u32::<LittleEndian>(set.k_neighbors as u32)?;
        w.write_u32::<LittleEndian>(set.feature_dim as u32)?;
        w.write_u32::<LittleEndian>(set.levels.len() as u32)?;
        // decoder
        let d = &set.decoder;
        w.write_u32::<LittleEndian>(d.input_dim() as u32)?;
        w.write_u32::<LittleEndian>(d.hidden_dim() as u32)?;
        write_f32s(&mut w, d.w1.iter().cloned())?;
        write_f32s(&mut w, d.b1.iter().cloned())?;
        write_f32s(&mut w, d.w2.iter().cloned())?;
        write_f32s(&mut w, d.b2.iter().cloned())?;
        write_f32s(&mut w, d.w3.iter().cloned())?;
        write_f32s(&mut w, d.b3.iter().cloned())?;
        for level in &set.levels {
            w.write_f64::<LittleEndian>(level.resolution)?;
            w.write_u64::<LittleEndian>(level.len() as u64)?;
            write_f32s(
                &mut w,
                level.positions().iter().flat_map(|p| [p.x, p.y, p.z]),
            )?;
            write_f32s(&mut w, level.features_raw().iter().cloned())?;
        }
        w.flush()
    })()
    .map_err(io)
}

pub fn load_checkpoint(path: &Path) -> Result<NeuralPointSet, NeuralPointError> {
    let io = |source| NeuralPointError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut r = BufReader::new(File::open(path).map_err(io)?);
    let io = |source| NeuralPointError::Io {
        path: path.to_path_buf(),
        source,
    };
    let bad = |message: String| NeuralPointError::Format {
        path: path.to_path_buf(),
        message,
    };

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(bad(format!("bad magic {magic:?}")));
    }
    let version = r.read_u32::<LittleEndian>().map_err(io)?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let k_neighbors = r.read_u32::<LittleEndian>().map_err(io)? as usize;
    let feature_dim = r.read_u32::<LittleEndian>().map_err(io)? as usize;
    let n_levels = r.read_u32::<LittleEndian>().map_err(io)? as usize;
    if feature_dim == 0 || n_levels == 0 || feature_dim > 1024 || n_levels > 64 {
        return Err(bad("unreasonable header".into()));
    }

    let input_dim = r.read_u32::<LittleEndian>().map_err(io)? as usize;
    let hidden = r.read_u32::<LittleEndian>().map_err(io)? as usize;
    if input_dim != feature_dim * n_levels {
        return Err(bad("decoder input dimension mismatch".into()));
    }
    let w1 = read_f32s(&mut r, hidden * input_dim).map_err(io)?;
    let b1 = read_f32s(&mut r, hidden).map_err(io)?;
    let w2 = read_f32s(&mut r, hidden * hidden).map_err(io)?;
    let b2 = read_f32s(&mut r, hidden).map_err(io)?;
    let w3 = read_f32s(&mut r, 3 * hidden).map_err(io)?;
    let b3 = read_f32s(&mut r, 3).map_err(io)?;
    let decoder = Mlp {
        w1: DMatrix::from_column_slice(hidden, input_dim, &w1),
        b1: DVector::from_column_slice(&b1),
        w2: DMatrix::from_column_slice(hidden, hidden, &w2),
        b2: DVector::from_column_slice(&b2),
        w3: DMatrix::from_column_slice(3, hidden, &w3),
        b3: DVector::from_column_slice(&b3),
    };

    let mut levels = Vec::with_capacity(n_levels);
    for _ in 0..n_levels {
        let resolution = r.read_f64::<LittleEndian>().map_err(io)?;
        let count = r.read_u64::<LittleEndian>().map_err(io)? as usize;
        if count > (1 << 28) {
            return Err(bad("unreasonable point count".into()));
        }
        let raw_pos = read_f32s(&mut r, count * 3).map_err(io)?;
        let features = read_f32s(&mut r, count * feature_dim).map_err(io)?;
        let positions: Vec<Vector3<f64>> = raw_pos
            .chunks_exact(3)
            .map(|c| Vector3::new(c[0], c[1], c[2]))
            .collect();
        levels.push(NeuralPointLevel::from_checkpoint(
            resolution,
            feature_dim,
            positions,
            features,
        ));
    }

    Ok(NeuralPointSet {
        levels,
        decoder,
        k_neighbors,
        feature_dim,
        rng: ChaCha8Rng::seed_from_u64(0),
    })
}
