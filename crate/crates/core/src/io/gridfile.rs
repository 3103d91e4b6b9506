//! Grid container:
//!
//! ```text
//! "DIFG" | u32 version = 1 | u32 ndim (1 or 2) | u32 dims[ndim] | u8 dtype (1 = f32, 2 = f64) | payload
//! ```
//! Row-major, little-endian throughout.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Grid, Shape};

pub const GRID_MAGIC: [u8; 4] = *b"DIFG";
pub const GRID_VERSION: u32 = 1;

/// Largest element count accepted when reading.
const MAX_ELEMS: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn tag(self) -> u8 {
        match self {
            Dtype::F32 => 1,
            Dtype::F64 => 2,
        }
    }

    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

pub fn write_grid<W: Write>(mut w: W, grid: &Grid, dtype: Dtype) -> Result<()> {
    let dims = grid.shape().dims();
    w.write_all(&GRID_MAGIC)?;
    w.write_all(&GRID_VERSION.to_le_bytes())?;
    w.write_all(&(dims.len() as u32).to_le_bytes())?;
    for d in dims {
        let d = u32::try_from(d).map_err(|_| Error::Format(format!("dimension {d} exceeds u32")))?;
        w.write_all(&d.to_le_bytes())?;
    }
    w.write_all(&[dtype.tag()])?;
    let mut buf = Vec::with_capacity(grid.len() * dtype.width());
    for v in grid.as_slice() {
        match dtype {
            Dtype::F32 => buf.extend_from_slice(&(*v as f32).to_le_bytes()),
            Dtype::F64 => buf.extend_from_slice(&v.to_le_bytes()),
        }
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

fn eof(what: &str) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Format(format!("truncated {what}"))
        } else {
            Error::Io(e)
        }
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(eof("header"))?;
    Ok(u32::from_le_bytes(b))
}

/// Reads a grid and the element type it was stored with.
pub fn read_grid<R: Read>(mut r: R) -> Result<(Grid, Dtype)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(eof("header"))?;
    if magic != GRID_MAGIC {
        return Err(Error::BadMagic {
            expected: GRID_MAGIC,
            found: magic,
        });
    }
    let version = read_u32(&mut r)?;
    if version != GRID_VERSION {
        return Err(Error::Format(format!("unsupported grid version {version}")));
    }
    let ndim = read_u32(&mut r)?;
    let shape = match ndim {
        1 => Shape::Vector(read_u32(&mut r)? as usize),
        2 => {
            let height = read_u32(&mut r)? as usize;
            let width = read_u32(&mut r)? as usize;
            Shape::image(height, width)
        }
        n => return Err(Error::Format(format!("unsupported dimension count {n}"))),
    };
    let elems = shape
        .dims()
        .iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
        .filter(|&n| n <= MAX_ELEMS)
        .ok_or_else(|| Error::Format(format!("dimension overflow for shape {:?}", shape.dims())))?;
    let mut tag = [0u8; 1];
    r.read_exact(&mut tag).map_err(eof("header"))?;
    let dtype = match tag[0] {
        1 => Dtype::F32,
        2 => Dtype::F64,
        t => return Err(Error::Format(format!("unknown dtype tag {t}"))),
    };
    let bytes =
        usize::try_from(elems * dtype.width() as u64).map_err(|_| Error::Format("dimension overflow".into()))?;
    let mut payload = Vec::new();
    r.by_ref().take(bytes as u64).read_to_end(&mut payload)?;
    if payload.len() != bytes {
        return Err(Error::Format(format!(
            "truncated payload: expected {bytes} bytes, found {}",
            payload.len()
        )));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after payload".into()));
    }
    let data = match dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect(),
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
    };
    Ok((Grid::new(shape, data)?, dtype))
}

pub fn save_grid(path: impl AsRef<Path>, grid: &Grid, dtype: Dtype) -> Result<()> {
    write_grid(BufWriter::new(File::create(path)?), grid, dtype)
}

pub fn load_grid(path: impl AsRef<Path>) -> Result<Grid> {
    Ok(read_grid(BufReader::new(File::open(path)?))?.0)
}
