//! Binary checkpoint format:
//!
//! ```text
//! "RPDM" | u32 version | u32 layer count |
//!   per layer: u32 rows | u32 cols | rows*cols f64 weights (row-major) | rows f64 biases
//! ```
//! All integers and floats little-endian.

use std::io::{Read, Write};

use super::mlp::{Layer, MlpParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"RPDM";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Upper bound on elements per layer accepted when reading.
const MAX_LAYER_ELEMS: u64 = 1 << 28;

pub fn write_checkpoint<W: Write>(params: &MlpParams, mut w: W) -> Result<()> {
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(params.layers().len() as u32).to_le_bytes())?;
    for layer in params.layers() {
        w.write_all(&(layer.rows() as u32).to_le_bytes())?;
        w.write_all(&(layer.cols() as u32).to_le_bytes())?;
        for v in layer.weights().iter().chain(layer.biases()) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf).map_err(truncated)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("truncated checkpoint".into())
    } else {
        Error::Io(e)
    }
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<MlpParams> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            expected: CHECKPOINT_MAGIC,
            found: magic,
        });
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let count = read_u32(&mut r)?;
    if count == 0 || count > 1024 {
        return Err(Error::Format(format!("implausible layer count {count}")));
    }
    let mut layers = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let rows = read_u32(&mut r)? as u64;
        let cols = read_u32(&mut r)? as u64;
        if rows == 0 || cols == 0 || rows * cols > MAX_LAYER_ELEMS {
            return Err(Error::Format(format!("layer dimensions {rows}x{cols} out of range")));
        }
        let weights = read_f64s(&mut r, (rows * cols) as usize)?;
        let biases = read_f64s(&mut r, rows as usize)?;
        layers.push(Layer::new(rows as usize, cols as usize, weights, biases)?);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    MlpParams::from_layers(layers).map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn byte_layout() {
        let p = MlpParams::from_layers(vec![Layer::new(1, 3, vec![1.0, 2.0, 3.0], vec![-0.5]).unwrap()]).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&p, &mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 4 + 8 + 4 * 8);
        assert_eq!(&buf[..4], b"RPDM");
        assert_eq!(&buf[4..8], &1u32.to_le_bytes());
        assert_eq!(&buf[8..12], &1u32.to_le_bytes());
        assert_eq!(&buf[12..16], &1u32.to_le_bytes());
        assert_eq!(&buf[16..20], &3u32.to_le_bytes());
        assert_eq!(&buf[20..28], &1.0f64.to_le_bytes());
        assert_eq!(&buf[44..52], &(-0.5f64).to_le_bytes());
    }

    #[test]
    fn round_trip_and_errors() {
        let mut rng = stream_rng(12, 0);
        let p = MlpParams::init(5, 6, &[9, 4], &mut rng).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&p, &mut buf).unwrap();
        assert_eq!(read_checkpoint(buf.as_slice()).unwrap(), p);

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_checkpoint(bad.as_slice()), Err(Error::BadMagic { .. })));
        assert!(matches!(read_checkpoint(&buf[..buf.len() - 3]), Err(Error::Format(_))));
        let mut extra = buf.clone();
        extra.push(0);
        assert!(matches!(read_checkpoint(extra.as_slice()), Err(Error::Format(_))));
    }
}
