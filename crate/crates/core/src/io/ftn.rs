//! `FTN1` tensors: the magic bytes, three little-endian `u32` dimensions
//! `(H, W, C)`, then `H·W·C` little-endian `f32` values, row-major and
//! channel-last.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::fusion::{FeatureMap, PreSegProbs};

pub const FTN_MAGIC: &[u8; 4] = b"FTN1";

pub fn write_ftn<W: Write>(out: &mut W, dims: (usize, usize, usize), values: &[f64]) -> Result<()> {
    let (h, w, c) = dims;
    if values.len() != h * w * c {
        return Err(Error::Format(format!("{} values for dims {h}x{w}x{c}", values.len())));
    }
    out.write_all(FTN_MAGIC)?;
    for d in [h, w, c] {
        let d = u32::try_from(d).map_err(|_| Error::Format(format!("dimension {d} exceeds u32")))?;
        out.write_all(&d.to_le_bytes())?;
    }
    for v in values {
        out.write_all(&(*v as f32).to_le_bytes())?;
    }
    Ok(())
}

/// Returns `((H, W, C), values)`.
pub fn read_ftn<R: Read>(input: &mut R) -> Result<((usize, usize, usize), Vec<f64>)> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != FTN_MAGIC {
        return Err(Error::Format("missing FTN1 magic".into()));
    }
    let mut word = [0u8; 4];
    let mut dims = [0usize; 3];
    for d in &mut dims {
        input.read_exact(&mut word)?;
        *d = u32::from_le_bytes(word) as usize;
    }
    let count = dims[0]
        .checked_mul(dims[1])
        .and_then(|x| x.checked_mul(dims[2]))
        .ok_or_else(|| Error::Format("tensor dimensions overflow".into()))?;
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() != count * 4 {
        return Err(Error::Format(format!("expected {} payload bytes, found {}", count * 4, bytes.len())));
    }
    let values = bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64).collect();
    Ok(((dims[0], dims[1], dims[2]), values))
}

pub fn write_feature_map(path: &Path, map: &FeatureMap) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_ftn(&mut out, (map.height(), map.width(), map.channels()), map.as_slice())?;
    out.flush()?;
    Ok(())
}

pub fn read_feature_map(path: &Path) -> Result<FeatureMap> {
    let ((h, w, c), values) = read_ftn(&mut BufReader::new(File::open(path)?))?;
    FeatureMap::new(h, w, c, values)
}

pub fn write_probs(path: &Path, probs: &PreSegProbs) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_ftn(&mut out, (probs.height(), probs.width(), probs.classes()), probs.as_slice())?;
    out.flush()?;
    Ok(())
}

/// Reads probabilities stored as an `H × W × K` tensor. Per-pixel sums are
/// renormalised to absorb `f32` rounding.
pub fn read_probs(path: &Path) -> Result<PreSegProbs> {
    let ((h, w, k), mut values) = read_ftn(&mut BufReader::new(File::open(path)?))?;
    if k == 0 {
        return Err(Error::Format("probability tensor has zero classes".into()));
    }
    for px in values.chunks_exact_mut(k) {
        let s: f64 = px.iter().sum();
        if s > 0.0 {
            px.iter_mut().for_each(|p| *p /= s);
        }
    }
    PreSegProbs::new(h, w, k, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_layout() {
        let mut buf = Vec::new();
        write_ftn(&mut buf, (1, 2, 1), &[1.0, -2.5]).unwrap();
        let mut expected = b"FTN1".to_vec();
        for d in [1u32, 2, 1] {
            expected.extend(d.to_le_bytes());
        }
        expected.extend(1.0f32.to_le_bytes());
        expected.extend((-2.5f32).to_le_bytes());
        assert_eq!(buf, expected);
        let ((h, w, c), v) = read_ftn(&mut buf.as_slice()).unwrap();
        assert_eq!((h, w, c), (1, 2, 1));
        assert_eq!(v, vec![1.0, -2.5]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(read_ftn(&mut b"FTN2\0\0\0\0".as_slice()).is_err());
        let mut buf = Vec::new();
        write_ftn(&mut buf, (2, 2, 1), &[0.0; 4]).unwrap();
        buf.pop();
        assert!(read_ftn(&mut buf.as_slice()).is_err());
        assert!(write_ftn(&mut Vec::new(), (2, 2, 1), &[0.0; 3]).is_err());
    }

    #[test]
    fn feature_map_round_trip_through_file() {
        let dir = std::env::temp_dir().join(format!("ftn-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.ftn");
        let m = FeatureMap::new(2, 3, 2, (0..12).map(|i| i as f64 * 0.25).collect()).unwrap();
        write_feature_map(&path, &m).unwrap();
        assert_eq!(read_feature_map(&path).unwrap(), m);
        let p = PreSegProbs::new(1, 2, 2, vec![0.1, 0.9, 0.7, 0.3]).unwrap();
        let ppath = dir.join("p.ftn");
        write_probs(&ppath, &p).unwrap();
        let back = read_probs(&ppath).unwrap();
        for (a, b) in back.as_slice().iter().zip(p.as_slice()) {
            assert!((a - b).abs() < 1e-7);
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
