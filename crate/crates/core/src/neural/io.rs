//! Flat binary container shared by model and transform artifacts.
//!
//! Layout, all integers little-endian:
//! magic `REIDENS\0` · u32 format version · u32 payload kind ·
//! u64 metadata length · UTF-8 JSON metadata ·
//! u64 array count · per array: u64 length + that many f64 values.
//!
//! Containers round-trip bit-exactly: floats are stored as raw f64 bits.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"REIDENS\0";
const VERSION: u32 = 1;

/// Payload kind: a trained embedding network.
pub const KIND_MODEL: u32 = 1;
/// Payload kind: a fitted ensemble transform.
pub const KIND_TRANSFORM: u32 = 2;

pub struct Container {
    pub kind: u32,
    pub meta: String,
    pub arrays: Vec<Vec<f64>>,
}

pub fn write_container(path: &Path, container: &Container) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&container.kind.to_le_bytes())?;
    let meta = container.meta.as_bytes();
    out.write_all(&(meta.len() as u64).to_le_bytes())?;
    out.write_all(meta)?;
    out.write_all(&(container.arrays.len() as u64).to_le_bytes())?;
    for array in &container.arrays {
        out.write_all(&(array.len() as u64).to_le_bytes())?;
        for &v in array {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_container(path: &Path) -> Result<Container> {
    let mut reader = BufReader::new(File::open(path)?);

    let mut magic = [0u8; 8];
    reader.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(Error::artifact("bad magic: not a model/transform file"));
    }
    let version = read_u32(&mut reader)?;
    if version != VERSION {
        return Err(Error::artifact(format!(
            "unsupported container version {version}, expected {VERSION}"
        )));
    }
    let kind = read_u32(&mut reader)?;

    let meta_len = read_u64(&mut reader)? as usize;
    let mut meta_bytes = vec![0u8; meta_len];
    reader.read_exact(&mut meta_bytes).map_err(truncated)?;
    let meta = String::from_utf8(meta_bytes)
        .map_err(|e| Error::artifact(format!("metadata is not UTF-8: {e}")))?;

    let n_arrays = read_u64(&mut reader)? as usize;
    let mut arrays = Vec::with_capacity(n_arrays);
    for _ in 0..n_arrays {
        let len = read_u64(&mut reader)? as usize;
        let mut bytes = vec![0u8; len * 8];
        reader.read_exact(&mut bytes).map_err(truncated)?;
        arrays.push(
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect(),
        );
    }

    let mut rest = [0u8; 1];
    if reader.read(&mut rest)? != 0 {
        return Err(Error::artifact("trailing bytes after the last array"));
    }
    Ok(Container { kind, meta, arrays })
}

fn truncated(e: std::io::Error) -> Error {
    Error::artifact(format!("truncated container: {e}"))
}

fn read_u32(reader: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    reader.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(reader: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    reader.read_exact(&mut b).map_err(truncated)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        let original = Container {
            kind: KIND_TRANSFORM,
            meta: r#"{"kind":"test"}"#.to_string(),
            arrays: vec![vec![1.5, -0.0, f64::MIN_POSITIVE], vec![], vec![42.0]],
        };
        write_container(&path, &original).unwrap();
        let back = read_container(&path).unwrap();
        assert_eq!(back.kind, original.kind);
        assert_eq!(back.meta, original.meta);
        assert_eq!(back.arrays.len(), 3);
        for (a, b) in original.arrays.iter().zip(&back.arrays) {
            assert_eq!(a.len(), b.len());
            assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        write_container(
            &path,
            &Container {
                kind: KIND_MODEL,
                meta: "{}".into(),
                arrays: vec![vec![1.0]],
            },
        )
        .unwrap();

        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(read_container(&path).is_err());

        // Truncation.
        write_container(
            &path,
            &Container {
                kind: KIND_MODEL,
                meta: "{}".into(),
                arrays: vec![vec![1.0, 2.0]],
            },
        )
        .unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(read_container(&path).is_err());
    }
}
