//! Flat binary `ParamSet` checkpoints.
//!
//! All integers and floats are little-endian:
//!
//! ```text
//! u32 format version (= 1)
//! u64 entry count
//! per entry, in ParamSet order:
//!     u32 path length in bytes, then the UTF-8 path bytes
//!     u32 rank, then rank × u64 extents
//!     product(extents) × f64 values, row-major
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::ParamSet;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

fn io_err(e: std::io::Error) -> Error {
    Error::Checkpoint(e.to_string())
}

pub fn write_params<W: Write>(params: &ParamSet, mut out: W) -> Result<()> {
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes()).map_err(io_err)?;
    out.write_all(&(params.len() as u64).to_le_bytes()).map_err(io_err)?;
    for (path, t) in params.iter() {
        let bytes = path.as_bytes();
        out.write_all(&(bytes.len() as u32).to_le_bytes()).map_err(io_err)?;
        out.write_all(bytes).map_err(io_err)?;
        out.write_all(&(t.rank() as u32).to_le_bytes()).map_err(io_err)?;
        for &e in t.shape() {
            out.write_all(&(e as u64).to_le_bytes()).map_err(io_err)?;
        }
        for v in t.values() {
            out.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    out.flush().map_err(io_err)
}

fn read_array<const N: usize, R: Read>(input: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    input
        .read_exact(&mut buf)
        .map_err(|e| Error::Checkpoint(format!("truncated checkpoint: {e}")))?;
    Ok(buf)
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    read_array::<4, _>(input).map(u32::from_le_bytes)
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    read_array::<8, _>(input).map(u64::from_le_bytes)
}

pub fn read_params<R: Read>(mut input: R) -> Result<ParamSet> {
    let version = read_u32(&mut input)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let count = read_u64(&mut input)?;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let len = read_u32(&mut input)? as usize;
        let mut path = vec![0u8; len];
        input
            .read_exact(&mut path)
            .map_err(|e| Error::Checkpoint(format!("truncated path: {e}")))?;
        let path = String::from_utf8(path).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let rank = read_u32(&mut input)? as usize;
        let shape = (0..rank)
            .map(|_| read_u64(&mut input).map(|e| e as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let values = (0..n)
            .map(|_| read_array::<8, _>(&mut input).map(f64::from_le_bytes))
            .collect::<Result<Vec<_>>>()?;
        params.insert(path, Tensor::from_vec(values, &shape)?)?;
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest).map_err(io_err)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after last entry".into()));
    }
    Ok(params)
}

pub fn save_params(params: &ParamSet, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_params(params, BufWriter::new(file))
}

pub fn load_params(path: &Path) -> Result<ParamSet> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_params(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_of_a_single_entry() {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::from_vec(vec![1.5, -2.0], &[2]).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_params(&p, &mut buf).unwrap();
        let mut expected = Vec::new();
        expected.extend(1u32.to_le_bytes());
        expected.extend(1u64.to_le_bytes());
        expected.extend(1u32.to_le_bytes());
        expected.extend(b"w");
        expected.extend(1u32.to_le_bytes());
        expected.extend(2u64.to_le_bytes());
        expected.extend(1.5f64.to_le_bytes());
        expected.extend((-2.0f64).to_le_bytes());
        assert_eq!(buf, expected);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(read_params(&[2u8, 0, 0, 0][..]).is_err());
        let mut p = ParamSet::new();
        p.insert("x", Tensor::scalar(1.0)).unwrap();
        let mut buf = Vec::new();
        write_params(&p, &mut buf).unwrap();
        assert!(read_params(&buf[..buf.len() - 1]).is_err());
        buf.push(0);
        assert!(read_params(&buf[..]).is_err());
    }

    fn entry() -> impl Strategy<Value = (String, Vec<usize>, Vec<f64>)> {
        ("[a-z]{1,6}(\\.[0-9])?", prop::collection::vec(0usize..4, 0..3)).prop_flat_map(|(p, shape)| {
            let n = shape.iter().product::<usize>();
            (Just(p), Just(shape), prop::collection::vec(any::<f64>(), n))
        })
    }

    proptest! {
        #[test]
        fn roundtrip_is_bit_exact(entries in prop::collection::vec(entry(), 0..5)) {
            let mut p = ParamSet::new();
            for (path, shape, values) in entries {
                if p.get(&path).is_none() {
                    p.insert(path, Tensor::from_vec(values, &shape).unwrap()).unwrap();
                }
            }
            let mut buf = Vec::new();
            write_params(&p, &mut buf).unwrap();
            let back = read_params(&buf[..]).unwrap();
            prop_assert_eq!(back.paths(), p.paths());
            for ((_, a), (_, b)) in back.iter().zip(p.iter()) {
                prop_assert_eq!(a.shape(), b.shape());
                let bits = |t: &Tensor| t.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
                prop_assert_eq!(bits(a), bits(b));
            }
        }
    }
}
