//! Binary weight file and its text companion.
//!
//! Layout, all little-endian:
//!
//! ```text
//! offset 0   b"WVEC"
//! offset 4   u8  version (1)
//! offset 5   u8  dtype (0 = f32, 1 = f64)
//! offset 6   u64 element count
//! offset 14  count IEEE-754 values
//! ```
//!
//! The text form holds one value per line; blank lines are ignored.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::perturb::{Dtype, WeightVector};

pub const MAGIC: &[u8; 4] = b"WVEC";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 14;

pub fn write_wvec<W: Write>(mut out: W, w: &WeightVector) -> std::io::Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&[VERSION, w.dtype().code()])?;
    out.write_all(&(w.len() as u64).to_le_bytes())?;
    match w.dtype() {
        Dtype::F32 => {
            for v in w.values() {
                out.write_all(&(*v as f32).to_le_bytes())?;
            }
        }
        Dtype::F64 => {
            for v in w.values() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn encode(w: &WeightVector) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + w.len() * w.dtype().width());
    write_wvec(&mut buf, w).expect("writing to a Vec cannot fail");
    buf
}

pub fn decode(bytes: &[u8]) -> Result<WeightVector> {
    let bad = |msg: String| Err(Error::WeightFormat(msg));
    if bytes.len() < HEADER_LEN {
        return bad(format!("{} bytes is shorter than the {HEADER_LEN}-byte header", bytes.len()));
    }
    if &bytes[..4] != MAGIC {
        return bad("bad magic (expected WVEC)".into());
    }
    if bytes[4] != VERSION {
        return bad(format!("unsupported version {}", bytes[4]));
    }
    let Some(dtype) = Dtype::from_code(bytes[5]) else {
        return bad(format!("unknown dtype code {}", bytes[5]));
    };
    let count = u64::from_le_bytes(bytes[6..14].try_into().expect("8-byte slice"));
    let payload = &bytes[HEADER_LEN..];
    let expected = (count as u128) * dtype.width() as u128;
    if payload.len() as u128 != expected {
        return bad(format!("header declares {count} values ({expected} bytes), payload has {} bytes", payload.len()));
    }
    if count == 0 {
        return bad("file holds no values".into());
    }
    let values: Vec<f64> = match dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")) as f64)
            .collect(),
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect(),
    };
    WeightVector::new(values, dtype)
}

pub fn read_wvec<R: Read>(mut input: R) -> Result<WeightVector> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| Error::WeightFormat(e.to_string()))?;
    decode(&bytes)
}

pub fn load(path: &Path) -> Result<WeightVector> {
    let bytes = fs::read(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    decode(&bytes)
}

pub fn save(path: &Path, w: &WeightVector) -> Result<()> {
    fs::write(path, encode(w)).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// One value per line, printed with the shortest round-tripping representation.
pub fn write_text<W: Write>(mut out: W, w: &WeightVector) -> std::io::Result<()> {
    for v in w.values() {
        match w.dtype() {
            Dtype::F32 => writeln!(out, "{}", *v as f32)?,
            Dtype::F64 => writeln!(out, "{v}")?,
        }
    }
    Ok(())
}

pub fn read_text<R: Read>(input: R, dtype: Dtype) -> Result<WeightVector> {
    let mut values = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line.map_err(|e| Error::WeightFormat(e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let v: f64 = trimmed
            .parse()
            .map_err(|_| Error::WeightFormat(format!("line {}: `{trimmed}` is not a number", i + 1)))?;
        values.push(v);
    }
    WeightVector::new(values, dtype)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_byte_layout() {
        let w = WeightVector::new(vec![1.0, -2.5], Dtype::F64).unwrap();
        let bytes = encode(&w);
        let mut want = b"WVEC".to_vec();
        want.extend([1u8, 1u8]);
        want.extend(2u64.to_le_bytes());
        want.extend(1.0f64.to_le_bytes());
        want.extend((-2.5f64).to_le_bytes());
        assert_eq!(bytes, want);

        let s = WeightVector::from_f32(&[0.5]).unwrap();
        assert_eq!(encode(&s), [b"WVEC".as_slice(), &[1, 0], &1u64.to_le_bytes(), &0.5f32.to_le_bytes()].concat());
    }

    #[test]
    fn rejects_malformed_files() {
        let good = encode(&WeightVector::new(vec![1.0, 2.0], Dtype::F64).unwrap());
        let mut magic = good.clone();
        magic[0] = b'X';
        let mut version = good.clone();
        version[4] = 2;
        let mut dtype = good.clone();
        dtype[5] = 7;
        let truncated = &good[..good.len() - 1];
        let mut extra = good.clone();
        extra.push(0);
        let empty = [b"WVEC".as_slice(), &[1, 1], &0u64.to_le_bytes()].concat();
        for bad in [&magic[..], &version, &dtype, truncated, &extra, &good[..10], &empty] {
            assert!(matches!(decode(bad), Err(Error::WeightFormat(_))));
        }
        let mut nan = good.clone();
        nan[14..22].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(decode(&nan).is_err());
    }

    #[test]
    fn text_round_trip() {
        let w = WeightVector::new(vec![0.1, -3.0, 1e-300], Dtype::F64).unwrap();
        let mut buf = Vec::new();
        write_text(&mut buf, &w).unwrap();
        assert_eq!(read_text(&buf[..], Dtype::F64).unwrap(), w);
        assert!(read_text(&b"1.0\nabc\n"[..], Dtype::F64).is_err());
        assert_eq!(read_text(&b"1\n\n2\n"[..], Dtype::F32).unwrap().len(), 2);
    }

    proptest! {
        #[test]
        fn binary_round_trip(values in proptest::collection::vec(-1e30f64..1e30, 1..100), single in any::<bool>()) {
            let dtype = if single { Dtype::F32 } else { Dtype::F64 };
            let w = WeightVector::new(values, dtype).unwrap();
            let bytes = encode(&w);
            prop_assert_eq!(bytes.len(), HEADER_LEN + w.len() * dtype.width());
            let back = decode(&bytes).unwrap();
            prop_assert_eq!(&back, &w);
            prop_assert_eq!(encode(&back), bytes);
        }
    }
}
