//! Feature-matrix persistence.
//!
//! Binary layout, all integers little-endian:
//!
//! ```text
//! "SGFM" | version: u32 | n: u64 | d: u64 | n·d f32 (row-major) | n × (len: u32, utf-8 id)
//! ```

use std::fs;
use std::path::Path;

use super::FeatureMatrix;
use crate::error::{Error, Result};

pub const MATRIX_MAGIC: &[u8; 4] = b"SGFM";
pub const MATRIX_VERSION: u32 = 1;

pub fn encode_matrix(m: &FeatureMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + m.data().len() * 4 + m.n() * 8);
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&MATRIX_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.n() as u64).to_le_bytes());
    out.extend_from_slice(&(m.d() as u64).to_le_bytes());
    for v in m.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for id in m.ids() {
        out.extend_from_slice(&(id.len() as u32).to_le_bytes());
        out.extend_from_slice(id.as_bytes());
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::Truncated(what))?;
        let s = self.buf.get(self.pos..end).ok_or(Error::Truncated(what))?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode_matrix(buf: &[u8]) -> Result<FeatureMatrix> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(4, "magic").map_err(|_| Error::BadMagic)? != MATRIX_MAGIC {
        return Err(Error::BadMagic);
    }
    let version = c.u32("version")?;
    if version != MATRIX_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let n = c.u64("row count")?;
    let d = c.u64("column count")?;
    let entries = n
        .checked_mul(d)
        .and_then(|e| e.checked_mul(4))
        .filter(|&b| b <= usize::MAX as u64)
        .ok_or(Error::DimensionOverflow { rows: n, cols: d })?;
    let raw = c.take(entries as usize, "matrix data")?;
    let data: Vec<f32> = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
    let mut ids = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let len = c.u32("id length")? as usize;
        let bytes = c.take(len, "id")?;
        let id = std::str::from_utf8(bytes).map_err(|_| Error::InvalidParameter("id is not UTF-8".into()))?;
        ids.push(id.to_owned());
    }
    FeatureMatrix::new(n as usize, d as usize, data, ids)
}

/// Writes atomically: a temporary sibling file is renamed into place.
pub fn write_matrix(m: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_matrix(m))
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_matrix(&buf)
}

/// CSV import for externally extracted features. The header names the
/// feature columns; a first column named `id` is used for row ids.
pub fn read_csv(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::InvalidParameter(format!("{}: {other:?}", path.display())),
        })?;
    let headers = reader.headers()?.clone();
    let has_id = headers.get(0).is_some_and(|h| h.trim() == "id");
    let mut ids = Vec::new();
    let mut data = Vec::new();
    let mut cols = None;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let mut fields = record.iter();
        ids.push(if has_id { fields.next().unwrap_or_default().to_owned() } else { format!("row{i}") });
        let before = data.len();
        for f in fields {
            let v: f32 = f
                .trim()
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("{}: row {i}: bad number {f:?}", path.display())))?;
            data.push(v);
        }
        let width = data.len() - before;
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => return Err(Error::DimensionMismatch { left: width, right: c }),
            _ => {}
        }
    }
    FeatureMatrix::new(ids.len(), cols.unwrap_or(0), data, ids)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_by_one_round_trip() {
        let m = FeatureMatrix::new(1, 1, vec![42.0], vec!["x".into()]).unwrap();
        assert_eq!(decode_matrix(&encode_matrix(&m)).unwrap(), m);
    }

    #[test]
    fn large_random_round_trip_on_disk() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f32> = (0..3 * 8000).map(|_| rng.random::<f32>() * 1e3 - 500.0).collect();
        let m = FeatureMatrix::new(3, 8000, data, vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.sgfm");
        write_matrix(&m, &p).unwrap();
        let back = read_matrix(&p).unwrap();
        assert_eq!(back.data().len(), m.data().len());
        assert!(back.data().iter().zip(m.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(back.ids(), m.ids());
    }

    #[test]
    fn corrupt_inputs_have_distinct_errors() {
        let m = FeatureMatrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0], vec!["a".into(), "b".into()]).unwrap();
        let mut bytes = encode_matrix(&m);
        let good = bytes.clone();
        bytes[0] = b'X';
        assert_eq!(decode_matrix(&bytes).unwrap_err().to_string(), "bad magic");
        assert!(matches!(decode_matrix(&good[..good.len() - 1]), Err(Error::Truncated(_))));
        assert!(matches!(decode_matrix(&good[..30]), Err(Error::Truncated(_))));
        let mut huge = good.clone();
        huge[8..16].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(decode_matrix(&huge), Err(Error::DimensionOverflow { .. })));
    }

    #[test]
    fn csv_import() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        fs::write(&p, "id,f0,f1\nimg1,1.5,2\nimg2,3,4\n").unwrap();
        let m = read_csv(&p).unwrap();
        assert_eq!((m.n(), m.d()), (2, 2));
        assert_eq!(m.ids(), &["img1".to_string(), "img2".to_string()]);
        assert_eq!(m.row(0), &[1.5, 2.0]);
        fs::write(&p, "f0,f1\n1,2\n").unwrap();
        assert_eq!(read_csv(&p).unwrap().ids(), &["row0".to_string()]);
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(rows in 1usize..6, cols in 1usize..20, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f32> = (0..rows * cols)
                .map(|_| f32::from_bits(rng.random::<u32>()))
                .map(|v| if v.is_finite() { v } else { 0.5 })
                .collect();
            let ids = (0..rows).map(|i| format!("id-{i}-é")).collect();
            let m = FeatureMatrix::new(rows, cols, data, ids).unwrap();
            let back = decode_matrix(&encode_matrix(&m)).unwrap();
            prop_assert!(back.data().iter().zip(m.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
            prop_assert_eq!(back.ids(), m.ids());
        }
    }
}
