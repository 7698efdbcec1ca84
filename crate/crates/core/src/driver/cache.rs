//! Little-endian binary cache for path ensembles.
//!
//! Layout: `"JBSD"`, version `u32`, seed `u64`, n_paths `u64`, n_steps `u32`,
//! dim_k `u32`, n_marks `u32`, d_X `u32`; then `f64` arrays (grid times,
//! Brownian increments, factor states, compensator rates) in path-major
//! order; then the jump counts as `u32`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{Block3, PathEnsemble, TimeGrid};
use crate::error::{Error, Result};

pub const ENSEMBLE_MAGIC: &[u8; 4] = b"JBSD";
pub const ENSEMBLE_VERSION: u32 = 1;
const HEADER_LEN: u64 = 4 + 4 + 8 + 8 + 4 * 4;

pub(crate) struct ByteWriter<W: Write> {
    inner: W,
}

impl<W: Write> ByteWriter<W> {
    pub(crate) fn new(inner: W) -> Self {
        Self { inner }
    }

    pub(crate) fn bytes(&mut self, b: &[u8]) -> std::io::Result<()> {
        self.inner.write_all(b)
    }

    pub(crate) fn u32(&mut self, v: u32) -> std::io::Result<()> {
        self.inner.write_all(&v.to_le_bytes())
    }

    pub(crate) fn u64(&mut self, v: u64) -> std::io::Result<()> {
        self.inner.write_all(&v.to_le_bytes())
    }

    pub(crate) fn f64s(&mut self, v: &[f64]) -> std::io::Result<()> {
        for x in v {
            self.inner.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub(crate) fn u32s(&mut self, v: &[u32]) -> std::io::Result<()> {
        for x in v {
            self.inner.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub(crate) fn finish(mut self) -> std::io::Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> &'a [u8] {
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        s
    }

    pub(crate) fn bytes(&mut self, n: usize) -> &'a [u8] {
        self.take(n)
    }

    pub(crate) fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take(4).try_into().unwrap())
    }

    pub(crate) fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take(8).try_into().unwrap())
    }

    pub(crate) fn f64s(&mut self, n: usize) -> Vec<f64> {
        self.take(8 * n)
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect()
    }

    pub(crate) fn u32s(&mut self, n: usize) -> Vec<u32> {
        self.take(4 * n)
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect()
    }
}

pub(crate) fn check_header(
    bytes: &[u8],
    header_len: u64,
    magic: &[u8; 4],
    version: u32,
) -> Result<()> {
    if (bytes.len() as u64) < header_len {
        if bytes.len() >= 4 && &bytes[..4] != magic {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&bytes[..4]),
                String::from_utf8_lossy(magic)
            )));
        }
        return Err(Error::Corruption {
            expected: header_len,
            actual: bytes.len() as u64,
        });
    }
    if &bytes[..4] != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&bytes[..4]),
            String::from_utf8_lossy(magic)
        )));
    }
    let v = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if v != version {
        return Err(Error::Format(format!(
            "unsupported format version {v} (this build reads {version})"
        )));
    }
    Ok(())
}

fn usize_of(v: u64, what: &str) -> Result<usize> {
    usize::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit in memory")))
}

/// Writes `ensemble` to `path`, overwriting any existing file.
pub fn cache_ensemble(ensemble: &PathEnsemble, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = ByteWriter::new(BufWriter::new(file));
    let io = |e| Error::io(path, e);
    w.bytes(ENSEMBLE_MAGIC).map_err(io)?;
    w.u32(ENSEMBLE_VERSION).map_err(io)?;
    w.u64(ensemble.seed()).map_err(io)?;
    w.u64(ensemble.n_paths() as u64).map_err(io)?;
    w.u32(ensemble.n_steps() as u32).map_err(io)?;
    w.u32(ensemble.dim_k() as u32).map_err(io)?;
    w.u32(ensemble.n_marks() as u32).map_err(io)?;
    w.u32(ensemble.dim_x() as u32).map_err(io)?;
    w.f64s(ensemble.grid().times()).map_err(io)?;
    w.f64s(ensemble.brownian().as_slice()).map_err(io)?;
    w.f64s(ensemble.factor().as_slice()).map_err(io)?;
    w.f64s(ensemble.rates().as_slice()).map_err(io)?;
    w.u32s(ensemble.counts().as_slice()).map_err(io)?;
    w.finish().map_err(io)?;
    Ok(())
}

/// Reads an ensemble written by [`cache_ensemble`].
pub fn load_ensemble(path: impl AsRef<Path>) -> Result<PathEnsemble> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ensemble(&bytes)
}

pub fn decode_ensemble(bytes: &[u8]) -> Result<PathEnsemble> {
    check_header(bytes, HEADER_LEN, ENSEMBLE_MAGIC, ENSEMBLE_VERSION)?;
    let mut r = ByteReader::new(&bytes[8..]);
    let seed = r.u64();
    let n_paths = usize_of(r.u64(), "n_paths")?;
    let n = r.u32() as usize;
    let k = r.u32() as usize;
    let m = r.u32() as usize;
    let d = r.u32() as usize;
    let n_f64 = (n as u64 + 1)
        + (n_paths * n * k) as u64
        + (n_paths * (n + 1) * d) as u64
        + (n_paths * n * m) as u64;
    let expected = HEADER_LEN + 8 * n_f64 + 4 * (n_paths * n * m) as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::Corruption {
            expected,
            actual: bytes.len() as u64,
        });
    }
    let times = r.f64s(n + 1);
    let grid = TimeGrid::from_times(times)
        .map_err(|e| Error::Format(format!("invalid grid in cache: {e}")))?;
    let brownian = Block3::from_vec(n_paths, n, k, r.f64s(n_paths * n * k));
    let factor = Block3::from_vec(n_paths, n + 1, d, r.f64s(n_paths * (n + 1) * d));
    let rates = Block3::from_vec(n_paths, n, m, r.f64s(n_paths * n * m));
    let counts = Block3::from_vec(n_paths, n, m, r.u32s(n_paths * n * m));
    PathEnsemble::from_parts(grid, seed, brownian, counts, rates, factor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::{simulate_ensemble, FactorSde, JumpMeasureSpec};

    fn sample() -> PathEnsemble {
        let grid = TimeGrid::uniform(1.0, 6).unwrap();
        let spec = JumpMeasureSpec::constant(vec![vec![1.0], vec![-0.5]], &[0.5, 0.5], 3.0)
            .unwrap();
        let sde = FactorSde::brownian_and_compensated_counts(2, vec![1.5, 1.5]);
        simulate_ensemble(&grid, &sde, &spec, 9, 1234).unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.jbsd");
        let ens = sample();
        cache_ensemble(&ens, &path).unwrap();
        let back = load_ensemble(&path).unwrap();
        assert_eq!(back, ens);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(back.brownian().as_slice()), bits(ens.brownian().as_slice()));
    }

    #[test]
    fn wrong_magic_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.jbsd");
        cache_ensemble(&sample(), &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode_ensemble(&bytes), Err(Error::Format(_))));
        bytes[0] = b'J';
        bytes[4] = 9;
        assert!(matches!(decode_ensemble(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn truncation_reports_lengths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.jbsd");
        cache_ensemble(&sample(), &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        let full = bytes.len() as u64;
        match decode_ensemble(&bytes[..bytes.len() - 3]) {
            Err(Error::Corruption { expected, actual }) => {
                assert_eq!(expected, full);
                assert_eq!(actual, full - 3);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            decode_ensemble(&bytes[..10]),
            Err(Error::Corruption { expected: 40, actual: 10 })
        ));
    }
}
