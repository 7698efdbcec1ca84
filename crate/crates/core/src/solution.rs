//! Grid-indexed solution triples `(Y, Z, U)` and their binary cache.
//!
//! `Y` lives on the `n_steps + 1` nodes, `Z` and `U` on the `n_steps` steps.
//! The cache layout is `"JBSS"`, version `u32`, seed `u64`, n_paths `u64`,
//! n_steps `u32`, dim_d `u32`, dim_k `u32`, n_marks `u32`, then grid times,
//! `Y`, `Z`, `U` as little-endian `f64`, then a `u64` length and a JSON
//! provenance block.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::driver::cache::{check_header, ByteReader, ByteWriter};
use crate::driver::{Block3, TimeGrid};
use crate::error::{Error, Result};

pub const SOLUTION_MAGIC: &[u8; 4] = b"JBSS";
pub const SOLUTION_VERSION: u32 = 1;
const HEADER_LEN: u64 = 4 + 4 + 8 + 8 + 4 * 4;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub problem: String,
    pub scheme: String,
    pub picard_iterations: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSolution {
    grid: TimeGrid,
    y: Block3<f64>,
    z: Block3<f64>,
    u: Block3<f64>,
    dim_k: usize,
    n_marks: usize,
    pub provenance: Provenance,
}

impl DiscreteSolution {
    pub fn zeros(grid: &TimeGrid, n_paths: usize, dim_d: usize, dim_k: usize, n_marks: usize) -> Self {
        let n = grid.n_steps();
        Self {
            grid: grid.clone(),
            y: Block3::zeros(n_paths, n + 1, dim_d),
            z: Block3::zeros(n_paths, n, dim_d * dim_k),
            u: Block3::zeros(n_paths, n, dim_d * n_marks),
            dim_k,
            n_marks,
            provenance: Provenance::default(),
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.y.n_paths()
    }

    pub fn n_steps(&self) -> usize {
        self.grid.n_steps()
    }

    pub fn dim_d(&self) -> usize {
        self.y.width()
    }

    pub fn dim_k(&self) -> usize {
        self.dim_k
    }

    pub fn n_marks(&self) -> usize {
        self.n_marks
    }

    #[inline]
    pub fn y(&self, path: usize, node: usize) -> &[f64] {
        self.y.row(path, node)
    }

    #[inline]
    pub fn y_mut(&mut self, path: usize, node: usize) -> &mut [f64] {
        self.y.row_mut(path, node)
    }

    /// `d x k` row-major.
    #[inline]
    pub fn z(&self, path: usize, step: usize) -> &[f64] {
        self.z.row(path, step)
    }

    #[inline]
    pub fn z_mut(&mut self, path: usize, step: usize) -> &mut [f64] {
        self.z.row_mut(path, step)
    }

    /// `d x m` row-major.
    #[inline]
    pub fn u(&self, path: usize, step: usize) -> &[f64] {
        self.u.row(path, step)
    }

    #[inline]
    pub fn u_mut(&mut self, path: usize, step: usize) -> &mut [f64] {
        self.u.row_mut(path, step)
    }

    pub fn y_block(&self) -> &Block3<f64> {
        &self.y
    }

    pub fn z_block(&self) -> &Block3<f64> {
        &self.z
    }

    pub fn u_block(&self) -> &Block3<f64> {
        &self.u
    }

    pub(crate) fn blocks_mut(&mut self) -> (&mut Block3<f64>, &mut Block3<f64>, &mut Block3<f64>) {
        (&mut self.y, &mut self.z, &mut self.u)
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.y.shape() != other.y.shape()
            || self.z.shape() != other.z.shape()
            || self.u.shape() != other.u.shape()
        {
            return Err(Error::InvalidArgument(format!(
                "solution shapes differ: Y {:?} vs {:?}, Z {:?} vs {:?}, U {:?} vs {:?}",
                self.y.shape(),
                other.y.shape(),
                self.z.shape(),
                other.z.shape(),
                self.u.shape(),
                other.u.shape()
            )));
        }
        Ok(())
    }

    /// `a * self + b * other`, entrywise.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        self.same_shape(other)?;
        let mut out = self.clone();
        let zip = |dst: &mut Block3<f64>, src: &Block3<f64>| {
            for (d, s) in dst.as_mut_slice().iter_mut().zip(src.as_slice()) {
                *d = a * *d + b * s;
            }
        };
        zip(&mut out.y, &other.y);
        zip(&mut out.z, &other.z);
        zip(&mut out.u, &other.u);
        Ok(out)
    }

    /// `self - other`.
    pub fn difference(&self, other: &Self) -> Result<Self> {
        self.combine(1.0, other, -1.0)
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        let mut out = self.clone();
        for b in [&mut out.y, &mut out.z, &mut out.u] {
            for v in b.as_mut_slice() {
                *v *= lambda;
            }
        }
        out
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, b) in [("Y", &self.y), ("Z", &self.z), ("U", &self.u)] {
            if b.as_slice().iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { component: name });
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = ByteWriter::new(BufWriter::new(file));
        let io = |e| Error::io(path, e);
        let prov = serde_json::to_vec(&self.provenance)
            .map_err(|e| Error::Format(format!("provenance: {e}")))?;
        w.bytes(SOLUTION_MAGIC).map_err(io)?;
        w.u32(SOLUTION_VERSION).map_err(io)?;
        w.u64(self.provenance.seed).map_err(io)?;
        w.u64(self.n_paths() as u64).map_err(io)?;
        w.u32(self.n_steps() as u32).map_err(io)?;
        w.u32(self.dim_d() as u32).map_err(io)?;
        w.u32(self.dim_k as u32).map_err(io)?;
        w.u32(self.n_marks as u32).map_err(io)?;
        w.f64s(self.grid.times()).map_err(io)?;
        w.f64s(self.y.as_slice()).map_err(io)?;
        w.f64s(self.z.as_slice()).map_err(io)?;
        w.f64s(self.u.as_slice()).map_err(io)?;
        w.u64(prov.len() as u64).map_err(io)?;
        w.bytes(&prov).map_err(io)?;
        w.finish().map_err(io)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        check_header(bytes, HEADER_LEN, SOLUTION_MAGIC, SOLUTION_VERSION)?;
        let mut r = ByteReader::new(&bytes[8..]);
        let _seed = r.u64();
        let np = r.u64() as usize;
        let n = r.u32() as usize;
        let d = r.u32() as usize;
        let k = r.u32() as usize;
        let m = r.u32() as usize;
        let n_f64 = (n + 1) + np * (n + 1) * d + np * n * d * k + np * n * d * m;
        let fixed = HEADER_LEN + 8 * n_f64 as u64 + 8;
        if (bytes.len() as u64) < fixed {
            return Err(Error::Corruption {
                expected: fixed,
                actual: bytes.len() as u64,
            });
        }
        let times = r.f64s(n + 1);
        let y = r.f64s(np * (n + 1) * d);
        let z = r.f64s(np * n * d * k);
        let u = r.f64s(np * n * d * m);
        let prov_len = r.u64();
        let expected = fixed + prov_len;
        if bytes.len() as u64 != expected {
            return Err(Error::Corruption {
                expected,
                actual: bytes.len() as u64,
            });
        }
        let provenance: Provenance = serde_json::from_slice(r.bytes(prov_len as usize))
            .map_err(|e| Error::Format(format!("provenance block: {e}")))?;
        let grid = TimeGrid::from_times(times)
            .map_err(|e| Error::Format(format!("invalid grid in cache: {e}")))?;
        Ok(Self {
            grid,
            y: Block3::from_vec(np, n + 1, d, y),
            z: Block3::from_vec(np, n, d * k, z),
            u: Block3::from_vec(np, n, d * m, u),
            dim_k: k,
            n_marks: m,
            provenance,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> DiscreteSolution {
        let grid = TimeGrid::uniform(1.0, 3).unwrap();
        let mut s = DiscreteSolution::zeros(&grid, 2, 2, 1, 2);
        for (i, v) in s.y.as_mut_slice().iter_mut().enumerate() {
            *v = i as f64 * 0.5 - 1.0;
        }
        for (i, v) in s.u.as_mut_slice().iter_mut().enumerate() {
            *v = (i as f64).sin();
        }
        s.z_mut(1, 2)[1] = 7.0;
        s.provenance = Provenance {
            problem: "test".into(),
            scheme: "degree=1".into(),
            picard_iterations: 3,
            seed: 11,
        };
        s
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jbss");
        let s = sample();
        s.save(&path).unwrap();
        assert_eq!(DiscreteSolution::load(&path).unwrap(), s);
    }

    #[test]
    fn truncated_cache_is_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jbss");
        sample().save(&path).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert!(matches!(
            DiscreteSolution::decode(&bytes[..bytes.len() - 1]),
            Err(Error::Corruption { .. })
        ));
        let mut bad = bytes.clone();
        bad[3] = b'D';
        assert!(matches!(DiscreteSolution::decode(&bad), Err(Error::Format(_))));
    }

    #[test]
    fn difference_and_scaling() {
        let s = sample();
        let d = s.difference(&s).unwrap();
        assert!(d.y_block().as_slice().iter().all(|v| *v == 0.0));
        let t = s.scaled(2.0);
        assert_eq!(t.z(1, 2)[1], 14.0);
        let c = t.combine(0.5, &s, -1.0).unwrap();
        assert!(c.u_block().as_slice().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn non_finite_component_named() {
        let mut s = sample();
        s.u_mut(0, 0)[0] = f64::NAN;
        assert!(matches!(s.check_finite(), Err(Error::NonFinite { component: "U" })));
    }
}
