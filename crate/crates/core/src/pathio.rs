//! Binary column files for paths and solutions.
//!
//! Layout (little endian): 8-byte magic `BSDLPATH`, `u32` version, then
//! `u64` n_paths, n_steps, dim, seed, followed by `n_paths * (n_steps + 1) *
//! dim` `f64` values in path-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::bsde::BsdeSolution;
use crate::error::{LabError, Result};
use crate::sde::PathBundle;

pub const MAGIC: [u8; 8] = *b"BSDLPATH";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct ColumnFile {
    pub n_paths: u64,
    pub n_steps: u64,
    pub dim: u64,
    pub seed: u64,
    pub values: Vec<f64>,
}

impl ColumnFile {
    pub fn new(
        n_paths: usize,
        n_steps: usize,
        dim: usize,
        seed: u64,
        values: Vec<f64>,
    ) -> Result<Self> {
        let expected = n_paths * (n_steps + 1) * dim;
        if values.len() != expected {
            return Err(LabError::Dimension {
                expected,
                got: values.len(),
                context: "column file payload",
            });
        }
        Ok(Self {
            n_paths: n_paths as u64,
            n_steps: n_steps as u64,
            dim: dim as u64,
            seed,
            values,
        })
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(&MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        for v in [self.n_paths, self.n_steps, self.dim, self.seed] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let io = |e: std::io::Error| LabError::Format(format!("truncated column file: {e}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io)?;
        if magic != MAGIC {
            return Err(LabError::Format("bad magic".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4).map_err(io)?;
        let version = u32::from_le_bytes(b4);
        if version != VERSION {
            return Err(LabError::Format(format!("unsupported version {version}")));
        }
        let mut header = [0u64; 4];
        let mut b8 = [0u8; 8];
        for h in header.iter_mut() {
            r.read_exact(&mut b8).map_err(io)?;
            *h = u64::from_le_bytes(b8);
        }
        let [n_paths, n_steps, dim, seed] = header;
        let count = n_paths
            .checked_mul(n_steps + 1)
            .and_then(|v| v.checked_mul(dim))
            .ok_or_else(|| LabError::Format("header sizes overflow".into()))?
            as usize;
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut b8).map_err(io)?;
            values.push(f64::from_le_bytes(b8));
        }
        if r.read(&mut b8).map_err(io)? != 0 {
            return Err(LabError::Format("trailing bytes after payload".into()));
        }
        Ok(Self {
            n_paths,
            n_steps,
            dim,
            seed,
            values,
        })
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| LabError::io(path, e))?;
        self.write_to(BufWriter::new(f))
            .map_err(|e| LabError::io(path, e))
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| LabError::io(path, e))?;
        Self::read_from(BufReader::new(f))
    }
}

pub fn brownian_columns(paths: &PathBundle) -> ColumnFile {
    ColumnFile::new(
        paths.n_paths(),
        paths.grid().n_steps(),
        paths.dim_w(),
        paths.seed(),
        paths.brownian_values().to_vec(),
    )
    .expect("bundle buffers are consistent")
}

pub fn state_columns(paths: &PathBundle) -> Option<ColumnFile> {
    Some(
        ColumnFile::new(
            paths.n_paths(),
            paths.grid().n_steps(),
            paths.dim_x()?,
            paths.seed(),
            paths.state_values()?.to_vec(),
        )
        .expect("bundle buffers are consistent"),
    )
}

pub fn y_columns(sol: &BsdeSolution, seed: u64) -> ColumnFile {
    ColumnFile::new(
        sol.n_paths(),
        sol.grid().n_steps(),
        1,
        seed,
        sol.y_values().to_vec(),
    )
    .expect("solution buffers are consistent")
}

/// `Z` padded with zeros at the terminal grid index.
pub fn z_columns(sol: &BsdeSolution, seed: u64) -> ColumnFile {
    let ns = sol.grid().n_steps();
    let d = sol.dim_z();
    let mut values = Vec::with_capacity(sol.n_paths() * (ns + 1) * d);
    for p in 0..sol.n_paths() {
        values.extend_from_slice(&sol.z_values()[p * ns * d..(p + 1) * ns * d]);
        values.extend(std::iter::repeat_n(0.0, d));
    }
    ColumnFile::new(sol.n_paths(), ns, d, seed, values).expect("solution buffers are consistent")
}

/// Rebuild a bundle from Brownian and optional state columns.
pub fn bundle_from_columns(
    grid: crate::model::TimeGrid,
    brownian: ColumnFile,
    state: Option<ColumnFile>,
) -> Result<PathBundle> {
    if brownian.n_steps as usize != grid.n_steps() {
        return Err(LabError::Format(
            "grid does not match the column file".into(),
        ));
    }
    let state = match state {
        Some(s) => {
            if s.n_paths != brownian.n_paths || s.n_steps != brownian.n_steps {
                return Err(LabError::Format("state and Brownian files disagree".into()));
            }
            Some((s.dim as usize, s.values))
        }
        None => None,
    };
    PathBundle::from_parts(
        grid,
        brownian.dim as usize,
        brownian.seed,
        brownian.values,
        state,
    )
}
