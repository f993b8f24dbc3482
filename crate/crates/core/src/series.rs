//! Snapshot time series and the `KFLOW1` binary container.
//!
//! Layout (little-endian): magic `KFLOW1`, u32 version (=1), u32 nx, u32 ny,
//! f64 re, u32 n, f64 dt, f64 save_every, u64 count, followed by
//! `count * nx * ny` f64 vorticity values, each snapshot row-major with x as
//! the slow index.
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::spectral::{diagnostics, Diagnostics, FlowParams, Grid, SpectralField};

pub const KFLOW_MAGIC: &[u8; 6] = b"KFLOW1";
pub const KFLOW_VERSION: u32 = 1;

/// Time-ordered real-space vorticity snapshots.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotSeries {
    pub grid: Grid,
    pub params: FlowParams,
    /// Sampling interval between snapshots, in time units.
    pub save_every: f64,
    /// One snapshot per row.
    pub data: Array2<f64>,
}

impl SnapshotSeries {
    pub fn new(
        grid: Grid,
        params: FlowParams,
        save_every: f64,
        count: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        let data = Array2::from_shape_vec((count, grid.len()), data)
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        Ok(SnapshotSeries {
            grid,
            params,
            save_every,
            data,
        })
    }

    pub fn from_array(grid: Grid, params: FlowParams, save_every: f64, data: Array2<f64>) -> Result<Self> {
        if data.ncols() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "snapshot length {} does not match grid {}x{}",
                data.ncols(),
                grid.nx,
                grid.ny
            )));
        }
        Ok(SnapshotSeries {
            grid,
            params,
            save_every,
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn snapshot(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.row(i)
    }

    pub fn spectral(&self, i: usize) -> SpectralField {
        let row = self.data.row(i);
        SpectralField::from_real(self.grid, row.as_slice().expect("contiguous rows"))
            .expect("row length matches grid")
    }

    /// Diagnostics of every snapshot, with `t = i * save_every`.
    pub fn diagnostics(&self) -> Vec<Diagnostics> {
        (0..self.len())
            .map(|i| {
                let mut d = diagnostics(&self.spectral(i), self.params.re, self.params.n);
                d.t = i as f64 * self.save_every;
                d
            })
            .collect()
    }

    /// Euclidean norm of each flattened snapshot.
    pub fn norms(&self) -> Vec<f64> {
        self.data
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }

    /// Contiguous sub-range of snapshots.
    pub fn slice(&self, start: usize, end: usize) -> SnapshotSeries {
        SnapshotSeries {
            grid: self.grid,
            params: self.params,
            save_every: self.save_every,
            data: self.data.slice(ndarray::s![start..end, ..]).to_owned(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 8 * self.data.len());
        out.extend_from_slice(KFLOW_MAGIC);
        out.extend_from_slice(&KFLOW_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.grid.nx as u32).to_le_bytes());
        out.extend_from_slice(&(self.grid.ny as u32).to_le_bytes());
        out.extend_from_slice(&self.params.re.to_le_bytes());
        out.extend_from_slice(&self.params.n.to_le_bytes());
        out.extend_from_slice(&self.params.dt.to_le_bytes());
        out.extend_from_slice(&self.save_every.to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for v in self.data.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        let magic = r.take(6)?;
        if magic != KFLOW_MAGIC {
            return Err(Error::Format("missing KFLOW1 magic".into()));
        }
        let version = r.u32()?;
        if version != KFLOW_VERSION {
            return Err(Error::Version {
                what: "KFLOW1 container",
                found: version,
                expected: KFLOW_VERSION,
            });
        }
        let nx = r.u32()? as usize;
        let ny = r.u32()? as usize;
        let re = r.f64()?;
        let n = r.u32()?;
        let dt = r.f64()?;
        let save_every = r.f64()?;
        let count = r.u64()? as usize;
        let grid = Grid::new(nx, ny, 1.0)?;
        let params = FlowParams::new(re, n, dt)?;
        let total = count
            .checked_mul(grid.len())
            .ok_or_else(|| Error::Format("snapshot count overflows".into()))?;
        if r.remaining() != total * 8 {
            return Err(Error::Format(format!(
                "expected {} payload bytes, found {}",
                total * 8,
                r.remaining()
            )));
        }
        let mut data = Vec::with_capacity(total);
        for _ in 0..total {
            data.push(r.f64()?);
        }
        SnapshotSeries::new(grid, params, save_every, count, data)
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        SnapshotSeries::from_bytes(&bytes)
    }
}

/// Write via a sibling temporary file and rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidParameter(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Little-endian cursor over a byte slice.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        ByteReader { bytes, pos: 0 }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Format("unexpected end of file".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
