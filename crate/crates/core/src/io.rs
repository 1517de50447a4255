//! Binary grid files and CSV writers.
//!
//! Layout, all little-endian:
//!
//! | offset | field      | type |
//! |--------|------------|------|
//! | 0      | magic      | `b"DSPC"` |
//! | 4      | version    | u32  |
//! | 8      | n1         | u32  |
//! | 12     | n3         | u32  |
//! | 16     | dt1        | f64  |
//! | 24     | dt3        | f64  |
//! | 32     | t2         | f64  |
//! | 40     | omega_ref  | f64  |
//!
//! Version 1 (time-domain response) is followed directly by `n1·n3` pairs of
//! f64 (re, im), row-major in the first axis. Version 2 (frequency maps) adds
//! `omega1_start` and `omega3_start` (f64) before the data, and stores the axis
//! steps in meV in the dt1/dt3 slots.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::response::ResponseGrid;
use crate::spectra::{MapKind, SpectrumMap};
use crate::units::mev_to_nm;
use crate::C64;

pub const MAGIC: &[u8; 4] = b"DSPC";
pub const HEADER_LEN: usize = 48;

#[derive(Debug, Clone, PartialEq)]
pub struct GridFile {
    pub version: u32,
    pub n1: usize,
    pub n3: usize,
    pub d1: f64,
    pub d3: f64,
    pub t2: f64,
    pub omega_ref: f64,
    /// First axis values of a version 2 file.
    pub origin: Option<(f64, f64)>,
    pub values: Vec<C64>,
}

impl GridFile {
    /// Time-domain file holding `values` on the response grid.
    pub fn response(r: &ResponseGrid, values: Vec<C64>) -> GridFile {
        let g = &r.grids;
        GridFile {
            version: 1,
            n1: g.n1,
            n3: g.n3,
            d1: g.dt1,
            d3: g.dt3,
            t2: g.t2,
            omega_ref: r.omega_ref,
            origin: None,
            values,
        }
    }

    /// Frequency map; needs at least two points per axis for the step.
    pub fn map(m: &SpectrumMap, omega_ref: f64) -> Result<GridFile> {
        if m.n1() < 2 || m.n3() < 2 {
            return Err(Error::Domain("map needs at least two points per axis".into()));
        }
        Ok(GridFile {
            version: 2,
            n1: m.n1(),
            n3: m.n3(),
            d1: m.omega1[1] - m.omega1[0],
            d3: m.omega3[1] - m.omega3[0],
            t2: m.t2,
            omega_ref,
            origin: Some((m.omega1[0], m.omega3[0])),
            values: m.values.clone(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(HEADER_LEN + 16 + 16 * self.values.len());
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&self.version.to_le_bytes());
        b.extend_from_slice(&(self.n1 as u32).to_le_bytes());
        b.extend_from_slice(&(self.n3 as u32).to_le_bytes());
        for x in [self.d1, self.d3, self.t2, self.omega_ref] {
            b.extend_from_slice(&x.to_le_bytes());
        }
        if let Some((o1, o3)) = self.origin {
            b.extend_from_slice(&o1.to_le_bytes());
            b.extend_from_slice(&o3.to_le_bytes());
        }
        for v in &self.values {
            b.extend_from_slice(&v.re.to_le_bytes());
            b.extend_from_slice(&v.im.to_le_bytes());
        }
        b
    }

    pub fn write(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(&self.to_bytes())
    }

    pub fn from_bytes(b: &[u8]) -> Result<GridFile> {
        if b.len() < HEADER_LEN || &b[..4] != MAGIC {
            return Err(Error::Format("missing DSPC header".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(b[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(b[o..o + 8].try_into().unwrap());
        let version = u32_at(4);
        let (n1, n3) = (u32_at(8) as usize, u32_at(12) as usize);
        let (data, origin) = match version {
            1 => (HEADER_LEN, None),
            2 if b.len() >= HEADER_LEN + 16 => (HEADER_LEN + 16, Some((f64_at(48), f64_at(56)))),
            2 => return Err(Error::Format("truncated version 2 header".into())),
            v => return Err(Error::Format(format!("unsupported version {v}"))),
        };
        let n = n1
            .checked_mul(n3)
            .ok_or_else(|| Error::Format("grid dimensions overflow".into()))?;
        if b.len() != data + 16 * n {
            return Err(Error::Format(format!("expected {} data bytes for {n1}x{n3}, found {}", 16 * n, b.len() - data)));
        }
        let values = (0..n).map(|k| C64::new(f64_at(data + 16 * k), f64_at(data + 16 * k + 8))).collect();
        Ok(GridFile { version, n1, n3, d1: f64_at(16), d3: f64_at(24), t2: f64_at(32), omega_ref: f64_at(40), origin, values })
    }

    /// Rebuild the frequency map of a version 2 file.
    pub fn to_map(&self, kind: MapKind) -> Result<SpectrumMap> {
        let Some((o1, o3)) = self.origin else {
            return Err(Error::Format("not a frequency map (version 1 file)".into()));
        };
        Ok(SpectrumMap {
            omega1: (0..self.n1).map(|i| o1 + i as f64 * self.d1).collect(),
            omega3: (0..self.n3).map(|j| o3 + j as f64 * self.d3).collect(),
            values: self.values.clone(),
            t2: self.t2,
            kind,
        })
    }

    pub fn read(r: &mut impl Read) -> Result<GridFile> {
        let mut b = Vec::new();
        r.read_to_end(&mut b).map_err(|e| Error::Format(e.to_string()))?;
        GridFile::from_bytes(&b)
    }
}

/// Time-domain response as `t1_fs,t3_fs,re,im`.
pub fn write_response_csv(r: &ResponseGrid, values: &[C64], w: &mut impl Write) -> std::io::Result<()> {
    let g = &r.grids;
    writeln!(w, "t1_fs,t3_fs,re,im")?;
    for i in 0..g.n1 {
        for j in 0..g.n3 {
            let v = values[i * g.n3 + j];
            writeln!(w, "{},{},{:.12e},{:.12e}", g.t1(i), g.t3(j), v.re, v.im)?;
        }
    }
    Ok(())
}

/// Real display values of a map with both energy and wavelength axes.
pub fn write_map_csv(m: &SpectrumMap, w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "omega1_mev,omega3_mev,value,omega1_nm,omega3_nm")?;
    for (i, &o1) in m.omega1.iter().enumerate() {
        for (j, &o3) in m.omega3.iter().enumerate() {
            writeln!(w, "{o1:.6},{o3:.6},{:.9e},{:.6},{:.6}", m.real_at(i, j), mev_to_nm(o1), mev_to_nm(o3))?;
        }
    }
    Ok(())
}
