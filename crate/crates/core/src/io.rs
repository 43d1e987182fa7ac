//! Field snapshot files.
//!
//! A snapshot is one line of JSON, `{"n1":..,"n2":..,"n3":..,"L1":..,"L2":..,"L3":..,"time":..}`,
//! terminated by `\n`, followed by `n1*n2*n3` pairs of little-endian `f64` values
//! `(re, im)` in x1-fastest order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{ComplexField, Grid, GridSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    #[serde(rename = "L1")]
    pub l1: f64,
    #[serde(rename = "L2")]
    pub l2: f64,
    #[serde(rename = "L3")]
    pub l3: f64,
    pub time: f64,
}

impl SnapshotHeader {
    pub fn grid_spec(&self) -> Result<GridSpec> {
        GridSpec::new([self.n1, self.n2, self.n3], [self.l1, self.l2, self.l3])
    }
}

pub fn write_snapshot(mut w: impl Write, u: &ComplexField, time: f64) -> Result<()> {
    let spec = u.grid().spec();
    let header = SnapshotHeader {
        n1: spec.n[0],
        n2: spec.n[1],
        n3: spec.n[2],
        l1: spec.len[0],
        l2: spec.len[1],
        l3: spec.len[2],
        time,
    };
    let line = serde_json::to_string(&header).map_err(|e| Error::Format(e.to_string()))?;
    w.write_all(line.as_bytes())?;
    w.write_all(b"\n")?;
    let mut buf = Vec::with_capacity(16 * u.values().len());
    for z in u.values() {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

/// Reads a snapshot; the grid is built from the header.
pub fn read_snapshot(mut r: impl BufRead) -> Result<(ComplexField, f64)> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    if !line.ends_with('\n') {
        return Err(Error::Format("missing header line".into()));
    }
    let header: SnapshotHeader =
        serde_json::from_str(line.trim_end()).map_err(|e| Error::Format(e.to_string()))?;
    let spec = header.grid_spec().map_err(|e| Error::Format(e.to_string()))?;
    let grid = Grid::new(spec);
    let values = read_values(&mut r, &grid)?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after raster".into()));
    }
    Ok((ComplexField::from_values(&grid, values)?, header.time))
}

fn read_values(r: &mut impl Read, grid: &Arc<Grid>) -> Result<Vec<Complex64>> {
    let len = grid.len();
    let mut buf = vec![0u8; 16 * len];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("raster shorter than {len} points: {e}")))?;
    let mut values = Vec::with_capacity(len);
    for chunk in buf.chunks_exact(16) {
        let re = f64::from_le_bytes(chunk[..8].try_into().expect("8 bytes"));
        let im = f64::from_le_bytes(chunk[8..].try_into().expect("8 bytes"));
        if !(re.is_finite() && im.is_finite()) {
            return Err(Error::Format("non-finite value in raster".into()));
        }
        values.push(Complex64::new(re, im));
    }
    Ok(values)
}

pub fn save_snapshot(path: &Path, u: &ComplexField, time: f64) -> Result<()> {
    write_snapshot(BufWriter::new(File::create(path)?), u, time)
}

pub fn load_snapshot(path: &Path) -> Result<(ComplexField, f64)> {
    read_snapshot(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field() -> ComplexField {
        let g = Grid::new(GridSpec::new([8, 16, 8], [4.0, 8.0, 5.0]).unwrap());
        ComplexField::from_fn(&g, |x| Complex64::new((-x[0] * x[0]).exp(), x[1] * 0.1 + x[2]))
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let u = field();
        let mut bytes = Vec::new();
        write_snapshot(&mut bytes, &u, 2.5).unwrap();
        let (v, t) = read_snapshot(&bytes[..]).unwrap();
        assert_eq!(t, 2.5);
        assert_eq!(v.values(), u.values());
        assert_eq!(v.grid().spec(), u.grid().spec());
    }

    #[test]
    fn layout_matches_documentation() {
        let u = field();
        let mut bytes = Vec::new();
        write_snapshot(&mut bytes, &u, 0.0).unwrap();
        let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
        let header: serde_json::Value = serde_json::from_slice(&bytes[..nl]).unwrap();
        assert_eq!(header["n2"], 16);
        assert_eq!(header["L3"], 5.0);
        assert_eq!(bytes.len() - nl - 1, 16 * 8 * 16 * 8);
        let z = u.values()[1];
        assert_eq!(&bytes[nl + 17..nl + 25], &z.re.to_le_bytes());
        assert_eq!(&bytes[nl + 25..nl + 33], &z.im.to_le_bytes());
    }

    #[test]
    fn truncated_raster_is_rejected() {
        let mut bytes = Vec::new();
        write_snapshot(&mut bytes, &field(), 0.0).unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(read_snapshot(&bytes[..]), Err(Error::Format(_))));
        assert!(matches!(read_snapshot(&b"{\"n1\":8}\n"[..]), Err(Error::Format(_))));
    }
}
