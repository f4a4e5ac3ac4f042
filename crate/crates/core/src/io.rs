//! Binary snapshots and the CSV run log.
//!
//! Snapshot layout (all little-endian): magic `ACON`, `u32` format version,
//! `u32` dim, `dim × u32` points per axis, `dim × f64` half-lengths, then
//! `φ1` and `φ2` as `f64` in row-major order.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use crate::chem::ModelParams;
use crate::dynamics::StepReport;
use crate::energy::PhaseState;
use crate::grid::{PeriodicGrid, ScalarField};

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"ACON";
pub const SNAPSHOT_VERSION: u32 = 1;

pub const LOG_HEADER: &str = "step,time,energy_total,energy_interfacial,energy_potential,energy_longrange,lambda1,lambda2,volres1,volres2,inc1_l2,inc2_l2,inner_iters,mm_slack";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("malformed snapshot: {0}")]
    Format(String),
}

impl IoError {
    pub fn at(path: &Path, source: io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Decoded snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub grid: PeriodicGrid,
    pub phi: [ScalarField; 2],
}

impl Snapshot {
    pub fn from_state(state: &PhaseState) -> Self {
        Self {
            grid: state.grid().clone(),
            phi: state.fields().clone(),
        }
    }

    pub fn into_state(self, params: ModelParams) -> Option<PhaseState> {
        let [a, b] = self.phi;
        PhaseState::new(a, b, params).ok()
    }
}

pub fn encode_snapshot(state: &PhaseState) -> Vec<u8> {
    let grid = state.grid();
    let mut out = Vec::with_capacity(12 + grid.dim() * 12 + 16 * grid.len());
    out.extend_from_slice(SNAPSHOT_MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    out.extend_from_slice(&(grid.dim() as u32).to_le_bytes());
    for &n in grid.points() {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for &x in grid.half_lengths() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    for field in state.fields() {
        for v in field.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<Snapshot, IoError> {
    let mut cursor = bytes;
    let mut take = |n: usize| -> Result<&[u8], IoError> {
        if cursor.len() < n {
            return Err(IoError::Format("unexpected end of data".into()));
        }
        let (head, rest) = cursor.split_at(n);
        cursor = rest;
        Ok(head)
    };
    if take(4)? != SNAPSHOT_MAGIC {
        return Err(IoError::Format("bad magic".into()));
    }
    let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes"));
    let f64_at = |b: &[u8]| f64::from_le_bytes(b.try_into().expect("8 bytes"));
    let version = u32_at(take(4)?);
    if version != SNAPSHOT_VERSION {
        return Err(IoError::Format(format!("unsupported version {version}")));
    }
    let dim = u32_at(take(4)?) as usize;
    if !(2..=3).contains(&dim) {
        return Err(IoError::Format(format!("unsupported dimension {dim}")));
    }
    let points: Vec<usize> = (0..dim)
        .map(|_| take(4).map(|b| u32_at(b) as usize))
        .collect::<Result<_, _>>()?;
    let half: Vec<f64> = (0..dim)
        .map(|_| take(8).map(f64_at))
        .collect::<Result<_, _>>()?;
    let grid = PeriodicGrid::new(&points, &half).map_err(|e| IoError::Format(e.to_string()))?;
    let mut read_field = || -> Result<ScalarField, IoError> {
        let values = (0..grid.len())
            .map(|_| take(8).map(f64_at))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ScalarField::new(&grid, values).expect("grid-sized field"))
    };
    let phi = [read_field()?, read_field()?];
    if !cursor.is_empty() {
        return Err(IoError::Format(format!("{} trailing bytes", cursor.len())));
    }
    Ok(Snapshot { grid, phi })
}

pub fn write_snapshot(path: &Path, state: &PhaseState) -> Result<(), IoError> {
    fs::write(path, encode_snapshot(state)).map_err(|e| IoError::at(path, e))
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot, IoError> {
    decode_snapshot(&fs::read(path).map_err(|e| IoError::at(path, e))?)
}

/// Formats `v` with `digits` significant digits in scientific notation.
pub fn format_float(v: f64, digits: usize) -> String {
    format!("{:.*e}", digits.saturating_sub(1), v)
}

/// Streams rows of the run log.
pub struct LogWriter<W: Write> {
    out: W,
    digits: usize,
}

impl<W: Write> LogWriter<W> {
    /// Writes the header immediately.
    pub fn new(mut out: W, digits: usize) -> io::Result<Self> {
        writeln!(out, "{LOG_HEADER}")?;
        Ok(Self { out, digits })
    }

    /// One row for the step ending at `step` (time `time`).
    pub fn row(&mut self, step: usize, time: f64, r: &StepReport) -> io::Result<()> {
        let d = self.digits;
        let b = &r.breakdown_after;
        let floats = [
            time,
            b.total,
            b.interfacial,
            b.potential,
            b.longrange,
            r.lambda[0],
            r.lambda[1],
            r.volume_residuals[0],
            r.volume_residuals[1],
            r.increment_l2[0],
            r.increment_l2[1],
        ];
        let mut line = step.to_string();
        for v in floats {
            line.push(',');
            line.push_str(&format_float(v, d));
        }
        line.push_str(&format!(",{},", r.inner_iters));
        if let Some(slack) = r.mm_inequality_slack {
            line.push_str(&format_float(slack, d));
        }
        writeln!(self.out, "{line}")
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::EnergyBreakdown;

    fn state() -> PhaseState {
        let grid = PeriodicGrid::new(&[4, 6], &[0.5, 0.75]).unwrap();
        let p = ModelParams::new(0.1, [[1.0, 0.0], [0.0, 1.0]], [0.3, 0.3], 1.0).unwrap();
        let a = ScalarField::from_fn(&grid, |x| (x[0] * 3.1).sin() / 7.0);
        let b = ScalarField::from_fn(&grid, |x| 1.0 / 3.0 + x[1] * 1e-17);
        PhaseState::new(a, b, p).unwrap()
    }

    #[test]
    fn snapshot_round_trip_is_bit_exact() {
        let s = state();
        let bytes = encode_snapshot(&s);
        assert_eq!(&bytes[..4], b"ACON");
        assert_eq!(bytes.len(), 4 + 4 + 4 + 2 * 4 + 2 * 8 + 2 * 24 * 8);
        let back = decode_snapshot(&bytes).unwrap();
        assert_eq!(back.grid, *s.grid());
        for i in 0..2 {
            let x: Vec<u64> = back.phi[i].values().iter().map(|v| v.to_bits()).collect();
            let y: Vec<u64> = s.phi(i).values().iter().map(|v| v.to_bits()).collect();
            assert_eq!(x, y);
        }
    }

    #[test]
    fn snapshot_rejects_garbage() {
        let mut bytes = encode_snapshot(&state());
        assert!(decode_snapshot(&bytes[..bytes.len() - 1]).is_err());
        bytes[0] = b'X';
        assert!(decode_snapshot(&bytes).is_err());
    }

    #[test]
    fn log_rows_reparse_exactly() {
        let report = StepReport {
            energy_before: 1.0,
            energy_after: 0.1 + 0.2,
            breakdown_after: EnergyBreakdown {
                interfacial: 1.0 / 3.0,
                potential: -0.0,
                longrange: 1e-300,
                total: 0.1 + 0.2,
            },
            lambda: [std::f64::consts::PI, -2.5e7],
            volume_residuals: [1e-16, -3e-15],
            increment_l2: [0.0, 123.456],
            inner_iters: 12,
            mm_inequality_slack: None,
            stationarity: None,
        };
        let mut w = LogWriter::new(Vec::new(), 17).unwrap();
        w.row(3, 0.003, &report).unwrap();
        let text = String::from_utf8(w.into_inner()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(LOG_HEADER));
        let cols: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(cols.len(), 14);
        assert_eq!(cols[0], "3");
        assert_eq!(cols[2].parse::<f64>().unwrap().to_bits(), (0.1f64 + 0.2).to_bits());
        assert_eq!(cols[3].parse::<f64>().unwrap(), 1.0 / 3.0);
        assert_eq!(cols[6].parse::<f64>().unwrap(), std::f64::consts::PI);
        assert_eq!(cols[12], "12");
        assert_eq!(cols[13], "");
    }
}
