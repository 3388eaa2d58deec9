//! Trajectory CSV and run summary.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::CommandKind;
use crate::error::{CliError, CliResult};

pub const COLUMNS: [&str; 20] = [
    "t", "r11", "r12", "r13", "r21", "r22", "r23", "r31", "r32", "r33", "wx", "wy", "wz", "tau_x", "tau_y",
    "tau_z", "dist", "lyap", "value", "hamiltonian",
];

const FLUSH_EVERY: usize = 1000;

/// One CSV row; `None` cells are written empty.
pub type Row = [Option<f64>; COLUMNS.len()];

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_number(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes a header and one line per row, flushing every 1000 lines.
pub struct CsvWriter<W: Write> {
    out: BufWriter<W>,
    rows: usize,
}

impl<W: Write> CsvWriter<W> {
    pub fn new(inner: W, header: &[&str]) -> std::io::Result<Self> {
        let mut out = BufWriter::new(inner);
        writeln!(out, "{}", header.join(","))?;
        Ok(CsvWriter { out, rows: 0 })
    }

    pub fn write_row(&mut self, cells: &[Option<f64>]) -> std::io::Result<()> {
        let line: Vec<String> = cells.iter().map(|c| c.map(format_number).unwrap_or_default()).collect();
        writeln!(self.out, "{}", line.join(","))?;
        self.rows += 1;
        if self.rows % FLUSH_EVERY == 0 {
            self.out.flush()?;
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn finish(mut self) -> std::io::Result<usize> {
        self.out.flush()?;
        Ok(self.rows)
    }
}

/// Indices kept by decimation: every `k`-th sample plus the last one.
pub fn decimated(len: usize, k: usize) -> impl Iterator<Item = usize> {
    (0..len).filter(move |&i| i % k == 0 || i + 1 == len)
}

/// Writes `rows(i)` for the decimated indices of a `len`-sample log.
pub fn write_csv<F>(path: &Path, header: &[&str], len: usize, decimation: usize, mut rows: F) -> CliResult<usize>
where
    F: FnMut(usize) -> CliResult<Vec<Option<f64>>>,
{
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = CsvWriter::new(file, header).map_err(|e| CliError::io(path, e))?;
    for i in decimated(len, decimation) {
        let row = rows(i)?;
        w.write_row(&row).map_err(|e| CliError::io(path, e))?;
    }
    w.finish().map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gains {
    pub kp: f64,
    pub kd: f64,
}

/// JSON summary printed on success. Fields that do not apply to the
/// command are `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSummary {
    pub command: CommandKind,
    pub a_matrix: Option<String>,
    pub gain_source: Option<String>,
    /// Gains in force at t = 0.
    pub gains: Option<Gains>,
    /// `[k1, k2, k3]` of the Riccati solution behind the gains.
    pub riccati: Option<[f64; 3]>,
    pub final_distance: Option<f64>,
    pub final_velocity_norm: Option<f64>,
    /// Smallest obstacle function value along the path.
    pub min_clearance: Option<f64>,
    pub iterations: Option<usize>,
    pub residual: Option<f64>,
    pub cost: Option<f64>,
    pub hamiltonian_spread: Option<f64>,
    pub checks_passed: Option<usize>,
    pub checks_failed: Option<usize>,
    pub rows_written: Option<usize>,
    pub wall_clock_seconds: f64,
}

impl RunSummary {
    pub fn empty(command: CommandKind) -> Self {
        RunSummary {
            command,
            a_matrix: None,
            gain_source: None,
            gains: None,
            riccati: None,
            final_distance: None,
            final_velocity_norm: None,
            min_clearance: None,
            iterations: None,
            residual: None,
            cost: None,
            hamiltonian_spread: None,
            checks_passed: None,
            checks_failed: None,
            rows_written: None,
            wall_clock_seconds: 0.0,
        }
    }

    /// Every numeric field is finite.
    pub fn is_finite(&self) -> bool {
        let mut xs = vec![self.wall_clock_seconds];
        xs.extend(self.gains.iter().flat_map(|g| [g.kp, g.kd]));
        xs.extend(self.riccati.iter().flatten());
        xs.extend(
            [
                self.final_distance,
                self.final_velocity_norm,
                self.min_clearance,
                self.residual,
                self.cost,
                self.hamiltonian_spread,
            ]
            .into_iter()
            .flatten(),
        );
        xs.iter().all(|x| x.is_finite())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("summary serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_carry_seventeen_significant_digits() {
        assert_eq!(format_number(0.1), "1.0000000000000001e-1");
        assert_eq!(format_number(-2.0), "-2.0000000000000000e0");
        for x in [std::f64::consts::PI, 1e-300, -123456.789, 0.1 + 0.2] {
            assert_eq!(format_number(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn decimation_keeps_first_and_last() {
        assert_eq!(decimated(25, 10).collect::<Vec<_>>(), vec![0, 10, 20, 24]);
        assert_eq!(decimated(21, 10).collect::<Vec<_>>(), vec![0, 10, 20]);
        assert_eq!(decimated(3, 1).count(), 3);
    }

    #[test]
    fn empty_cells_and_header() {
        let mut buf = Vec::new();
        let mut w = CsvWriter::new(&mut buf, &["a", "b", "c"]).unwrap();
        w.write_row(&[Some(1.0), None, Some(0.5)]).unwrap();
        assert_eq!(w.finish().unwrap(), 1);
        assert_eq!(String::from_utf8(buf).unwrap(), "a,b,c\n1.0000000000000000e0,,5.0000000000000000e-1\n");
    }

    #[test]
    fn summary_round_trips() {
        let mut s = RunSummary::empty(CommandKind::Regulate);
        s.gains = Some(Gains { kp: 1.4142135623730951, kd: 2.767 });
        s.final_distance = Some(3.3e-7);
        s.wall_clock_seconds = 0.012345678901234567;
        let back: RunSummary = serde_json::from_str(&s.to_json()).unwrap();
        assert_eq!(back, s);
        assert!(s.is_finite());
        s.min_clearance = Some(f64::INFINITY);
        assert!(!s.is_finite());
    }
}
