//! Artifact writers: fixed-precision CSV tables and field dumps.

use crate::ansatz::{BoundReport, EpsilonReport};
use crate::error::{Error, Result};
use crate::mesh::Field;
use crate::scalar::Real;
use crate::solver::{ContinuationStep, Diagnostics};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::str::FromStr;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    I(i64),
    B(bool),
    S(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(x) => fmt17(*x),
            Cell::I(i) => i.to_string(),
            Cell::B(b) => b.to_string(),
            Cell::S(s) => s.clone(),
        }
    }
}

/// CSV writer with a fixed column count.
pub struct Csv<W: Write> {
    out: csv::Writer<W>,
    cols: usize,
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

impl<W: Write> Csv<W> {
    pub fn new(out: W, header: &[&str]) -> Result<Self> {
        let mut out = csv::WriterBuilder::new().from_writer(out);
        out.write_record(header).map_err(csv_err)?;
        Ok(Self { out, cols: header.len() })
    }

    pub fn row(&mut self, cells: &[Cell]) -> Result<()> {
        if cells.len() != self.cols {
            return Err(Error::Io(format!("row has {} cells, header has {}", cells.len(), self.cols)));
        }
        self.out.write_record(cells.iter().map(Cell::render)).map_err(csv_err)
    }

    pub fn finish(self) -> Result<W> {
        self.out.into_inner().map_err(|e| Error::Io(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldFormat {
    #[default]
    Text,
    /// Raw little-endian `f64` after the header line.
    Binary,
}

impl FromStr for FieldFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(Self::Text),
            "binary" => Ok(Self::Binary),
            _ => Err(Error::Parameter(format!("unknown field format '{s}' (text or binary)"))),
        }
    }
}

/// Header line followed by row-major nodal values.
pub fn write_field<T: Real>(out: &mut impl Write, field: &Field<T>, format: FieldFormat) -> Result<()> {
    writeln!(out, "{}", field.grid.dump_header())?;
    match format {
        FieldFormat::Text => {
            for v in &field.values {
                writeln!(out, "{}", fmt17(v.as_f64()))?;
            }
        }
        FieldFormat::Binary => {
            for v in &field.values {
                out.write_all(&v.as_f64().to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Inverse of [`write_field`]: the header line and the values.
pub fn read_field(input: &mut impl BufRead, format: FieldFormat) -> Result<(String, Vec<f64>)> {
    let mut header = String::new();
    input.read_line(&mut header)?;
    let header = header.trim_end().to_string();
    let toks: Vec<&str> = header.split_whitespace().collect();
    let bad = || Error::Io(format!("malformed field header '{header}'"));
    let d: usize = toks.first().and_then(|t| t.parse().ok()).ok_or_else(bad)?;
    let n: usize = toks
        .get(1..1 + d)
        .ok_or_else(bad)?
        .iter()
        .map(|t| t.parse::<usize>().map_err(|_| bad()))
        .product::<Result<usize>>()?;
    let values = match format {
        FieldFormat::Text => {
            let mut v = Vec::with_capacity(n);
            for line in input.lines() {
                let line = line?;
                if !line.trim().is_empty() {
                    v.push(line.trim().parse::<f64>().map_err(|e| Error::Io(e.to_string()))?);
                }
            }
            v
        }
        FieldFormat::Binary => {
            let mut buf = Vec::new();
            input.read_to_end(&mut buf)?;
            buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect()
        }
    };
    if values.len() != n {
        return Err(Error::Io(format!("expected {n} values, found {}", values.len())));
    }
    Ok((header, values))
}

pub fn write_diagnostics_csv(out: impl Write, diag: &Diagnostics) -> Result<()> {
    let mut csv = Csv::new(
        out,
        &["iter", "energy", "s_u", "grad_norm", "residual", "step", "constraint", "pinwheel", "overlap"],
    )?;
    for r in &diag.records {
        csv.row(&[
            Cell::I(r.iter as i64),
            Cell::F(r.energy),
            Cell::F(r.s_u),
            Cell::F(r.grad_norm),
            Cell::F(r.residual),
            Cell::F(r.step),
            Cell::F(r.constraint),
            Cell::F(r.pinwheel),
            Cell::F(r.overlap),
        ])?;
    }
    csv.finish()?;
    Ok(())
}

pub fn write_continuation_csv<T: Real>(out: impl Write, steps: &[ContinuationStep<T>]) -> Result<()> {
    let mut csv = Csv::new(
        out,
        &[
            "beta",
            "energy",
            "overlap",
            "beta_times_overlap",
            "support_intersection",
            "support_fraction",
            "iterations",
            "converged",
            "residual",
        ],
    )?;
    for s in steps {
        let d = &s.result.diagnostics;
        csv.row(&[
            Cell::F(s.beta),
            Cell::F(d.final_energy),
            Cell::F(s.overlaps.total),
            Cell::F(s.overlaps.beta_times_overlap),
            Cell::F(s.overlaps.support_intersection),
            Cell::F(s.overlaps.support_fraction),
            Cell::I(d.iterations as i64),
            Cell::B(d.converged),
            Cell::F(d.final_residual),
        ])?;
    }
    csv.finish()?;
    Ok(())
}

/// Ansatz scan table; `rate_residual` is NaN when no ε_R scan is given.
pub fn write_interaction_csv(out: impl Write, bound: &BoundReport, eps: Option<&EpsilonReport>) -> Result<()> {
    if let Some(e) = eps {
        if e.rows.len() != bound.rows.len() || e.rows.iter().zip(&bound.rows).any(|(a, b)| a.r != b.r) {
            return Err(Error::Io("epsilon and bound scans use different R grids".into()));
        }
    }
    let mut csv = Csv::new(out, &["R", "eps_R", "rate_residual", "bound", "threshold", "crossed"])?;
    for (i, row) in bound.rows.iter().enumerate() {
        let rr = eps.map_or(f64::NAN, |e| e.rows[i].rate_residual);
        csv.row(&[
            Cell::F(row.r),
            Cell::F(row.eps_r),
            Cell::F(rr),
            Cell::F(row.bound),
            Cell::F(bound.threshold),
            Cell::B(row.crossed),
        ])?;
    }
    csv.finish()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Grid;
    use proptest::prelude::*;
    use std::sync::Arc;

    proptest! {
        #[test]
        fn fmt17_round_trips(bits in any::<u64>()) {
            let x = f64::from_bits(bits);
            prop_assume!(x.is_finite());
            prop_assert_eq!(fmt17(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn field_dump_round_trips_in_both_formats() {
        let grid = Arc::new(Grid::<f64>::polar(5, 12, 2.0).unwrap());
        let f = Field::from_fn(grid, |x| (x[0] * 3.1).sin() + x[1] / 7.0);
        for fmt in [FieldFormat::Text, FieldFormat::Binary] {
            let mut buf = Vec::new();
            write_field(&mut buf, &f, fmt).unwrap();
            let (header, vals) = read_field(&mut buf.as_slice(), fmt).unwrap();
            assert!(header.starts_with("2 5 12 ") && header.ends_with("coords=polar"));
            assert_eq!(vals, f.values);
        }
    }

    #[test]
    fn truncated_dump_is_rejected() {
        let grid = Arc::new(Grid::<f64>::cartesian(1, 4, 0.5).unwrap());
        let f = Field::from_fn(grid, |x| x[0]);
        let mut buf = Vec::new();
        write_field(&mut buf, &f, FieldFormat::Binary).unwrap();
        buf.truncate(buf.len() - 8);
        assert!(read_field(&mut buf.as_slice(), FieldFormat::Binary).is_err());
    }

    #[test]
    fn csv_quotes_and_checks_width() {
        let mut csv = Csv::new(Vec::new(), &["a", "b"]).unwrap();
        csv.row(&[Cell::S("x,y".into()), Cell::F(0.1)]).unwrap();
        assert!(csv.row(&[Cell::B(true)]).is_err());
        let text = String::from_utf8(csv.finish().unwrap()).unwrap();
        assert_eq!(text, "a,b\n\"x,y\",1.0000000000000001e-1\n");
    }

    #[test]
    fn formats_parse() {
        assert_eq!("binary".parse::<FieldFormat>().unwrap(), FieldFormat::Binary);
        assert!("hdf5".parse::<FieldFormat>().is_err());
    }
}
