//! Plain-text and CSV file formats.
//!
//! Floats are written with 17 significant digits so every value round-trips
//! exactly. CSV files may start with `#` comment lines carrying run metadata.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::experiments::{ComparisonRow, EmpiricalCell};
use crate::geometry::CurvePoint;
use crate::solver::Matrix;

pub const CURVE_HEADER: [&str; 7] = [
    "epsilon",
    "delta_pred",
    "stderr",
    "lambda_star",
    "samples",
    "n",
    "seed",
];
pub const CELL_HEADER: [&str; 6] = ["n", "m", "k", "trials", "successes", "seed"];
pub const COMPARISON_HEADER: [&str; 8] = [
    "epsilon",
    "delta_pred",
    "pred_stderr",
    "delta_50",
    "delta_10",
    "delta_90",
    "abs_diff",
    "pass",
];

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("not a number: {s:?}")))
}

fn parse_int<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.trim()
        .parse::<T>()
        .map_err(|_| Error::Parse(format!("not an integer: {s:?}")))
}

fn parse_bool(s: &str) -> Result<bool> {
    match s.trim() {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        other => Err(Error::Parse(format!("not a boolean: {other:?}"))),
    }
}

/// One number per line; blank lines and `#` comments are skipped.
pub fn parse_vector(text: &str) -> Result<Vec<f64>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .flat_map(|l| l.split(',').map(str::trim).filter(|f| !f.is_empty()))
        .map(parse_f64)
        .collect()
}

pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    parse_vector(&fs::read_to_string(path)?)
}

pub fn format_vector(v: &[f64]) -> String {
    v.iter().map(|x| fmt_f64(*x) + "\n").collect()
}

/// Row-major CSV matrix without a header.
pub fn parse_matrix(text: &str) -> Result<Matrix> {
    let mut rows = 0;
    let mut cols = None;
    let mut data = Vec::new();
    for line in text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
    {
        let row = line.split(',').map(parse_f64).collect::<Result<Vec<_>>>()?;
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(Error::Parse(format!(
                    "row {} has {} columns, expected {c}",
                    rows + 1,
                    row.len()
                )))
            }
            _ => {}
        }
        data.extend(row);
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::Parse("empty matrix file".into()))?;
    Matrix::from_row_major(rows, cols, data)
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    parse_matrix(&fs::read_to_string(path)?)
}

pub fn format_matrix(a: &Matrix) -> String {
    (0..a.rows())
        .map(|i| {
            a.row(i)
                .iter()
                .map(|x| fmt_f64(*x))
                .collect::<Vec<_>>()
                .join(",")
                + "\n"
        })
        .collect()
}

fn write_table<W: Write>(
    out: W,
    comments: &[String],
    header: &[&str],
    rows: Vec<Vec<String>>,
) -> Result<()> {
    let mut out = out;
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn read_table<R: Read>(input: R, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let got = r.headers().map_err(csv_err)?.clone();
    if got.iter().collect::<Vec<_>>() != header {
        return Err(Error::Parse(format!(
            "unexpected header {:?}, expected {:?}",
            got, header
        )));
    }
    r.records().map(|rec| rec.map_err(csv_err)).collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

pub fn write_curve<W: Write>(out: W, comments: &[String], points: &[CurvePoint]) -> Result<()> {
    let rows = points
        .iter()
        .map(|p| {
            vec![
                fmt_f64(p.epsilon),
                fmt_f64(p.delta_pred),
                fmt_f64(p.stderr),
                fmt_f64(p.lambda_star),
                p.samples.to_string(),
                p.n.to_string(),
                p.seed.to_string(),
            ]
        })
        .collect();
    write_table(out, comments, &CURVE_HEADER, rows)
}

pub fn read_curve<R: Read>(input: R) -> Result<Vec<CurvePoint>> {
    read_table(input, &CURVE_HEADER)?
        .iter()
        .map(|r| {
            Ok(CurvePoint {
                epsilon: parse_f64(&r[0])?,
                delta_pred: parse_f64(&r[1])?,
                stderr: parse_f64(&r[2])?,
                lambda_star: parse_f64(&r[3])?,
                samples: parse_int(&r[4])?,
                n: parse_int(&r[5])?,
                seed: parse_int(&r[6])?,
            })
        })
        .collect()
}

pub fn write_cells<W: Write>(out: W, comments: &[String], cells: &[EmpiricalCell]) -> Result<()> {
    let rows = cells
        .iter()
        .map(|c| {
            [c.n, c.m, c.k, c.trials, c.successes]
                .iter()
                .map(usize::to_string)
                .chain([c.seed.to_string()])
                .collect()
        })
        .collect();
    write_table(out, comments, &CELL_HEADER, rows)
}

pub fn read_cells<R: Read>(input: R) -> Result<Vec<EmpiricalCell>> {
    read_table(input, &CELL_HEADER)?
        .iter()
        .map(|r| {
            let cell = EmpiricalCell {
                n: parse_int(&r[0])?,
                m: parse_int(&r[1])?,
                k: parse_int(&r[2])?,
                trials: parse_int(&r[3])?,
                successes: parse_int(&r[4])?,
                seed: parse_int(&r[5])?,
            };
            if cell.successes > cell.trials
                || cell.trials == 0
                || cell.n < 2
                || cell.k > cell.n - 1
                || cell.m == 0
            {
                return Err(Error::Parse(format!("inconsistent cell {cell:?}")));
            }
            Ok(cell)
        })
        .collect()
}

pub fn write_comparison<W: Write>(
    out: W,
    comments: &[String],
    rows: &[ComparisonRow],
) -> Result<()> {
    let rows = rows
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.epsilon),
                fmt_f64(r.delta_pred),
                fmt_f64(r.pred_stderr),
                fmt_f64(r.delta_50),
                fmt_f64(r.delta_10),
                fmt_f64(r.delta_90),
                fmt_f64(r.abs_diff),
                r.pass.to_string(),
            ]
        })
        .collect();
    write_table(out, comments, &COMPARISON_HEADER, rows)
}

pub fn read_comparison<R: Read>(input: R) -> Result<Vec<ComparisonRow>> {
    read_table(input, &COMPARISON_HEADER)?
        .iter()
        .map(|r| {
            Ok(ComparisonRow {
                epsilon: parse_f64(&r[0])?,
                delta_pred: parse_f64(&r[1])?,
                pred_stderr: parse_f64(&r[2])?,
                delta_50: parse_f64(&r[3])?,
                delta_10: parse_f64(&r[4])?,
                delta_90: parse_f64(&r[5])?,
                abs_diff: parse_f64(&r[6])?,
                pass: parse_bool(&r[7])?,
            })
        })
        .collect()
}
