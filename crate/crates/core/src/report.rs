//! Report emission. Floats are written with 17 significant digits in
//! scientific notation, `.` as decimal separator and `\n` line endings, so
//! identical inputs give identical bytes.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    /// Process exit status for this verdict.
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Pass => 0,
            Verdict::Fail => 1,
            Verdict::Inconclusive => 2,
        }
    }

    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    /// Fail dominates inconclusive, which dominates pass.
    pub fn combine(self, other: Verdict) -> Verdict {
        use Verdict::*;
        match (self, other) {
            (Fail, _) | (_, Fail) => Fail,
            (Inconclusive, _) | (_, Inconclusive) => Inconclusive,
            _ => Pass,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Bool(bool),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<Verdict> for Cell {
    fn from(v: Verdict) -> Self {
        Cell::Text(v.as_str().to_string())
    }
}

impl From<&[f64]> for Cell {
    fn from(v: &[f64]) -> Self {
        Cell::Text(
            v.iter()
                .map(|x| fmt_float(*x))
                .collect::<Vec<_>>()
                .join(";"),
        )
    }
}

/// A report that can be flattened into a CSV table.
pub trait Tabular {
    fn header(&self) -> Vec<&'static str>;
    fn rows(&self) -> Vec<Vec<Cell>>;
}

pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:.16e}")
    }
}

fn escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn csv_string(table: &dyn Tabular) -> String {
    let mut out = String::new();
    out.push_str(&table.header().join(","));
    out.push('\n');
    for row in table.rows() {
        let cells: Vec<String> = row
            .iter()
            .map(|c| match c {
                Cell::Num(v) => fmt_float(*v),
                Cell::Int(v) => v.to_string(),
                Cell::Text(s) => escape(s),
                Cell::Bool(b) => b.to_string(),
            })
            .collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

/// `serde_json` formatter writing every float as `{:.16e}`.
struct FixedFloat;

impl serde_json::ser::Formatter for FixedFloat {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(format!("{value:.16e}").as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Pretty-enough JSON: one document, fixed float format, trailing newline.
pub fn json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedFloat);
    value
        .serialize(&mut ser)
        .map_err(|e| LabError::Format(format!("cannot serialize report: {e}")))?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(|e| LabError::Format(e.to_string()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text.as_bytes()).map_err(|e| LabError::io(path, e))
}

/// Write `report` as CSV (its table) or JSON (the full document).
pub fn emit_report<R: Serialize + Tabular>(
    report: &R,
    format: ReportFormat,
    path: impl AsRef<Path>,
) -> Result<()> {
    let text = match format {
        ReportFormat::Csv => csv_string(report),
        ReportFormat::Json => json_string(report)?,
    };
    write_text(path.as_ref(), &text)
}

/// Write any serializable document as JSON.
pub fn emit_json<T: Serialize + ?Sized>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &json_string(value)?)
}

/// Write any table as CSV.
pub fn emit_csv(table: &dyn Tabular, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &csv_string(table))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct Demo {
        name: String,
        values: Vec<f64>,
        missing: Option<f64>,
    }

    impl Tabular for Demo {
        fn header(&self) -> Vec<&'static str> {
            vec!["index", "value"]
        }
        fn rows(&self) -> Vec<Vec<Cell>> {
            self.values
                .iter()
                .enumerate()
                .map(|(i, v)| vec![i.into(), (*v).into()])
                .collect()
        }
    }

    #[test]
    fn floats_use_seventeen_digits() {
        assert_eq!(fmt_float(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_float(-2.0), "-2.0000000000000000e0");
        assert_eq!(fmt_float(f64::NAN), "NaN");
        let d = Demo {
            name: "x".into(),
            values: vec![1.0 / 3.0],
            missing: None,
        };
        assert_eq!(csv_string(&d), "index,value\n0,3.3333333333333331e-1\n");
    }

    #[test]
    fn empty_table_is_header_only() {
        let d = Demo {
            name: "x".into(),
            values: vec![],
            missing: None,
        };
        assert_eq!(csv_string(&d), "index,value\n");
    }

    #[test]
    fn json_round_trip_is_identity() {
        let d = Demo {
            name: "a,b".into(),
            values: vec![0.1, 1e-300, -7.25, 12345.678],
            missing: Some(f64::NAN),
        };
        let first = json_string(&d).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&first).unwrap();
        let second = json_string(&parsed).unwrap();
        assert_eq!(first, second);
        let back: Demo = serde_json::from_str(&first).unwrap();
        assert_eq!(back.values, d.values);
        assert!(back.missing.is_none());
    }

    #[test]
    fn emission_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let d = Demo {
            name: "x".into(),
            values: vec![0.3, 0.7],
            missing: None,
        };
        for fmt in [ReportFormat::Csv, ReportFormat::Json] {
            let a = dir.path().join("a");
            let b = dir.path().join("b");
            emit_report(&d, fmt, &a).unwrap();
            emit_report(&d, fmt, &b).unwrap();
            assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        }
    }

    #[test]
    fn text_cells_are_escaped() {
        assert_eq!(escape("plain"), "plain");
        assert_eq!(escape("a,\"b\""), "\"a,\"\"b\"\"\"");
    }

    #[test]
    fn verdict_algebra() {
        use Verdict::*;
        assert_eq!(Pass.combine(Inconclusive), Inconclusive);
        assert_eq!(Inconclusive.combine(Fail), Fail);
        assert_eq!(Pass.exit_code(), 0);
        assert_eq!(Fail.exit_code(), 1);
        assert_eq!(Inconclusive.exit_code(), 2);
    }
}
