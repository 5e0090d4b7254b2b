//! Deterministic CSV and JSON output.
//!
//! Floats are written as `d.dddddddddddddddde±x` (17 significant digits), which
//! round-trips every finite `f64`. Field order follows declaration order.

use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::bandit::BanditTrace;
use crate::mle::MleResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Joins a vector into one CSV cell, `;`-separated.
pub fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(";")
}

/// A JSON formatter that delegates layout to an inner formatter and writes
/// every float with 17 significant digits.
struct Exact<F>(F);

impl<F: Formatter> Formatter for Exact<F> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(format!("{value:.16e}").as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }

    fn begin_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_array(writer)
    }

    fn end_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object(writer)
    }

    fn end_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object_value(writer)
    }
}

struct Compact;

impl Formatter for Compact {}

/// Pretty JSON with exact floats, newline-terminated.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Exact(PrettyFormatter::with_indent(b"  ")));
    value.serialize(&mut ser).expect("serializing to memory cannot fail");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

/// Single-line JSON with exact floats.
pub fn to_canonical_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Exact(Compact));
    value.serialize(&mut ser).expect("serializing to memory cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

/// A header plus string rows, written as CSV.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("cells are UTF-8")
    }

    pub fn from_csv_str(text: &str) -> Result<Self, csv::Error> {
        let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let header = r.headers()?.iter().map(String::from).collect();
        let rows =
            r.records().map(|rec| rec.map(|rec| rec.iter().map(String::from).collect())).collect::<Result<_, _>>()?;
        Ok(Self { header, rows })
    }
}

/// Something that can be written as either CSV or JSON.
pub trait Report: Serialize {
    fn table(&self) -> Table;
}

impl Report for BanditTrace {
    fn table(&self) -> Table {
        let mut t = Table::new(["round", "arm", "reward", "regret", "cumulative_regret", "estimate_error", "status"]);
        for r in &self.rounds {
            t.push(vec![
                r.round.to_string(),
                r.arm.to_string(),
                fmt_f64(r.reward),
                fmt_f64(r.regret),
                fmt_f64(r.cumulative_regret),
                fmt_opt(r.estimate_error),
                r.kind.as_str().to_string(),
            ]);
        }
        t
    }
}

impl Report for MleResult {
    fn table(&self) -> Table {
        let mut t = Table::new([
            "status",
            "iterations",
            "grad_norm",
            "theta_norm",
            "theta_hat",
            "certificate_direction",
            "certificate_margin",
        ]);
        t.push(vec![
            format!("{:?}", self.status),
            self.iterations.to_string(),
            fmt_f64(self.grad_norm),
            fmt_f64(self.theta_norm),
            self.theta_hat.as_deref().map(fmt_vec).unwrap_or_default(),
            self.certificate.as_ref().map(|c| fmt_vec(&c.direction)).unwrap_or_default(),
            fmt_opt(self.certificate.as_ref().map(|c| c.margin)),
        ]);
        t
    }
}

impl Report for Table {
    fn table(&self) -> Table {
        self.clone()
    }
}

impl Serialize for Table {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = s.serialize_seq(Some(self.rows.len()))?;
        for row in &self.rows {
            let obj: serde_json::Map<String, serde_json::Value> =
                self.header.iter().zip(row).map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone()))).collect();
            seq.serialize_element(&obj)?;
        }
        seq.end()
    }
}

/// Renders `report` in `format`.
pub fn render<R: Report + ?Sized>(report: &R, format: Format) -> String {
    match format {
        Format::Csv => report.table().to_csv_string(),
        Format::Json => to_json_string(report),
    }
}

/// Writes `report` to `path`; IO errors are returned unchanged.
pub fn emit_report<R: Report + ?Sized>(report: &R, format: Format, path: &Path) -> io::Result<()> {
    std::fs::write(path, render(report, format))
}

/// Writes any serializable value as pretty JSON.
pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> io::Result<()> {
    std::fs::write(path, to_json_string(value))
}
