//! Report files.
//!
//! Every run writes a JSON summary in one shared envelope and zero or more
//! CSV tables. Floating-point values are printed with 17 significant digits
//! (`{:.16e}`) in both formats, so every written number parses back to the
//! same `f64`. Non-finite values are written as `null` in JSON and as
//! `NaN`, `inf` or `-inf` in CSV.
//!
//! Envelope (`report.json`):
//!
//! ```json
//! {
//!   "schema": "nlerg-report/1",
//!   "command": "counterexample oscillation",
//!   "status": "pass",
//!   "findings": ["..."],
//!   "result": { }
//! }
//! ```
//!
//! `status` is `"pass"` or `"falsified"`; `findings` lists the failed
//! checks in plain text; `result` holds the command-specific payload.
//!
//! CSV tables start with a comment line `# nlerg-csv v1 <table>` followed
//! by a header row.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

pub const REPORT_SCHEMA: &str = "nlerg-report/1";
pub const CSV_VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Falsified,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report<T: Serialize> {
    pub schema: &'static str,
    pub command: String,
    pub status: Status,
    pub findings: Vec<String>,
    pub result: T,
}

impl<T: Serialize> Report<T> {
    pub fn new(command: impl Into<String>, findings: Vec<String>, result: T) -> Self {
        Self {
            schema: REPORT_SCHEMA,
            command: command.into(),
            status: if findings.is_empty() { Status::Pass } else { Status::Falsified },
            findings,
            result,
        }
    }
}

/// `{:.16e}`, or `NaN` / `inf` / `-inf`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

struct FixedDigits<'a>(PrettyFormatter<'a>);

macro_rules! forward {
    ($($name:ident($($arg:ident: $ty:ty),*);)*) => {
        $(fn $name<W: ?Sized + Write>(&mut self, w: &mut W $(, $arg: $ty)*) -> io::Result<()> {
            self.0.$name(w $(, $arg)*)
        })*
    };
}

impl Formatter for FixedDigits<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    forward! {
        begin_array();
        end_array();
        begin_array_value(first: bool);
        end_array_value();
        begin_object();
        end_object();
        begin_object_key(first: bool);
        begin_object_value();
        end_object_value();
    }
}

/// Pretty-printed JSON with fixed 17-digit floats.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedDigits(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> io::Result<()> {
    let text = to_json_string(value).map_err(io::Error::other)?;
    fs::write(path, text)
}

/// A CSV table with a versioned comment line.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_columns(name: impl Into<String>, columns: Vec<String>) -> Self {
        Self {
            name: name.into(),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn push_floats(&mut self, row: &[f64]) {
        self.push(row.iter().map(|x| fmt_f64(*x)).collect());
    }

    pub fn render(&self) -> String {
        let mut out = format!("# nlerg-csv {CSV_VERSION} {}\n{}\n", self.name, self.columns.join(","));
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, dir: &Path) -> io::Result<()> {
        fs::write(dir.join(format!("{}.csv", self.name)), self.render())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_keep_seventeen_digits_and_round_trip() {
        let v = vec![0.1, 1.0 / 3.0, -2.5e-300, 0.0, 6.02214076e23];
        let s = to_json_string(&v).unwrap();
        assert!(s.contains("1.0000000000000001e-1"), "{s}");
        let back: Vec<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
        assert_eq!(to_json_string(&f64::NAN).unwrap().trim(), "null");
    }

    #[test]
    fn report_status_follows_findings() {
        assert_eq!(Report::new("x", vec![], 1).status, Status::Pass);
        let r = Report::new("x", vec!["bad".into()], 1);
        assert_eq!(r.status, Status::Falsified);
        let s = to_json_string(&r).unwrap();
        assert!(s.contains("\"status\": \"falsified\""));
        assert!(s.contains(REPORT_SCHEMA));
    }

    #[test]
    fn csv_layout() {
        let mut t = CsvTable::new("rate", &["n", "measured"]);
        t.push(vec!["1".into(), fmt_f64(0.5)]);
        t.push_floats(&[2.0, f64::INFINITY]);
        assert_eq!(
            t.render(),
            "# nlerg-csv v1 rate\nn,measured\n1,5.0000000000000000e-1\n2.0000000000000000e0,inf\n"
        );
    }
}
