//! Self-describing tabular output: a metadata header followed by named tables,
//! rendered as CSV or JSON.
//!
//! Floats are written with 17 significant digits in both formats so that
//! outputs from different builds can be diffed textually.

use std::io::Write;

use serde::Serialize;
use serde_json::value::RawValue;

use crate::numerics::{tolerances, Tolerances};

pub const SCHEMA: &str = "conslab-output/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(i64::try_from(x).unwrap_or(i64::MAX))
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_owned())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

/// `{:.16e}`, i.e. 17 significant digits; negative zero prints as zero.
pub fn format_float(x: f64) -> String {
    if x == 0.0 {
        format!("{:.16e}", 0.0)
    } else if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".to_owned()
    } else if x > 0.0 {
        "inf".to_owned()
    } else {
        "-inf".to_owned()
    }
}

impl Cell {
    fn text(&self) -> String {
        match self {
            Cell::Float(x) => format_float(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Box<RawValue> {
        let raw = match self {
            Cell::Float(x) if x.is_finite() => format_float(*x),
            Cell::Float(_) => "null".to_owned(),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => serde_json::to_string(s).expect("string serializes"),
        };
        RawValue::from_string(raw).expect("valid JSON literal")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table {
            name: name.to_owned(),
            columns: columns.iter().map(|c| (*c).to_owned()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width for table {}", self.name);
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub schema: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: Option<u64>,
    pub prng: Option<&'static str>,
    pub tolerances: Tolerances,
    /// Canonical argument list that reproduces this output.
    pub config: Vec<String>,
    pub notes: Vec<String>,
}

impl Metadata {
    pub fn new(command: &str, config: Vec<String>) -> Self {
        Metadata {
            schema: SCHEMA,
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_owned(),
            seed: None,
            prng: None,
            tolerances: *tolerances(),
            config,
            notes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub metadata: Metadata,
    pub tables: Vec<Table>,
}

impl Document {
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.render_csv(),
            Format::Json => self.render_json(),
        }
    }

    fn render_csv(&self) -> String {
        let m = &self.metadata;
        let t = &m.tolerances;
        let mut out = String::new();
        let mut line = |k: &str, v: &str| {
            out.push_str("# ");
            out.push_str(k);
            out.push_str(": ");
            out.push_str(v);
            out.push('\n');
        };
        line("schema", m.schema);
        line("version", m.version);
        line("command", &m.command);
        line("seed", &m.seed.map_or_else(|| "none".to_owned(), |s| s.to_string()));
        line("prng", m.prng.unwrap_or("none"));
        line(
            "tolerances",
            &format!(
                "state={} operator={} cross_term={} empty_branch={} max_dim={}",
                format_float(t.state),
                format_float(t.operator),
                format_float(t.cross_term),
                format_float(t.empty_branch),
                t.max_dim
            ),
        );
        line("config", &m.config.join(" "));
        for n in &m.notes {
            line("note", n);
        }
        for table in &self.tables {
            out.push_str("\n## table: ");
            out.push_str(&table.name);
            out.push('\n');
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&table.columns).expect("in-memory write");
            for row in &table.rows {
                w.write_record(row.iter().map(Cell::text)).expect("in-memory write");
            }
            let bytes = w.into_inner().expect("in-memory flush");
            out.push_str(&String::from_utf8(bytes).expect("utf-8 cells"));
        }
        out
    }

    fn render_json(&self) -> String {
        #[derive(Serialize)]
        struct JsonTable<'a> {
            name: &'a str,
            columns: &'a [String],
            rows: Vec<Vec<Box<RawValue>>>,
        }
        #[derive(Serialize)]
        struct JsonDoc<'a> {
            metadata: &'a Metadata,
            tables: Vec<JsonTable<'a>>,
        }
        let doc = JsonDoc {
            metadata: &self.metadata,
            tables: self
                .tables
                .iter()
                .map(|t| JsonTable {
                    name: &t.name,
                    columns: &t.columns,
                    rows: t.rows.iter().map(|r| r.iter().map(Cell::json).collect()).collect(),
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("document serializes");
        s.push('\n');
        s
    }

    pub fn write_to(&self, format: Format, w: &mut dyn Write) -> std::io::Result<()> {
        w.write_all(self.render(format).as_bytes())
    }
}
