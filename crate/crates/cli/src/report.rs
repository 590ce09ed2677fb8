//! Tabular reports and their CSV / JSON encodings.
//!
//! Every report is a table with a fixed column list. The last column is
//! always `pass`. In CSV, floats use the shortest decimal string that parses
//! back to the same `f64`, booleans are `true`/`false` and a missing value is
//! an empty field. In JSON a report is
//! `{"check": .., "columns": [..], "rows": [{column: value, ..}, ..]}` with
//! `null` for missing values.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use crate::config::Format;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Str(String),
    Int(u64),
    Num(f64),
    Bool(bool),
    Missing,
}

impl Cell {
    pub fn csv_text(&self) -> String {
        match self {
            Cell::Str(s) => s.clone(),
            Cell::Int(i) => i.to_string(),
            Cell::Num(v) => format!("{v:?}"),
            Cell::Bool(b) => b.to_string(),
            Cell::Missing => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Str(s) => Value::String(s.clone()),
            Cell::Int(i) => json!(i),
            Cell::Num(v) => serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
            Cell::Bool(b) => Value::Bool(*b),
            Cell::Missing => Value::Null,
        }
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Str(s.to_string())
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i as u64)
    }
}

impl From<u64> for Cell {
    fn from(i: u64) -> Self {
        Cell::Int(i)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Bool(b)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Missing, Into::into)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub check: &'static str,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(check: &'static str, columns: Vec<String>) -> Self {
        debug_assert_eq!(columns.last().map(String::as_str), Some("pass"));
        Table {
            check,
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "{} row width", self.check);
        self.rows.push(row);
    }

    pub fn failures(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| r.last() != Some(&Cell::Bool(true)))
            .count()
    }

    pub fn file_name(&self, format: Format) -> String {
        format!("report_{}.{}", self.check, format.name())
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv_text))
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    pub fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                let mut m = Map::new();
                for (c, v) in self.columns.iter().zip(r) {
                    m.insert(c.clone(), v.json());
                }
                Value::Object(m)
            })
            .collect();
        json!({ "check": self.check, "columns": self.columns, "rows": rows })
    }

    pub fn write(&self, dir: &Path, format: Format) -> io::Result<PathBuf> {
        let path = dir.join(self.file_name(format));
        let body = match format {
            Format::Csv => self.to_csv(),
            Format::Json => {
                let mut s = serde_json::to_string_pretty(&self.to_json()).expect("json");
                s.push('\n');
                s
            }
        };
        fs::write(&path, body)?;
        Ok(path)
    }
}

/// Column label for a per-`α` quantity, e.g. `bound_theorem3[0.25]`.
pub fn indexed(base: &str, value: f64) -> String {
    format!("{base}[{value:?}]")
}
