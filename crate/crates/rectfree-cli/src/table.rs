//! Tabular output with a fixed column order, rendered as CSV or JSON.
//!
//! CSV floats use 17 significant digits (`{:.16e}`) so every cell parses back
//! to the exact `f64` that produced it. JSON rows are objects keyed by column
//! name; cells that could not be computed come out as empty CSV fields or
//! JSON `null`.

use std::path::Path;

use serde_json::{json, Map, Value};

/// One table cell. `Num` is reserved for finite floats; the constructor
/// downgrades non-finite values to `Null` because neither CSV nor JSON can
/// round-trip them.
#[derive(Clone, Debug)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Null,
}

impl Cell {
    pub fn num(x: f64) -> Self {
        if x.is_finite() {
            Cell::Num(x)
        } else {
            Cell::Null
        }
    }

    /// Missing value for a cell whose computation failed.
    pub fn opt(x: Option<f64>) -> Self {
        match x {
            Some(v) => Cell::num(v),
            None => Cell::Null,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Cell::Null)
    }

    fn to_csv(&self) -> String {
        match self {
            Cell::Num(x) => format!("{x:.16e}"),
            Cell::Int(k) => k.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Null => String::new(),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Num(x) => json!(x),
            Cell::Int(k) => json!(k),
            Cell::Text(s) => json!(s),
            Cell::Null => Value::Null,
        }
    }
}

pub struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: Vec<S>) -> Self {
        Table {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row does not match header");
        self.rows.push(row);
    }

    /// Number of rows containing at least one missing cell.
    pub fn incomplete_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.iter().any(Cell::is_null)).count()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::to_csv).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let mut obj = Map::new();
                for (name, cell) in self.columns.iter().zip(row) {
                    obj.insert(name.clone(), cell.to_json());
                }
                Value::Object(obj)
            })
            .collect();
        let mut text = serde_json::to_string_pretty(&rows).expect("table serialization");
        text.push('\n');
        text
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Render the table and send it to the output path, or stdout when no path
/// was given.
pub fn write_table(table: &Table, format: Format, output: Option<&Path>) -> Result<(), String> {
    let text = match format {
        Format::Csv => table.to_csv(),
        Format::Json => table.to_json(),
    };
    write_text(&text, output)
}

pub fn write_text(text: &str, output: Option<&Path>) -> Result<(), String> {
    match output {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| format!("writing {}: {e}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
