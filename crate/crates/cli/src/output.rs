//! CSV tables with `#` metadata headers and the per-run JSON summary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{Map, Value};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::Int(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        Cell::Num(x.unwrap_or(f64::NAN))
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(x) => format!("{x:e}"),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(x) if x.is_finite() => Value::from(*x),
            Cell::Num(_) => Value::Null,
            Cell::Int(i) => Value::from(*i),
            Cell::Text(s) => Value::from(s.clone()),
        }
    }
}

/// One output table. Metadata lines are written as `# key = value`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    pub meta: Vec<(String, String)>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&'static str]) -> Self {
        Table {
            name: name.into(),
            columns: columns.to_vec(),
            rows: Vec::new(),
            meta: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width for {}", self.name);
        self.rows.push(row);
    }

    pub fn meta(&mut self, key: impl Into<String>, value: impl ToString) {
        self.meta.push((key.into(), value.to_string()));
    }

    pub fn to_csv(&self, command: &str, hash: &str) -> String {
        let mut out = String::new();
        writeln!(out, "# randcurv {command}").unwrap();
        writeln!(out, "# config_hash = {hash}").unwrap();
        for (k, v) in &self.meta {
            writeln!(out, "# {k} = {v}").unwrap();
        }
        writeln!(out, "{}", self.columns.join(",")).unwrap();
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            writeln!(out, "{}", cells.join(",")).unwrap();
        }
        out
    }

    pub fn json_rows(&self) -> Vec<Value> {
        self.rows
            .iter()
            .map(|row| {
                let mut m = Map::new();
                for (c, v) in self.columns.iter().zip(row) {
                    m.insert(c.to_string(), v.json());
                }
                Value::Object(m)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub command: String,
    pub config_hash: String,
    pub version: &'static str,
    pub timestamp: u64,
    pub seed: u64,
    pub workers: usize,
    pub artifacts: Vec<PathBuf>,
    pub constants: Map<String, Value>,
    pub warnings: Vec<String>,
    pub rows: Vec<Value>,
}

/// Everything a command produces before it is written out.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub tables: Vec<Table>,
    pub constants: Map<String, Value>,
    pub warnings: Vec<String>,
}

impl Outcome {
    pub fn constant(&mut self, key: &str, value: impl Into<Value>) {
        self.constants.insert(key.to_string(), value.into());
    }
}

/// Writes every table as `<name>.csv` and the run summary as
/// `summary.json` in `dir`.
pub fn write_outcome(
    dir: &Path,
    command: &str,
    hash: &str,
    seed: u64,
    workers: usize,
    outcome: &Outcome,
) -> Result<RunRecord> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let mut artifacts = Vec::new();
    let mut rows = Vec::new();
    for t in &outcome.tables {
        let path = dir.join(format!("{}.csv", t.name));
        std::fs::write(&path, t.to_csv(command, hash))
            .with_context(|| format!("cannot write {}", path.display()))?;
        artifacts.push(path);
        if outcome.tables.len() == 1 {
            rows = t.json_rows();
        } else {
            let mut m = Map::new();
            m.insert("table".into(), Value::from(t.name.clone()));
            m.insert("rows".into(), Value::from(t.json_rows()));
            rows.push(Value::Object(m));
        }
    }
    let record = RunRecord {
        command: command.to_string(),
        config_hash: hash.to_string(),
        version: env!("CARGO_PKG_VERSION"),
        timestamp: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        seed,
        workers,
        artifacts,
        constants: outcome.constants.clone(),
        warnings: outcome.warnings.clone(),
        rows,
    };
    let path = dir.join("summary.json");
    std::fs::write(&path, serde_json::to_string_pretty(&record)?)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut t = Table::new("p2", &["a", "hits", "note"]);
        t.meta("sigma_v", 1.0);
        t.push(vec![0.4.into(), 12u64.into(), "x".into()]);
        t.push(vec![f64::NAN.into(), 0u64.into(), "y".into()]);
        let csv = t.to_csv("p2", "abc");
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "# randcurv p2");
        assert_eq!(lines[1], "# config_hash = abc");
        assert_eq!(lines[2], "# sigma_v = 1");
        assert_eq!(lines[3], "a,hits,note");
        assert_eq!(lines[4], "4e-1,12,x");
        assert_eq!(lines[5], "NaN,0,y");
        assert_eq!(t.json_rows()[1]["a"], Value::Null);
    }
}
