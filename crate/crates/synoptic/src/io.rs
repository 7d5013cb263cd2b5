//! CSV tables and schema configuration.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use synoptic_core::model::ModelError;
use synoptic_core::{validate_table, Bounds, ColumnKind, ColumnSchema, OrdinalLevel, Table, TableSchema, Value};

/// Share of non-null cells a single real must reach for a column to be
/// inferred as mixed.
pub const DEFAULT_MIXED_THRESHOLD: f64 = 0.25;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("line {line}: expected {expected} fields, found {found}")]
    Ragged { line: u64, expected: usize, found: usize },
    #[error("line {line}, column {column}: cannot parse {value:?} as a number")]
    BadNumber { line: u64, column: String, value: String },
    #[error("schema: {0}")]
    Schema(String),
    #[error("table does not satisfy its schema: {0}")]
    Invalid(String),
    #[error("{path}: {message}")]
    Json { path: PathBuf, message: String },
    #[error("{0}")]
    Format(String),
}

impl From<ModelError> for IoError {
    fn from(e: ModelError) -> Self {
        IoError::Schema(e.to_string())
    }
}

pub(crate) fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File { path: path.to_path_buf(), source }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindName {
    Continuous,
    Categorical,
    Ordinal,
    Mixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnConfig {
    pub name: String,
    pub kind: KindName,
    /// Categories, or ordinal levels in order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
    /// Ordinal labels; defaults to `0, 1, ...`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub special_values: Option<Vec<f64>>,
    #[serde(default)]
    pub nullable: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub target: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemaConfig {
    pub columns: Vec<ColumnConfig>,
    #[serde(default)]
    pub null_token: String,
}

impl SchemaConfig {
    pub fn load(path: &Path) -> Result<Self, IoError> {
        let text = fs::read_to_string(path).map_err(file_err(path))?;
        serde_json::from_str(&text).map_err(|e| IoError::Json { path: path.to_path_buf(), message: e.to_string() })
    }

    pub fn from_schema(schema: &TableSchema, null_token: &str) -> Self {
        let columns = schema
            .columns()
            .iter()
            .map(|c| {
                let mut cfg = ColumnConfig {
                    name: c.name.clone(),
                    kind: KindName::Continuous,
                    categories: None,
                    labels: None,
                    bounds: c.kind.bounds().map(|b| [b.lo, b.hi]),
                    special_values: None,
                    nullable: c.nullable,
                    target: c.target,
                };
                match &c.kind {
                    ColumnKind::Continuous { .. } => {}
                    ColumnKind::Categorical { categories } => {
                        cfg.kind = KindName::Categorical;
                        cfg.categories = Some(categories.clone());
                    }
                    ColumnKind::Ordinal { levels } => {
                        cfg.kind = KindName::Ordinal;
                        cfg.categories = Some(levels.iter().map(|l| l.token.clone()).collect());
                        cfg.labels = Some(levels.iter().map(|l| l.label).collect());
                    }
                    ColumnKind::Mixed { special_values, .. } => {
                        cfg.kind = KindName::Mixed;
                        cfg.special_values = Some(special_values.clone());
                    }
                }
                cfg
            })
            .collect();
        SchemaConfig { columns, null_token: null_token.to_string() }
    }

    pub fn to_schema(&self) -> Result<TableSchema, IoError> {
        let mut columns = Vec::with_capacity(self.columns.len());
        for c in &self.columns {
            let bounds = c.bounds.map(|[lo, hi]| Bounds { lo, hi });
            let cats = || {
                c.categories.clone().ok_or_else(|| IoError::Schema(format!("column {} needs categories", c.name)))
            };
            let kind = match c.kind {
                KindName::Continuous => ColumnKind::Continuous { bounds },
                KindName::Mixed => ColumnKind::Mixed { special_values: c.special_values.clone().unwrap_or_default(), bounds },
                KindName::Categorical => ColumnKind::Categorical { categories: cats()? },
                KindName::Ordinal => {
                    let tokens = cats()?;
                    let labels = c.labels.clone().unwrap_or_else(|| (0..tokens.len() as i64).collect());
                    if labels.len() != tokens.len() {
                        return Err(IoError::Schema(format!("column {}: {} labels for {} levels", c.name, labels.len(), tokens.len())));
                    }
                    ColumnKind::Ordinal {
                        levels: tokens.into_iter().zip(labels).map(|(token, label)| OrdinalLevel { token, label }).collect(),
                    }
                }
            };
            columns.push(ColumnSchema { name: c.name.clone(), kind, nullable: c.nullable, target: c.target });
        }
        Ok(TableSchema::new(columns)?)
    }
}

/// Header plus raw cells.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn read_grid(reader: impl Read) -> Result<Grid, IoError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let csv_err = |e: csv::Error| IoError::Csv { line: e.position().map_or(0, |p| p.line()), message: e.to_string() };
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(IoError::Ragged { line, expected: header.len(), found: rec.len() });
        }
        rows.push(rec.iter().map(String::from).collect());
    }
    Ok(Grid { header, rows })
}

fn parse_real(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Continuous if every non-null cell is a real, mixed if additionally some
/// real holds at least `mixed_threshold` of the non-null cells, categorical
/// otherwise (categories sorted). All-null columns are continuous.
pub fn infer_schema(grid: &Grid, null_token: &str, mixed_threshold: f64) -> Result<TableSchema, IoError> {
    if grid.header.is_empty() {
        return Err(IoError::Format("empty grid".into()));
    }
    let mut columns = Vec::with_capacity(grid.header.len());
    for (i, name) in grid.header.iter().enumerate() {
        let cells: Vec<&str> = grid.rows.iter().map(|r| r[i].as_str()).filter(|c| *c != null_token).collect();
        let nullable = cells.len() < grid.rows.len();
        let reals: Option<Vec<f64>> = cells.iter().map(|c| parse_real(c)).collect();
        let kind = match reals {
            Some(values) => {
                let mut sorted = values.clone();
                sorted.sort_by(f64::total_cmp);
                let mut specials = Vec::new();
                let mut j = 0;
                while j < sorted.len() {
                    let run = sorted[j..].iter().take_while(|v| **v == sorted[j]).count();
                    if run as f64 >= mixed_threshold * sorted.len() as f64 {
                        specials.push(sorted[j]);
                    }
                    j += run;
                }
                if specials.is_empty() {
                    ColumnKind::Continuous { bounds: None }
                } else {
                    ColumnKind::Mixed { special_values: specials, bounds: None }
                }
            }
            None => {
                let mut cats: Vec<String> = cells.iter().map(|c| c.to_string()).collect();
                cats.sort();
                cats.dedup();
                ColumnKind::Categorical { categories: cats }
            }
        };
        let mut col = ColumnSchema::new(name, kind);
        col.nullable = nullable;
        columns.push(col);
    }
    Ok(TableSchema::new(columns)?)
}

/// Converts a grid to a table under `schema`, matching columns by header name.
pub fn grid_to_table(grid: &Grid, schema: &TableSchema, null_token: &str) -> Result<Table, IoError> {
    let mut positions = Vec::with_capacity(schema.len());
    for col in schema.columns() {
        let p = grid
            .header
            .iter()
            .position(|h| *h == col.name)
            .ok_or_else(|| IoError::Schema(format!("column {} missing from header", col.name)))?;
        positions.push(p);
    }
    let mut columns: Vec<Vec<Value>> = vec![Vec::with_capacity(grid.rows.len()); schema.len()];
    for (r, row) in grid.rows.iter().enumerate() {
        for (ci, col) in schema.columns().iter().enumerate() {
            let cell = &row[positions[ci]];
            let v = if *cell == null_token {
                Value::Null
            } else if col.kind.is_numeric() {
                Value::Real(parse_real(cell).ok_or_else(|| IoError::BadNumber {
                    line: r as u64 + 2,
                    column: col.name.clone(),
                    value: cell.clone(),
                })?)
            } else {
                Value::Token(cell.clone())
            };
            columns[ci].push(v);
        }
    }
    let table = Table::new(schema.clone(), columns)?;
    let report = validate_table(schema, &table);
    if let Some(v) = report.violations.first() {
        let at = v.row.map_or(String::new(), |r| format!(" row {}", r + 1));
        return Err(IoError::Invalid(format!(
            "{} violation(s), first: column {}{at}: {}",
            report.violations.len(),
            v.column,
            v.reason
        )));
    }
    Ok(table)
}

/// Reads a CSV table. Without a config the schema is inferred with the empty
/// string as null token.
pub fn read_csv(path: &Path, config: Option<&SchemaConfig>) -> Result<Table, IoError> {
    let file = fs::File::open(path).map_err(file_err(path))?;
    let grid = read_grid(std::io::BufReader::new(file))?;
    match config {
        Some(cfg) => grid_to_table(&grid, &cfg.to_schema()?, &cfg.null_token),
        None => grid_to_table(&grid, &infer_schema(&grid, "", DEFAULT_MIXED_THRESHOLD)?, ""),
    }
}

/// Shortest text that parses back to the same value.
pub fn format_real(x: f64) -> String {
    format!("{x}")
}

pub fn write_table(table: &Table, writer: impl Write, null_token: &str) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| IoError::Format(e.to_string());
    w.write_record(table.schema().columns().iter().map(|c| c.name.as_str())).map_err(io)?;
    for r in 0..table.row_count() {
        let cells: Vec<String> = (0..table.schema().len())
            .map(|c| match table.cell(r, c) {
                Value::Null => null_token.to_string(),
                Value::Real(x) => format_real(*x),
                Value::Token(t) => t.clone(),
            })
            .collect();
        w.write_record(&cells).map_err(io)?;
    }
    w.flush().map_err(|e| IoError::Format(e.to_string()))?;
    Ok(())
}

pub fn write_csv(table: &Table, path: &Path, null_token: &str) -> Result<(), IoError> {
    let file = fs::File::create(path).map_err(file_err(path))?;
    write_table(table, std::io::BufWriter::new(file), null_token)
}
