//! Typed tabular data model shared by every other module.
//!
//! A [`Table`] is columnar: one `Vec<Value>` per schema column. Nulls are
//! explicit [`Value::Null`] cells, never sentinel numbers.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }
}

/// One level of an ordinal column: the token as it appears in the data and
/// the integer used when the column is aggregated.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrdinalLevel {
    pub token: String,
    pub label: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bounds: Option<Bounds>,
    },
    Categorical {
        categories: Vec<String>,
    },
    /// Categories with an order; aggregations use the integer labels.
    Ordinal {
        levels: Vec<OrdinalLevel>,
    },
    /// Continuous column in which a few exact values (zero debt, say) behave
    /// like categories.
    Mixed {
        special_values: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bounds: Option<Bounds>,
    },
}

impl ColumnKind {
    /// Continuous and mixed columns hold reals.
    pub fn is_numeric(&self) -> bool {
        matches!(self, ColumnKind::Continuous { .. } | ColumnKind::Mixed { .. })
    }

    /// Categorical and ordinal columns hold tokens.
    pub fn is_discrete(&self) -> bool {
        !self.is_numeric()
    }

    pub fn bounds(&self) -> Option<Bounds> {
        match self {
            ColumnKind::Continuous { bounds } | ColumnKind::Mixed { bounds, .. } => *bounds,
            _ => None,
        }
    }

    /// Token domain of a discrete column, in declared order.
    pub fn tokens(&self) -> Option<Vec<&str>> {
        match self {
            ColumnKind::Categorical { categories } => {
                Some(categories.iter().map(String::as_str).collect())
            }
            ColumnKind::Ordinal { levels } => Some(levels.iter().map(|l| l.token.as_str()).collect()),
            _ => None,
        }
    }

    /// Position of `token` in the declared domain.
    pub fn token_index(&self, token: &str) -> Option<usize> {
        match self {
            ColumnKind::Categorical { categories } => categories.iter().position(|c| c == token),
            ColumnKind::Ordinal { levels } => levels.iter().position(|l| l.token == token),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ColumnKind::Continuous { .. } => "continuous",
            ColumnKind::Categorical { .. } => "categorical",
            ColumnKind::Ordinal { .. } => "ordinal",
            ColumnKind::Mixed { .. } => "mixed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default)]
    pub nullable: bool,
    /// Marks the classifier target column.
    #[serde(default)]
    pub target: bool,
}

impl ColumnSchema {
    pub fn continuous(name: &str) -> Self {
        Self::new(name, ColumnKind::Continuous { bounds: None })
    }

    pub fn categorical(name: &str, categories: &[&str]) -> Self {
        Self::new(
            name,
            ColumnKind::Categorical { categories: categories.iter().map(|c| c.to_string()).collect() },
        )
    }

    pub fn new(name: &str, kind: ColumnKind) -> Self {
        ColumnSchema { name: name.to_string(), kind, nullable: false, target: false }
    }

    pub fn nullable(mut self) -> Self {
        self.nullable = true;
        self
    }

    pub fn with_bounds(mut self, lo: f64, hi: f64) -> Self {
        match &mut self.kind {
            ColumnKind::Continuous { bounds } | ColumnKind::Mixed { bounds, .. } => {
                *bounds = Some(Bounds { lo, hi })
            }
            _ => {}
        }
        self
    }

    pub fn as_target(mut self) -> Self {
        self.target = true;
        self
    }

    fn check(&self) -> Result<(), ModelError> {
        let err = |reason: &str| ModelError::InvalidColumn {
            column: self.name.clone(),
            reason: reason.to_string(),
        };
        if let Some(b) = self.kind.bounds() {
            if !(b.lo.is_finite() && b.hi.is_finite() && b.lo < b.hi) {
                return Err(err("bounds must satisfy lo < hi"));
            }
        }
        match &self.kind {
            ColumnKind::Continuous { .. } => {}
            ColumnKind::Categorical { categories } => {
                if categories.is_empty() {
                    return Err(err("empty category set"));
                }
                if has_duplicates(categories.iter()) {
                    return Err(err("duplicate category"));
                }
            }
            ColumnKind::Ordinal { levels } => {
                if levels.is_empty() {
                    return Err(err("empty level set"));
                }
                if has_duplicates(levels.iter().map(|l| &l.token))
                    || has_duplicates(levels.iter().map(|l| l.label))
                {
                    return Err(err("duplicate ordinal level"));
                }
            }
            ColumnKind::Mixed { special_values, .. } => {
                if special_values.iter().any(|v| !v.is_finite()) {
                    return Err(err("special values must be finite"));
                }
                let mut sorted = special_values.clone();
                sorted.sort_by(f64::total_cmp);
                if sorted.windows(2).any(|w| w[0] == w[1]) {
                    return Err(err("duplicate special value"));
                }
            }
        }
        Ok(())
    }
}

fn has_duplicates<T: PartialEq>(items: impl Iterator<Item = T>) -> bool {
    let items: Vec<T> = items.collect();
    items.iter().enumerate().any(|(i, a)| items[..i].contains(a))
}

/// Ordered, validated set of column schemas.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema", into = "RawSchema")]
pub struct TableSchema {
    columns: Vec<ColumnSchema>,
}

#[derive(Serialize, Deserialize)]
struct RawSchema {
    columns: Vec<ColumnSchema>,
}

impl TryFrom<RawSchema> for TableSchema {
    type Error = ModelError;
    fn try_from(raw: RawSchema) -> Result<Self, ModelError> {
        TableSchema::new(raw.columns)
    }
}

impl From<TableSchema> for RawSchema {
    fn from(s: TableSchema) -> Self {
        RawSchema { columns: s.columns }
    }
}

impl TableSchema {
    pub fn new(columns: Vec<ColumnSchema>) -> Result<Self, ModelError> {
        for (i, c) in columns.iter().enumerate() {
            c.check()?;
            if columns[..i].iter().any(|o| o.name == c.name) {
                return Err(ModelError::DuplicateColumn(c.name.clone()));
            }
        }
        if columns.iter().filter(|c| c.target).count() > 1 {
            return Err(ModelError::MultipleTargets);
        }
        Ok(TableSchema { columns })
    }

    pub fn columns(&self) -> &[ColumnSchema] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&ColumnSchema> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn target_index(&self) -> Option<usize> {
        self.columns.iter().position(|c| c.target)
    }
}

/// A single cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Null,
    Real(f64),
    Token(String),
}

impl Value {
    pub fn token(s: &str) -> Self {
        Value::Token(s.to_string())
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn as_real(&self) -> Option<f64> {
        match self {
            Value::Real(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_token(&self) -> Option<&str> {
        match self {
            Value::Token(t) => Some(t),
            _ => None,
        }
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Real(x)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Token(s.to_string())
    }
}

impl<T: Into<Value>> From<Option<T>> for Value {
    fn from(v: Option<T>) -> Self {
        v.map_or(Value::Null, Into::into)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    schema: TableSchema,
    columns: Vec<Vec<Value>>,
    row_count: usize,
}

impl Table {
    /// Assembles a table from per-column cells. Only the shape is checked
    /// here; cell contents are checked by [`validate_table`].
    pub fn new(schema: TableSchema, columns: Vec<Vec<Value>>) -> Result<Self, ModelError> {
        if columns.len() != schema.len() {
            return Err(ModelError::ColumnCount { expected: schema.len(), found: columns.len() });
        }
        let row_count = columns.first().map_or(0, Vec::len);
        for (c, col) in schema.columns().iter().zip(&columns) {
            if col.len() != row_count {
                return Err(ModelError::RaggedColumn {
                    column: c.name.clone(),
                    expected: row_count,
                    found: col.len(),
                });
            }
        }
        Ok(Table { schema, columns, row_count })
    }

    pub fn from_rows(schema: TableSchema, rows: Vec<Vec<Value>>) -> Result<Self, ModelError> {
        let width = schema.len();
        let mut columns: Vec<Vec<Value>> = (0..width).map(|_| Vec::with_capacity(rows.len())).collect();
        for (r, row) in rows.into_iter().enumerate() {
            if row.len() != width {
                return Err(ModelError::RaggedRow { row: r, expected: width, found: row.len() });
            }
            for (col, v) in columns.iter_mut().zip(row) {
                col.push(v);
            }
        }
        let row_count = columns.first().map_or(0, Vec::len);
        Ok(Table { schema, columns, row_count })
    }

    pub fn empty(schema: TableSchema) -> Self {
        let columns = (0..schema.len()).map(|_| Vec::new()).collect();
        Table { schema, columns, row_count: 0 }
    }

    pub fn schema(&self) -> &TableSchema {
        &self.schema
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn columns(&self) -> &[Vec<Value>] {
        &self.columns
    }

    pub fn column(&self, index: usize) -> &[Value] {
        &self.columns[index]
    }

    pub fn column_by_name(&self, name: &str) -> Option<&[Value]> {
        self.schema.index_of(name).map(|i| self.columns[i].as_slice())
    }

    pub fn cell(&self, row: usize, column: usize) -> &Value {
        &self.columns[column][row]
    }

    pub fn row(&self, row: usize) -> Vec<Value> {
        self.columns.iter().map(|c| c[row].clone()).collect()
    }

    /// New table holding the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Table {
        let columns = self
            .columns
            .iter()
            .map(|col| rows.iter().map(|&r| col[r].clone()).collect())
            .collect();
        Table { schema: self.schema.clone(), columns, row_count: rows.len() }
    }

    /// Non-null reals of a column, in row order.
    pub fn reals(&self, column: usize) -> Vec<f64> {
        self.columns[column].iter().filter_map(Value::as_real).collect()
    }

    pub fn null_count(&self, column: usize) -> usize {
        self.columns[column].iter().filter(|v| v.is_null()).count()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationReason {
    Null,
    NotInDomain,
    WrongType,
    NonFinite,
    OutOfBounds,
    MissingColumn,
    Length,
}

impl fmt::Display for ViolationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ViolationReason::Null => "null",
            ViolationReason::NotInDomain => "not in domain",
            ViolationReason::WrongType => "wrong type",
            ViolationReason::NonFinite => "non-finite",
            ViolationReason::OutOfBounds => "out of bounds",
            ViolationReason::MissingColumn => "missing column",
            ViolationReason::Length => "length mismatch",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub column: String,
    /// `None` for column-level problems.
    pub row: Option<usize>,
    pub reason: ViolationReason,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Lists every way `table` fails to satisfy `schema`.
pub fn validate_table(schema: &TableSchema, table: &Table) -> ValidationReport {
    let mut violations = Vec::new();
    for (ci, col) in schema.columns().iter().enumerate() {
        let Some(cells) = table.columns.get(ci) else {
            violations.push(Violation { column: col.name.clone(), row: None, reason: ViolationReason::MissingColumn });
            continue;
        };
        if table.schema.columns().get(ci).map(|c| &c.name) != Some(&col.name) {
            violations.push(Violation { column: col.name.clone(), row: None, reason: ViolationReason::MissingColumn });
            continue;
        }
        if cells.len() != table.row_count {
            violations.push(Violation { column: col.name.clone(), row: None, reason: ViolationReason::Length });
        }
        for (r, cell) in cells.iter().enumerate() {
            if let Some(reason) = check_cell(col, cell) {
                violations.push(Violation { column: col.name.clone(), row: Some(r), reason });
            }
        }
    }
    ValidationReport { violations }
}

fn check_cell(col: &ColumnSchema, cell: &Value) -> Option<ViolationReason> {
    match (cell, &col.kind) {
        (Value::Null, _) => (!col.nullable).then_some(ViolationReason::Null),
        (Value::Real(x), ColumnKind::Continuous { bounds } | ColumnKind::Mixed { bounds, .. }) => {
            if !x.is_finite() {
                Some(ViolationReason::NonFinite)
            } else if bounds.is_some_and(|b| !b.contains(*x)) {
                Some(ViolationReason::OutOfBounds)
            } else {
                None
            }
        }
        (Value::Token(t), ColumnKind::Categorical { .. } | ColumnKind::Ordinal { .. }) => {
            col.kind.token_index(t).is_none().then_some(ViolationReason::NotInDomain)
        }
        _ => Some(ViolationReason::WrongType),
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("column `{column}`: {reason}")]
    InvalidColumn { column: String, reason: String },
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("at most one column may be marked as the target")]
    MultipleTargets,
    #[error("expected {expected} columns, found {found}")]
    ColumnCount { expected: usize, found: usize },
    #[error("column `{column}` has {found} cells, expected {expected}")]
    RaggedColumn { column: String, expected: usize, found: usize },
    #[error("row {row} has {found} fields, expected {expected}")]
    RaggedRow { row: usize, expected: usize, found: usize },
}
