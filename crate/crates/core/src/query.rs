//! Aggregate-SQL subset: parsing, binding, exact execution, approximate
//! execution over synopses and error reports.
//!
//! ```text
//! SELECT agg (, agg)* FROM ident
//!     [WHERE column op literal (AND column op literal)*]
//!     [GROUP BY column (, column)*]
//! ```

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::math::{cmp_f64, median_sorted};
use crate::model::{ColumnKind, ColumnSchema, Table, TableSchema, Value};
use crate::synopsis::{
    sketch_key, wavelet_reconstruct, ColumnHistogram, HistogramSynopsis, SketchSynopsis, Synopsis, WaveletTable,
};

/// Floor on the denominator of relative errors.
pub const RELATIVE_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QueryError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unsupported aggregate {name} at byte {offset}")]
    UnsupportedAggregate { name: String, offset: usize },
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("column {0} cannot be grouped: only categorical and ordinal columns can")]
    NotGroupable(String),
    #[error("{aggregate} needs a numeric or ordinal column, {column} is not")]
    NotNumeric { aggregate: String, column: String },
    #[error("type mismatch on column {column}: {detail}")]
    TypeMismatch { column: String, detail: String },
    #[error("{synopsis} synopsis cannot answer {detail}")]
    Unsupported { synopsis: &'static str, detail: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggFunc {
    Sum,
    Avg,
    Count,
    Min,
    Max,
}

impl AggFunc {
    pub fn name(self) -> &'static str {
        match self {
            AggFunc::Sum => "SUM",
            AggFunc::Avg => "AVG",
            AggFunc::Count => "COUNT",
            AggFunc::Min => "MIN",
            AggFunc::Max => "MAX",
        }
    }

    fn parse(name: &str) -> Option<AggFunc> {
        Some(match name.to_ascii_uppercase().as_str() {
            "SUM" => AggFunc::Sum,
            "AVG" => AggFunc::Avg,
            "COUNT" => AggFunc::Count,
            "MIN" => AggFunc::Min,
            "MAX" => AggFunc::Max,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub func: AggFunc,
    /// `None` for `*`.
    pub column: Option<String>,
}

impl fmt::Display for Aggregate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.func.name(), self.column.as_deref().unwrap_or("*"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl CmpOp {
    pub fn holds(self, ord: core::cmp::Ordering) -> bool {
        use core::cmp::Ordering::*;
        match self {
            CmpOp::Eq => ord == Equal,
            CmpOp::Ne => ord != Equal,
            CmpOp::Lt => ord == Less,
            CmpOp::Le => ord != Greater,
            CmpOp::Gt => ord == Greater,
            CmpOp::Ge => ord != Less,
        }
    }

    fn eval(self, a: f64, b: f64) -> bool {
        self.holds(cmp_f64(&a, &b))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Literal {
    Number(f64),
    Text(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub column: String,
    pub op: CmpOp,
    pub literal: Literal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryAst {
    pub aggregates: Vec<Aggregate>,
    /// Informational; queries run against whatever table or synopsis is given.
    pub source: String,
    /// Conjunction.
    pub predicates: Vec<Predicate>,
    pub group_by: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Quoted(String),
    Number(f64),
    Str(String),
    LParen,
    RParen,
    Comma,
    Star,
    Semi,
    Op(CmpOp),
}

fn syntax(offset: usize, message: impl Into<String>) -> QueryError {
    QueryError::Syntax { offset, message: message.into() }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, QueryError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'(' => out.push((Tok::LParen, i)),
            b')' => out.push((Tok::RParen, i)),
            b',' => out.push((Tok::Comma, i)),
            b'*' => out.push((Tok::Star, i)),
            b';' => out.push((Tok::Semi, i)),
            b'=' => out.push((Tok::Op(CmpOp::Eq), i)),
            b'!' | b'<' | b'>' => {
                let next = bytes.get(i + 1).copied();
                let (op, len) = match (c, next) {
                    (b'!', Some(b'=')) => (CmpOp::Ne, 2),
                    (b'<', Some(b'>')) => (CmpOp::Ne, 2),
                    (b'<', Some(b'=')) => (CmpOp::Le, 2),
                    (b'>', Some(b'=')) => (CmpOp::Ge, 2),
                    (b'<', _) => (CmpOp::Lt, 1),
                    (b'>', _) => (CmpOp::Gt, 1),
                    _ => return Err(syntax(i, "expected != after !")),
                };
                out.push((Tok::Op(op), i));
                i += len;
                continue;
            }
            b'\'' | b'"' => {
                let mut s = String::new();
                i += 1;
                loop {
                    let Some(ch) = text[i..].chars().next() else {
                        return Err(syntax(start, "unterminated quote"));
                    };
                    i += ch.len_utf8();
                    if ch as u32 == c as u32 {
                        if bytes.get(i) == Some(&c) {
                            s.push(ch);
                            i += 1;
                        } else {
                            break;
                        }
                    } else {
                        s.push(ch);
                    }
                }
                out.push((if c == b'\'' { Tok::Str(s) } else { Tok::Quoted(s) }, start));
                continue;
            }
            b'0'..=b'9' | b'-' | b'.' => {
                i += 1;
                while i < bytes.len() {
                    let d = bytes[i];
                    let exp_sign = (d == b'-' || d == b'+') && matches!(bytes[i - 1], b'e' | b'E');
                    if d.is_ascii_digit() || d == b'.' || d == b'e' || d == b'E' || exp_sign {
                        i += 1;
                    } else {
                        break;
                    }
                }
                let lit = &text[start..i];
                let v: f64 = lit.parse().map_err(|_| syntax(start, format!("bad number {lit}")))?;
                out.push((Tok::Number(v), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(text[start..i].to_string()), start));
                continue;
            }
            _ => {
                let ch = text[i..].chars().next().unwrap_or('?');
                return Err(syntax(i, format!("unexpected character {ch:?}")));
            }
        }
        i += 1;
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |t| t.1)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.0.clone());
        self.pos += 1;
        t
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s.eq_ignore_ascii_case(kw))
    }

    fn keyword(&mut self, kw: &str) -> Result<(), QueryError> {
        if self.is_keyword(kw) {
            self.pos += 1;
            Ok(())
        } else {
            Err(syntax(self.offset(), format!("expected {kw}")))
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), QueryError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(syntax(self.offset(), format!("expected {what}")))
        }
    }

    fn ident(&mut self) -> Result<String, QueryError> {
        let at = self.offset();
        match self.next() {
            Some(Tok::Ident(s)) | Some(Tok::Quoted(s)) => Ok(s),
            _ => Err(syntax(at, "expected identifier")),
        }
    }

    fn aggregate(&mut self) -> Result<Aggregate, QueryError> {
        let at = self.offset();
        let name = self.ident()?;
        if self.peek() != Some(&Tok::LParen) {
            return Err(syntax(self.offset(), "expected ( after aggregate name"));
        }
        let func = AggFunc::parse(&name).ok_or(QueryError::UnsupportedAggregate { name, offset: at })?;
        self.pos += 1;
        let column = if self.peek() == Some(&Tok::Star) {
            if func != AggFunc::Count {
                return Err(syntax(self.offset(), "* is only allowed in COUNT"));
            }
            self.pos += 1;
            None
        } else {
            Some(self.ident()?)
        };
        self.expect(Tok::RParen, ")")?;
        Ok(Aggregate { func, column })
    }

    fn predicate(&mut self) -> Result<Predicate, QueryError> {
        let column = self.ident()?;
        let at = self.offset();
        let op = match self.next() {
            Some(Tok::Op(op)) => op,
            _ => return Err(syntax(at, "expected comparison operator")),
        };
        let at = self.offset();
        let literal = match self.next() {
            Some(Tok::Number(v)) => Literal::Number(v),
            Some(Tok::Str(s)) => Literal::Text(s),
            _ => return Err(syntax(at, "expected literal")),
        };
        Ok(Predicate { column, op, literal })
    }
}

pub fn parse_query(text: &str) -> Result<QueryAst, QueryError> {
    let mut p = Parser { toks: lex(text)?, pos: 0, end: text.len() };
    p.keyword("SELECT")?;
    let mut aggregates = vec![p.aggregate()?];
    while p.peek() == Some(&Tok::Comma) {
        p.pos += 1;
        aggregates.push(p.aggregate()?);
    }
    p.keyword("FROM")?;
    let source = p.ident()?;
    let mut predicates = Vec::new();
    if p.is_keyword("WHERE") {
        p.pos += 1;
        predicates.push(p.predicate()?);
        while p.is_keyword("AND") {
            p.pos += 1;
            predicates.push(p.predicate()?);
        }
    }
    let mut group_by = Vec::new();
    if p.is_keyword("GROUP") {
        p.pos += 1;
        p.keyword("BY")?;
        group_by.push(p.ident()?);
        while p.peek() == Some(&Tok::Comma) {
            p.pos += 1;
            group_by.push(p.ident()?);
        }
    }
    if p.peek() == Some(&Tok::Semi) {
        p.pos += 1;
    }
    if p.peek().is_some() {
        return Err(syntax(p.offset(), "unexpected trailing input"));
    }
    Ok(QueryAst { aggregates, source, predicates, group_by })
}

/// Predicate resolved against a column kind.
#[derive(Clone, Debug, PartialEq)]
enum Test {
    /// Numeric comparison on reals or ordinal labels.
    Number(CmpOp, f64),
    /// Token (in)equality on categorical columns.
    Token { equal: bool, token: String },
}

#[derive(Clone, Debug, PartialEq)]
struct BoundPredicate {
    column: usize,
    test: Test,
}

/// Query resolved against a schema.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundQuery {
    ast: QueryAst,
    aggregates: Vec<(AggFunc, Option<usize>)>,
    predicates: Vec<BoundPredicate>,
    group_by: Vec<usize>,
}

impl BoundQuery {
    pub fn ast(&self) -> &QueryAst {
        &self.ast
    }
}

fn ordinal_label(kind: &ColumnKind, token: &str) -> Option<f64> {
    match kind {
        ColumnKind::Ordinal { levels } => levels.iter().find(|l| l.token == token).map(|l| l.label as f64),
        _ => None,
    }
}

/// Numeric view of a cell: reals as-is, ordinal tokens as their labels.
fn numeric(kind: &ColumnKind, v: &Value) -> Option<f64> {
    match v {
        Value::Real(x) => Some(*x),
        Value::Token(t) => ordinal_label(kind, t),
        Value::Null => None,
    }
}

fn numeric_capable(kind: &ColumnKind) -> bool {
    kind.is_numeric() || matches!(kind, ColumnKind::Ordinal { .. })
}

pub fn bind(ast: &QueryAst, schema: &TableSchema) -> Result<BoundQuery, QueryError> {
    let find = |name: &str| schema.index_of(name).ok_or_else(|| QueryError::UnknownColumn(name.to_string()));
    let kind = |i: usize| &schema.columns()[i].kind;
    let mut aggregates = Vec::new();
    for a in &ast.aggregates {
        let col = a.column.as_deref().map(find).transpose()?;
        if let Some(c) = col {
            if a.func != AggFunc::Count && !numeric_capable(kind(c)) {
                return Err(QueryError::NotNumeric { aggregate: a.func.name().to_string(), column: a.column.clone().unwrap() });
            }
        }
        aggregates.push((a.func, col));
    }
    let mut predicates = Vec::new();
    for p in &ast.predicates {
        let c = find(&p.column)?;
        let mismatch = |detail: &str| QueryError::TypeMismatch { column: p.column.clone(), detail: detail.to_string() };
        let test = match (kind(c), &p.literal) {
            (k, Literal::Number(v)) if numeric_capable(k) => Test::Number(p.op, *v),
            (k @ ColumnKind::Ordinal { .. }, Literal::Text(t)) => {
                Test::Number(p.op, ordinal_label(k, t).ok_or_else(|| mismatch("unknown ordinal level"))?)
            }
            (ColumnKind::Categorical { .. }, Literal::Text(t)) => match p.op {
                CmpOp::Eq => Test::Token { equal: true, token: t.clone() },
                CmpOp::Ne => Test::Token { equal: false, token: t.clone() },
                _ => return Err(mismatch("categorical columns support only = and !=")),
            },
            (ColumnKind::Categorical { .. }, Literal::Number(_)) => return Err(mismatch("number compared with a categorical column")),
            _ => return Err(mismatch("text compared with a numeric column")),
        };
        predicates.push(BoundPredicate { column: c, test });
    }
    let mut group_by = Vec::new();
    for g in &ast.group_by {
        let c = find(g)?;
        if !kind(c).is_discrete() {
            return Err(QueryError::NotGroupable(g.clone()));
        }
        group_by.push(c);
    }
    Ok(BoundQuery { ast: ast.clone(), aggregates, predicates, group_by })
}

fn passes(test: &Test, kind: &ColumnKind, v: &Value) -> bool {
    match test {
        Test::Number(op, lit) => numeric(kind, v).is_some_and(|x| op.eval(x, *lit)),
        Test::Token { equal, token } => v.as_token().is_some_and(|t| (t == token) == *equal),
    }
}

/// Group key; `None` marks a null group value.
pub type GroupKey = Vec<Option<String>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub key: GroupKey,
    /// `None` where the aggregate has no input (for example AVG of nothing).
    pub values: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub group_columns: Vec<String>,
    pub aggregates: Vec<String>,
    /// Sorted by key.
    pub rows: Vec<ResultRow>,
}

impl QueryResult {
    pub fn get(&self, key: &[Option<String>]) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.key == key)
    }

    /// First aggregate of the ungrouped row.
    pub fn scalar(&self) -> Option<f64> {
        self.rows.first().and_then(|r| r.values.first().copied().flatten())
    }
}

#[derive(Clone, Debug, Default)]
struct Acc {
    rows: f64,
    count: f64,
    sum: f64,
    min: Option<f64>,
    max: Option<f64>,
}

impl Acc {
    fn push(&mut self, x: f64) {
        self.count += 1.0;
        self.sum += x;
        self.min = Some(self.min.map_or(x, |m| m.min(x)));
        self.max = Some(self.max.map_or(x, |m| m.max(x)));
    }

    fn finish(&self, func: AggFunc, star: bool) -> Option<f64> {
        match func {
            AggFunc::Count if star => Some(self.rows),
            AggFunc::Count => Some(self.count),
            AggFunc::Sum => (self.count > 0.0).then_some(self.sum),
            AggFunc::Avg => (self.count > 0.0).then(|| self.sum / self.count),
            AggFunc::Min => self.min,
            AggFunc::Max => self.max,
        }
    }
}

fn result_shell(q: &BoundQuery) -> QueryResult {
    QueryResult {
        group_columns: q.ast.group_by.clone(),
        aggregates: q.ast.aggregates.iter().map(|a| a.to_string()).collect(),
        rows: Vec::new(),
    }
}

fn run_bound(table: &Table, q: &BoundQuery) -> QueryResult {
    let schema = table.schema().columns();
    let mut groups: BTreeMap<GroupKey, Vec<Acc>> = BTreeMap::new();
    if q.group_by.is_empty() {
        groups.insert(Vec::new(), vec![Acc::default(); q.aggregates.len()]);
    }
    for r in 0..table.row_count() {
        if !q.predicates.iter().all(|p| passes(&p.test, &schema[p.column].kind, table.cell(r, p.column))) {
            continue;
        }
        let key: GroupKey = q.group_by.iter().map(|&g| table.cell(r, g).as_token().map(String::from)).collect();
        let accs = groups.entry(key).or_insert_with(|| vec![Acc::default(); q.aggregates.len()]);
        for (acc, &(func, col)) in accs.iter_mut().zip(&q.aggregates) {
            acc.rows += 1.0;
            if let Some(c) = col {
                let v = table.cell(r, c);
                if func == AggFunc::Count {
                    if !v.is_null() {
                        acc.count += 1.0;
                    }
                } else if let Some(x) = numeric(&schema[c].kind, v) {
                    acc.push(x);
                }
            }
        }
    }
    let mut out = result_shell(q);
    for (key, accs) in groups {
        let values = accs.iter().zip(&q.aggregates).map(|(a, &(f, c))| a.finish(f, c.is_none())).collect();
        out.rows.push(ResultRow { key, values });
    }
    out
}

/// Ground truth. Nulls are skipped by SUM, AVG, MIN, MAX and COUNT(col) but
/// counted by COUNT(*); groups with no rows are absent.
pub fn execute_exact(table: &Table, ast: &QueryAst) -> Result<QueryResult, QueryError> {
    let q = bind(ast, table.schema())?;
    Ok(run_bound(table, &q))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reliability {
    Estimated,
    Unreliable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxResult {
    pub result: QueryResult,
    /// Per row, per aggregate.
    pub flags: Vec<Vec<Reliability>>,
    pub provenance: String,
}

fn flag(q: &QueryAst, result: QueryResult, extremes_unreliable: bool, provenance: String) -> ApproxResult {
    let row_flags: Vec<Reliability> = q
        .aggregates
        .iter()
        .map(|a| match a.func {
            AggFunc::Min | AggFunc::Max if extremes_unreliable => Reliability::Unreliable,
            _ => Reliability::Estimated,
        })
        .collect();
    ApproxResult { flags: vec![row_flags; result.rows.len()], result, provenance }
}

fn scaled(table: &Table, ast: &QueryAst, scale: f64) -> Result<QueryResult, QueryError> {
    let mut r = execute_exact(table, ast)?;
    for row in &mut r.rows {
        for (v, a) in row.values.iter_mut().zip(&ast.aggregates) {
            if matches!(a.func, AggFunc::Count | AggFunc::Sum) {
                *v = v.map(|x| x * scale);
            }
        }
    }
    Ok(r)
}

pub fn execute_approx(synopsis: &Synopsis, ast: &QueryAst) -> Result<ApproxResult, QueryError> {
    match synopsis {
        Synopsis::Sample(s) => {
            let r = scaled(&s.rows, ast, s.scale())?;
            Ok(flag(ast, r, true, format!("sample k={} N={}", s.sample_size(), s.population)))
        }
        Synopsis::Generated(g) => {
            let n = g.table.row_count();
            if n == 0 {
                return Err(QueryError::Unsupported { synopsis: "generated", detail: "queries on an empty table".into() });
            }
            let r = scaled(&g.table, ast, g.population as f64 / n as f64)?;
            Ok(flag(ast, r, false, format!("generated n={} N={}", n, g.population)))
        }
        Synopsis::Histogram(h) => {
            let r = histogram_query(h, ast)?;
            Ok(flag(ast, r, true, format!("histogram K={} N={}", h.buckets, h.rows)))
        }
        Synopsis::Wavelet(w) => {
            let r = wavelet_query(w, ast)?;
            Ok(flag(ast, r, false, format!("wavelet N={}", w.rows)))
        }
        Synopsis::Sketch(s) => {
            let r = sketch_query(s, ast)?;
            Ok(flag(ast, r, false, format!("sketch w={} d={} column={}", s.width, s.depth, s.column)))
        }
    }
}

/// Bin-level view of one histogram column restricted by predicates.
struct Restriction {
    /// Fraction of each bin that satisfies the predicates.
    fractions: Vec<f64>,
    /// Satisfying interval inside each numeric bucket.
    spans: Vec<(f64, f64)>,
}

/// Satisfying sub-interval of `[l, u]` under the uniform assumption, with its
/// fraction of the bucket.
fn bucket_overlap(l: f64, u: f64, tests: &[&Test]) -> (f64, (f64, f64)) {
    if l == u {
        let ok = tests.iter().all(|t| matches!(t, Test::Number(op, v) if op.eval(l, *v)));
        return (if ok { 1.0 } else { 0.0 }, (l, u));
    }
    let (mut lo, mut hi) = (l, u);
    for t in tests {
        if let Test::Number(op, v) = t {
            match op {
                CmpOp::Lt | CmpOp::Le => hi = hi.min(*v),
                CmpOp::Gt | CmpOp::Ge => lo = lo.max(*v),
                CmpOp::Eq => {
                    lo = lo.max(*v);
                    hi = hi.min(*v);
                }
                // A single point has no mass inside a bucket of positive width.
                CmpOp::Ne => {}
            }
        }
    }
    if hi <= lo {
        (0.0, (lo, lo))
    } else {
        ((hi - lo) / (u - l), (lo, hi))
    }
}

fn restrict(h: &ColumnHistogram, kind: &ColumnKind, tests: &[&Test]) -> Restriction {
    match h {
        ColumnHistogram::Numeric { counts, .. } => {
            let (fractions, spans) = (0..counts.len())
                .map(|b| {
                    let (l, u) = h.bucket_edges(b);
                    bucket_overlap(l, u, tests)
                })
                .unzip();
            Restriction { fractions, spans }
        }
        ColumnHistogram::Discrete { tokens, .. } => {
            let fractions = tokens
                .iter()
                .map(|t| {
                    let v = Value::Token(t.clone());
                    if tests.iter().all(|test| passes(test, kind, &v)) { 1.0 } else { 0.0 }
                })
                .collect();
            Restriction { fractions, spans: Vec::new() }
        }
    }
}

fn bin_counts(h: &ColumnHistogram) -> &[u64] {
    match h {
        ColumnHistogram::Numeric { counts, .. } | ColumnHistogram::Discrete { counts, .. } => counts,
    }
}

/// Predicates and aggregation by bucket intersection, uniform within each
/// bucket and independent across columns. Group keys come from the stored
/// category counts.
fn histogram_query(h: &HistogramSynopsis, ast: &QueryAst) -> Result<QueryResult, QueryError> {
    let q = bind(ast, &h.schema)?;
    let schema = h.schema.columns();
    let rows = h.rows as f64;
    let mut out = result_shell(&q);
    if h.rows == 0 {
        return Ok(out);
    }
    let mut tests: BTreeMap<usize, Vec<Test>> = BTreeMap::new();
    for p in &q.predicates {
        tests.entry(p.column).or_default().push(p.test.clone());
    }
    // Candidate group keys: every combination of stored categories.
    let mut combos: Vec<Vec<(usize, usize)>> = vec![Vec::new()];
    for &g in &q.group_by {
        let n = bin_counts(&h.columns[g]).len();
        combos = combos.into_iter().flat_map(|c| (0..n).map(move |j| {
            let mut c = c.clone();
            c.push((g, j));
            c
        })).collect();
    }
    for combo in combos {
        let mut constrained: BTreeMap<usize, Restriction> = BTreeMap::new();
        let mut cols: BTreeSet<usize> = tests.keys().copied().collect();
        cols.extend(combo.iter().map(|&(g, _)| g));
        for c in cols {
            let ts: Vec<&Test> = tests.get(&c).map(|v| v.iter().collect()).unwrap_or_default();
            let mut r = restrict(&h.columns[c], &schema[c].kind, &ts);
            if let Some(&(_, j)) = combo.iter().find(|&&(g, _)| g == c) {
                for (i, f) in r.fractions.iter_mut().enumerate() {
                    if i != j {
                        *f = 0.0;
                    }
                }
            }
            constrained.insert(c, r);
        }
        let selectivity = |c: usize| -> f64 {
            let r = &constrained[&c];
            bin_counts(&h.columns[c]).iter().zip(&r.fractions).map(|(&n, f)| n as f64 * f).sum::<f64>() / rows
        };
        let others = |skip: Option<usize>| -> f64 {
            constrained.keys().filter(|&&c| Some(c) != skip).map(|&c| selectivity(c)).product()
        };
        let count_star = rows * others(None);
        if !q.group_by.is_empty() && count_star <= 0.0 {
            continue;
        }
        let mut values = Vec::new();
        for &(func, col) in &q.aggregates {
            let Some(a) = col else {
                values.push(Some(count_star));
                continue;
            };
            let factor = others(Some(a));
            let hist = &h.columns[a];
            let counts = bin_counts(hist);
            let full: Vec<f64>;
            let fractions = match constrained.get(&a) {
                Some(r) => &r.fractions,
                None => {
                    full = vec![1.0; counts.len()];
                    &full
                }
            };
            let mut cnt = 0.0;
            let mut sum = 0.0;
            let mut lo: Option<f64> = None;
            let mut hi: Option<f64> = None;
            for (b, (&n, &f)) in counts.iter().zip(fractions).enumerate() {
                let m = n as f64 * f;
                if m <= 0.0 {
                    continue;
                }
                let (l, u, s) = match hist {
                    ColumnHistogram::Numeric { sums, .. } => {
                        let (l, u) = constrained.get(&a).map_or_else(|| hist.bucket_edges(b), |r| r.spans[b]);
                        let s = if f >= 1.0 { sums[b] } else { m * (l + u) / 2.0 };
                        (l, u, s)
                    }
                    ColumnHistogram::Discrete { tokens, .. } => {
                        let x = ordinal_label(&schema[a].kind, &tokens[b]).unwrap_or(f64::NAN);
                        (x, x, m * x)
                    }
                };
                cnt += m;
                sum += s;
                lo = Some(lo.map_or(l, |v| v.min(l)));
                hi = Some(hi.map_or(u, |v| v.max(u)));
            }
            let cnt = cnt * factor;
            let sum = sum * factor;
            let present = cnt > 0.0;
            values.push(match func {
                AggFunc::Count => Some(cnt),
                AggFunc::Sum => present.then_some(sum),
                AggFunc::Avg => present.then(|| sum / cnt),
                AggFunc::Min => lo.filter(|_| present),
                AggFunc::Max => hi.filter(|_| present),
            });
        }
        let key = combo
            .iter()
            .map(|&(g, j)| match &h.columns[g] {
                ColumnHistogram::Discrete { tokens, .. } => Some(tokens[j].clone()),
                ColumnHistogram::Numeric { .. } => None,
            })
            .collect();
        out.rows.push(ResultRow { key, values });
    }
    out.rows.sort_by(|a, b| a.key.cmp(&b.key));
    Ok(out)
}

fn referenced_columns(ast: &QueryAst) -> BTreeSet<String> {
    let mut cols: BTreeSet<String> = ast.aggregates.iter().filter_map(|a| a.column.clone()).collect();
    cols.extend(ast.predicates.iter().map(|p| p.column.clone()));
    cols.extend(ast.group_by.iter().cloned());
    cols
}

/// Reconstructs the referenced numeric columns and aggregates over them.
/// Rows are aligned by position among non-null values, so all referenced
/// columns must share one length.
fn wavelet_query(w: &WaveletTable, ast: &QueryAst) -> Result<QueryResult, QueryError> {
    let q = bind(ast, &w.schema)?;
    let unsupported = |detail: String| QueryError::Unsupported { synopsis: "wavelet", detail };
    if !ast.group_by.is_empty() {
        return Err(unsupported("GROUP BY".into()));
    }
    let names = referenced_columns(ast);
    if names.is_empty() {
        let mut out = result_shell(&q);
        out.rows.push(ResultRow { key: Vec::new(), values: vec![Some(w.rows as f64)] });
        return Ok(out);
    }
    let mut schema_cols = Vec::new();
    let mut data = Vec::new();
    for name in &names {
        let i = w.schema.index_of(name).ok_or_else(|| QueryError::UnknownColumn(name.clone()))?;
        let col = w.columns[i].as_ref().ok_or_else(|| unsupported(format!("column {name}, which has no coefficients")))?;
        schema_cols.push(ColumnSchema::continuous(name));
        data.push(wavelet_reconstruct(col).into_iter().map(Value::Real).collect::<Vec<_>>());
    }
    if data.windows(2).any(|p| p[0].len() != p[1].len()) {
        return Err(unsupported("columns with different null counts in one query".into()));
    }
    let schema = TableSchema::new(schema_cols).map_err(|e| unsupported(e.to_string()))?;
    let table = Table::new(schema, data).map_err(|e| unsupported(e.to_string()))?;
    execute_exact(&table, ast)
}

/// COUNT(*) or COUNT(column) with one equality predicate on the sketched
/// column.
fn sketch_query(s: &SketchSynopsis, ast: &QueryAst) -> Result<QueryResult, QueryError> {
    let unsupported = |detail: String| QueryError::Unsupported { synopsis: "sketch", detail };
    for a in &ast.aggregates {
        if a.func != AggFunc::Count {
            return Err(unsupported(format!("aggregate {a}")));
        }
        if let Some(c) = &a.column {
            if *c != s.column {
                return Err(unsupported(format!("aggregate {a} on a column other than {}", s.column)));
            }
        }
    }
    if !ast.group_by.is_empty() {
        return Err(unsupported("GROUP BY".into()));
    }
    let [p] = ast.predicates.as_slice() else {
        return Err(unsupported("anything but a single equality predicate".into()));
    };
    if p.column != s.column || p.op != CmpOp::Eq {
        return Err(unsupported(format!("predicate on {} other than equality on {}", p.column, s.column)));
    }
    let key = match &p.literal {
        Literal::Number(x) => sketch_key(&Value::Real(*x)),
        Literal::Text(t) => Some(t.clone()),
    }
    .unwrap_or_default();
    let estimate = s.query(&key) as f64;
    Ok(QueryResult {
        group_columns: Vec::new(),
        aggregates: ast.aggregates.iter().map(|a| a.to_string()).collect(),
        rows: vec![ResultRow { key: Vec::new(), values: vec![Some(estimate); ast.aggregates.len()] }],
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellError {
    pub key: GroupKey,
    pub aggregate: String,
    pub exact: Option<f64>,
    pub approx: Option<f64>,
    pub relative_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub cells: Vec<CellError>,
    pub mean: f64,
    pub median: f64,
    pub max: f64,
    /// Groups in the exact answer only.
    pub missing_groups: Vec<GroupKey>,
    /// Groups in the approximate answer only.
    pub spurious_groups: Vec<GroupKey>,
    /// Cells where exactly one side is undefined; excluded from the summary.
    pub undefined_cells: usize,
}

pub fn relative_error(exact: f64, approx: f64) -> f64 {
    (approx - exact).abs() / exact.abs().max(RELATIVE_EPSILON)
}

/// Cell-by-cell comparison of two answers to the same query.
pub fn compare_results(exact: &QueryResult, approx: &QueryResult) -> ErrorReport {
    let mut cells = Vec::new();
    let mut missing_groups = Vec::new();
    let mut undefined_cells = 0;
    for row in &exact.rows {
        let Some(other) = approx.get(&row.key) else {
            missing_groups.push(row.key.clone());
            continue;
        };
        for (i, (e, a)) in row.values.iter().zip(&other.values).enumerate() {
            let err = match (e, a) {
                (Some(e), Some(a)) => relative_error(*e, *a),
                (None, None) => 0.0,
                _ => {
                    undefined_cells += 1;
                    continue;
                }
            };
            cells.push(CellError {
                key: row.key.clone(),
                aggregate: exact.aggregates.get(i).cloned().unwrap_or_default(),
                exact: *e,
                approx: *a,
                relative_error: err,
            });
        }
    }
    let spurious_groups = approx.rows.iter().filter(|r| exact.get(&r.key).is_none()).map(|r| r.key.clone()).collect();
    let mut errs: Vec<f64> = cells.iter().map(|c| c.relative_error).collect();
    errs.sort_by(cmp_f64);
    let (mean, median, max) = if errs.is_empty() {
        (0.0, 0.0, 0.0)
    } else {
        (errs.iter().sum::<f64>() / errs.len() as f64, median_sorted(&errs), errs[errs.len() - 1])
    };
    ErrorReport { cells, mean, median, max, missing_groups, spurious_groups, undefined_cells }
}
