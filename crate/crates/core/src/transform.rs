//! Reversible encoding of a [`Table`] into the numeric training matrix.
//!
//! Each continuous value becomes a scalar `α` plus a one-hot mode indicator
//! `β` taken from a per-column Gaussian mixture. Discrete values become
//! noisy one-hot vectors. Column blocks keep the schema's column order:
//!
//! | column kind  | block                                                     |
//! |--------------|-----------------------------------------------------------|
//! | continuous   | `α`, `β` (one slot per mode), `[present, null]` if nullable |
//! | mixed        | `α`, `β` (special values first, then modes), indicator      |
//! | categorical  | one slot per category, plus a null slot if nullable        |

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::gmm::{fit_gmm, GmmError, GmmModel, GmmWarning};
use crate::math::{argmax, median_sorted, sorted};
use crate::model::{validate_table, Bounds, ColumnKind, Table, TableSchema, Value};
use crate::neural::{BlockKind, Matrix, OutputBlock};
use crate::seeded_rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderOptions {
    /// Width of the `α` window in mode standard deviations.
    pub delta: f64,
    /// Amplitude of the uniform noise added to one-hot entries.
    pub gamma: f64,
    pub max_modes: usize,
    pub seed: u64,
}

impl Default for EncoderOptions {
    fn default() -> Self {
        EncoderOptions { delta: 4.0, gamma: 0.2, max_modes: 10, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EncodeError {
    #[error("invalid options: {0}")]
    Options(&'static str),
    #[error("table fails validation with {0} violation(s)")]
    InvalidTable(usize),
    #[error("table schema does not match the encoder")]
    SchemaMismatch,
    #[error("column {0} has no non-null values")]
    EmptyColumn(String),
    #[error("mixture fit failed for column {column}: {source}")]
    Gmm { column: String, source: GmmError },
    #[error("row {row}: {value:?} is not a category of column {column}")]
    UnknownCategory { column: String, row: usize, value: String },
    #[error("row {row}: unexpected cell in column {column}")]
    BadCell { column: String, row: usize },
    #[error("matrix width {found} does not match encoder width {expected}")]
    Width { expected: usize, found: usize },
    #[error("NaN at row {row}, position {position}")]
    NaN { row: usize, position: usize },
}

/// Per-column encoding state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ColumnEncoder {
    Continuous {
        gmm: GmmModel,
        delta: f64,
        bounds: Option<Bounds>,
        null_indicator: bool,
        /// Fill value when a null must be encoded and the table has no
        /// observed value to resample.
        fallback: f64,
    },
    Mixed {
        gmm: GmmModel,
        special_values: Vec<f64>,
        delta: f64,
        bounds: Option<Bounds>,
        null_indicator: bool,
        fallback: f64,
    },
    Discrete {
        tokens: Vec<String>,
        gamma: f64,
        null_slot: bool,
    },
}

impl ColumnEncoder {
    /// Encoded width of this column.
    pub fn width(&self) -> usize {
        match self {
            ColumnEncoder::Continuous { gmm, null_indicator, .. } => 1 + gmm.modes() + 2 * *null_indicator as usize,
            ColumnEncoder::Mixed { gmm, special_values, null_indicator, .. } => {
                1 + special_values.len() + gmm.modes() + 2 * *null_indicator as usize
            }
            ColumnEncoder::Discrete { tokens, null_slot, .. } => tokens.len() + *null_slot as usize,
        }
    }

    pub fn gmm(&self) -> Option<&GmmModel> {
        match self {
            ColumnEncoder::Continuous { gmm, .. } | ColumnEncoder::Mixed { gmm, .. } => Some(gmm),
            ColumnEncoder::Discrete { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    /// Scalar position within the selected mode.
    Alpha,
    /// Mode indicator (special values first for mixed columns).
    Modes,
    /// One-hot category block, including a trailing null slot if present.
    Categories,
    /// `[present, null]` pair.
    NullIndicator,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub offset: usize,
    pub len: usize,
}

/// Where one source column lives in the encoded row.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSlice {
    pub column: usize,
    pub offset: usize,
    pub width: usize,
    pub segments: Vec<Segment>,
}

impl ColumnSlice {
    pub fn segment(&self, kind: SegmentKind) -> Option<Segment> {
        self.segments.iter().copied().find(|s| s.kind == kind)
    }
}

/// A discrete column usable for conditioning: its categories occupy
/// `offset..offset + categories` of the encoded row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscreteBlock {
    pub column: usize,
    pub offset: usize,
    pub categories: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnWarning {
    pub column: String,
    pub warning: GmmWarning,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableEncoder {
    schema: TableSchema,
    columns: Vec<ColumnEncoder>,
    layout: Vec<ColumnSlice>,
    width: usize,
    pub warnings: Vec<ColumnWarning>,
}

/// Encoded rows plus the number of source rows they came from.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedMatrix {
    pub matrix: Matrix,
    pub source_rows: usize,
}

impl TableEncoder {
    pub fn schema(&self) -> &TableSchema {
        &self.schema
    }

    pub fn columns(&self) -> &[ColumnEncoder] {
        &self.columns
    }

    pub fn layout(&self) -> &[ColumnSlice] {
        &self.layout
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Generator output activation matching the layout: tanh on every `α`,
    /// softmax on every other segment.
    pub fn output_blocks(&self) -> Vec<OutputBlock> {
        self.layout
            .iter()
            .flat_map(|s| s.segments.iter())
            .map(|seg| OutputBlock {
                kind: if seg.kind == SegmentKind::Alpha { BlockKind::Tanh } else { BlockKind::Softmax },
                start: seg.offset,
                len: seg.len,
            })
            .collect()
    }

    /// Probability segments (everything except `α`).
    pub fn probability_segments(&self) -> Vec<Segment> {
        self.layout
            .iter()
            .flat_map(|s| s.segments.iter().copied())
            .filter(|s| s.kind != SegmentKind::Alpha)
            .collect()
    }

    /// Discrete columns in schema order, with the position of their
    /// category slots (null slot excluded).
    pub fn discrete_blocks(&self) -> Vec<DiscreteBlock> {
        self.columns
            .iter()
            .zip(&self.layout)
            .filter_map(|(enc, slice)| match enc {
                ColumnEncoder::Discrete { tokens, .. } => {
                    Some(DiscreteBlock { column: slice.column, offset: slice.offset, categories: tokens.len() })
                }
                _ => None,
            })
            .collect()
    }

    /// Checks the probability-block and finite-`α` invariants.
    pub fn check_encoded(&self, encoded: &EncodedMatrix) -> bool {
        let m = &encoded.matrix;
        if m.cols() != self.width {
            return false;
        }
        (0..m.rows()).all(|r| {
            let row = m.row(r);
            self.layout.iter().flat_map(|s| s.segments.iter()).all(|seg| {
                let block = &row[seg.offset..seg.offset + seg.len];
                match seg.kind {
                    SegmentKind::Alpha => block[0].is_finite() && block[0].abs() <= 1.0,
                    _ => block.iter().all(|v| *v >= 0.0) && (block.iter().sum::<f64>() - 1.0).abs() <= 1e-6,
                }
            })
        })
    }
}

fn column_seed(seed: u64, column: usize) -> u64 {
    seed ^ (column as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn fit_column_gmm(
    name: &str,
    values: &[f64],
    options: &EncoderOptions,
    column: usize,
    warnings: &mut Vec<ColumnWarning>,
) -> Result<GmmModel, EncodeError> {
    let fit = fit_gmm(values, options.max_modes, column_seed(options.seed, column))
        .map_err(|source| EncodeError::Gmm { column: name.to_string(), source })?;
    warnings.extend(fit.warnings.into_iter().map(|warning| ColumnWarning { column: name.to_string(), warning }));
    Ok(fit.model)
}

/// Fits one encoder per column of a valid table.
pub fn fit_encoder(table: &Table, options: &EncoderOptions) -> Result<TableEncoder, EncodeError> {
    if !(options.delta > 0.0 && options.delta.is_finite()) {
        return Err(EncodeError::Options("delta must be positive"));
    }
    if !(0.0..1.0).contains(&options.gamma) {
        return Err(EncodeError::Options("gamma must lie in [0, 1)"));
    }
    if options.max_modes == 0 {
        return Err(EncodeError::Options("max_modes must be positive"));
    }
    let report = validate_table(table.schema(), table);
    if !report.is_valid() {
        return Err(EncodeError::InvalidTable(report.violations.len()));
    }
    let schema = table.schema().clone();
    let mut warnings = Vec::new();
    let mut columns = Vec::with_capacity(schema.len());
    let mut layout = Vec::with_capacity(schema.len());
    let mut offset = 0;
    for (i, col) in schema.columns().iter().enumerate() {
        let values = table.reals(i);
        let fallback = || median_sorted(&sorted(&values));
        let encoder = match &col.kind {
            ColumnKind::Continuous { bounds } => {
                if values.is_empty() {
                    return Err(EncodeError::EmptyColumn(col.name.clone()));
                }
                ColumnEncoder::Continuous {
                    gmm: fit_column_gmm(&col.name, &values, options, i, &mut warnings)?,
                    delta: options.delta,
                    bounds: *bounds,
                    null_indicator: col.nullable,
                    fallback: fallback(),
                }
            }
            ColumnKind::Mixed { special_values, bounds } => {
                let regular: Vec<f64> = values.iter().copied().filter(|v| !special_values.contains(v)).collect();
                let gmm = if regular.is_empty() {
                    // Only special values observed; the Gaussian part is a
                    // placeholder that decoding never selects from data.
                    let centre = special_values.first().copied().unwrap_or(0.0);
                    GmmModel::new(vec![1.0], vec![centre], vec![1.0]).expect("valid placeholder")
                } else {
                    fit_column_gmm(&col.name, &regular, options, i, &mut warnings)?
                };
                ColumnEncoder::Mixed {
                    gmm,
                    special_values: special_values.clone(),
                    delta: options.delta,
                    bounds: *bounds,
                    null_indicator: col.nullable,
                    fallback: if values.is_empty() { special_values.first().copied().unwrap_or(0.0) } else { fallback() },
                }
            }
            ColumnKind::Categorical { .. } | ColumnKind::Ordinal { .. } => ColumnEncoder::Discrete {
                tokens: col.kind.tokens().unwrap_or_default().into_iter().map(String::from).collect(),
                gamma: options.gamma,
                null_slot: col.nullable,
            },
        };
        let slice = slice_for(i, offset, &encoder);
        offset += slice.width;
        layout.push(slice);
        columns.push(encoder);
    }
    Ok(TableEncoder { schema, columns, layout, width: offset, warnings })
}

fn slice_for(column: usize, offset: usize, encoder: &ColumnEncoder) -> ColumnSlice {
    let mut segments = Vec::new();
    let mut at = offset;
    let mut push = |kind, len| {
        segments.push(Segment { kind, offset: at, len });
        at += len;
    };
    match encoder {
        ColumnEncoder::Continuous { gmm, null_indicator, .. } => {
            push(SegmentKind::Alpha, 1);
            push(SegmentKind::Modes, gmm.modes());
            if *null_indicator {
                push(SegmentKind::NullIndicator, 2);
            }
        }
        ColumnEncoder::Mixed { gmm, special_values, null_indicator, .. } => {
            push(SegmentKind::Alpha, 1);
            push(SegmentKind::Modes, special_values.len() + gmm.modes());
            if *null_indicator {
                push(SegmentKind::NullIndicator, 2);
            }
        }
        ColumnEncoder::Discrete { tokens, null_slot, .. } => {
            push(SegmentKind::Categories, tokens.len() + *null_slot as usize);
        }
    }
    ColumnSlice { column, offset, width: encoder.width(), segments }
}

fn noisy_one_hot<R: Rng>(out: &mut [f64], hot: usize, gamma: f64, rng: &mut R) {
    for (j, v) in out.iter_mut().enumerate() {
        let noise = if gamma > 0.0 { rng.gen_range(0.0..gamma) } else { 0.0 };
        *v = if j == hot { 1.0 } else { 0.0 } + noise;
    }
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
}

fn encode_value(gmm: &GmmModel, delta: f64, c: f64, alpha: &mut f64, modes: &mut [f64]) {
    let k = gmm.assign(c);
    *alpha = ((c - gmm.means()[k]) / (delta * gmm.stds()[k])).clamp(-1.0, 1.0);
    modes[k] = 1.0;
}

/// Encodes every row of `table`. `seed` drives category noise and null
/// filling.
pub fn encode_rows(encoder: &TableEncoder, table: &Table, seed: u64) -> Result<EncodedMatrix, EncodeError> {
    if table.schema() != &encoder.schema {
        return Err(EncodeError::SchemaMismatch);
    }
    let mut rng = seeded_rng(seed);
    let rows = table.row_count();
    let mut m = Matrix::zeros(rows, encoder.width);
    for (i, (enc, slice)) in encoder.columns.iter().zip(&encoder.layout).enumerate() {
        let name = &encoder.schema.columns()[i].name;
        let cells = table.column(i);
        let pool = table.reals(i);
        for (r, cell) in cells.iter().enumerate() {
            let row = &mut m.row_mut(r)[slice.offset..slice.offset + slice.width];
            match enc {
                ColumnEncoder::Continuous { gmm, delta, null_indicator, fallback, .. }
                | ColumnEncoder::Mixed { gmm, delta, null_indicator, fallback, .. } => {
                    let specials: &[f64] = match enc {
                        ColumnEncoder::Mixed { special_values, .. } => special_values,
                        _ => &[],
                    };
                    let (c, is_null) = match cell {
                        Value::Real(c) => (*c, false),
                        Value::Null if *null_indicator => {
                            let fill = if pool.is_empty() { *fallback } else { pool[rng.gen_range(0..pool.len())] };
                            (fill, true)
                        }
                        _ => return Err(EncodeError::BadCell { column: name.clone(), row: r }),
                    };
                    let (alpha, rest) = row.split_at_mut(1);
                    let modes = &mut rest[..specials.len() + gmm.modes()];
                    if let Some(s) = specials.iter().position(|v| *v == c) {
                        alpha[0] = 0.0;
                        modes[s] = 1.0;
                    } else {
                        encode_value(gmm, *delta, c, &mut alpha[0], &mut modes[specials.len()..]);
                    }
                    if *null_indicator {
                        let ind = &mut rest[specials.len() + gmm.modes()..];
                        ind[is_null as usize] = 1.0;
                    }
                }
                ColumnEncoder::Discrete { tokens, gamma, null_slot } => {
                    let hot = match cell {
                        Value::Token(t) => tokens.iter().position(|x| x == t).ok_or_else(|| {
                            EncodeError::UnknownCategory { column: name.clone(), row: r, value: t.clone() }
                        })?,
                        Value::Null if *null_slot => tokens.len(),
                        _ => return Err(EncodeError::BadCell { column: name.clone(), row: r }),
                    };
                    noisy_one_hot(row, hot, *gamma, &mut rng);
                }
            }
        }
    }
    Ok(EncodedMatrix { matrix: m, source_rows: rows })
}

/// Inverts [`encode_rows`], taking the argmax of every probability block.
pub fn decode_rows(encoder: &TableEncoder, encoded: &EncodedMatrix) -> Result<Table, EncodeError> {
    let m = &encoded.matrix;
    if m.cols() != encoder.width {
        return Err(EncodeError::Width { expected: encoder.width, found: m.cols() });
    }
    if let Some(i) = m.data().iter().position(|v| v.is_nan()) {
        return Err(EncodeError::NaN { row: i / m.cols(), position: i % m.cols() });
    }
    let mut columns: Vec<Vec<Value>> = Vec::with_capacity(encoder.columns.len());
    for (enc, slice) in encoder.columns.iter().zip(&encoder.layout) {
        let mut out = Vec::with_capacity(m.rows());
        for r in 0..m.rows() {
            let row = &m.row(r)[slice.offset..slice.offset + slice.width];
            let value = match enc {
                ColumnEncoder::Continuous { gmm, delta, bounds, null_indicator, .. }
                | ColumnEncoder::Mixed { gmm, delta, bounds, null_indicator, .. } => {
                    let specials: &[f64] = match enc {
                        ColumnEncoder::Mixed { special_values, .. } => special_values,
                        _ => &[],
                    };
                    let n_modes = specials.len() + gmm.modes();
                    if *null_indicator && row[1 + n_modes + 1] >= 0.5 {
                        Value::Null
                    } else {
                        let k = argmax(&row[1..1 + n_modes]);
                        let c = if k < specials.len() {
                            specials[k]
                        } else {
                            let g = k - specials.len();
                            row[0] * delta * gmm.stds()[g] + gmm.means()[g]
                        };
                        Value::Real(bounds.map_or(c, |b| b.clamp(c)))
                    }
                }
                ColumnEncoder::Discrete { tokens, .. } => {
                    let k = argmax(row);
                    if k < tokens.len() {
                        Value::Token(tokens[k].clone())
                    } else {
                        Value::Null
                    }
                }
            };
            out.push(value);
        }
        columns.push(out);
    }
    Ok(Table::new(encoder.schema.clone(), columns).expect("decoded columns share one length"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ColumnSchema;
    use rand_distr::{Distribution, StandardNormal};

    fn bimodal_table(n: usize, seed: u64) -> Table {
        let schema = TableSchema::new(vec![
            ColumnSchema::continuous("x"),
            ColumnSchema::categorical("c", &["A", "B", "C"]),
        ])
        .unwrap();
        let mut rng = seeded_rng(seed);
        let rows = (0..n)
            .map(|i| {
                let z: f64 = StandardNormal.sample(&mut rng);
                let x = if i % 2 == 0 { -5.0 + 0.5 * z } else { 5.0 + 0.5 * z };
                vec![Value::Real(x), Value::token(["A", "B", "C"][i % 3])]
            })
            .collect();
        Table::from_rows(schema, rows).unwrap()
    }

    fn assert_tables_close(a: &Table, b: &Table) {
        assert_eq!(a.schema(), b.schema());
        assert_eq!(a.row_count(), b.row_count());
        for (ca, cb) in a.columns().iter().zip(b.columns()) {
            for (x, y) in ca.iter().zip(cb) {
                match (x, y) {
                    (Value::Real(x), Value::Real(y)) => assert!((x - y).abs() <= 1e-9 * y.abs().max(1.0), "{x} vs {y}"),
                    _ => assert_eq!(x, y),
                }
            }
        }
    }

    fn opts(gamma: f64) -> EncoderOptions {
        EncoderOptions { gamma, max_modes: 5, ..EncoderOptions::default() }
    }

    #[test]
    fn width_for_two_mode_continuous_and_three_categories() {
        let enc = fit_encoder(&bimodal_table(600, 1), &opts(0.2)).unwrap();
        assert_eq!(enc.columns()[0].gmm().unwrap().modes(), 2);
        assert_eq!(enc.width(), 6);
        let blocks = enc.output_blocks();
        assert_eq!(blocks[0], OutputBlock { kind: BlockKind::Tanh, start: 0, len: 1 });
        assert_eq!(blocks[1], OutputBlock { kind: BlockKind::Softmax, start: 1, len: 2 });
        assert_eq!(blocks[2], OutputBlock { kind: BlockKind::Softmax, start: 3, len: 3 });
        assert_eq!(enc.discrete_blocks(), vec![DiscreteBlock { column: 1, offset: 3, categories: 3 }]);
    }

    #[test]
    fn mixed_column_puts_special_mode_first() {
        let schema = TableSchema::new(vec![ColumnSchema::new(
            "debt",
            ColumnKind::Mixed { special_values: vec![0.0], bounds: None },
        )])
        .unwrap();
        let mut rng = seeded_rng(3);
        let rows = (0..900)
            .map(|i| {
                let z: f64 = StandardNormal.sample(&mut rng);
                let v = match i % 3 {
                    0 => 0.0,
                    1 => 20.0 + z,
                    _ => 60.0 + z,
                };
                vec![Value::Real(v)]
            })
            .collect();
        let table = Table::from_rows(schema, rows).unwrap();
        let enc = fit_encoder(&table, &opts(0.0)).unwrap();
        let modes = enc.layout()[0].segment(SegmentKind::Modes).unwrap();
        assert_eq!(modes.len, 3);
        let m = encode_rows(&enc, &table, 0).unwrap();
        assert_eq!(m.matrix.row(0), &[0.0, 1.0, 0.0, 0.0]);
        assert_tables_close(&decode_rows(&enc, &m).unwrap(), &table);
    }

    #[test]
    fn nullable_continuous_gets_indicator_pair() {
        let schema = TableSchema::new(vec![ColumnSchema::continuous("x").nullable()]).unwrap();
        let rows = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]
            .iter()
            .enumerate()
            .map(|(i, v)| vec![if i == 3 { Value::Null } else { Value::Real(*v) }])
            .collect();
        let table = Table::from_rows(schema, rows).unwrap();
        let enc = fit_encoder(&table, &opts(0.2)).unwrap();
        let m_modes = enc.columns()[0].gmm().unwrap().modes();
        assert_eq!(enc.width(), 1 + m_modes + 2);
        let m = encode_rows(&enc, &table, 9).unwrap();
        let ind = enc.layout()[0].segment(SegmentKind::NullIndicator).unwrap();
        assert_eq!(&m.matrix.row(3)[ind.offset..ind.offset + 2], &[0.0, 1.0]);
        assert_eq!(&m.matrix.row(0)[ind.offset..ind.offset + 2], &[1.0, 0.0]);
        // The filled value is one of the observed values.
        let decoded_fill = {
            let mut row = m.matrix.row(3).to_vec();
            row[ind.offset] = 1.0;
            row[ind.offset + 1] = 0.0;
            let single = EncodedMatrix { matrix: Matrix::from_vec(1, enc.width(), row).unwrap(), source_rows: 1 };
            decode_rows(&enc, &single).unwrap().cell(0, 0).as_real().unwrap()
        };
        assert!(table.reals(0).iter().any(|v| (v - decoded_fill).abs() < 1e-9));
        assert_tables_close(&decode_rows(&enc, &m).unwrap(), &table);
    }

    #[test]
    fn alpha_examples() {
        let table = bimodal_table(600, 2);
        let enc = fit_encoder(&table, &opts(0.0)).unwrap();
        let gmm = enc.columns()[0].gmm().unwrap().clone();
        let schema = table.schema().clone();
        let (mu, sd) = (gmm.means()[1], gmm.stds()[1]);
        let probe = Table::from_rows(
            schema,
            vec![
                vec![Value::Real(mu), Value::token("B")],
                vec![Value::Real(mu + 4.0 * sd), Value::token("A")],
            ],
        )
        .unwrap();
        let m = encode_rows(&enc, &probe, 0).unwrap().matrix;
        assert_eq!(m.row(0), &[0.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        assert!((m.get(1, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_category_is_an_error() {
        let table = bimodal_table(100, 4);
        let enc = fit_encoder(&table, &opts(0.2)).unwrap();
        let mut other = enc.clone();
        if let ColumnEncoder::Discrete { tokens, .. } = &mut other.columns[1] {
            tokens[2] = "Z".into();
        }
        assert!(matches!(encode_rows(&other, &table, 0), Err(EncodeError::UnknownCategory { .. })));
    }

    #[test]
    fn decode_clamps_to_bounds() {
        let schema = TableSchema::new(vec![ColumnSchema::continuous("x").with_bounds(0.0, 10.0)]).unwrap();
        let rows = (0..50).map(|i| vec![Value::Real(i as f64 / 5.0)]).collect();
        let table = Table::from_rows(schema, rows).unwrap();
        let enc = fit_encoder(&table, &opts(0.0)).unwrap();
        let gmm = enc.columns()[0].gmm().unwrap();
        let k = argmax(gmm.means());
        // α chosen so the raw inverse is 10.4.
        let alpha = (10.4 - gmm.means()[k]) / (4.0 * gmm.stds()[k]);
        let mut row = vec![0.0; enc.width()];
        row[0] = alpha;
        row[1 + k] = 1.0;
        let m = EncodedMatrix { matrix: Matrix::from_vec(1, enc.width(), row).unwrap(), source_rows: 1 };
        assert_eq!(decode_rows(&enc, &m).unwrap().cell(0, 0), &Value::Real(10.0));
    }

    #[test]
    fn decode_rejects_nan_and_wrong_width() {
        let enc = fit_encoder(&bimodal_table(100, 5), &opts(0.2)).unwrap();
        let mut row = vec![0.0; enc.width()];
        row[2] = f64::NAN;
        let m = EncodedMatrix { matrix: Matrix::from_vec(1, enc.width(), row).unwrap(), source_rows: 1 };
        assert_eq!(decode_rows(&enc, &m), Err(EncodeError::NaN { row: 0, position: 2 }));
        let narrow = EncodedMatrix { matrix: Matrix::zeros(1, 2), source_rows: 1 };
        assert!(matches!(decode_rows(&enc, &narrow), Err(EncodeError::Width { .. })));
    }

    #[test]
    fn round_trip_with_noise_keeps_categories_and_values() {
        let table = bimodal_table(400, 6);
        let enc = fit_encoder(&table, &opts(0.2)).unwrap();
        let m = encode_rows(&enc, &table, 11).unwrap();
        assert!(enc.check_encoded(&m));
        let back = decode_rows(&enc, &m).unwrap();
        for r in 0..table.row_count() {
            assert_eq!(back.cell(r, 1), table.cell(r, 1));
            let (a, b) = (back.cell(r, 0).as_real().unwrap(), table.cell(r, 0).as_real().unwrap());
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }

    /// With γ < 1 the hot entry (1 + u) always beats any other (u′ < γ).
    #[test]
    fn noisy_one_hot_preserves_argmax() {
        let mut rng = seeded_rng(12);
        let mut block = vec![0.0; 5];
        for i in 0..10_000 {
            let hot = i % 5;
            noisy_one_hot(&mut block, hot, 0.2, &mut rng);
            assert_eq!(argmax(&block), hot);
            assert!((block.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn encoder_options_are_checked() {
        let t = bimodal_table(50, 7);
        assert!(fit_encoder(&t, &EncoderOptions { gamma: 1.0, ..opts(0.0) }).is_err());
        assert!(fit_encoder(&t, &EncoderOptions { delta: 0.0, ..opts(0.0) }).is_err());
    }

    #[test]
    fn encoding_is_deterministic_per_seed() {
        let table = bimodal_table(200, 8);
        let enc = fit_encoder(&table, &opts(0.2)).unwrap();
        assert_eq!(encode_rows(&enc, &table, 3).unwrap(), encode_rows(&enc, &table, 3).unwrap());
        assert_ne!(encode_rows(&enc, &table, 3).unwrap(), encode_rows(&enc, &table, 4).unwrap());
    }
}
