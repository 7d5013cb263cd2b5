//! Classic synopses: reservoir sample, equi-width histogram, Haar wavelet
//! and count-min sketch, plus the [`Synopsis`] wrapper the query engine
//! consumes.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::math::{floor, sqrt};
use crate::model::{Table, TableSchema, Value};
use crate::seeded_rng;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SynopsisError {
    #[error("invalid parameter: {0}")]
    Parameter(&'static str),
    #[error("empty input")]
    Empty,
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
    #[error("unknown column {0}")]
    UnknownColumn(String),
}

/// Uniform row sample with the population size needed for scaling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSynopsis {
    pub rows: Table,
    pub population: usize,
    pub seed: u64,
}

impl SampleSynopsis {
    pub fn sample_size(&self) -> usize {
        self.rows.row_count()
    }

    /// `N / k`
    pub fn scale(&self) -> f64 {
        self.population as f64 / self.sample_size() as f64
    }
}

/// Algorithm R over the rows in order. Returns the whole table when it has
/// at most `k` rows.
pub fn reservoir_sample(table: &Table, k: usize, seed: u64) -> Result<SampleSynopsis, SynopsisError> {
    if k == 0 {
        return Err(SynopsisError::Parameter("sample size must be positive"));
    }
    let n = table.row_count();
    let mut reservoir: Vec<usize> = (0..n.min(k)).collect();
    let mut rng = seeded_rng(seed);
    for i in k..n {
        let j = rng.gen_range(0..=i);
        if j < k {
            reservoir[j] = i;
        }
    }
    Ok(SampleSynopsis { rows: table.select_rows(&reservoir), population: n, seed })
}

/// Per-column histogram.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ColumnHistogram {
    /// Equal-width buckets over `[lo, hi]`: half-open except the last.
    Numeric { lo: f64, hi: f64, counts: Vec<u64>, sums: Vec<f64>, nulls: u64 },
    /// Counts in declared token order.
    Discrete { tokens: Vec<String>, counts: Vec<u64>, nulls: u64 },
}

impl ColumnHistogram {
    pub fn non_null(&self) -> u64 {
        match self {
            ColumnHistogram::Numeric { counts, .. } | ColumnHistogram::Discrete { counts, .. } => counts.iter().sum(),
        }
    }

    /// `[lower, upper]` edges of bucket `b` of a numeric histogram.
    pub fn bucket_edges(&self, b: usize) -> (f64, f64) {
        match self {
            ColumnHistogram::Numeric { lo, hi, counts, .. } => {
                let k = counts.len();
                let width = (hi - lo) / k as f64;
                let lower = lo + b as f64 * width;
                let upper = if b + 1 == k { *hi } else { lo + (b + 1) as f64 * width };
                (lower, upper)
            }
            ColumnHistogram::Discrete { .. } => (f64::NAN, f64::NAN),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramSynopsis {
    pub schema: TableSchema,
    pub columns: Vec<ColumnHistogram>,
    pub rows: usize,
    pub buckets: usize,
}

fn bucket_of(x: f64, lo: f64, hi: f64, k: usize) -> usize {
    let width = (hi - lo) / k as f64;
    let edge = |i: usize| if i == k { hi } else { lo + i as f64 * width };
    let mut b = (floor((x - lo) / width).max(0.0) as usize).min(k - 1);
    // Correct rounding so that edges land in the right-hand bucket.
    while b + 1 < k && x >= edge(b + 1) {
        b += 1;
    }
    while b > 0 && x < edge(b) {
        b -= 1;
    }
    b
}

/// Numeric columns get `k` equal-width buckets over their declared bounds, or
/// the observed range when undeclared (one bucket if constant); discrete
/// columns get category counts.
pub fn build_histogram(table: &Table, k: usize) -> Result<HistogramSynopsis, SynopsisError> {
    if k == 0 {
        return Err(SynopsisError::Parameter("bucket count must be positive"));
    }
    let mut columns = Vec::with_capacity(table.schema().len());
    for (i, col) in table.schema().columns().iter().enumerate() {
        let nulls = table.null_count(i) as u64;
        let h = if col.kind.is_numeric() {
            let values = table.reals(i);
            let mut lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if let Some(b) = col.kind.bounds() {
                if b.lo < b.hi && b.lo <= lo && hi <= b.hi {
                    lo = b.lo;
                    hi = b.hi;
                }
            }
            if values.is_empty() {
                ColumnHistogram::Numeric { lo: 0.0, hi: 0.0, counts: Vec::new(), sums: Vec::new(), nulls }
            } else if lo == hi {
                ColumnHistogram::Numeric { lo, hi, counts: vec![values.len() as u64], sums: vec![values.iter().sum()], nulls }
            } else {
                let mut counts = vec![0u64; k];
                let mut sums = vec![0.0; k];
                for v in values {
                    let b = bucket_of(v, lo, hi, k);
                    counts[b] += 1;
                    sums[b] += v;
                }
                ColumnHistogram::Numeric { lo, hi, counts, sums, nulls }
            }
        } else {
            let tokens: Vec<String> = col.kind.tokens().unwrap_or_default().into_iter().map(String::from).collect();
            let mut counts = vec![0u64; tokens.len()];
            for v in table.column(i) {
                if let Some(j) = v.as_token().and_then(|t| col.kind.token_index(t)) {
                    counts[j] += 1;
                }
            }
            ColumnHistogram::Discrete { tokens, counts, nulls }
        };
        columns.push(h);
    }
    Ok(HistogramSynopsis { schema: table.schema().clone(), columns, rows: table.row_count(), buckets: k })
}

/// Orthonormal Haar transform of a power-of-two-length signal. Output layout:
/// overall approximation first, then details from coarsest to finest.
pub fn haar_forward(values: &[f64]) -> Vec<f64> {
    let mut out = values.to_vec();
    let mut len = out.len();
    let mut tmp = vec![0.0; len];
    while len > 1 {
        let half = len / 2;
        for i in 0..half {
            let (a, b) = (out[2 * i], out[2 * i + 1]);
            tmp[i] = (a + b) / core::f64::consts::SQRT_2;
            tmp[half + i] = (a - b) / core::f64::consts::SQRT_2;
        }
        out[..len].copy_from_slice(&tmp[..len]);
        len = half;
    }
    out
}

/// Inverse of [`haar_forward`].
pub fn haar_inverse(coefficients: &[f64]) -> Vec<f64> {
    let mut out = coefficients.to_vec();
    let n = out.len();
    let mut tmp = vec![0.0; n];
    let mut len = 1;
    while len < n {
        for i in 0..len {
            let (a, d) = (out[i], out[len + i]);
            tmp[2 * i] = (a + d) / core::f64::consts::SQRT_2;
            tmp[2 * i + 1] = (a - d) / core::f64::consts::SQRT_2;
        }
        out[..2 * len].copy_from_slice(&tmp[..2 * len]);
        len *= 2;
    }
    out
}

/// Largest-magnitude Haar coefficients of a value sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveletSynopsis {
    pub length: usize,
    pub padded: usize,
    /// `(index, coefficient)` sorted by index.
    pub coefficients: Vec<(usize, f64)>,
}

/// Keeps the `keep` largest-magnitude coefficients (ties go to the lower
/// index) of the zero-padded signal.
pub fn wavelet_build(values: &[f64], keep: usize) -> Result<WaveletSynopsis, SynopsisError> {
    if values.is_empty() {
        return Err(SynopsisError::Empty);
    }
    if keep == 0 {
        return Err(SynopsisError::Parameter("must keep at least one coefficient"));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(SynopsisError::NonFinite(i));
    }
    let padded = values.len().next_power_of_two();
    let mut signal = values.to_vec();
    signal.resize(padded, 0.0);
    let coeffs = haar_forward(&signal);
    let mut order: Vec<usize> = (0..padded).collect();
    order.sort_by(|&a, &b| coeffs[b].abs().total_cmp(&coeffs[a].abs()).then(a.cmp(&b)));
    order.truncate(keep);
    order.sort_unstable();
    Ok(WaveletSynopsis { length: values.len(), padded, coefficients: order.into_iter().map(|i| (i, coeffs[i])).collect() })
}

pub fn wavelet_reconstruct(syn: &WaveletSynopsis) -> Vec<f64> {
    let mut coeffs = vec![0.0; syn.padded];
    for &(i, c) in &syn.coefficients {
        coeffs[i] = c;
    }
    let mut out = haar_inverse(&coeffs);
    out.truncate(syn.length);
    out
}

/// One wavelet per numeric column over its non-null values in row order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveletTable {
    pub schema: TableSchema,
    pub columns: Vec<Option<WaveletSynopsis>>,
    pub rows: usize,
}

pub fn build_wavelets(table: &Table, keep: usize) -> Result<WaveletTable, SynopsisError> {
    let mut columns = Vec::with_capacity(table.schema().len());
    for (i, col) in table.schema().columns().iter().enumerate() {
        let values = table.reals(i);
        columns.push(if col.kind.is_numeric() && !values.is_empty() { Some(wavelet_build(&values, keep)?) } else { None });
    }
    Ok(WaveletTable { schema: table.schema().clone(), columns, rows: table.row_count() })
}

/// Count-min sketch over the tokens of one column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SketchSynopsis {
    pub column: String,
    pub width: usize,
    pub depth: usize,
    /// `(multiplier, increment)` per row; multipliers are odd.
    pub seeds: Vec<(u64, u64)>,
    /// Row-major `depth × width`.
    pub counters: Vec<u64>,
    pub total: u64,
}

/// 64-bit FNV-1a.
pub fn fingerprint(item: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in item.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl SketchSynopsis {
    pub fn new(column: &str, width: usize, depth: usize, seed: u64) -> Result<Self, SynopsisError> {
        if width < 2 || depth == 0 {
            return Err(SynopsisError::Parameter("width must be at least 2 and depth positive"));
        }
        let mut rng = seeded_rng(seed);
        let seeds = (0..depth).map(|_| (rng.gen::<u64>() | 1, rng.gen::<u64>())).collect();
        Ok(SketchSynopsis {
            column: column.to_string(),
            width,
            depth,
            seeds,
            counters: vec![0; width * depth],
            total: 0,
        })
    }

    fn bucket(&self, row: usize, fp: u64) -> usize {
        let (a, b) = self.seeds[row];
        let h = a.wrapping_mul(fp).wrapping_add(b);
        ((h as u128 * self.width as u128) >> 64) as usize
    }

    pub fn insert(&mut self, item: &str) {
        let fp = fingerprint(item);
        for r in 0..self.depth {
            let b = self.bucket(r, fp);
            self.counters[r * self.width + b] += 1;
        }
        self.total += 1;
    }

    /// Upper-biased frequency estimate: never below the true count.
    pub fn query(&self, item: &str) -> u64 {
        let fp = fingerprint(item);
        (0..self.depth).map(|r| self.counters[r * self.width + self.bucket(r, fp)]).min().unwrap_or(0)
    }
}

pub fn cms_insert_all<'a>(
    items: impl IntoIterator<Item = &'a str>,
    width: usize,
    depth: usize,
    seed: u64,
) -> Result<SketchSynopsis, SynopsisError> {
    let mut s = SketchSynopsis::new("", width, depth, seed)?;
    for item in items {
        s.insert(item);
    }
    Ok(s)
}

pub fn cms_query(syn: &SketchSynopsis, item: &str) -> u64 {
    syn.query(item)
}

/// Sketch key of a cell: the token itself, or the shortest round-trip
/// decimal form of a real. `None` for nulls.
pub fn sketch_key(value: &Value) -> Option<String> {
    match value {
        Value::Null => None,
        Value::Real(x) => Some(format!("{x}")),
        Value::Token(t) => Some(t.clone()),
    }
}

/// Sketches the non-null cells of one column.
pub fn build_sketch(table: &Table, column: &str, width: usize, depth: usize, seed: u64) -> Result<SketchSynopsis, SynopsisError> {
    let idx = table.schema().index_of(column).ok_or_else(|| SynopsisError::UnknownColumn(column.to_string()))?;
    let mut s = SketchSynopsis::new(column, width, depth, seed)?;
    for v in table.column(idx) {
        if let Some(k) = sketch_key(v) {
            s.insert(&k);
        }
    }
    Ok(s)
}

/// Rows produced by a generator, standing in for a population of size
/// `population`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSynopsis {
    pub table: Table,
    pub population: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Synopsis {
    Sample(SampleSynopsis),
    Histogram(HistogramSynopsis),
    Wavelet(WaveletTable),
    Sketch(SketchSynopsis),
    Generated(GeneratedSynopsis),
}

impl Synopsis {
    pub fn kind(&self) -> &'static str {
        match self {
            Synopsis::Sample(_) => "sample",
            Synopsis::Histogram(_) => "histogram",
            Synopsis::Wavelet(_) => "wavelet",
            Synopsis::Sketch(_) => "sketch",
            Synopsis::Generated(_) => "generated",
        }
    }
}

/// L2 norm of `a − b`.
pub fn l2_error(a: &[f64], b: &[f64]) -> f64 {
    sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::{*, Rng};
    use crate::model::ColumnSchema;
    use proptest::prelude::*;

    fn numbers(values: &[f64]) -> Table {
        let schema = TableSchema::new(vec![ColumnSchema::continuous("x")]).unwrap();
        Table::from_rows(schema, values.iter().map(|v| vec![Value::Real(*v)]).collect()).unwrap()
    }

    #[test]
    fn small_table_is_sampled_whole() {
        let t = numbers(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let s = reservoir_sample(&t, 10, 0).unwrap();
        assert_eq!(s.rows, t);
        assert_eq!(s.scale(), 1.0);
        assert_eq!(reservoir_sample(&t, 0, 0), Err(SynopsisError::Parameter("sample size must be positive")));
    }

    #[test]
    fn reservoir_is_deterministic_and_sized() {
        let t = numbers(&(0..1000).map(f64::from).collect::<Vec<_>>());
        let a = reservoir_sample(&t, 100, 3).unwrap();
        assert_eq!(a, reservoir_sample(&t, 100, 3).unwrap());
        assert_eq!(a.sample_size(), 100);
        assert_eq!(a.scale(), 10.0);
    }

    /// Inclusion frequency of every row over many seeds against `k/N`.
    #[test]
    fn reservoir_inclusion_is_uniform() {
        let n = 10_000;
        let k = 1_000;
        let seeds = 500;
        let t = numbers(&(0..n).map(|i| i as f64).collect::<Vec<_>>());
        let mut hits = vec![0u32; n];
        for seed in 0..seeds {
            for v in reservoir_sample(&t, k, seed).unwrap().rows.reals(0) {
                hits[v as usize] += 1;
            }
        }
        let p = k as f64 / n as f64;
        let expected = seeds as f64 * p;
        let chi2: f64 = hits.iter().map(|&h| (h as f64 - expected).powi(2) / (expected * (1.0 - p))).sum();
        // χ² with n − 1 degrees of freedom: mean n − 1, sd √(2(n − 1)).
        let dof = (n - 1) as f64;
        assert!((chi2 - dof).abs() < 4.0 * sqrt(2.0 * dof), "chi2 {chi2}");
    }

    #[test]
    fn histogram_hand_tally() {
        let t = numbers(&(0..10).map(f64::from).collect::<Vec<_>>());
        let h = build_histogram(&t, 2).unwrap();
        match &h.columns[0] {
            ColumnHistogram::Numeric { counts, sums, .. } => {
                assert_eq!(counts, &vec![5, 5]);
                assert_eq!(sums, &vec![10.0, 35.0]);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn histogram_edges_and_constants() {
        // Edge at 5 with K = 2 over [0, 10]; 5 goes right, 10 goes into the last bucket.
        let t = numbers(&[0.0, 5.0, 10.0]);
        let h = build_histogram(&t, 2).unwrap();
        assert!(matches!(&h.columns[0], ColumnHistogram::Numeric { counts, .. } if counts == &vec![1, 2]));
        let c = build_histogram(&numbers(&[3.0; 7]), 8).unwrap();
        assert!(matches!(&c.columns[0], ColumnHistogram::Numeric { counts, .. } if counts == &vec![7]));
    }

    #[test]
    fn histogram_counts_exclude_nulls_and_fit_buckets() {
        let schema = TableSchema::new(vec![
            ColumnSchema::continuous("x").nullable(),
            ColumnSchema::categorical("c", &["a", "b"]).nullable(),
        ])
        .unwrap();
        let rows = (0..100)
            .map(|i| {
                let x = if i % 7 == 0 { Value::Null } else { Value::Real((i * 37 % 101) as f64 / 3.0) };
                let c = if i % 5 == 0 { Value::Null } else { Value::token(if i % 2 == 0 { "a" } else { "b" }) };
                vec![x, c]
            })
            .collect();
        let t = Table::from_rows(schema, rows).unwrap();
        let h = build_histogram(&t, 9).unwrap();
        assert_eq!(h.columns[0].non_null(), 100 - t.null_count(0) as u64);
        assert_eq!(h.columns[1].non_null(), 100 - t.null_count(1) as u64);
        if let ColumnHistogram::Numeric { counts, sums, lo, hi, .. } = &h.columns[0] {
            let w = (hi - lo) / 9.0;
            for b in 0..9 {
                let (l, u) = h.columns[0].bucket_edges(b);
                assert!(((u - l) - w).abs() < 1e-12);
                assert!(sums[b] >= l * counts[b] as f64 - 1e-9 && sums[b] <= u * counts[b] as f64 + 1e-9);
            }
        }
    }

    #[test]
    fn constant_signal_keeps_one_coefficient() {
        let w = wavelet_build(&[2.0, 2.0, 2.0, 2.0], 1).unwrap();
        assert_eq!(w.coefficients.len(), 1);
        assert_eq!(w.coefficients[0].0, 0);
        assert!((w.coefficients[0].1 - 4.0).abs() < 1e-12);
        for v in wavelet_reconstruct(&w) {
            assert!((v - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn wavelet_errors() {
        assert_eq!(wavelet_build(&[], 1), Err(SynopsisError::Empty));
        assert!(wavelet_build(&[1.0], 0).is_err());
        assert_eq!(wavelet_build(&[1.0, f64::NAN], 1), Err(SynopsisError::NonFinite(1)));
    }

    #[test]
    fn wavelet_top_k_is_optimal_by_brute_force() {
        let mut rng = seeded_rng(8);
        for _ in 0..50 {
            let values: Vec<f64> = (0..8).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let coeffs = haar_forward(&values);
            let mut best = f64::INFINITY;
            for mask in 0u32..256 {
                if mask.count_ones() != 3 {
                    continue;
                }
                let kept: Vec<f64> = (0..8).map(|i| if mask >> i & 1 == 1 { coeffs[i] } else { 0.0 }).collect();
                best = best.min(l2_error(&haar_inverse(&kept), &values));
            }
            let ours = l2_error(&wavelet_reconstruct(&wavelet_build(&values, 3).unwrap()), &values);
            assert!((ours - best).abs() < 1e-9, "{ours} vs {best}");
        }
    }

    #[test]
    fn sketch_examples() {
        let s = cms_insert_all(["only"], 64, 4, 1).unwrap();
        assert_eq!(cms_query(&s, "only"), 1);
        assert!(cms_insert_all(["a"], 1, 4, 1).is_err());
        let items: Vec<String> = (0..500).map(|i| format!("k{}", i % 37)).collect();
        let a = cms_insert_all(items.iter().map(String::as_str), 16, 3, 9).unwrap();
        let b = cms_insert_all(items.iter().map(String::as_str), 16, 3, 9).unwrap();
        assert_eq!(a, b);
        for r in 0..a.depth {
            assert_eq!(a.counters[r * a.width..(r + 1) * a.width].iter().sum::<u64>(), a.total);
        }
    }

    /// A never-inserted item exceeds `2N/w` with probability at most `2^−d`.
    #[test]
    fn sketch_overestimate_bound() {
        let (w, d, n) = (50, 4, 2000);
        let items: Vec<String> = (0..n).map(|i| format!("item{}", i % 300)).collect();
        let trials = 400;
        let mut exceed = 0;
        for seed in 0..trials {
            let s = cms_insert_all(items.iter().map(String::as_str), w, d, seed).unwrap();
            if s.query("absent") as f64 > 2.0 * n as f64 / w as f64 {
                exceed += 1;
            }
        }
        let bound = trials as f64 * 0.5f64.powi(d as i32);
        assert!((exceed as f64) <= bound + 3.0 * sqrt(bound), "{exceed} > {bound}");
    }

    proptest! {
        #[test]
        fn sketch_never_underestimates(items in prop::collection::vec(0u16..200, 1..300), w in 2usize..40, d in 1usize..5, seed: u64) {
            let keys: Vec<String> = items.iter().map(|i| format!("{i}")).collect();
            let s = cms_insert_all(keys.iter().map(String::as_str), w, d, seed).unwrap();
            for probe in 0u16..200 {
                let truth = items.iter().filter(|&&i| i == probe).count() as u64;
                let key = format!("{}", probe);
                prop_assert!(s.query(&key) >= truth);
            }
        }

        #[test]
        fn wavelet_error_non_increasing_in_k(values in prop::collection::vec(-100.0f64..100.0, 1..40)) {
            let mut prev = f64::INFINITY;
            let n = values.len().next_power_of_two();
            let mut padded = values.clone();
            padded.resize(n, 0.0);
            for k in 1..=n {
                let mut w = wavelet_build(&values, k).unwrap();
                w.length = n;
                let e = l2_error(&wavelet_reconstruct(&w), &padded);
                prop_assert!(e <= prev + 1e-9);
                prev = e;
            }
            prop_assert!(prev < 1e-9 * (1.0 + values.iter().map(|v| v.abs()).sum::<f64>()));
        }
    }
}
