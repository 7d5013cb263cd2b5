//! Fidelity metrics comparing a generated table with the real one.
//!
//! Every score lies in `[0, 1]`, with 1 meaning indistinguishable. Nulls are
//! ignored everywhere except [`missing_value_similarity`].

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::math::{cmp_f64, mean, median_sorted, sorted, sqrt, std_dev};
use crate::model::{ColumnKind, Table, Value};
use crate::seeded_rng;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("{0} column has no usable values")]
    Empty(&'static str),
    #[error("real column has zero range")]
    ZeroRange,
    #[error("column has zero variance")]
    ZeroVariance,
    #[error("paired columns differ in length")]
    Length,
    #[error("tables have different schemas")]
    SchemaMismatch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricFamily {
    Coverage,
    Constraint,
    Similarity,
    Relationship,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricScore {
    pub metric: String,
    pub family: MetricFamily,
    pub columns: Vec<String>,
    pub value: f64,
    /// Intermediate statistics.
    pub detail: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl MetricScore {
    fn new(metric: &str, family: MetricFamily, value: f64) -> Self {
        MetricScore {
            metric: metric.to_string(),
            family,
            columns: Vec::new(),
            value,
            detail: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    fn with(mut self, key: &str, value: f64) -> Self {
        self.detail.insert(key.to_string(), value);
        self
    }
}

fn tokens(col: &[Value]) -> Vec<&str> {
    col.iter().filter_map(Value::as_token).collect()
}

fn reals(col: &[Value]) -> Vec<f64> {
    col.iter().filter_map(Value::as_real).collect()
}

fn frequencies<K: Ord>(items: impl Iterator<Item = K>) -> (BTreeMap<K, f64>, usize) {
    let mut counts = BTreeMap::new();
    let mut n = 0;
    for k in items {
        *counts.entry(k).or_insert(0.0) += 1.0;
        n += 1;
    }
    counts.values_mut().for_each(|v| *v /= n as f64);
    (counts, n)
}

/// Share of real categories that appear in the generated column. Generated
/// categories unknown to the real column do not count; they are listed in
/// `notes` and the uncapped ratio is in `detail.raw_ratio`.
pub fn category_coverage(real: &[Value], gen: &[Value]) -> Result<MetricScore, MetricError> {
    let r: BTreeSet<&str> = tokens(real).into_iter().collect();
    if r.is_empty() {
        return Err(MetricError::Empty("real"));
    }
    let g: BTreeSet<&str> = tokens(gen).into_iter().collect();
    let covered = r.intersection(&g).count();
    let mut s = MetricScore::new("category_coverage", MetricFamily::Coverage, covered as f64 / r.len() as f64)
        .with("real_categories", r.len() as f64)
        .with("covered", covered as f64)
        .with("raw_ratio", g.len() as f64 / r.len() as f64);
    s.notes = g.difference(&r).map(|c| c.to_string()).collect();
    s.detail.insert("novel".into(), s.notes.len() as f64);
    Ok(s)
}

fn range_of(values: &[f64]) -> Option<(f64, f64)> {
    let lo = values.iter().copied().reduce(f64::min)?;
    let hi = values.iter().copied().reduce(f64::max)?;
    Some((lo, hi))
}

/// `1 − (lower deficit + upper deficit)` relative to the real range, floored
/// at 0.
pub fn range_coverage(real: &[Value], gen: &[Value]) -> Result<MetricScore, MetricError> {
    let (rmin, rmax) = range_of(&reals(real)).ok_or(MetricError::Empty("real"))?;
    let (gmin, gmax) = range_of(&reals(gen)).ok_or(MetricError::Empty("generated"))?;
    if rmax == rmin {
        return Err(MetricError::ZeroRange);
    }
    let span = rmax - rmin;
    let deficit = ((gmin - rmin) / span).max(0.0) + ((rmax - gmax) / span).max(0.0);
    Ok(MetricScore::new("range_coverage", MetricFamily::Coverage, (1.0 - deficit).max(0.0))
        .with("real_min", rmin)
        .with("real_max", rmax)
        .with("generated_min", gmin)
        .with("generated_max", gmax))
}

/// Fraction of generated values inside the closed real range.
pub fn boundary_adherence(real: &[Value], gen: &[Value]) -> Result<MetricScore, MetricError> {
    let (lo, hi) = range_of(&reals(real)).ok_or(MetricError::Empty("real"))?;
    let g = reals(gen);
    if g.is_empty() {
        return Err(MetricError::Empty("generated"));
    }
    let inside = g.iter().filter(|v| lo <= **v && **v <= hi).count();
    Ok(MetricScore::new("boundary_adherence", MetricFamily::Constraint, inside as f64 / g.len() as f64)
        .with("inside", inside as f64)
        .with("generated", g.len() as f64))
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a − F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let a = sorted(a);
    let b = sorted(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) => x.min(*y),
            (Some(x), None) => *x,
            (None, Some(y)) => *y,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

pub fn ks_complement(real: &[Value], gen: &[Value]) -> Result<MetricScore, MetricError> {
    let r = reals(real);
    let g = reals(gen);
    if r.is_empty() {
        return Err(MetricError::Empty("real"));
    }
    if g.is_empty() {
        return Err(MetricError::Empty("generated"));
    }
    let d = ks_statistic(&r, &g);
    Ok(MetricScore::new("ks_complement", MetricFamily::Similarity, 1.0 - d).with("ks_statistic", d))
}

fn tvd<K: Ord>(p: &BTreeMap<K, f64>, q: &BTreeMap<K, f64>) -> f64 {
    let mut total = 0.0;
    for (k, pv) in p {
        total += (pv - q.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, qv) in q {
        if !p.contains_key(k) {
            total += qv;
        }
    }
    0.5 * total
}

/// `1 − ½ Σ |p_real − p_gen|` over the union of categories.
pub fn tvd_complement(real: &[Value], gen: &[Value]) -> Result<MetricScore, MetricError> {
    let (p, n) = frequencies(tokens(real).into_iter());
    let (q, m) = frequencies(tokens(gen).into_iter());
    if n == 0 {
        return Err(MetricError::Empty("real"));
    }
    if m == 0 {
        return Err(MetricError::Empty("generated"));
    }
    let d = tvd(&p, &q);
    Ok(MetricScore::new("tvd_complement", MetricFamily::Similarity, (1.0 - d).max(0.0)).with("tvd", d))
}

fn null_share(col: &[Value]) -> f64 {
    if col.is_empty() {
        0.0
    } else {
        col.iter().filter(|v| v.is_null()).count() as f64 / col.len() as f64
    }
}

/// `1 − |null share(real) − null share(gen)|`; an empty column has share 0.
pub fn missing_value_similarity(real: &[Value], gen: &[Value]) -> MetricScore {
    let (p, q) = (null_share(real), null_share(gen));
    MetricScore::new("missing_value_similarity", MetricFamily::Similarity, 1.0 - (p - q).abs())
        .with("real_null_share", p)
        .with("generated_null_share", q)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Mean,
    Median,
    /// Population standard deviation.
    Std,
}

impl Statistic {
    pub fn of(self, values: &[f64]) -> f64 {
        match self {
            Statistic::Mean => mean(values),
            Statistic::Median => median_sorted(&sorted(values)),
            Statistic::Std => std_dev(values),
        }
    }

    pub fn metric_name(self) -> &'static str {
        match self {
            Statistic::Mean => "mean_similarity",
            Statistic::Median => "median_similarity",
            Statistic::Std => "std_similarity",
        }
    }
}

/// `max(1 − |f(real) − f(gen)| / real range, 0)`.
pub fn statistic_similarity(real: &[Value], gen: &[Value], stat: Statistic) -> Result<MetricScore, MetricError> {
    let r = reals(real);
    let g = reals(gen);
    let (lo, hi) = range_of(&r).ok_or(MetricError::Empty("real"))?;
    if g.is_empty() {
        return Err(MetricError::Empty("generated"));
    }
    if hi == lo {
        return Err(MetricError::ZeroRange);
    }
    let (fr, fg) = (stat.of(&r), stat.of(&g));
    let value = (1.0 - (fr - fg).abs() / (hi - lo)).max(0.0);
    Ok(MetricScore::new(stat.metric_name(), MetricFamily::Similarity, value).with("real", fr).with("generated", fg))
}

/// `1 − ½ Σ |P_real(x, y) − P_gen(x, y)|` over joint category frequencies of
/// rows where both cells are present.
pub fn contingency_similarity(
    real: (&[Value], &[Value]),
    gen: (&[Value], &[Value]),
) -> Result<MetricScore, MetricError> {
    if real.0.len() != real.1.len() || gen.0.len() != gen.1.len() {
        return Err(MetricError::Length);
    }
    let pairs = |a: &'_ [Value], b: &'_ [Value]| -> Vec<(String, String)> {
        a.iter()
            .zip(b)
            .filter_map(|(x, y)| Some((x.as_token()?.to_string(), y.as_token()?.to_string())))
            .collect()
    };
    let (p, n) = frequencies(pairs(real.0, real.1).into_iter());
    let (q, m) = frequencies(pairs(gen.0, gen.1).into_iter());
    if n == 0 {
        return Err(MetricError::Empty("real"));
    }
    if m == 0 {
        return Err(MetricError::Empty("generated"));
    }
    let d = tvd(&p, &q);
    Ok(MetricScore::new("contingency_similarity", MetricFamily::Relationship, (1.0 - d).max(0.0)).with("tvd", d))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correlation {
    Pearson,
    /// Pearson over midranks.
    Spearman,
}

impl Correlation {
    pub fn metric_name(self) -> &'static str {
        match self {
            Correlation::Pearson => "pearson_similarity",
            Correlation::Spearman => "spearman_similarity",
        }
    }
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    let constant = |v: &[f64]| v.iter().all(|a| *a == v[0]);
    if x.is_empty() || constant(x) || constant(y) {
        return Err(MetricError::ZeroVariance);
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricError::ZeroVariance);
    }
    Ok((sxy / sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties sharing their average rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| cmp_f64(&values[a], &values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

pub fn correlation(x: &[f64], y: &[f64], method: Correlation) -> Result<f64, MetricError> {
    match method {
        Correlation::Pearson => pearson(x, y),
        Correlation::Spearman => pearson(&midranks(x), &midranks(y)),
    }
}

fn complete_pairs(a: &[Value], b: &[Value]) -> (Vec<f64>, Vec<f64>) {
    a.iter().zip(b).filter_map(|(x, y)| Some((x.as_real()?, y.as_real()?))).unzip()
}

/// `1 − |ρ_real − ρ_gen| / 2` over rows where both cells are present.
pub fn correlation_similarity(
    real: (&[Value], &[Value]),
    gen: (&[Value], &[Value]),
    method: Correlation,
) -> Result<MetricScore, MetricError> {
    if real.0.len() != real.1.len() || gen.0.len() != gen.1.len() {
        return Err(MetricError::Length);
    }
    let (rx, ry) = complete_pairs(real.0, real.1);
    let (gx, gy) = complete_pairs(gen.0, gen.1);
    if rx.len() < 2 {
        return Err(MetricError::Empty("real"));
    }
    if gx.len() < 2 {
        return Err(MetricError::Empty("generated"));
    }
    let rr = correlation(&rx, &ry, method)?;
    let rg = correlation(&gx, &gy, method)?;
    Ok(MetricScore::new(method.metric_name(), MetricFamily::Relationship, 1.0 - (rr - rg).abs() / 2.0)
        .with("real", rr)
        .with("generated", rg))
}

/// KS complement between two sequences of per-parent child counts.
pub fn cardinality_similarity(real: &[usize], gen: &[usize]) -> Result<MetricScore, MetricError> {
    if real.is_empty() {
        return Err(MetricError::Empty("real"));
    }
    if gen.is_empty() {
        return Err(MetricError::Empty("generated"));
    }
    let r: Vec<f64> = real.iter().map(|&c| c as f64).collect();
    let g: Vec<f64> = gen.iter().map(|&c| c as f64).collect();
    let d = ks_statistic(&r, &g);
    Ok(MetricScore::new("cardinality_similarity", MetricFamily::Relationship, 1.0 - d).with("ks_statistic", d))
}

/// A metric that could not be computed for some column(s).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedMetric {
    pub metric: String,
    pub columns: Vec<String>,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub name: String,
    pub value: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub column_scores: Vec<MetricScore>,
    pub pair_scores: Vec<MetricScore>,
    pub skipped: Vec<SkippedMetric>,
    /// Unweighted mean per metric name.
    pub metric_means: Vec<Aggregate>,
    /// Unweighted mean per family.
    pub family_means: Vec<Aggregate>,
    pub overall: f64,
    pub real_rows: usize,
    pub generated_rows: usize,
    pub pair_budget: usize,
    pub seed: u64,
}

impl QualityReport {
    pub fn scores(&self) -> impl Iterator<Item = &MetricScore> {
        self.column_scores.iter().chain(&self.pair_scores)
    }

    pub fn find(&self, metric: &str, columns: &[&str]) -> Option<&MetricScore> {
        self.scores().find(|s| s.metric == metric && s.columns.iter().map(String::as_str).eq(columns.iter().copied()))
    }
}

fn aggregate<'a, K: Ord + ToString>(scores: impl Iterator<Item = (K, f64)>) -> Vec<Aggregate> {
    let mut groups: BTreeMap<K, (f64, usize)> = BTreeMap::new();
    for (k, v) in scores {
        let e = groups.entry(k).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    groups.into_iter().map(|(k, (sum, n))| Aggregate { name: k.to_string(), value: sum / n as f64, count: n }).collect()
}

impl core::fmt::Display for MetricFamily {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            MetricFamily::Coverage => "coverage",
            MetricFamily::Constraint => "constraint",
            MetricFamily::Similarity => "similarity",
            MetricFamily::Relationship => "relationship",
        })
    }
}

/// Runs every applicable metric per column and per column pair. When there
/// are more eligible pairs than `pair_budget`, a seeded uniform subset is
/// evaluated.
pub fn quality_report(real: &Table, gen: &Table, pair_budget: usize, seed: u64) -> Result<QualityReport, MetricError> {
    if real.schema() != gen.schema() {
        return Err(MetricError::SchemaMismatch);
    }
    let cols = real.schema().columns();
    let mut column_scores = Vec::new();
    let mut pair_scores = Vec::new();
    let mut skipped = Vec::new();
    let mut record = |out: &mut Vec<MetricScore>, metric: &str, names: Vec<String>, r: Result<MetricScore, MetricError>| {
        match r {
            Ok(mut s) => {
                s.columns = names;
                out.push(s);
            }
            Err(e) => skipped.push(SkippedMetric { metric: metric.to_string(), columns: names, reason: e.to_string() }),
        }
    };
    for (i, c) in cols.iter().enumerate() {
        let (r, g) = (real.column(i), gen.column(i));
        let name = || vec![c.name.clone()];
        if c.kind.is_numeric() {
            record(&mut column_scores, "range_coverage", name(), range_coverage(r, g));
            record(&mut column_scores, "boundary_adherence", name(), boundary_adherence(r, g));
            record(&mut column_scores, "ks_complement", name(), ks_complement(r, g));
            for stat in [Statistic::Mean, Statistic::Median, Statistic::Std] {
                record(&mut column_scores, stat.metric_name(), name(), statistic_similarity(r, g, stat));
            }
        } else {
            record(&mut column_scores, "category_coverage", name(), category_coverage(r, g));
            record(&mut column_scores, "tvd_complement", name(), tvd_complement(r, g));
        }
        record(&mut column_scores, "missing_value_similarity", name(), Ok(missing_value_similarity(r, g)));
    }

    let mut pairs = Vec::new();
    for i in 0..cols.len() {
        for j in i + 1..cols.len() {
            if cols[i].kind.is_numeric() == cols[j].kind.is_numeric() {
                pairs.push((i, j));
            }
        }
    }
    if pairs.len() > pair_budget {
        let mut rng = seeded_rng(seed);
        let mut chosen = index::sample(&mut rng, pairs.len(), pair_budget).into_vec();
        chosen.sort_unstable();
        pairs = chosen.into_iter().map(|k| pairs[k]).collect();
    }
    for (i, j) in pairs {
        let names = || vec![cols[i].name.clone(), cols[j].name.clone()];
        let r = (real.column(i), real.column(j));
        let g = (gen.column(i), gen.column(j));
        if matches!(cols[i].kind, ColumnKind::Continuous { .. } | ColumnKind::Mixed { .. }) {
            for method in [Correlation::Pearson, Correlation::Spearman] {
                record(&mut pair_scores, method.metric_name(), names(), correlation_similarity(r, g, method));
            }
        } else {
            record(&mut pair_scores, "contingency_similarity", names(), contingency_similarity(r, g));
        }
    }

    let all = || column_scores.iter().chain(&pair_scores);
    let metric_means = aggregate(all().map(|s| (s.metric.clone(), s.value)));
    let family_means = aggregate(all().map(|s| (s.family, s.value)));
    let count = all().count();
    let overall = if count == 0 { 1.0 } else { all().map(|s| s.value).sum::<f64>() / count as f64 };
    Ok(QualityReport {
        column_scores,
        pair_scores,
        skipped,
        metric_means,
        family_means,
        overall,
        real_rows: real.row_count(),
        generated_rows: gen.row_count(),
        pair_budget,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ColumnSchema, TableSchema};
    use proptest::prelude::*;

    fn toks(v: &[&str]) -> Vec<Value> {
        v.iter().map(|s| Value::token(s)).collect()
    }

    fn nums(v: &[f64]) -> Vec<Value> {
        v.iter().map(|x| Value::Real(*x)).collect()
    }

    #[test]
    fn category_coverage_examples() {
        assert_eq!(category_coverage(&toks(&["A", "B", "C", "D"]), &toks(&["A", "B"])).unwrap().value, 0.5);
        let s = category_coverage(&toks(&["A", "B"]), &toks(&["A", "B", "E"])).unwrap();
        assert_eq!(s.value, 1.0);
        assert_eq!(s.notes, vec!["E".to_string()]);
        assert_eq!(category_coverage(&[], &toks(&["A"])), Err(MetricError::Empty("real")));
    }

    #[test]
    fn range_coverage_examples() {
        let real = nums(&[0.0, 10.0, 5.0]);
        assert_eq!(range_coverage(&real, &nums(&[2.0, 8.0])).unwrap().value, 0.6);
        assert_eq!(range_coverage(&real, &real).unwrap().value, 1.0);
        assert_eq!(range_coverage(&real, &nums(&[5.0, 5.0])).unwrap().value, 0.0);
        assert_eq!(range_coverage(&nums(&[1.0, 1.0]), &real), Err(MetricError::ZeroRange));
    }

    #[test]
    fn boundary_adherence_examples() {
        let real = nums(&[0.0, 10.0]);
        let s = boundary_adherence(&real, &nums(&[1.0, 5.0, 11.0])).unwrap();
        assert!((s.value - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(boundary_adherence(&real, &nums(&[10.0])).unwrap().value, 1.0);
        assert_eq!(boundary_adherence(&real, &[Value::Null]), Err(MetricError::Empty("generated")));
    }

    #[test]
    fn ks_examples() {
        let zeros = nums(&[0.0; 10]);
        let ones = nums(&[1.0; 10]);
        assert_eq!(ks_complement(&zeros, &ones).unwrap().value, 0.0);
        assert_eq!(ks_complement(&zeros, &zeros).unwrap().value, 1.0);
        let mut rng = seeded_rng(1);
        use rand::Rng;
        let a: Vec<Value> = (0..10_000).map(|_| Value::Real(rng.gen_range(0.0..1.0))).collect();
        let b: Vec<Value> = (0..10_000).map(|_| Value::Real(rng.gen_range(0.5..1.5))).collect();
        assert!((ks_complement(&a, &b).unwrap().value - 0.5).abs() < 0.02);
    }

    #[test]
    fn tvd_examples() {
        let real = toks(&["a", "b"]);
        let gen = toks(&["a", "a", "a", "b", "b", "b", "b", "b", "b", "b"]);
        assert!((tvd_complement(&real, &gen).unwrap().value - 0.8).abs() < 1e-15);
        assert_eq!(tvd_complement(&real, &toks(&["c"])).unwrap().value, 0.0);
        assert_eq!(tvd_complement(&real, &real).unwrap().value, 1.0);
    }

    #[test]
    fn missing_value_examples() {
        let mut a = nums(&[1.0; 10]);
        let mut b = nums(&[1.0; 10]);
        assert_eq!(missing_value_similarity(&a, &b).value, 1.0);
        a[0] = Value::Null;
        for v in b.iter_mut().take(3) {
            *v = Value::Null;
        }
        assert!((missing_value_similarity(&a, &b).value - 0.8).abs() < 1e-15);
        assert_eq!(missing_value_similarity(&nums(&[1.0]), &[Value::Null]).value, 0.0);
    }

    #[test]
    fn statistic_examples() {
        let real = nums(&[0.0, 10.0, 5.0]);
        let gen = nums(&[6.0]);
        assert!((statistic_similarity(&real, &gen, Statistic::Mean).unwrap().value - 0.9).abs() < 1e-15);
        assert_eq!(statistic_similarity(&real, &nums(&[100.0]), Statistic::Mean).unwrap().value, 0.0);
        assert_eq!(statistic_similarity(&real, &real, Statistic::Std).unwrap().value, 1.0);
    }

    #[test]
    fn contingency_examples() {
        let x = toks(&["0", "1"]);
        let y = toks(&["0", "1"]);
        let y_anti = toks(&["1", "0"]);
        assert_eq!(contingency_similarity((&x, &y), (&x, &y_anti)).unwrap().value, 0.0);
        let a: Vec<Value> = (0..100).map(|i| Value::token(if i % 2 == 0 { "p" } else { "q" })).collect();
        let b: Vec<Value> = (0..100).map(|i| Value::token(if i % 3 == 0 { "u" } else { "v" })).collect();
        let mut b2 = b.clone();
        b2[1] = Value::token("u");
        assert!((contingency_similarity((&a, &b), (&a, &b2)).unwrap().value - 0.99).abs() < 1e-12);
    }

    #[test]
    fn correlation_examples() {
        let x = nums(&[1.0, 2.0, 3.0, 4.0]);
        let up = nums(&[2.0, 4.0, 6.0, 8.0]);
        let down = nums(&[8.0, 6.0, 4.0, 2.0]);
        assert_eq!(correlation_similarity((&x, &up), (&x, &down), Correlation::Pearson).unwrap().value, 0.0);
        assert_eq!(correlation_similarity((&x, &up), (&x, &up), Correlation::Spearman).unwrap().value, 1.0);
        let flat = nums(&[1.0; 4]);
        assert_eq!(
            correlation_similarity((&x, &flat), (&x, &up), Correlation::Pearson),
            Err(MetricError::ZeroVariance)
        );
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn cardinality_examples() {
        assert!((cardinality_similarity(&[1, 1, 2, 2], &[1, 2, 2, 2]).unwrap().value - 0.75).abs() < 1e-15);
        assert_eq!(cardinality_similarity(&[2, 2], &[5, 5]).unwrap().value, 0.0);
        assert_eq!(cardinality_similarity(&[3, 1, 2], &[1, 2, 3]).unwrap().value, 1.0);
    }

    fn report_table(shift: f64) -> Table {
        let schema = TableSchema::new(vec![
            ColumnSchema::continuous("x"),
            ColumnSchema::continuous("y"),
            ColumnSchema::categorical("c", &["a", "b"]),
            ColumnSchema::categorical("d", &["u", "v", "w"]),
        ])
        .unwrap();
        let rows = (0..40)
            .map(|i| {
                let x = (i % 11) as f64;
                vec![
                    Value::Real(x + shift),
                    Value::Real(x * x - i as f64),
                    Value::token(if i % 2 == 0 { "a" } else { "b" }),
                    Value::token(["u", "v", "w"][i % 3]),
                ]
            })
            .collect();
        Table::from_rows(schema, rows).unwrap()
    }

    #[test]
    fn self_report_is_all_ones() {
        let t = report_table(0.0);
        let r = quality_report(&t, &t, 10, 0).unwrap();
        assert!(r.skipped.is_empty());
        assert!(r.scores().all(|s| s.value == 1.0));
        assert_eq!(r.overall, 1.0);
        assert_eq!(r.family_means.len(), 4);
    }

    #[test]
    fn shifted_column_report() {
        let real = report_table(0.0);
        let gen = report_table(1.0); // range of x is 10
        let r = quality_report(&real, &gen, 10, 0).unwrap();
        assert!((r.find("mean_similarity", &["x"]).unwrap().value - 0.9).abs() < 1e-12);
        for s in r.scores().filter(|s| matches!(s.metric.as_str(), "category_coverage" | "tvd_complement" | "contingency_similarity")) {
            assert_eq!(s.value, 1.0);
        }
        for agg in &r.metric_means {
            let parts: Vec<f64> = r.scores().filter(|s| s.metric == agg.name).map(|s| s.value).collect();
            assert!((agg.value - parts.iter().sum::<f64>() / parts.len() as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn pair_budget_limits_pairs() {
        let t = report_table(0.0);
        let r = quality_report(&t, &t, 1, 5).unwrap();
        let pairs: BTreeSet<Vec<String>> = r.pair_scores.iter().map(|s| s.columns.clone()).collect();
        assert_eq!(pairs.len(), 1);
        assert_eq!(quality_report(&t, &t, 1, 5).unwrap(), r);
    }

    #[test]
    fn schema_mismatch_rejected() {
        let t = report_table(0.0);
        let other = Table::empty(TableSchema::new(vec![ColumnSchema::continuous("x")]).unwrap());
        assert_eq!(quality_report(&t, &other, 1, 0), Err(MetricError::SchemaMismatch));
    }

    fn small_reals() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec((0i32..20).prop_map(|v| v as f64 / 2.0), 2..40)
    }

    fn small_tokens() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d"]).prop_map(String::from), 1..40)
    }

    fn as_values(v: &[f64]) -> Vec<Value> {
        nums(v)
    }

    fn as_tokens(v: &[String]) -> Vec<Value> {
        v.iter().map(|s| Value::Token(s.clone())).collect()
    }

    proptest! {
        #[test]
        fn scores_stay_in_unit_interval(a in small_reals(), b in small_reals(), s in small_tokens(), t in small_tokens()) {
            let (ra, rb) = (as_values(&a), as_values(&b));
            let (ts, tt) = (as_tokens(&s), as_tokens(&t));
            let mut scores = vec![
                ks_complement(&ra, &rb).unwrap().value,
                boundary_adherence(&ra, &rb).unwrap().value,
                tvd_complement(&ts, &tt).unwrap().value,
                category_coverage(&ts, &tt).unwrap().value,
                missing_value_similarity(&ra, &tt).value,
            ];
            if let Ok(sc) = range_coverage(&ra, &rb) { scores.push(sc.value); }
            for st in [Statistic::Mean, Statistic::Median, Statistic::Std] {
                if let Ok(sc) = statistic_similarity(&ra, &rb, st) { scores.push(sc.value); }
            }
            for v in scores {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn symmetric_metrics_swap(a in small_reals(), b in small_reals(), s in small_tokens(), t in small_tokens()) {
            let (ra, rb) = (as_values(&a), as_values(&b));
            let (ts, tt) = (as_tokens(&s), as_tokens(&t));
            prop_assert_eq!(ks_complement(&ra, &rb).unwrap().value, ks_complement(&rb, &ra).unwrap().value);
            let x = tvd_complement(&ts, &tt).unwrap().value;
            let y = tvd_complement(&tt, &ts).unwrap().value;
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}
