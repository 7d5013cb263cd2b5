//! Flat CSV renderings of reports, query results and training logs.

use synoptic_core::gan::LogEntry;
use synoptic_core::metrics::QualityReport;
use synoptic_core::query::QueryResult;

use crate::io::{format_real, IoError};

fn render(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<String, IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| IoError::Format(e.to_string());
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| IoError::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| IoError::Format(e.to_string()))
}

fn cell(v: Option<f64>) -> String {
    v.map(format_real).unwrap_or_default()
}

/// `metric,family,columns,score`, pair columns joined with `;`.
pub fn quality_report_csv(report: &QualityReport) -> Result<String, IoError> {
    let header = ["metric", "family", "columns", "score"].map(String::from);
    render(
        &header,
        report.scores().map(|s| vec![s.metric.clone(), s.family.to_string(), s.columns.join(";"), format_real(s.value)]),
    )
}

/// Group columns, then aggregate columns; undefined values are empty.
pub fn query_result_csv(result: &QueryResult) -> Result<String, IoError> {
    let header: Vec<String> = result.group_columns.iter().chain(&result.aggregates).cloned().collect();
    render(
        &header,
        result.rows.iter().map(|r| {
            r.key.iter().map(|k| k.clone().unwrap_or_default()).chain(r.values.iter().map(|v| cell(*v))).collect()
        }),
    )
}

/// `epoch,term,value`
pub fn training_log_csv(log: &[LogEntry]) -> Result<String, IoError> {
    let header = ["epoch", "term", "value"].map(String::from);
    render(&header, log.iter().map(|e| vec![e.epoch.to_string(), e.term.clone(), format_real(e.value)]))
}
