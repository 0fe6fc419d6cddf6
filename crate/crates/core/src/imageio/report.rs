use std::fs;
use std::io::Write;
use std::path::Path;

use crate::edges::CannyParams;
use crate::error::{Error, Result};
use crate::metrics::EvalReport;

/// Writes a report as pretty-printed JSON followed by a newline.
pub fn write_report(report: &EvalReport, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report).map_err(|e| Error::from(e).in_file(path))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::from(e).in_file(path))
}

pub fn read_report(path: &Path) -> Result<EvalReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
    serde_json::from_str(&text).map_err(|e| Error::from(e).in_file(path))
}

/// Column names of the summary table for the given threshold pairs.
pub fn table_header(presets: &[CannyParams]) -> Vec<String> {
    let mut h: Vec<String> = [
        "method", "delta1", "delta2", "delta3", "rel", "log10", "rmse_lin", "rmse_log",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend(
        presets
            .iter()
            .map(|p| format!("dbe_acc_{}_{}", p.sigma_low, p.sigma_high)),
    );
    h
}

/// One summary-table line: a method name and its aggregate report.
pub struct TableRow<'a> {
    pub method: &'a str,
    pub report: &'a EvalReport,
}

fn cell(v: f64) -> String {
    format!("{v:.3}")
}

/// Writes the summary table, one row per method. Boundary columns follow the
/// threshold pairs of the first report's configuration; scores that are
/// undefined for a method are written as `undefined`.
pub fn write_table_csv<W: Write>(out: W, rows: &[TableRow<'_>]) -> Result<()> {
    let presets = rows
        .first()
        .map(|r| r.report.config.canny.clone())
        .unwrap_or_else(crate::edges::default_presets);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(table_header(&presets))?;
    for row in rows {
        let r = row.report;
        let mut rec = vec![row.method.to_string()];
        rec.extend(
            [r.delta1, r.delta2, r.delta3, r.rel, r.log10, r.rmse_lin, r.rmse_log]
                .into_iter()
                .map(cell),
        );
        for p in &presets {
            rec.push(match r.dbe_acc.get(&p.key()).copied().flatten() {
                Some(v) => cell(v),
                None => "undefined".to_string(),
            });
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
