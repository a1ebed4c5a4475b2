//! File formats: experiment configs, sample and report CSVs, distribution
//! snapshots.

pub mod config;
pub mod report;
pub mod samples;

/// Shortest decimal form that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub(crate) fn csv_line(e: &csv::Error) -> usize {
    e.position().map(|p| p.line() as usize).unwrap_or(0)
}
