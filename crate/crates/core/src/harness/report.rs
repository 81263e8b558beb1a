use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::{HarnessError, TradeoffReport};
use crate::dp::Epsilon;

pub const REPORT_HEADER: &str =
    "epsilon,trial,seed,accuracy,bytes_owner_to_fog,bytes_fog_to_cloud,sim_time_s";

fn format_epsilon(e: Epsilon) -> String {
    if e.is_infinite() {
        "inf".to_string()
    } else {
        format!("{:.6}", e.value())
    }
}

/// The report CSV as a string: header, then one line per row.
pub fn format_report(report: &TradeoffReport) -> String {
    let mut s = String::with_capacity(64 * (report.rows.len() + 1));
    s.push_str(REPORT_HEADER);
    s.push('\n');
    for r in &report.rows {
        s.push_str(&format!(
            "{},{},{},{:.6},{},{},{:.6}\n",
            format_epsilon(r.epsilon),
            r.trial,
            r.seed,
            r.accuracy,
            r.bytes_owner_to_fog,
            r.bytes_fog_to_cloud,
            r.sim_time_s
        ));
    }
    s
}

pub fn emit_report(report: &TradeoffReport, path: &Path) -> Result<(), HarnessError> {
    if report.rows.is_empty() {
        return Err(HarnessError::Config("refusing to write an empty report".into()));
    }
    std::fs::write(path, format_report(report)).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Serialize)]
struct RowHeader {
    epsilon: String,
    trial: usize,
    seed: u64,
}

/// Writes each row's event log as JSON lines, preceded by one header line
/// naming the row.
pub fn write_event_logs(
    report: &TradeoffReport,
    path: &Path,
    verbose: bool,
) -> Result<(), HarnessError> {
    let io_err = |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    for (row, log) in report.rows.iter().zip(&report.logs) {
        serde_json::to_writer(
            &mut out,
            &RowHeader {
                epsilon: format_epsilon(row.epsilon),
                trial: row.trial,
                seed: row.seed,
            },
        )
        .map_err(|e| io_err(e.into()))?;
        out.write_all(b"\n").map_err(io_err)?;
        log.write_jsonl(&mut out, verbose).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::TradeoffRow;

    fn report() -> TradeoffReport {
        TradeoffReport {
            rows: vec![TradeoffRow {
                epsilon: Epsilon::INFINITY,
                trial: 0,
                seed: 17,
                accuracy: 0.95,
                bytes_owner_to_fog: 1000,
                bytes_fog_to_cloud: 1200,
                sim_time_s: 0.1234567,
            }],
            ..Default::default()
        }
    }

    #[test]
    fn one_row_two_lines_with_inf() {
        let text = format_report(&report());
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], REPORT_HEADER);
        assert_eq!(lines[1], "inf,0,17,0.950000,1000,1200,0.123457");
    }

    #[test]
    fn finite_epsilon_six_decimals() {
        let mut r = report();
        r.rows[0].epsilon = Epsilon::new(0.1).unwrap();
        assert!(format_report(&r).lines().nth(1).unwrap().starts_with("0.100000,"));
    }

    #[test]
    fn re_emit_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
        emit_report(&report(), &a).unwrap();
        emit_report(&report(), &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn unwritable_and_empty() {
        assert!(matches!(
            emit_report(&report(), Path::new("/nonexistent-dir/r.csv")),
            Err(HarnessError::Io { .. })
        ));
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_report(&TradeoffReport::default(), &dir.path().join("e.csv")).is_err());
    }
}
