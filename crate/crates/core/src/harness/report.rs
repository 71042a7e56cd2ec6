//! CSV tables and plot series. Errors are relative fractions, not percent.

use std::path::Path;

use serde::Serialize;

use super::{report_timing, SteadyReport, TimeReport, TimingLog, TimingRow};
use crate::error::Result;
use crate::metrics::ErrorReport;
use crate::surrogate::EpochLoss;

#[derive(Serialize)]
struct ErrorRow {
    key: usize,
    mean: f64,
    min: f64,
    max: f64,
    one_sample: Option<f64>,
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Rows keyed by `key_name` (`nb` for tables, `step` for series) with
/// mean/min/max/one-sample columns.
pub fn write_error_table<'a>(
    path: &Path,
    key_name: &str,
    rows: impl IntoIterator<Item = (usize, &'a ErrorReport)>,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record([key_name, "mean", "min", "max", "one_sample"])?;
    for (key, r) in rows {
        w.serialize(ErrorRow {
            key,
            mean: r.mean,
            min: r.min,
            max: r.max,
            one_sample: r.highlight,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_history(path: &Path, history: &[EpochLoss]) -> Result<()> {
    write_rows(path, history)
}

pub fn write_timing(path: &Path, rows: &[TimingRow]) -> Result<()> {
    write_rows(path, rows)
}

#[derive(Serialize, serde::Deserialize)]
struct TimingSample {
    quantity: String,
    seconds: f64,
}

pub fn write_timing_samples(path: &Path, log: &TimingLog) -> Result<()> {
    write_rows(
        path,
        log.samples.iter().map(|(q, s)| TimingSample {
            quantity: q.clone(),
            seconds: *s,
        }),
    )
}

pub fn read_timing_samples(path: &Path) -> Result<TimingLog> {
    let mut r = csv::Reader::from_path(path)?;
    let mut log = TimingLog::default();
    for row in r.deserialize() {
        let s: TimingSample = row?;
        log.record(s.quantity, s.seconds);
    }
    Ok(log)
}

/// Basis, L² and H¹ tables of the steady run.
pub fn write_steady_report(dir: &Path, report: &SteadyReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let rows = &report.rows;
    write_error_table(&dir.join("steady_basis_error.csv"), "nb", rows.iter().map(|r| (r.nb, &r.basis)))?;
    write_error_table(&dir.join("steady_l2_error.csv"), "nb", rows.iter().map(|r| (r.nb, &r.l2)))?;
    write_error_table(&dir.join("steady_h1_error.csv"), "nb", rows.iter().map(|r| (r.nb, &r.h1)))?;
    Ok(())
}

/// Last-step and Bochner tables plus one series file per `Nb` and quantity.
pub fn write_time_report(dir: &Path, report: &TimeReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let rows = &report.rows;
    write_error_table(&dir.join("time_last_l2_error.csv"), "nb", rows.iter().map(|r| (r.nb, &r.last_l2)))?;
    write_error_table(&dir.join("time_last_h1_error.csv"), "nb", rows.iter().map(|r| (r.nb, &r.last_h1)))?;
    write_error_table(&dir.join("time_bochner_l2_error.csv"), "nb", rows.iter().map(|r| (r.nb, &r.bochner_l2)))?;
    write_error_table(&dir.join("time_bochner_h1_error.csv"), "nb", rows.iter().map(|r| (r.nb, &r.bochner_h1)))?;
    for r in rows {
        let s = &r.series;
        let name = |q: &str| dir.join(format!("time_series_nb{}_{q}.csv", r.nb));
        write_error_table(&name("basis"), "step", s.iter().map(|p| (p.step, &p.basis)))?;
        write_error_table(&name("l2"), "step", s.iter().map(|p| (p.step, &p.l2)))?;
        write_error_table(&name("h1"), "step", s.iter().map(|p| (p.step, &p.h1)))?;
    }
    Ok(())
}

/// Summarizes raw timing samples into `timing.csv` and returns the rows.
pub fn write_timing_report(dir: &Path, log: &TimingLog) -> Result<Vec<TimingRow>> {
    std::fs::create_dir_all(dir)?;
    let rows = report_timing(log);
    write_timing(&dir.join("timing.csv"), &rows)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::aggregate;

    #[test]
    fn error_table_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let a = aggregate(&[0.5, 0.25], Some(0)).unwrap();
        let b = aggregate(&[0.125], None).unwrap();
        write_error_table(&p, "nb", [(2, &a), (4, &b)]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "nb,mean,min,max,one_sample\n2,0.375,0.25,0.5,0.5\n4,0.125,0.125,0.125,\n");
    }

    #[test]
    fn timing_samples_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let mut log = TimingLog::default();
        log.record("x", 0.1);
        log.record("y", 2.5e-4);
        write_timing_samples(&p, &log).unwrap();
        assert_eq!(read_timing_samples(&p).unwrap(), log);
        let rows = write_timing_report(dir.path(), &log).unwrap();
        let text = std::fs::read_to_string(dir.path().join("timing.csv")).unwrap();
        assert!(text.starts_with("quantity,count,mean,min,max\n"));
        assert_eq!(rows.len(), 2);
    }
}
