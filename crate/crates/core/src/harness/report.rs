//! CSV and TOML output of run reports.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use super::RunReport;

pub const CURVE_FILE: &str = "curve.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const REPORT_FILE: &str = "report.toml";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("cannot serialize report: {0}")]
    Serialize(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// `batch,mean_score,std_error`, one line per curve point.
pub fn write_curve_csv<W: Write>(report: &RunReport, mut w: W) -> io::Result<()> {
    writeln!(w, "batch,mean_score,std_error")?;
    for p in &report.curve {
        writeln!(w, "{},{},{}", p.batch, p.mean_score, p.std_error)?;
    }
    Ok(())
}

/// `agent,avg_training,asymptotic`, one line per report.
pub fn write_summary_csv<W: Write>(reports: &[&RunReport], mut w: W) -> io::Result<()> {
    writeln!(w, "agent,avg_training,asymptotic")?;
    for r in reports {
        writeln!(w, "{},{},{}", r.agent, r.avg_training, r.asymptotic)?;
    }
    Ok(())
}

pub fn report_to_toml(report: &RunReport) -> Result<String, ReportError> {
    toml::to_string(report).map_err(|e| ReportError::Serialize(e.to_string()))
}

/// Reads a report written by [`write_run_outputs`]; `path` may be the report
/// file or the directory holding it.
pub fn read_report(path: &Path) -> Result<RunReport, ReportError> {
    let file = if path.is_dir() {
        path.join(REPORT_FILE)
    } else {
        path.to_path_buf()
    };
    let text = fs::read_to_string(&file).map_err(io_err(&file))?;
    toml::from_str(&text).map_err(|e| ReportError::Parse {
        path: file.display().to_string(),
        message: e.to_string(),
    })
}

/// Writes the curve, the one-line summary and the full report into `dir`.
pub fn write_run_outputs(report: &RunReport, dir: &Path) -> Result<(), ReportError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut curve = Vec::new();
    write_curve_csv(report, &mut curve).expect("write to memory");
    let mut summary = Vec::new();
    write_summary_csv(&[report], &mut summary).expect("write to memory");
    for (name, bytes) in [
        (CURVE_FILE, curve),
        (SUMMARY_FILE, summary),
        (REPORT_FILE, report_to_toml(report)?.into_bytes()),
    ] {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(io_err(&path))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::Domain;
    use crate::harness::{CurvePoint, Protocol};

    fn sample() -> RunReport {
        RunReport {
            agent: "QS".into(),
            domain: Domain::Pursuit,
            higher_is_better: false,
            seed: 3,
            protocol: Protocol::new(200, 100, 10, 2),
            avg_training: 150.25,
            avg_training_se: 1.5,
            asymptotic: 100.5,
            asymptotic_se: 0.1,
            mean_update_targets: 11.0,
            curve: vec![
                CurvePoint {
                    batch: 1,
                    mean_score: 200.0,
                    std_error: 2.0,
                },
                CurvePoint {
                    batch: 2,
                    mean_score: 100.5,
                    std_error: 0.1,
                },
            ],
        }
    }

    #[test]
    fn curve_csv_format() {
        let mut out = Vec::new();
        write_curve_csv(&sample(), &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "batch,mean_score,std_error\n1,200,2\n2,100.5,0.1\n"
        );
    }

    #[test]
    fn report_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let r = sample();
        write_run_outputs(&r, dir.path()).unwrap();
        assert_eq!(read_report(dir.path()).unwrap(), r);
        let summary = fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap();
        assert_eq!(summary, "agent,avg_training,asymptotic\nQS,150.25,100.5\n");
    }
}
