//! CSV and JSON emission.
//!
//! - `summary.csv`: one row per sweep point and model.
//! - `trials_<point>.csv`: one row per trial and model.
//! - `report.json`: everything above plus the configuration echo and build metadata.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::sweep::{ExperimentReport, PointReport};

pub const SUMMARY_HEADER: &str = "sweep_param,sweep_value,model,n_trials,vpt_mean,vpt_stderr,vpt_median,vpt_q1,vpt_q3,map_err_mean,map_err_stderr,diverged_frac";
pub const TRIALS_HEADER: &str = "trial,seed,model,vpt_lyap,map_err_mean,diverged";

/// Version string of this build (`git describe` when available).
pub const BUILD_DESCRIBE: &str = env!("HYBRID_RC_GIT_DESCRIBE");

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn summary_csv(report: &ExperimentReport) -> String {
    let mut out = String::new();
    writeln!(out, "{SUMMARY_HEADER}").unwrap();
    for p in &report.points {
        for s in &p.summaries {
            let v = s.vpt;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                csv_field(&p.sweep_param),
                csv_field(&p.sweep_value),
                s.model,
                s.n_trials,
                opt(v.map(|v| v.mean)),
                opt(v.map(|v| v.stderr)),
                opt(v.map(|v| v.median)),
                opt(v.map(|v| v.q1)),
                opt(v.map(|v| v.q3)),
                opt(s.map_error.map(|m| m.mean)),
                opt(s.map_error.map(|m| m.stderr)),
                s.diverged_frac,
            )
            .unwrap();
        }
    }
    out
}

pub fn trials_csv(point: &PointReport) -> String {
    let mut out = String::new();
    writeln!(out, "{TRIALS_HEADER}").unwrap();
    for r in &point.trials {
        let vpt = if r.failed() { String::new() } else { r.vpt_lyap.to_string() };
        writeln!(out, "{},{},{},{},{},{}", r.trial, r.seed, r.model, vpt, opt(r.mean_map_error), r.diverged).unwrap();
    }
    out
}

pub fn report_json(report: &ExperimentReport) -> serde_json::Value {
    serde_json::json!({
        "name": report.config.name,
        "build": BUILD_DESCRIBE,
        "wall_clock_seconds": report.wall_clock_seconds,
        "config": report.config,
        "failure_fraction": report.failure_fraction(),
        "points": report.points,
    })
}

fn write_file(path: &Path, contents: &[u8]) -> crate::Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(contents)?;
    Ok(())
}

/// Writes all outputs into `dir` (created if missing) and returns the written paths.
pub fn write_outputs(report: &ExperimentReport, dir: &Path) -> crate::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let summary = dir.join("summary.csv");
    write_file(&summary, summary_csv(report).as_bytes())?;
    written.push(summary);
    for (i, p) in report.points.iter().enumerate() {
        let path = dir.join(format!("trials_{i:03}.csv"));
        write_file(&path, trials_csv(p).as_bytes())?;
        written.push(path);
    }
    let json = dir.join("report.json");
    write_file(&json, serde_json::to_string_pretty(&report_json(report))?.as_bytes())?;
    written.push(json);
    Ok(written)
}
