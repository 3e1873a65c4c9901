//! CSV and text writers. All files use LF line endings and `.` decimals.
//!
//! Floats are written with Rust's shortest round-trip formatting, which
//! never depends on locale.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use procrustes_core::learn::WeightParams;

use crate::runner::{ConvergenceRow, TrialResult};
use crate::BenchError;

pub const RESULTS_HEADER: &str = "trial,c,rho,pair,method,N,K,distance,wall_time_ms";

pub fn result_line(r: &TrialResult) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}",
        r.trial, r.c, r.rho, r.pair, r.method, r.n, r.k, r.distance, r.wall_time_ms
    )
}

pub fn results_csv(rows: &[TrialResult]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(RESULTS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&result_line(r));
        out.push('\n');
    }
    out
}

/// Drops the trailing `wall_time_ms` column from every line, for
/// reproducibility comparisons.
pub fn strip_timing(csv: &str) -> String {
    csv.lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head))
        .fold(String::new(), |mut acc, l| {
            acc.push_str(l);
            acc.push('\n');
            acc
        })
}

/// `raw = ln ω` is written alongside `ω` because learned weights can
/// underflow to `ω = 0` while `raw` stays finite; readers should use `raw`.
pub fn weights_csv(weights: &WeightParams, rho: f64) -> String {
    let mut out = format!("# rho={rho} K={}\nindex,omega,raw\n", weights.len());
    for (i, (w, r)) in weights.omega().iter().zip(weights.raw()).enumerate() {
        let _ = writeln!(out, "{i},{w},{r}");
    }
    out
}

/// Parses [`weights_csv`] output.
pub fn parse_weights(text: &str) -> Result<WeightParams, BenchError> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    if lines.next() != Some("index,omega,raw") {
        return Err(BenchError::Config("weights file lacks the index,omega,raw header".into()));
    }
    let raw = lines
        .map(|line| {
            line.rsplit_once(',')
                .and_then(|(_, r)| r.trim().parse::<f64>().ok())
                .filter(|r| r.is_finite())
                .ok_or_else(|| BenchError::Config(format!("bad weight line '{line}'")))
        })
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(WeightParams::from_raw(raw))
}

pub fn loss_trace_csv(trace: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (epoch, loss) in trace.iter().enumerate() {
        let _ = writeln!(out, "{epoch},{loss}");
    }
    out
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = String::from("n,d_gbw,d_bw\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.n, r.gbw, r.bw);
    }
    out
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), BenchError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}
