//! Per-iteration run traces, their CSV persistence, and plot-data emission.
//!
//! The trace schema is fixed: `k,rel_error,lambda_dist,kkt_r1,kkt_r2,kkt_r3,wall_ms`.
//! Floats are written in shortest round-trip form, so re-parsing a trace
//! recovers the exact values; everything except the wall-clock column is
//! deterministic for a given config.

use std::fmt;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Converged,
    BudgetExhausted,
    Diverged,
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RunStatus::Converged => "converged",
            RunStatus::BudgetExhausted => "budget-exhausted",
            RunStatus::Diverged => "diverged",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub rel_error: f64,
    pub lambda_dist: f64,
    pub kkt: [f64; 3],
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
    pub status: RunStatus,
}

impl RunTrace {
    pub fn final_rel_error(&self) -> f64 {
        self.rows.last().map_or(f64::INFINITY, |r| r.rel_error)
    }

    /// First iteration whose relative error is at or below the target.
    pub fn iterations_to_target(&self, target: f64) -> Option<usize> {
        self.rows
            .iter()
            .find(|r| r.rel_error <= target)
            .map(|r| r.k)
    }

    pub fn lambda_dists(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.lambda_dist).collect()
    }

    /// Mean per-iteration wall time over the stepped rows (k >= 1).
    pub fn mean_wall_ms(&self) -> f64 {
        let stepped: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.k > 0)
            .map(|r| r.wall_ms)
            .collect();
        if stepped.is_empty() {
            0.0
        } else {
            stepped.iter().sum::<f64>() / stepped.len() as f64
        }
    }
}

pub const TRACE_HEADER: &str = "k,rel_error,lambda_dist,kkt_r1,kkt_r2,kkt_r3,wall_ms";

pub fn write_trace_csv(trace: &RunTrace, path: &Path) -> Result<()> {
    let mut out = String::with_capacity(trace.rows.len() * 64);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in &trace.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.k, r.rel_error, r.lambda_dist, r.kkt[0], r.kkt[1], r.kkt[2], r.wall_ms
        ));
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn read_trace_rows(path: &Path) -> Result<Vec<TraceRow>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading trace {}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    match lines.next() {
        Some(header) if header.trim() == TRACE_HEADER => {}
        other => bail!("unexpected trace header: {other:?}"),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            bail!("trace line {} has {} fields", idx + 2, fields.len());
        }
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .with_context(|| format!("bad float {s:?} on trace line {}", idx + 2))
        };
        rows.push(TraceRow {
            k: fields[0].trim().parse().context("bad iteration index")?,
            rel_error: num(fields[1])?,
            lambda_dist: num(fields[2])?,
            kkt: [num(fields[3])?, num(fields[4])?, num(fields[5])?],
            wall_ms: num(fields[6])?,
        });
    }
    Ok(rows)
}

/// Long-format plot data over several labeled traces:
/// `label,iteration,rel_error,status`, one row per recorded iteration
/// (diverged traces simply stop at their last recorded row).
pub fn emit_plot_data(traces: &[(String, &RunTrace)], path: &Path) -> Result<()> {
    if traces.is_empty() {
        bail!("no traces to plot");
    }
    let file = std::fs::File::create(path)
        .with_context(|| format!("creating plot data {}", path.display()))?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(
        out,
        "# relative error vs iteration; log-scale y recommended"
    )?;
    writeln!(out, "label,iteration,rel_error,status")?;
    for (label, trace) in traces {
        for r in &trace.rows {
            writeln!(out, "{label},{},{},{}", r.k, r.rel_error, trace.status)?;
        }
    }
    Ok(())
}

/// Re-derives the relative-error column from persisted x iterates for a
/// few randomly chosen rows; any drift beyond round-off means the trace
/// and the iterates no longer belong together.
pub fn spot_check_rel_errors(
    rows: &[TraceRow],
    x_iterates: &[Vec<f64>],
    x_star: &[f64],
    samples: usize,
    seed: u64,
) -> Result<()> {
    use rand::Rng;
    use rand::SeedableRng;

    if rows.len() != x_iterates.len() {
        bail!(
            "trace has {} rows but {} iterates were persisted",
            rows.len(),
            x_iterates.len()
        );
    }
    let denom = linalg::norm2(x_star).max(f64::MIN_POSITIVE);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let idx = rng.random_range(0..rows.len());
        let recomputed = linalg::dist2(&x_iterates[idx], x_star) / denom;
        let recorded = rows[idx].rel_error;
        let err = (recomputed - recorded).abs() / recorded.abs().max(1e-300);
        if err > 1e-12 {
            bail!("row {idx}: recorded rel_error {recorded} but iterates give {recomputed}");
        }
    }
    Ok(())
}
