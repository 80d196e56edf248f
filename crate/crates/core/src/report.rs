//! CSV outputs and the console summary of a batch.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::experiment::{BatchMetrics, RunResult};

/// `step,filter,rmse_x,rmse_y`
pub fn metrics_csv(metrics: &BatchMetrics) -> String {
    let mut out = String::from("step,filter,rmse_x,rmse_y\n");
    let steps = metrics.filters.first().map_or(0, |f| f.rmse_x.len());
    for k in 0..steps {
        for f in &metrics.filters {
            let _ = writeln!(out, "{},{},{},{}", k + 1, f.label, f.rmse_x[k], f.rmse_y[k]);
        }
    }
    out
}

/// `run,filter,step,distinct_count`
pub fn diversity_csv(labels: &[String], runs: &[RunResult]) -> String {
    let mut out = String::from("run,filter,step,distinct_count\n");
    for r in runs {
        for (label, trace) in labels.iter().zip(&r.traces) {
            for (k, d) in trace.distinct.iter().enumerate() {
                let _ = writeln!(out, "{},{},{},{}", r.run, label, k + 1, d);
            }
        }
    }
    out
}

/// Per-run estimates next to the truth.
pub fn estimates_csv(labels: &[String], run: &RunResult) -> String {
    let mut out = String::from(
        "step,filter,x,vx,y,vy,true_x,true_vx,true_y,true_vy,joint_acceptance,refine_acceptance\n",
    );
    for (label, trace) in labels.iter().zip(&run.traces) {
        for (k, e) in trace.estimates.iter().enumerate() {
            let t = &run.truth[k];
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                k + 1,
                label,
                e[0],
                e[1],
                e[2],
                e[3],
                t[0],
                t[1],
                t[2],
                t[3],
                trace.joint_acceptance[k],
                trace.refine_acceptance[k]
            );
        }
    }
    out
}

pub fn write_batch(dir: &Path, labels: &[String], runs: &[RunResult], metrics: &BatchMetrics) -> Result<()> {
    fs::create_dir_all(dir.join("runs"))?;
    fs::write(dir.join("metrics.csv"), metrics_csv(metrics))?;
    fs::write(dir.join("diversity.csv"), diversity_csv(labels, runs))?;
    for r in runs {
        let run_dir = dir.join("runs").join(r.run.to_string());
        fs::create_dir_all(&run_dir)?;
        fs::write(run_dir.join("estimates.csv"), estimates_csv(labels, r))?;
        let failures: Vec<String> = labels
            .iter()
            .zip(&r.traces)
            .filter_map(|(l, t)| t.failure.as_ref().map(|f| format!("{l}: {f}")))
            .collect();
        if !failures.is_empty() {
            let mut f = fs::File::create(run_dir.join("failures.txt"))?;
            for line in failures {
                writeln!(f, "{line}")?;
            }
        }
    }
    Ok(())
}

/// Time-averaged RMSE and final-step diversity, one row per filter.
pub fn summary_table(metrics: &BatchMetrics, from_step: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<14} {:>8} {:>8} {:>14} {:>14} {:>16}",
        "filter", "runs", "failed", "mean_rmse_x", "mean_rmse_y", "final_distinct"
    );
    for f in &metrics.filters {
        let start = from_step.saturating_sub(1).min(f.rmse_x.len());
        let mean = |v: &[f64]| v[start..].iter().sum::<f64>() / (v.len() - start).max(1) as f64;
        let distinct = match (f.final_distinct_min, f.final_distinct_max) {
            (Some(lo), Some(hi)) => format!("{lo}..{hi}"),
            _ => "-".to_string(),
        };
        let _ = writeln!(
            out,
            "{:<14} {:>8} {:>8} {:>14.6} {:>14.6} {:>16}",
            f.label,
            f.completed_runs,
            f.failed_runs,
            mean(&f.rmse_x),
            mean(&f.rmse_y),
            distinct
        );
    }
    out
}
