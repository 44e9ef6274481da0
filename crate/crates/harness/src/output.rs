//! CSV and JSON artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::config::{ExperimentConfig, Setup};
use crate::error::{HarnessError, Result};
use crate::runner::{run_all, RunFailure, RunOutput};

pub const RECORD_HEADER: &str = "t,epoch,learner_loss,comparator_loss,cum_regret,eta,gamma,seed,algo";
pub const SUMMARY_HEADER: &str = "T,algo,mean_regret,stderr,runs";
pub const DECOMPOSITION_HEADER: &str = "t,error,bias1,reg,bias2,regret";

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn records_csv(run: &RunOutput) -> String {
    let mut out = String::with_capacity(64 * (run.records.len() + 1));
    out.push_str(RECORD_HEADER);
    out.push('\n');
    let (eta, gamma) = (float(run.eta), float(run.gamma));
    for r in &run.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.t,
            r.epoch,
            float(r.learner_loss),
            float(r.comparator_loss),
            float(r.cum_regret),
            eta,
            gamma,
            run.seed,
            run.algorithm
        );
    }
    out
}

/// Running sums of the four regret terms and of their total.
pub fn decomposition_csv(run: &RunOutput) -> String {
    let mut out = String::from(DECOMPOSITION_HEADER);
    out.push('\n');
    let mut acc = [0.0; 5];
    for (t, d) in run.decomposition.iter().enumerate() {
        for (a, v) in acc.iter_mut().zip([d.error, d.bias1, d.reg, d.bias2, d.total()]) {
            *a += v;
        }
        let cols: Vec<String> = acc.iter().map(|v| float(*v)).collect();
        let _ = writeln!(out, "{},{}", t + 1, cols.join(","));
    }
    out
}

pub fn confidence_json(run: &RunOutput) -> String {
    let epochs: Vec<_> = run
        .confidence
        .iter()
        .map(|s| {
            json!({
                "epoch": s.epoch,
                "first_episode": s.first_episode,
                "contains_truth": s.contains_truth,
                "p_bar": s.p_bar,
                "widths": s.widths,
            })
        })
        .collect();
    serde_json::to_string_pretty(&json!({ "seed": run.seed, "epochs": epochs })).expect("JSON values always serialise")
}

/// Mean and standard error of the final regret over runs.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn summary_row(runs: &[RunOutput]) -> String {
    let finals: Vec<f64> = runs.iter().map(RunOutput::final_regret).collect();
    let (mean, se) = mean_stderr(&finals);
    let (episodes, algo) = runs.first().map_or((0, String::new()), |r| (r.episodes, r.algorithm.to_string()));
    format!("{episodes},{algo},{},{},{}", float(mean), float(se), runs.len())
}

pub fn run_file_stem(run: &RunOutput) -> String {
    format!("{}_T{}_seed{}", run.algorithm, run.episodes, run.seed)
}

fn write(path: PathBuf, contents: &str) -> Result<()> {
    fs::write(&path, contents).map_err(|e| HarnessError::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

/// Per-seed CSV plus the optional diagnostics.
pub fn write_run(dir: &Path, run: &RunOutput) -> Result<()> {
    let stem = run_file_stem(run);
    write(dir.join(format!("{stem}.csv")), &records_csv(run))?;
    if !run.decomposition.is_empty() {
        write(dir.join(format!("{stem}_decomposition.csv")), &decomposition_csv(run))?;
    }
    if !run.confidence.is_empty() {
        write(dir.join(format!("{stem}_confidence.json")), &confidence_json(run))?;
    }
    Ok(())
}

pub fn write_failure(dir: &Path, failure: &RunFailure, algorithm: &str, episodes: usize) -> Result<()> {
    let doc = json!({
        "seed": failure.seed,
        "episode": failure.episode,
        "error": failure.error.to_string(),
    });
    write(
        dir.join(format!("{algorithm}_T{episodes}_seed{}_failure.json", failure.seed)),
        &serde_json::to_string_pretty(&doc).expect("JSON values always serialise"),
    )
}

pub fn write_summary(dir: &Path, rows: &[String]) -> Result<()> {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(r);
        out.push('\n');
    }
    write(dir.join("summary.csv"), &out)
}

/// Records the effective configuration and which learner-loss mode the
/// CSVs were produced with.
pub fn write_manifest(dir: &Path, config: &ExperimentConfig, budgets: &[usize]) -> Result<()> {
    let mode = if config.expected_learner_loss { "expected" } else { "sampled" };
    let doc = json!({
        "learner_loss": mode,
        "comparator_loss": "expected",
        "budgets": budgets,
        "config": config,
    });
    write(
        dir.join("manifest.json"),
        &serde_json::to_string_pretty(&doc).expect("config serialises"),
    )
}

/// Runs every seed for each budget in `budgets`, writes the per-seed files,
/// `summary.csv` and `manifest.json` into `out_dir`, and returns the summary
/// rows. Seeds that fail leave a failure record; the first failure is
/// reported once everything else has been written.
pub fn execute(config: &ExperimentConfig, setup: &Setup, out_dir: &Path, budgets: &[usize]) -> Result<Vec<String>> {
    ensure_dir(out_dir)?;
    write_manifest(out_dir, config, budgets)?;
    let algorithm = config.algorithm()?;
    let mut rows = Vec::with_capacity(budgets.len());
    let mut first_failure = None;
    for &episodes in budgets {
        let mut done = Vec::with_capacity(config.seeds.len());
        for result in run_all(config, setup, episodes) {
            match result {
                Ok(run) => {
                    write_run(out_dir, &run)?;
                    done.push(run);
                }
                Err(failure) => {
                    write_failure(out_dir, &failure, algorithm.as_str(), episodes)?;
                    first_failure.get_or_insert(failure);
                }
            }
        }
        if !done.is_empty() {
            rows.push(summary_row(&done));
        }
    }
    write_summary(out_dir, &rows)?;
    match first_failure {
        Some(f) => Err(HarnessError::Run {
            seed: f.seed,
            source: f.error,
        }),
        None => Ok(rows),
    }
}
