//! The `compare` command: tabulates the metrics of several run directories
//! into a per-mode summary (mean and standard deviation over seeds).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::reports::read_metrics_csv;
use crate::AppError;

fn run_mode(dir: &Path) -> Result<String, AppError> {
    let text = fs::read_to_string(dir.join("run.txt"))
        .map_err(|e| AppError::data(format!("{}: {e}", dir.join("run.txt").display())))?;
    for line in text.lines() {
        if let Some(mode) = line.strip_prefix("mode ") {
            return Ok(mode.trim().to_string());
        }
    }
    Err(AppError::data(format!(
        "{}: run.txt does not name a mode",
        dir.display()
    )))
}

/// Aggregated cell of the summary table.
#[derive(Debug, Clone)]
pub struct SummaryCell {
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

/// `(metric, regime) -> mode -> aggregated cell`.
pub type SummaryTable = BTreeMap<(String, String), BTreeMap<String, SummaryCell>>;

/// Collects `(metric, regime) x mode -> mean ± std` from the run dirs.
pub fn summarize(run_dirs: &[&Path]) -> Result<SummaryTable, AppError> {
    let mut values: BTreeMap<(String, String), BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for dir in run_dirs {
        let mode = run_mode(dir)?;
        for (metric, regime, value, _) in read_metrics_csv(&dir.join("metrics.csv"))? {
            values
                .entry((metric, regime))
                .or_default()
                .entry(mode.clone())
                .or_default()
                .push(value);
        }
    }
    let mut out = BTreeMap::new();
    for (key, modes) in values {
        let mut cells = BTreeMap::new();
        for (mode, vs) in modes {
            let n = vs.len();
            let mean = vs.iter().sum::<f64>() / n as f64;
            let var = vs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            cells.insert(
                mode,
                SummaryCell {
                    mean,
                    std: var.sqrt(),
                    runs: n,
                },
            );
        }
        out.insert(key, cells);
    }
    Ok(out)
}

/// Prints the summary table and optionally writes it as CSV.
pub fn cmd_compare(run_dirs: &[&Path], out_csv: Option<&Path>) -> Result<(), AppError> {
    if run_dirs.is_empty() {
        return Err(AppError::config("compare needs at least one run directory"));
    }
    let table = summarize(run_dirs)?;
    let mut modes: Vec<String> = table
        .values()
        .flat_map(|cells| cells.keys().cloned())
        .collect();
    modes.sort();
    modes.dedup();

    let mut csv = String::from("metric,regime,mode,mean,std,runs\n");
    println!("{:<10} {:<8} mode: mean ± std (runs)", "metric", "regime");
    for ((metric, regime), cells) in &table {
        let mut line = format!("{metric:<10} {regime:<8}");
        for mode in &modes {
            if let Some(cell) = cells.get(mode) {
                line.push_str(&format!(
                    " | {mode}: {:.4} ± {:.4} ({})",
                    cell.mean, cell.std, cell.runs
                ));
                csv.push_str(&format!(
                    "{metric},{regime},{mode},{},{},{}\n",
                    cell.mean, cell.std, cell.runs
                ));
            }
        }
        println!("{line}");
    }
    if let Some(path) = out_csv {
        fs::write(path, csv)?;
    }
    Ok(())
}
