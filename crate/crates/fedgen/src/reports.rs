//! CSV emission: metric tables, per-round logs, and the embedding-ready
//! flattened-sample export.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::AppError;
use fedgen_core::data::BinarySequenceTensor;
use fedgen_core::eval::ExperimentMetrics;
use fedgen_core::federation::{Stage1RoundRecord, Stage2RoundRecord};

/// `metrics.csv`: one row per `(metric, regime)`.
pub fn write_metrics_csv(
    path: &Path,
    metrics: &ExperimentMetrics,
    seed: u64,
) -> Result<(), AppError> {
    let mut out = String::from("metric,regime,value,seed\n");
    for (metric, regime, value) in metrics.rows() {
        let _ = writeln!(out, "{metric},{regime},{value},{seed}");
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<(String, String, f64, u64)>, AppError> {
    let text = fs::read_to_string(path)
        .map_err(|e| AppError::data(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != "metric,regime,value,seed" {
                return Err(AppError::data(format!(
                    "{}: unexpected metrics header '{line}'",
                    path.display()
                )));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(AppError::data(format!("malformed metrics row: {line}")));
        }
        rows.push((
            parts[0].to_string(),
            parts[1].to_string(),
            parts[2]
                .parse::<f64>()
                .map_err(|_| AppError::data(format!("bad metric value: {line}")))?,
            parts[3]
                .parse::<u64>()
                .map_err(|_| AppError::data(format!("bad seed: {line}")))?,
        ));
    }
    Ok(rows)
}

/// `stage1_rounds.csv`: round index, wall clock, and per-hospital training
/// reconstruction loss.
pub fn write_stage1_rounds_csv(
    path: &Path,
    records: &[Stage1RoundRecord],
) -> Result<(), AppError> {
    let k = records.first().map(|r| r.train_bce.len()).unwrap_or(0);
    let mut out = String::from("round,wall_ms");
    for i in 0..k {
        let _ = write!(out, ",train_bce_{i}");
    }
    out.push('\n');
    for r in records {
        let _ = write!(out, "{},{}", r.round, r.wall_ms);
        for v in &r.train_bce {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// `stage2_rounds.csv`: round index, wall clock, global validation loss, and
/// per-hospital training loss, mean divergence, and aggregation weight.
pub fn write_stage2_rounds_csv(
    path: &Path,
    records: &[Stage2RoundRecord],
) -> Result<(), AppError> {
    let k = records.first().map(|r| r.alpha_tilde.len()).unwrap_or(0);
    let mut out = String::from("round,wall_ms,val_elbo");
    for i in 0..k {
        let _ = write!(out, ",train_loss_{i},dbar_{i},alpha_tilde_{i}");
    }
    out.push('\n');
    for r in records {
        let _ = write!(out, "{},{},{}", r.round, r.wall_ms, r.val_elbo);
        for i in 0..k {
            let _ = write!(out, ",{},{},{}", r.train_loss[i], r.dbar[i], r.alpha_tilde[i]);
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// `umap_samples.csv`: flattened per-patient bit rows, labeled by source and
/// hospital, ready for an external embedding tool.
pub fn write_umap_csv(
    path: &Path,
    cohorts: &[(String, usize, &BinarySequenceTensor)],
) -> Result<(), AppError> {
    let Some((_, _, first)) = cohorts.first() else {
        return Err(AppError::runtime("no cohorts to export"));
    };
    let width = first.timesteps() * first.features();
    let mut out = String::from("source,hospital,label");
    for i in 0..width {
        let _ = write!(out, ",x{i}");
    }
    out.push('\n');
    for (source, hospital, tensor) in cohorts {
        for n in 0..tensor.num_samples() {
            let _ = write!(out, "{source},{hospital},{}", tensor.label(n));
            for t in 0..tensor.timesteps() {
                for d in 0..tensor.features() {
                    out.push(',');
                    out.push(if tensor.get(n, t, d) { '1' } else { '0' });
                }
            }
            out.push('\n');
        }
    }
    fs::write(path, out)?;
    Ok(())
}
