//! The `generate-data`, `run`, and `evaluate` commands.

use std::fs;
use std::path::Path;

use crate::config::RunConfig;
use crate::files::{
    read_binary_tensor, read_manifest, split_file_name, write_binary_tensor,
    write_encoder_checkpoint, write_manifest, write_tcvae_checkpoint, ManifestEntry,
};
use crate::reports::{
    write_metrics_csv, write_stage1_rounds_csv, write_stage2_rounds_csv, write_umap_csv,
};
use crate::AppError;
use fedgen_core::data::{split_cohort, BinarySequenceTensor};
use fedgen_core::eval::{mmd, nnaa, r2_fidelity};
use fedgen_core::federation::{run_experiment, HospitalData};
use fedgen_core::synth::generate_cohort;

/// Generates every hospital's cohort, splits it, and writes one tensor file
/// per split plus a manifest. Byte-identical across reruns of one config.
pub fn cmd_generate_data(config: &RunConfig, out_dir: &Path) -> Result<(), AppError> {
    fs::create_dir_all(out_dir)?;
    let bank = config.factor_bank();
    let mut entries = Vec::new();
    for spec in config.hospital_specs() {
        let cohort = generate_cohort(&spec, &bank, config.timesteps)
            .map_err(|e| AppError::data(e.to_string()))?;
        let (train, val, test) = split_cohort(
            &cohort,
            (config.split_train, config.split_val, config.split_test),
            spec.seed,
        )
        .map_err(|e| AppError::data(e.to_string()))?;
        for (split, tensor) in [("train", &train), ("val", &val), ("test", &test)] {
            write_binary_tensor(&out_dir.join(split_file_name(spec.hospital_id, split)), tensor)?;
        }
        entries.push(ManifestEntry {
            hospital: spec.hospital_id,
            seed: spec.seed,
            n_train: train.num_samples(),
            n_val: val.num_samples(),
            n_test: test.num_samples(),
        });
    }
    write_manifest(out_dir, config.timesteps, config.features, &entries)?;
    fs::write(out_dir.join("config.ini"), config.to_text())?;
    Ok(())
}

/// Builds the hospital list either from a generated data directory (using
/// its manifest for sizes and stream seeds) or in memory from the config.
pub fn load_hospitals(
    config: &RunConfig,
    data_dir: Option<&Path>,
) -> Result<Vec<HospitalData>, AppError> {
    match data_dir {
        Some(dir) => {
            let (t, d, entries) = read_manifest(dir)?;
            if t != config.timesteps || d != config.features {
                return Err(AppError::data(format!(
                    "data directory holds T={t}, D={d} tensors but the config expects T={}, D={}",
                    config.timesteps, config.features
                )));
            }
            let mut hospitals = Vec::new();
            for e in &entries {
                let train = read_binary_tensor(&dir.join(split_file_name(e.hospital, "train")))?;
                let val = read_binary_tensor(&dir.join(split_file_name(e.hospital, "val")))?;
                let test = read_binary_tensor(&dir.join(split_file_name(e.hospital, "test")))?;
                if train.num_samples() != e.n_train
                    || val.num_samples() != e.n_val
                    || test.num_samples() != e.n_test
                {
                    return Err(AppError::data(format!(
                        "hospital {}: file sizes disagree with the manifest",
                        e.hospital
                    )));
                }
                hospitals.push(HospitalData {
                    id: e.hospital,
                    stream_seed: e.seed,
                    train,
                    val,
                    test,
                });
            }
            Ok(hospitals)
        }
        None => {
            let bank = config.factor_bank();
            config
                .hospital_specs()
                .into_iter()
                .map(|spec| {
                    let cohort = generate_cohort(&spec, &bank, config.timesteps)
                        .map_err(|e| AppError::data(e.to_string()))?;
                    let (train, val, test) = split_cohort(
                        &cohort,
                        (config.split_train, config.split_val, config.split_test),
                        spec.seed,
                    )
                    .map_err(|e| AppError::data(e.to_string()))?;
                    Ok(HospitalData {
                        id: spec.hospital_id,
                        stream_seed: spec.seed,
                        train,
                        val,
                        test,
                    })
                })
                .collect()
        }
    }
}

/// Executes the full pipeline for the configured mode and writes the
/// self-contained run directory: config copy, per-round checkpoints, round
/// logs, metrics, synthetic cohorts, and the embedding-ready export.
pub fn cmd_run(
    config: &RunConfig,
    config_text: &str,
    out_dir: &Path,
    data_dir: Option<&Path>,
) -> Result<(), AppError> {
    fs::create_dir_all(out_dir)?;
    let hospitals = load_hospitals(config, data_dir)?;
    let result = run_experiment(&config.federation_config(), &hospitals, config.eval_caps())
        .map_err(|e| AppError::runtime(format!("pipeline: {e}")))?;

    fs::write(out_dir.join("config.ini"), config_text)?;
    let val_bce: Vec<String> = result
        .pipeline
        .stage1
        .final_val_bce
        .iter()
        .map(|v| format!("{v:.6}"))
        .collect();
    fs::write(
        out_dir.join("run.txt"),
        format!(
            "mode {}\nseed {}\nstage1_val_bce {}\n",
            config.mode.name(),
            config.seed,
            val_bce.join(",")
        ),
    )?;

    let stage1_dir = out_dir.join("stage1");
    for (i, encoder) in result.pipeline.stage1.round_globals.iter().enumerate() {
        write_encoder_checkpoint(&stage1_dir, i + 1, encoder)?;
    }
    let stage2_dir = out_dir.join("stage2");
    for (i, params) in result.pipeline.stage2.round_globals.iter().enumerate() {
        write_tcvae_checkpoint(&stage2_dir, i + 1, params)?;
    }
    write_stage1_rounds_csv(&out_dir.join("stage1_rounds.csv"), &result.pipeline.stage1.rounds)?;
    write_stage2_rounds_csv(&out_dir.join("stage2_rounds.csv"), &result.pipeline.stage2.rounds)?;
    write_metrics_csv(&out_dir.join("metrics.csv"), &result.metrics, config.seed)?;

    let synth_dir = out_dir.join("synthetic");
    fs::create_dir_all(&synth_dir)?;
    for (i, cohort) in result.pipeline.synthetic.iter().enumerate() {
        write_binary_tensor(&synth_dir.join(format!("hospital_{i}.bin")), cohort)?;
    }

    let mut umap_rows: Vec<(String, usize, &BinarySequenceTensor)> = Vec::new();
    for h in &hospitals {
        umap_rows.push(("real".to_string(), h.id, &h.test));
    }
    for (i, cohort) in result.pipeline.synthetic.iter().enumerate() {
        umap_rows.push(("synth".to_string(), i, cohort));
    }
    write_umap_csv(&out_dir.join("umap_samples.csv"), &umap_rows)?;
    Ok(())
}

/// Standalone metric harness over two tensor files: fidelity plus the
/// nearest-neighbor privacy score (membership inference needs the run's
/// member/holdout split, so it is only emitted by `run`).
pub fn cmd_evaluate(
    real_path: &Path,
    syn_path: &Path,
    out_path: &Path,
    seed: u64,
) -> Result<(), AppError> {
    let real = read_binary_tensor(real_path)?;
    let syn = read_binary_tensor(syn_path)?;
    let r2 = r2_fidelity(&real, &syn).map_err(|e| AppError::runtime(e.to_string()))?;
    let mmd_value = mmd(&real, &syn, 1000, seed).map_err(|e| AppError::runtime(e.to_string()))?;
    let nnaa_value = nnaa(&real, &syn, 1000, seed).map_err(|e| AppError::runtime(e.to_string()))?;
    if nnaa_value > 0.9 {
        eprintln!(
            "warning: nnaa = {nnaa_value:.3}; synthetic samples sit on top of real records (possible leakage)"
        );
    }
    let mut out = String::from("metric,regime,value,seed\n");
    out.push_str(&format!("r2,synth,{r2},{seed}\n"));
    out.push_str(&format!("mmd,synth,{mmd_value},{seed}\n"));
    out.push_str(&format!("nnaa,synth,{nnaa_value},{seed}\n"));
    fs::write(out_path, out)?;
    Ok(())
}
