//! Experiment configuration: an INI-style key-value document with sections
//! `[data]`, `[stage1]`, `[stage2]`, `[eval]`, and `[run]`. Every key has a
//! default; unknown sections or keys are rejected so typos cannot silently
//! fall back to defaults. The loaded text is copied verbatim into each run
//! directory for reproducibility.

use crate::AppError;
use fedgen_core::eval::EvalCaps;
use fedgen_core::exec::Parallelism;
use fedgen_core::federation::{
    AggregationMode, FederationConfig, Stage1Config, Stage2Config,
};
use fedgen_core::matching::{NeuronCostKind, ReferenceMode};
use fedgen_core::rng::{derive_seed, Rng};
use fedgen_core::synth::{FactorBank, HospitalCohortSpec};

const TAG_HOSPITAL_SEED: u64 = 0xDA7A;
const TAG_OFFSET: u64 = 0x0FF5;
const TAG_BANK: u64 = 0xBA4E;

/// All experiment knobs, aligned with the sectioned file format.
#[derive(Debug, Clone)]
pub struct RunConfig {
    // [data]
    pub hospitals: usize,
    pub hospital_sizes: Vec<usize>,
    pub timesteps: usize,
    pub features: usize,
    pub factor_dim: usize,
    pub sparsity: f64,
    pub label_prevalence: f64,
    pub covariate_shift: f64,
    pub temporal_shift: f64,
    pub outlier_hospital: i64,
    pub outlier_covariate_shift: f64,
    pub outlier_temporal_shift: f64,
    pub split_train: f64,
    pub split_val: f64,
    pub split_test: f64,
    // [stage1]
    pub s1_hidden: usize,
    pub s1_latent: usize,
    pub s1_rounds: usize,
    pub s1_batch: usize,
    pub s1_learning_rate: f64,
    pub s1_convergence_tol: f64,
    pub s1_convergence_patience: usize,
    pub s1_round1_epoch_cap: usize,
    pub s1_later_epoch_cap: usize,
    pub s1_adapt_frozen_epochs: usize,
    pub s1_adapt_joint_epochs: usize,
    pub s1_match_cost: NeuronCostKind,
    // [stage2]
    pub s2_z_dim: usize,
    pub s2_lstm_hidden: usize,
    pub s2_head_hidden: usize,
    pub s2_rounds: usize,
    pub s2_batch: usize,
    pub s2_learning_rate: f64,
    pub s2_lambda: f64,
    pub s2_lambda_warmup_rounds: usize,
    pub s2_tau: f64,
    pub s2_sample_emission: bool,
    pub s2_threshold_bits: bool,
    // [eval]
    pub mmd_cap: usize,
    pub privacy_cap: usize,
    // [run]
    pub seed: u64,
    pub mode: AggregationMode,
    pub reference: ReferenceMode,
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            hospitals: 5,
            hospital_sizes: vec![300, 150, 90, 60, 40],
            timesteps: 12,
            features: 96,
            factor_dim: 6,
            sparsity: 0.08,
            label_prevalence: 0.25,
            covariate_shift: 0.8,
            temporal_shift: 0.35,
            outlier_hospital: 4,
            outlier_covariate_shift: 4.0,
            outlier_temporal_shift: 2.5,
            split_train: 0.70,
            split_val: 0.15,
            split_test: 0.15,
            s1_hidden: 64,
            s1_latent: 16,
            s1_rounds: 3,
            s1_batch: 512,
            s1_learning_rate: 0.002,
            s1_convergence_tol: 1e-4,
            s1_convergence_patience: 3,
            s1_round1_epoch_cap: 80,
            s1_later_epoch_cap: 30,
            s1_adapt_frozen_epochs: 20,
            s1_adapt_joint_epochs: 5,
            s1_match_cost: NeuronCostKind::SquaredEuclidean,
            s2_z_dim: 16,
            s2_lstm_hidden: 48,
            s2_head_hidden: 64,
            s2_rounds: 40,
            s2_batch: 32,
            s2_learning_rate: 0.002,
            s2_lambda: 0.1,
            s2_lambda_warmup_rounds: 10,
            s2_tau: 2.0,
            s2_sample_emission: true,
            s2_threshold_bits: false,
            mmd_cap: 1000,
            privacy_cap: 1000,
            seed: 42,
            mode: AggregationMode::FedEhrGen,
            reference: ReferenceMode::FedAvgInit,
            threads: 0,
        }
    }
}

pub fn parse_mode(value: &str) -> Result<AggregationMode, AppError> {
    match value {
        "fedehr_gen" => Ok(AggregationMode::FedEhrGen),
        "fedavg" => Ok(AggregationMode::FedAvg),
        "fedehr_no_ma" => Ok(AggregationMode::FedEhrNoMa),
        "fedehr_no_da" => Ok(AggregationMode::FedEhrNoDa),
        "centralized" => Ok(AggregationMode::Centralized),
        other => Err(AppError::config(format!(
            "unknown mode '{other}' (expected fedehr_gen|fedavg|fedehr_no_ma|fedehr_no_da|centralized)"
        ))),
    }
}

fn parse_reference(value: &str) -> Result<ReferenceMode, AppError> {
    match value {
        "fedavg_init" => Ok(ReferenceMode::FedAvgInit),
        "majority_anchor" => Ok(ReferenceMode::MajorityAnchor),
        other => Err(AppError::config(format!(
            "unknown reference mode '{other}' (expected fedavg_init|majority_anchor)"
        ))),
    }
}

fn parse_match_cost(value: &str) -> Result<NeuronCostKind, AppError> {
    match value {
        "squared_euclidean" => Ok(NeuronCostKind::SquaredEuclidean),
        "cosine" => Ok(NeuronCostKind::Cosine),
        other => Err(AppError::config(format!(
            "unknown match cost '{other}' (expected squared_euclidean|cosine)"
        ))),
    }
}

impl RunConfig {
    /// Parses the sectioned key-value format, starting from defaults.
    pub fn parse(text: &str) -> Result<RunConfig, AppError> {
        let mut cfg = RunConfig::default();
        let mut section = String::new();
        let mut sizes_explicit = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| AppError::config(format!("line {}: malformed section header", lineno + 1)))?;
                if !matches!(name, "data" | "stage1" | "stage2" | "eval" | "run") {
                    return Err(AppError::config(format!(
                        "line {}: unknown section [{name}]",
                        lineno + 1
                    )));
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                AppError::config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let err = |msg: String| AppError::config(format!("line {}: {msg}", lineno + 1));
            let p_usize = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| err(format!("'{v}' is not a non-negative integer")))
            };
            let p_f64 = |v: &str| {
                v.parse::<f64>()
                    .map_err(|_| err(format!("'{v}' is not a number")))
            };
            let p_bool = |v: &str| match v {
                "true" => Ok(true),
                "false" => Ok(false),
                _ => Err(err(format!("'{v}' is not true/false"))),
            };
            match (section.as_str(), key) {
                ("data", "hospitals") => cfg.hospitals = p_usize(value)?,
                ("data", "hospital_sizes") => {
                    cfg.hospital_sizes = value
                        .split(',')
                        .map(|s| p_usize(s.trim()))
                        .collect::<Result<_, _>>()?;
                    sizes_explicit = true;
                }
                ("data", "timesteps") => cfg.timesteps = p_usize(value)?,
                ("data", "features") => cfg.features = p_usize(value)?,
                ("data", "factor_dim") => cfg.factor_dim = p_usize(value)?,
                ("data", "sparsity") => cfg.sparsity = p_f64(value)?,
                ("data", "label_prevalence") => cfg.label_prevalence = p_f64(value)?,
                ("data", "covariate_shift") => cfg.covariate_shift = p_f64(value)?,
                ("data", "temporal_shift") => cfg.temporal_shift = p_f64(value)?,
                ("data", "outlier_hospital") => {
                    cfg.outlier_hospital = value
                        .parse::<i64>()
                        .map_err(|_| err(format!("'{value}' is not an integer")))?
                }
                ("data", "outlier_covariate_shift") => cfg.outlier_covariate_shift = p_f64(value)?,
                ("data", "outlier_temporal_shift") => cfg.outlier_temporal_shift = p_f64(value)?,
                ("data", "split_train") => cfg.split_train = p_f64(value)?,
                ("data", "split_val") => cfg.split_val = p_f64(value)?,
                ("data", "split_test") => cfg.split_test = p_f64(value)?,
                ("stage1", "hidden") => cfg.s1_hidden = p_usize(value)?,
                ("stage1", "latent") => cfg.s1_latent = p_usize(value)?,
                ("stage1", "rounds") => cfg.s1_rounds = p_usize(value)?,
                ("stage1", "batch") => cfg.s1_batch = p_usize(value)?,
                ("stage1", "learning_rate") => cfg.s1_learning_rate = p_f64(value)?,
                ("stage1", "convergence_tol") => cfg.s1_convergence_tol = p_f64(value)?,
                ("stage1", "convergence_patience") => {
                    cfg.s1_convergence_patience = p_usize(value)?
                }
                ("stage1", "round1_epoch_cap") => cfg.s1_round1_epoch_cap = p_usize(value)?,
                ("stage1", "later_epoch_cap") => cfg.s1_later_epoch_cap = p_usize(value)?,
                ("stage1", "adapt_frozen_epochs") => cfg.s1_adapt_frozen_epochs = p_usize(value)?,
                ("stage1", "adapt_joint_epochs") => cfg.s1_adapt_joint_epochs = p_usize(value)?,
                ("stage1", "match_cost") => cfg.s1_match_cost = parse_match_cost(value)?,
                ("stage2", "z_dim") => cfg.s2_z_dim = p_usize(value)?,
                ("stage2", "lstm_hidden") => cfg.s2_lstm_hidden = p_usize(value)?,
                ("stage2", "head_hidden") => cfg.s2_head_hidden = p_usize(value)?,
                ("stage2", "rounds") => cfg.s2_rounds = p_usize(value)?,
                ("stage2", "batch") => cfg.s2_batch = p_usize(value)?,
                ("stage2", "learning_rate") => cfg.s2_learning_rate = p_f64(value)?,
                ("stage2", "lambda") => cfg.s2_lambda = p_f64(value)?,
                ("stage2", "lambda_warmup_rounds") => {
                    cfg.s2_lambda_warmup_rounds = p_usize(value)?
                }
                ("stage2", "tau") => cfg.s2_tau = p_f64(value)?,
                ("stage2", "sample_emission") => cfg.s2_sample_emission = p_bool(value)?,
                ("stage2", "threshold_bits") => cfg.s2_threshold_bits = p_bool(value)?,
                ("eval", "mmd_cap") => cfg.mmd_cap = p_usize(value)?,
                ("eval", "privacy_cap") => cfg.privacy_cap = p_usize(value)?,
                ("run", "seed") => {
                    cfg.seed = value
                        .parse::<u64>()
                        .map_err(|_| err(format!("'{value}' is not a seed")))?
                }
                ("run", "mode") => cfg.mode = parse_mode(value)?,
                ("run", "reference") => cfg.reference = parse_reference(value)?,
                ("run", "threads") => cfg.threads = p_usize(value)?,
                ("", k) => {
                    return Err(err(format!("key '{k}' appears before any section")));
                }
                (s, k) => {
                    return Err(err(format!("unknown key '{k}' in section [{s}]")));
                }
            }
        }
        if !sizes_explicit && cfg.hospitals != cfg.hospital_sizes.len() {
            return Err(AppError::config(format!(
                "hospitals = {} but hospital_sizes has {} entries (set hospital_sizes explicitly)",
                cfg.hospitals,
                cfg.hospital_sizes.len()
            )));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), AppError> {
        if self.hospitals == 0 {
            return Err(AppError::config("need at least one hospital"));
        }
        if self.hospital_sizes.len() != self.hospitals {
            return Err(AppError::config(format!(
                "hospital_sizes has {} entries for {} hospitals",
                self.hospital_sizes.len(),
                self.hospitals
            )));
        }
        if self.hospital_sizes.iter().any(|&n| n < 10) {
            return Err(AppError::config("every hospital needs at least 10 samples"));
        }
        if (self.split_train + self.split_val + self.split_test - 1.0).abs() > 1e-9 {
            return Err(AppError::config("split ratios must sum to 1"));
        }
        if !(self.sparsity > 0.0 && self.sparsity <= 0.5) {
            return Err(AppError::config("sparsity must lie in (0, 0.5]"));
        }
        if !(self.label_prevalence > 0.0 && self.label_prevalence < 1.0) {
            return Err(AppError::config("label_prevalence must lie in (0, 1)"));
        }
        if self.outlier_hospital >= self.hospitals as i64 {
            return Err(AppError::config(format!(
                "outlier_hospital {} out of range for {} hospitals",
                self.outlier_hospital, self.hospitals
            )));
        }
        if self.timesteps == 0 || self.features == 0 || self.factor_dim == 0 {
            return Err(AppError::config("data dimensions must be positive"));
        }
        if self.s1_rounds == 0 || self.s2_rounds == 0 {
            return Err(AppError::config("both stages need at least one round"));
        }
        Ok(())
    }

    /// Shared factor bank of the experiment.
    pub fn factor_bank(&self) -> FactorBank {
        FactorBank::new(
            self.features,
            self.factor_dim,
            derive_seed(self.seed, &[TAG_BANK]),
        )
    }

    /// Per-hospital cohort specifications. Covariate offsets are Gaussian
    /// with the configured scale (the outlier hospital gets its own scale);
    /// temporal shifts spread the hospitals over
    /// `[-temporal_shift, +temporal_shift]`.
    pub fn hospital_specs(&self) -> Vec<HospitalCohortSpec> {
        (0..self.hospitals)
            .map(|k| {
                let seed = derive_seed(self.seed, &[TAG_HOSPITAL_SEED, k as u64]);
                let is_outlier = self.outlier_hospital == k as i64;
                let offset_scale = if is_outlier {
                    self.outlier_covariate_shift
                } else {
                    self.covariate_shift
                };
                let covariate_offset = if offset_scale == 0.0 {
                    Vec::new()
                } else {
                    let mut rng = Rng::from_tags(seed, &[TAG_OFFSET]);
                    (0..self.features)
                        .map(|_| offset_scale * rng.normal())
                        .collect()
                };
                let temporal = if is_outlier {
                    self.outlier_temporal_shift
                } else if self.hospitals > 1 {
                    self.temporal_shift * (2.0 * k as f64 / (self.hospitals - 1) as f64 - 1.0)
                } else {
                    0.0
                };
                HospitalCohortSpec {
                    hospital_id: k,
                    n_samples: self.hospital_sizes[k],
                    sparsity: self.sparsity,
                    covariate_offset,
                    temporal_shift: temporal,
                    label_prevalence: self.label_prevalence,
                    seed,
                }
            })
            .collect()
    }

    /// Worker-pool size: `FEDGEN_THREADS` wins, then the config, then one
    /// worker per hospital capped by the machine.
    pub fn parallelism(&self) -> Parallelism {
        let from_env = std::env::var("FEDGEN_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok());
        let configured = from_env.unwrap_or(self.threads);
        let n = if configured == 0 {
            std::thread::available_parallelism()
                .map(|p| p.get())
                .unwrap_or(1)
                .min(self.hospitals)
        } else {
            configured
        };
        if n <= 1 {
            Parallelism::Sequential
        } else {
            Parallelism::Threads(n)
        }
    }

    pub fn federation_config(&self) -> FederationConfig {
        FederationConfig {
            mode: self.mode,
            reference: self.reference,
            stage1: Stage1Config {
                hidden: self.s1_hidden,
                latent: self.s1_latent,
                rounds: self.s1_rounds,
                batch: self.s1_batch,
                lr: self.s1_learning_rate,
                conv_tol: self.s1_convergence_tol,
                conv_patience: self.s1_convergence_patience,
                round1_epoch_cap: self.s1_round1_epoch_cap,
                later_epoch_cap: self.s1_later_epoch_cap,
                adapt_frozen_epochs: self.s1_adapt_frozen_epochs,
                adapt_joint_epochs: self.s1_adapt_joint_epochs,
                match_cost: self.s1_match_cost,
            },
            stage2: Stage2Config {
                z_dim: self.s2_z_dim,
                lstm_hidden: self.s2_lstm_hidden,
                head_hidden: self.s2_head_hidden,
                rounds: self.s2_rounds,
                batch: self.s2_batch,
                lr: self.s2_learning_rate,
                lambda: self.s2_lambda,
                lambda_warmup_rounds: self.s2_lambda_warmup_rounds,
                tau: self.s2_tau,
                sample_emission: self.s2_sample_emission,
                threshold_bits: self.s2_threshold_bits,
            },
            seed: self.seed,
            parallelism: self.parallelism(),
        }
    }

    pub fn eval_caps(&self) -> EvalCaps {
        EvalCaps {
            mmd: self.mmd_cap,
            privacy: self.privacy_cap,
        }
    }

    /// Canonical text form (used when no config file was supplied, so the
    /// run directory still carries the exact configuration).
    pub fn to_text(&self) -> String {
        let sizes: Vec<String> = self.hospital_sizes.iter().map(|s| s.to_string()).collect();
        let cost = match self.s1_match_cost {
            NeuronCostKind::SquaredEuclidean => "squared_euclidean",
            NeuronCostKind::Cosine => "cosine",
        };
        let reference = match self.reference {
            ReferenceMode::FedAvgInit => "fedavg_init",
            ReferenceMode::MajorityAnchor => "majority_anchor",
        };
        format!(
            "[data]\n\
             hospitals = {}\n\
             hospital_sizes = {}\n\
             timesteps = {}\n\
             features = {}\n\
             factor_dim = {}\n\
             sparsity = {}\n\
             label_prevalence = {}\n\
             covariate_shift = {}\n\
             temporal_shift = {}\n\
             outlier_hospital = {}\n\
             outlier_covariate_shift = {}\n\
             outlier_temporal_shift = {}\n\
             split_train = {}\n\
             split_val = {}\n\
             split_test = {}\n\
             \n[stage1]\n\
             hidden = {}\n\
             latent = {}\n\
             rounds = {}\n\
             batch = {}\n\
             learning_rate = {}\n\
             convergence_tol = {}\n\
             convergence_patience = {}\n\
             round1_epoch_cap = {}\n\
             later_epoch_cap = {}\n\
             adapt_frozen_epochs = {}\n\
             adapt_joint_epochs = {}\n\
             match_cost = {}\n\
             \n[stage2]\n\
             z_dim = {}\n\
             lstm_hidden = {}\n\
             head_hidden = {}\n\
             rounds = {}\n\
             batch = {}\n\
             learning_rate = {}\n\
             lambda = {}\n\
             lambda_warmup_rounds = {}\n\
             tau = {}\n\
             sample_emission = {}\n\
             threshold_bits = {}\n\
             \n[eval]\n\
             mmd_cap = {}\n\
             privacy_cap = {}\n\
             \n[run]\n\
             seed = {}\n\
             mode = {}\n\
             reference = {}\n\
             threads = {}\n",
            self.hospitals,
            sizes.join(","),
            self.timesteps,
            self.features,
            self.factor_dim,
            self.sparsity,
            self.label_prevalence,
            self.covariate_shift,
            self.temporal_shift,
            self.outlier_hospital,
            self.outlier_covariate_shift,
            self.outlier_temporal_shift,
            self.split_train,
            self.split_val,
            self.split_test,
            self.s1_hidden,
            self.s1_latent,
            self.s1_rounds,
            self.s1_batch,
            self.s1_learning_rate,
            self.s1_convergence_tol,
            self.s1_convergence_patience,
            self.s1_round1_epoch_cap,
            self.s1_later_epoch_cap,
            self.s1_adapt_frozen_epochs,
            self.s1_adapt_joint_epochs,
            cost,
            self.s2_z_dim,
            self.s2_lstm_hidden,
            self.s2_head_hidden,
            self.s2_rounds,
            self.s2_batch,
            self.s2_learning_rate,
            self.s2_lambda,
            self.s2_lambda_warmup_rounds,
            self.s2_tau,
            self.s2_sample_emission,
            self.s2_threshold_bits,
            self.mmd_cap,
            self.privacy_cap,
            self.seed,
            self.mode.name(),
            reference,
            self.threads,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_text_parses_back_to_itself() {
        let cfg = RunConfig::default();
        let text = cfg.to_text();
        let parsed = RunConfig::parse(&text).unwrap();
        assert_eq!(parsed.to_text(), text);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = "[data]\nhospitals = 3\nhospital_sizes = 20,20,20\nbogus = 1\n";
        let err = RunConfig::parse(text).unwrap_err();
        assert!(err.to_string().contains("unknown key 'bogus'"));
        let text = "[nosuch]\nx = 1\n";
        assert!(RunConfig::parse(text).is_err());
    }

    #[test]
    fn sizes_must_match_hospital_count() {
        let text = "[data]\nhospitals = 3\n";
        assert!(RunConfig::parse(text).is_err());
        let text = "[data]\nhospitals = 2\nhospital_sizes = 30,40\noutlier_hospital = -1\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.hospital_sizes, vec![30, 40]);
    }

    #[test]
    fn specs_have_distinct_seeds_and_outlier_scales() {
        let cfg = RunConfig::default();
        let specs = cfg.hospital_specs();
        assert_eq!(specs.len(), 5);
        let mut seeds: Vec<u64> = specs.iter().map(|s| s.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 5, "hospital seeds must be distinct");
        let outlier = cfg.outlier_hospital as usize;
        assert_eq!(specs[outlier].temporal_shift, cfg.outlier_temporal_shift);
    }
}
