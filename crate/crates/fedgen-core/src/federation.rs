//! In-process orchestration of the two-stage federated protocol.
//!
//! Stage 1: each hospital trains its own autoencoder to convergence; the
//! server aligns encoders by neuron matching (or averages them plainly,
//! depending on mode) into a global encoder; hospitals adopt it, permute
//! their decoder inputs to follow, and fine-tune. Stage 2: hospitals run
//! single-epoch local updates of the temporal VAE on their aligned latent
//! tensors; the server aggregates with distribution-aware (or sample-size)
//! weights. Trained models then generate per-hospital synthetic cohorts.
//!
//! Everything is a pure function of `(config, hospital data, seeds)`: client
//! random streams are keyed by per-hospital stream seeds rather than array
//! positions, results are reduced in client order, and the centralized
//! baseline is literally the same code path run on one pooled client.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::bae::{self, BaeParams, TrainBudget};
use crate::data::{BinarySequenceTensor, LatentSequenceTensor};
use crate::distagg::{self, LatentDistributionSummary};
use crate::error::CoreError;
use crate::eval::{evaluate_experiment, EvalCaps, ExperimentMetrics};
use crate::exec::{run_jobs, Parallelism, Stopwatch};
use crate::matching::{
    self, AggregationWeights, NeuronCostKind, Permutation, ReferenceMode,
};
use crate::nn::{Adam, DenseLayer, ParamSet};
use crate::rng::{derive_seed, Rng};
use crate::tcvae::{self, TcvaeParams};

const TAG_S1_INIT: u64 = 0x51;
const TAG_S1_TRAIN: u64 = 0x52;
const TAG_S1_ADAPT: u64 = 0x53;
const TAG_S1_FINAL: u64 = 0x54;
const TAG_S2_INIT: u64 = 0x61;
const TAG_S2_TRAIN: u64 = 0x62;
const TAG_S2_VAL: u64 = 0x63;
const TAG_GENERATE: u64 = 0x71;
const TAG_EVAL: u64 = 0x72;

/// Aggregation mode of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregationMode {
    /// Matching aggregation in stage 1 and distribution-aware weights in
    /// stage 2 (the full method).
    FedEhrGen,
    /// Plain weighted averaging in both stages.
    FedAvg,
    /// Ablation: plain encoder averaging, distribution-aware stage 2.
    FedEhrNoMa,
    /// Ablation: matching aggregation, sample-size stage-2 weights.
    FedEhrNoDa,
    /// All cohorts pooled into a single client; same budgets, no federation.
    Centralized,
}

impl AggregationMode {
    pub fn name(self) -> &'static str {
        match self {
            AggregationMode::FedEhrGen => "fedehr_gen",
            AggregationMode::FedAvg => "fedavg",
            AggregationMode::FedEhrNoMa => "fedehr_no_ma",
            AggregationMode::FedEhrNoDa => "fedehr_no_da",
            AggregationMode::Centralized => "centralized",
        }
    }

    fn uses_matching(self) -> bool {
        matches!(
            self,
            AggregationMode::FedEhrGen | AggregationMode::FedEhrNoDa | AggregationMode::Centralized
        )
    }

    fn uses_distribution_weights(self) -> bool {
        matches!(self, AggregationMode::FedEhrGen | AggregationMode::FedEhrNoMa)
    }
}

/// Stage-1 (autoencoder) knobs.
#[derive(Debug, Clone)]
pub struct Stage1Config {
    pub hidden: usize,
    pub latent: usize,
    pub rounds: usize,
    pub batch: usize,
    pub lr: f64,
    pub conv_tol: f64,
    pub conv_patience: usize,
    /// Epoch cap of the first round's train-until-convergence loop.
    pub round1_epoch_cap: usize,
    /// Reduced cap for the re-training loops of later rounds.
    pub later_epoch_cap: usize,
    pub adapt_frozen_epochs: usize,
    pub adapt_joint_epochs: usize,
    pub match_cost: NeuronCostKind,
}

/// Stage-2 (temporal VAE) knobs.
#[derive(Debug, Clone)]
pub struct Stage2Config {
    pub z_dim: usize,
    pub lstm_hidden: usize,
    pub head_hidden: usize,
    pub rounds: usize,
    pub batch: usize,
    pub lr: f64,
    /// KL weight; linearly warmed up over `lambda_warmup_rounds`.
    pub lambda: f64,
    pub lambda_warmup_rounds: usize,
    /// Sensitivity of the distribution-aware reweighting.
    pub tau: f64,
    /// Emit likelihood samples instead of means during generation.
    pub sample_emission: bool,
    /// Threshold decoder probabilities at 0.5 instead of sampling bits.
    pub threshold_bits: bool,
}

/// Full experiment configuration.
#[derive(Debug, Clone)]
pub struct FederationConfig {
    pub mode: AggregationMode,
    pub reference: ReferenceMode,
    pub stage1: Stage1Config,
    pub stage2: Stage2Config,
    pub seed: u64,
    pub parallelism: Parallelism,
}

impl FederationConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.stage1.rounds == 0 {
            return Err(CoreError::invalid(
                "federation_config",
                "stage 1 needs at least one round",
            ));
        }
        if self.stage1.latent == 0 || self.stage1.hidden == 0 {
            return Err(CoreError::invalid("federation_config", "zero model width"));
        }
        if self.stage2.tau < 0.0 || self.stage2.lambda < 0.0 {
            return Err(CoreError::invalid(
                "federation_config",
                "tau and lambda must be non-negative",
            ));
        }
        Ok(())
    }
}

/// One simulated hospital: its splits and the seed its client streams key on.
#[derive(Debug, Clone)]
pub struct HospitalData {
    pub id: usize,
    pub stream_seed: u64,
    pub train: BinarySequenceTensor,
    pub val: BinarySequenceTensor,
    pub test: BinarySequenceTensor,
}

/// What a hospital uploads to the server in a stage-1 round. Parameters
/// only; raw observation tensors never leave the client.
#[derive(Debug, Clone)]
pub struct EncoderUpload {
    pub encoder: Vec<DenseLayer>,
    pub train_bce: f64,
}

/// What a hospital uploads in a stage-2 round: its updated parameters and
/// the moment-matched latent summary (`T x 2 x z_dim` numbers).
#[derive(Debug, Clone)]
pub struct TcvaeUpload {
    pub params: TcvaeParams,
    pub summary: LatentDistributionSummary,
    pub train_loss: f64,
}

#[derive(Debug, Clone)]
pub struct Stage1RoundRecord {
    pub round: usize,
    pub train_bce: Vec<f64>,
    pub wall_ms: u64,
}

#[derive(Debug, Clone)]
pub struct Stage1Output {
    pub global_encoder: Vec<DenseLayer>,
    /// Final per-hospital models: the global encoder plus the locally
    /// adapted decoder.
    pub hospital_models: Vec<BaeParams>,
    pub latents_train: Vec<LatentSequenceTensor>,
    pub latents_val: Vec<LatentSequenceTensor>,
    pub rounds: Vec<Stage1RoundRecord>,
    /// Global encoder after each round, for checkpointing.
    pub round_globals: Vec<Vec<DenseLayer>>,
    /// Per-hospital validation reconstruction BCE of the final model
    /// (global encoder + adapted local decoder).
    pub final_val_bce: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Stage2RoundRecord {
    pub round: usize,
    pub train_loss: Vec<f64>,
    pub val_elbo: f64,
    pub dbar: Vec<f64>,
    pub alpha_tilde: Vec<f64>,
    pub wall_ms: u64,
}

#[derive(Debug, Clone)]
pub struct Stage2Output {
    pub global: TcvaeParams,
    pub rounds: Vec<Stage2RoundRecord>,
    /// Global parameters after each round, for checkpointing.
    pub round_globals: Vec<TcvaeParams>,
}

fn check_hospitals(hospitals: &[HospitalData]) -> Result<(), CoreError> {
    if hospitals.is_empty() {
        return Err(CoreError::invalid("federation", "no hospitals"));
    }
    let (t, d) = (hospitals[0].train.timesteps(), hospitals[0].train.features());
    for h in hospitals {
        for part in [&h.train, &h.val, &h.test] {
            if part.timesteps() != t || part.features() != d {
                return Err(CoreError::shape(
                    "federation",
                    format!("T={t}, D={d}"),
                    format!(
                        "hospital {}: T={}, D={}",
                        h.id,
                        part.timesteps(),
                        part.features()
                    ),
                ));
            }
        }
        if h.train.num_samples() == 0 {
            return Err(CoreError::invalid(
                "federation",
                format!("hospital {} has no training data", h.id),
            ));
        }
    }
    Ok(())
}

/// Executes the stage-1 protocol and returns the aligned global encoder,
/// adapted per-hospital decoders, and latent tensors.
pub fn run_fedbae(
    cfg: &FederationConfig,
    hospitals: &[HospitalData],
) -> Result<Stage1Output, CoreError> {
    cfg.validate()?;
    check_hospitals(hospitals)?;
    let watch = Stopwatch::start();
    let k = hospitals.len();
    let features = hospitals[0].train.features();
    let weights =
        AggregationWeights::from_sizes(&hospitals.iter().map(|h| h.train.num_samples()).collect::<Vec<_>>())?;
    let s1 = &cfg.stage1;

    let mut clients: Vec<Option<BaeParams>> = (0..k).map(|_| None).collect();
    let mut perms: Vec<Vec<Permutation>> = Vec::new();
    let mut global: Option<Vec<DenseLayer>> = None;
    let mut rounds = Vec::with_capacity(s1.rounds);
    let mut round_globals = Vec::with_capacity(s1.rounds);

    for r in 1..=s1.rounds {
        let global_ref = global.clone();
        let jobs: Vec<_> = (0..k)
            .map(|i| {
                let hospital = &hospitals[i];
                let taken = clients[i].take();
                let global_ref = global_ref.clone();
                let latent_perm = if r > 1 {
                    perms[i].last().cloned()
                } else {
                    None
                };
                let cfg = cfg.clone();
                move || -> Result<(BaeParams, f64), CoreError> {
                    let s1 = &cfg.stage1;
                    let mut params = match taken {
                        Some(p) => p,
                        None => BaeParams::new(
                            features,
                            s1.hidden,
                            s1.latent,
                            &mut Rng::from_tags(cfg.seed, &[TAG_S1_INIT, hospital.stream_seed]),
                        ),
                    };
                    if r > 1 {
                        let global_enc = global_ref.as_ref().expect("global encoder after round 1");
                        let perm = latent_perm.expect("latent permutation after round 1");
                        bae::adapt_decoder(
                            &mut params,
                            global_enc,
                            &perm,
                            &hospital.train,
                            s1.adapt_frozen_epochs,
                            s1.adapt_joint_epochs,
                            s1.batch,
                            s1.lr,
                            &mut Rng::from_tags(
                                cfg.seed,
                                &[TAG_S1_ADAPT, hospital.stream_seed, r as u64],
                            ),
                        )?;
                    }
                    let budget = TrainBudget {
                        max_epochs: if r == 1 {
                            s1.round1_epoch_cap
                        } else {
                            s1.later_epoch_cap
                        },
                        batch: s1.batch,
                        lr: s1.lr,
                        conv_tol: s1.conv_tol,
                        conv_patience: s1.conv_patience,
                    };
                    let stats = bae::train_local_bae(
                        &mut params,
                        &hospital.train,
                        &budget,
                        &mut Rng::from_tags(cfg.seed, &[TAG_S1_TRAIN, hospital.stream_seed, r as u64]),
                    )?;
                    Ok((params, stats.final_loss))
                }
            })
            .collect();
        let results = run_jobs(cfg.parallelism, jobs);

        let mut uploads = Vec::with_capacity(k);
        for (i, res) in results.into_iter().enumerate() {
            let (params, loss) = res?;
            uploads.push(EncoderUpload {
                encoder: params.encoder.clone(),
                train_bce: loss,
            });
            clients[i] = Some(params);
        }

        let encoders: Vec<Vec<DenseLayer>> = uploads.iter().map(|u| u.encoder.clone()).collect();
        if cfg.mode.uses_matching() {
            let reference = if r == 1 {
                matching::select_reference(0, None, Some(&encoders), &weights, cfg.reference)?
            } else {
                matching::select_reference(r - 1, global.as_ref(), None, &weights, cfg.reference)?
            };
            let new_perms: Vec<Vec<Permutation>> = encoders
                .iter()
                .map(|enc| matching::match_encoder(enc, &reference, s1.match_cost))
                .collect::<Result<_, _>>()?;
            global = Some(matching::matched_average(&encoders, &new_perms, &weights)?);
            perms = new_perms;
        } else {
            perms = encoders
                .iter()
                .map(|enc| enc.iter().map(|l| Permutation::identity(l.out_dim())).collect())
                .collect();
            global = Some(matching::fedavg_aggregate(&encoders, &weights)?);
        }
        round_globals.push(global.clone().expect("global encoder exists"));
        rounds.push(Stage1RoundRecord {
            round: r,
            train_bce: uploads.iter().map(|u| u.train_bce).collect(),
            wall_ms: watch.elapsed_ms(),
        });
    }

    // final broadcast: adopt the last global encoder and fine-tune decoders
    // against it (encoder frozen so every hospital shares phi-star exactly)
    let global_encoder = global.expect("at least one round ran");
    let jobs: Vec<_> = (0..k)
        .map(|i| {
            let hospital = &hospitals[i];
            let mut params = clients[i].take().expect("client state");
            let latent_perm = perms[i].last().cloned().expect("latent permutation");
            let global_encoder = global_encoder.clone();
            let cfg = cfg.clone();
            move || -> Result<BaeParams, CoreError> {
                bae::adapt_decoder(
                    &mut params,
                    &global_encoder,
                    &latent_perm,
                    &hospital.train,
                    cfg.stage1.adapt_frozen_epochs,
                    0,
                    cfg.stage1.batch,
                    cfg.stage1.lr,
                    &mut Rng::from_tags(cfg.seed, &[TAG_S1_FINAL, hospital.stream_seed]),
                )?;
                Ok(params)
            }
        })
        .collect();
    let hospital_models: Vec<BaeParams> = run_jobs(cfg.parallelism, jobs)
        .into_iter()
        .collect::<Result<_, _>>()?;

    let mut latents_train = Vec::with_capacity(k);
    let mut latents_val = Vec::with_capacity(k);
    let mut final_val_bce = Vec::with_capacity(k);
    for (h, model) in hospitals.iter().zip(hospital_models.iter()) {
        latents_train.push(bae::compute_latents(&global_encoder, &h.train)?);
        latents_val.push(bae::compute_latents(&global_encoder, &h.val)?);
        let val_set = if h.val.num_samples() > 0 { &h.val } else { &h.train };
        final_val_bce.push(bae::mean_bce(model, val_set, s1.batch)?);
    }

    Ok(Stage1Output {
        global_encoder,
        hospital_models,
        latents_train,
        latents_val,
        rounds,
        round_globals,
        final_val_bce,
    })
}

/// Executes the stage-2 protocol over aligned latent tensors and returns the
/// global temporal model plus per-round records.
pub fn run_fedtcvae(
    cfg: &FederationConfig,
    hospital_seeds: &[u64],
    latents_train: &[LatentSequenceTensor],
    latents_val: &[LatentSequenceTensor],
) -> Result<Stage2Output, CoreError> {
    cfg.validate()?;
    let k = latents_train.len();
    if k == 0 || k != latents_val.len() || k != hospital_seeds.len() {
        return Err(CoreError::invalid(
            "run_fedtcvae",
            "hospital seeds, train latents, and val latents must align",
        ));
    }
    for l in latents_train {
        if l.num_samples() == 0 {
            return Err(CoreError::invalid("run_fedtcvae", "empty latent tensor"));
        }
    }
    let watch = Stopwatch::start();
    let s2 = &cfg.stage2;
    let latent_dim = latents_train[0].latent_dim();
    let weights = AggregationWeights::from_sizes(
        &latents_train.iter().map(|l| l.num_samples()).collect::<Vec<_>>(),
    )?;
    let val_refs: Vec<&LatentSequenceTensor> = latents_val.iter().collect();
    let pooled_val = LatentSequenceTensor::concat(&val_refs)?;

    let mut global = TcvaeParams::new(
        latent_dim,
        s2.z_dim,
        2,
        s2.lstm_hidden,
        s2.head_hidden,
        &mut Rng::from_tags(cfg.seed, &[TAG_S2_INIT]),
    );
    let mut rounds = Vec::with_capacity(s2.rounds);
    let mut round_globals = Vec::with_capacity(s2.rounds);

    for r in 1..=s2.rounds {
        let warmup = s2.lambda_warmup_rounds.max(1) as f64;
        let lambda_eff = s2.lambda * (r as f64 / warmup).min(1.0);
        let jobs: Vec<_> = (0..k)
            .map(|i| {
                let latents = &latents_train[i];
                let seed_i = hospital_seeds[i];
                let mut local = global.clone();
                let cfg = cfg.clone();
                move || -> Result<TcvaeUpload, CoreError> {
                    let s2 = &cfg.stage2;
                    let mut adam = Adam::new(s2.lr, local.param_count());
                    let mut rng =
                        Rng::from_tags(cfg.seed, &[TAG_S2_TRAIN, seed_i, r as u64]);
                    // one local epoch per communication round
                    let train_loss = tcvae::train_local_tcvae(
                        &mut local,
                        latents,
                        lambda_eff,
                        1,
                        s2.batch,
                        &mut adam,
                        &mut rng,
                    )?;
                    let moments = tcvae::posterior_moments(&local, latents)?;
                    let summary = distagg::summarize_latent_distribution(&moments)?;
                    Ok(TcvaeUpload {
                        params: local,
                        summary,
                        train_loss,
                    })
                }
            })
            .collect();
        let uploads: Vec<TcvaeUpload> = run_jobs(cfg.parallelism, jobs)
            .into_iter()
            .collect::<Result<_, _>>()?;

        let summaries: Vec<LatentDistributionSummary> =
            uploads.iter().map(|u| u.summary.clone()).collect();
        let divergences = distagg::divergence_matrix(&summaries)?;
        let dbar = distagg::mean_divergences(&divergences);
        let alpha_tilde = if cfg.mode.uses_distribution_weights() {
            distagg::distribution_weights(&divergences, &weights, s2.tau)?
        } else if k == 1 {
            vec![1.0]
        } else {
            weights.alpha().to_vec()
        };
        let train_loss: Vec<f64> = uploads.iter().map(|u| u.train_loss).collect();
        let params: Vec<TcvaeParams> = uploads.into_iter().map(|u| u.params).collect();
        global = distagg::distribution_aware_aggregate(&params, &alpha_tilde)?;
        // two independent noise passes halve the Monte Carlo variance of the
        // reported validation loss
        let val_elbo = 0.5
            * (tcvae::elbo_value(
                &global,
                &pooled_val,
                s2.lambda,
                derive_seed(cfg.seed, &[TAG_S2_VAL, r as u64, 0]),
            )? + tcvae::elbo_value(
                &global,
                &pooled_val,
                s2.lambda,
                derive_seed(cfg.seed, &[TAG_S2_VAL, r as u64, 1]),
            )?);
        round_globals.push(global.clone());
        rounds.push(Stage2RoundRecord {
            round: r,
            train_loss,
            val_elbo,
            dbar,
            alpha_tilde,
            wall_ms: watch.elapsed_ms(),
        });
    }

    Ok(Stage2Output {
        global,
        rounds,
        round_globals,
    })
}

/// Samples a synthetic cohort: draws a label per sample from `label_mix =
/// (p0, p1)`, rolls latent trajectories from the temporal prior, decodes
/// them through the hospital decoder, and samples each bit from its
/// Bernoulli parameter (or thresholds at 0.5 when `threshold_bits`).
#[allow(clippy::too_many_arguments)]
pub fn generate_synthetic_cohort(
    generator: &TcvaeParams,
    decoder_model: &BaeParams,
    n_samples: usize,
    label_mix: (f64, f64),
    t_len: usize,
    seed: u64,
    sample_emission: bool,
    threshold_bits: bool,
) -> Result<BinarySequenceTensor, CoreError> {
    let (p0, p1) = label_mix;
    if p0 < 0.0 || p1 < 0.0 || (p0 + p1 - 1.0).abs() > 1e-9 {
        return Err(CoreError::invalid(
            "generate_synthetic_cohort",
            format!("label mix ({p0}, {p1}) is not a distribution"),
        ));
    }
    if decoder_model.latent_dim() != generator.latent_dim() {
        return Err(CoreError::shape(
            "generate_synthetic_cohort",
            format!("decoder latent width {}", generator.latent_dim()),
            format!("decoder latent width {}", decoder_model.latent_dim()),
        ));
    }
    let features = decoder_model.feature_dim();
    let mut tensor = BinarySequenceTensor::zeros(n_samples, t_len, features);
    if n_samples == 0 {
        return Ok(tensor);
    }
    let mut rng = Rng::from_tags(seed, &[TAG_GENERATE]);
    for n in 0..n_samples {
        let label = u8::from(rng.bernoulli(p1));
        tensor.set_label(n, label);
        let cond = generator.one_hot(label);
        let latents =
            tcvae::generate_latent_sequence(generator, &cond, t_len, &mut rng, sample_emission)?;
        for (t, h_t) in latents.iter().enumerate() {
            let probs = decoder_model.decode(h_t)?;
            for (d, &p) in probs.iter().enumerate() {
                let bit = if threshold_bits {
                    p >= 0.5
                } else {
                    rng.bernoulli(p)
                };
                if bit {
                    tensor.set(n, t, d, true);
                }
            }
        }
    }
    Ok(tensor)
}

/// Models, synthetic cohorts, and round records of one pipeline run.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub stage1: Stage1Output,
    pub stage2: Stage2Output,
    /// One synthetic cohort per effective client (a single pooled cohort in
    /// centralized mode).
    pub synthetic: Vec<BinarySequenceTensor>,
    pub pooled_synthetic: BinarySequenceTensor,
}

fn pool_hospitals(hospitals: &[HospitalData]) -> Result<HospitalData, CoreError> {
    let trains: Vec<&BinarySequenceTensor> = hospitals.iter().map(|h| &h.train).collect();
    let vals: Vec<&BinarySequenceTensor> = hospitals.iter().map(|h| &h.val).collect();
    let tests: Vec<&BinarySequenceTensor> = hospitals.iter().map(|h| &h.test).collect();
    let stream_seed = hospitals
        .iter()
        .skip(1)
        .fold(hospitals[0].stream_seed, |acc, h| {
            derive_seed(acc, &[h.stream_seed])
        });
    Ok(HospitalData {
        id: 0,
        stream_seed,
        train: BinarySequenceTensor::concat(&trains)?,
        val: BinarySequenceTensor::concat(&vals)?,
        test: BinarySequenceTensor::concat(&tests)?,
    })
}

/// Runs both stages and generation for the configured mode.
pub fn run_pipeline(
    cfg: &FederationConfig,
    hospitals: &[HospitalData],
) -> Result<PipelineOutput, CoreError> {
    cfg.validate()?;
    check_hospitals(hospitals)?;
    let pooled;
    let effective: &[HospitalData] = if cfg.mode == AggregationMode::Centralized {
        pooled = vec![pool_hospitals(hospitals)?];
        &pooled
    } else {
        hospitals
    };

    let stage1 = run_fedbae(cfg, effective)?;
    let seeds: Vec<u64> = effective.iter().map(|h| h.stream_seed).collect();
    let stage2 = run_fedtcvae(cfg, &seeds, &stage1.latents_train, &stage1.latents_val)?;

    let t_len = effective[0].train.timesteps();
    let mut synthetic = Vec::with_capacity(effective.len());
    for (i, h) in effective.iter().enumerate() {
        let p1 = h.train.label_prevalence();
        let cohort = generate_synthetic_cohort(
            &stage2.global,
            &stage1.hospital_models[i],
            h.train.num_samples(),
            (1.0 - p1, p1),
            t_len,
            derive_seed(cfg.seed, &[TAG_GENERATE, h.stream_seed]),
            cfg.stage2.sample_emission,
            cfg.stage2.threshold_bits,
        )?;
        synthetic.push(cohort);
    }
    let refs: Vec<&BinarySequenceTensor> = synthetic.iter().collect();
    let pooled_synthetic = BinarySequenceTensor::concat(&refs)?;

    Ok(PipelineOutput {
        stage1,
        stage2,
        synthetic,
        pooled_synthetic,
    })
}

/// A pipeline run plus its metric battery.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub pipeline: PipelineOutput,
    pub metrics: ExperimentMetrics,
    pub pooled_train: BinarySequenceTensor,
    pub pooled_test: BinarySequenceTensor,
}

/// How many times the training size the dedicated fidelity-evaluation draw
/// contains; a larger draw tightens the r2/mmd estimators without touching
/// the released (hybrid-sized) cohort.
const FIDELITY_OVERSAMPLE: usize = 3;

/// Runs the pipeline and evaluates fidelity, utility, and privacy on the
/// pooled real splits.
pub fn run_experiment(
    cfg: &FederationConfig,
    hospitals: &[HospitalData],
    caps: EvalCaps,
) -> Result<ExperimentResult, CoreError> {
    let pipeline = run_pipeline(cfg, hospitals)?;
    let trains: Vec<&BinarySequenceTensor> = hospitals.iter().map(|h| &h.train).collect();
    let tests: Vec<&BinarySequenceTensor> = hospitals.iter().map(|h| &h.test).collect();
    let pooled_train = BinarySequenceTensor::concat(&trains)?;
    let pooled_test = BinarySequenceTensor::concat(&tests)?;

    // dedicated oversampled draw for the fidelity estimators
    let pooled_storage;
    let effective: &[HospitalData] = if cfg.mode == AggregationMode::Centralized {
        pooled_storage = vec![pool_hospitals(hospitals)?];
        &pooled_storage
    } else {
        hospitals
    };
    let t_len = hospitals[0].train.timesteps();
    let mut fidelity_parts = Vec::with_capacity(effective.len());
    for (i, h) in effective.iter().enumerate() {
        let p1 = h.train.label_prevalence();
        fidelity_parts.push(generate_synthetic_cohort(
            &pipeline.stage2.global,
            &pipeline.stage1.hospital_models[i],
            h.train.num_samples() * FIDELITY_OVERSAMPLE,
            (1.0 - p1, p1),
            t_len,
            derive_seed(cfg.seed, &[TAG_EVAL, TAG_GENERATE, h.stream_seed]),
            cfg.stage2.sample_emission,
            cfg.stage2.threshold_bits,
        )?);
    }
    let refs: Vec<&BinarySequenceTensor> = fidelity_parts.iter().collect();
    let fidelity_synthetic = BinarySequenceTensor::concat(&refs)?;

    let metrics = evaluate_experiment(
        &pooled_train,
        &pooled_test,
        &pipeline.pooled_synthetic,
        Some(&fidelity_synthetic),
        caps,
        derive_seed(cfg.seed, &[TAG_EVAL]),
    )?;
    Ok(ExperimentResult {
        pipeline,
        metrics,
        pooled_train,
        pooled_test,
    })
}
