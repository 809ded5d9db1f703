//! End-to-end protocol properties: mode reduction equivalences, whole-run
//! determinism, the aggregation failure mode that motivates neuron matching,
//! and distribution-aware down-weighting of a planted outlier hospital.

use fedgen_core::bae::{self, BaeParams, TrainBudget};
use fedgen_core::data::{split_cohort, BinarySequenceTensor};
use fedgen_core::eval::EvalCaps;
use fedgen_core::exec::Parallelism;
use fedgen_core::federation::{
    run_experiment, run_pipeline, AggregationMode, FederationConfig, HospitalData, Stage1Config,
    Stage2Config,
};
use fedgen_core::matching::{
    fedavg_aggregate, match_encoder, matched_average, permute_encoder, AggregationWeights,
    NeuronCostKind, Permutation, ReferenceMode,
};
use fedgen_core::nn::ParamSet;
use fedgen_core::rng::Rng;
use fedgen_core::synth::{generate_cohort, FactorBank, HospitalCohortSpec};

fn small_config(mode: AggregationMode, seed: u64, tau: f64) -> FederationConfig {
    FederationConfig {
        mode,
        reference: ReferenceMode::FedAvgInit,
        stage1: Stage1Config {
            hidden: 16,
            latent: 6,
            rounds: 2,
            batch: 64,
            lr: 2e-3,
            conv_tol: 1e-4,
            conv_patience: 3,
            round1_epoch_cap: 25,
            later_epoch_cap: 10,
            adapt_frozen_epochs: 4,
            adapt_joint_epochs: 2,
            match_cost: NeuronCostKind::SquaredEuclidean,
        },
        stage2: Stage2Config {
            z_dim: 4,
            lstm_hidden: 8,
            head_hidden: 12,
            rounds: 4,
            batch: 32,
            lr: 2e-3,
            lambda: 0.1,
            lambda_warmup_rounds: 3,
            tau,
            sample_emission: false,
            threshold_bits: false,
        },
        seed,
        parallelism: Parallelism::Sequential,
    }
}

fn make_hospital(
    id: usize,
    seed: u64,
    n: usize,
    bank: &FactorBank,
    t_len: usize,
    offset_scale: f64,
    temporal_shift: f64,
) -> HospitalData {
    let offset = if offset_scale == 0.0 {
        Vec::new()
    } else {
        let mut rng = Rng::from_tags(seed, &[0x0FF5E7]);
        (0..bank.features()).map(|_| offset_scale * rng.normal()).collect()
    };
    let spec = HospitalCohortSpec {
        hospital_id: id,
        n_samples: n,
        sparsity: 0.12,
        covariate_offset: offset,
        temporal_shift,
        label_prevalence: 0.3,
        seed,
    };
    let cohort = generate_cohort(&spec, bank, t_len).unwrap();
    let (train, val, test) = split_cohort(&cohort, (0.70, 0.15, 0.15), seed).unwrap();
    HospitalData {
        id,
        stream_seed: seed,
        train,
        val,
        test,
    }
}

#[test]
fn identity_clients_and_tau_zero_reduce_to_fedavg_bitwise() {
    let bank = FactorBank::new(24, 4, 77);
    // two clones: same data, same stream seed, so their local models stay
    // identical and every matching step returns the identity permutation
    let h = make_hospital(0, 1234, 60, &bank, 4, 0.0, 0.0);
    let mut twin = h.clone();
    twin.id = 1;
    let hospitals = vec![h, twin];

    let matched = run_pipeline(&small_config(AggregationMode::FedEhrGen, 99, 0.0), &hospitals)
        .unwrap();
    let plain = run_pipeline(&small_config(AggregationMode::FedAvg, 99, 0.0), &hospitals).unwrap();

    assert_eq!(
        matched.stage1.global_encoder.flatten(),
        plain.stage1.global_encoder.flatten(),
        "stage-1 global encoders must be bit-identical"
    );
    assert_eq!(
        matched.stage2.global.flatten(),
        plain.stage2.global.flatten(),
        "stage-2 global parameters must be bit-identical"
    );
    for (a, b) in matched.stage2.rounds.iter().zip(plain.stage2.rounds.iter()) {
        assert_eq!(a.val_elbo, b.val_elbo);
        assert_eq!(a.alpha_tilde, b.alpha_tilde);
    }
    assert_eq!(matched.pooled_synthetic, plain.pooled_synthetic);
}

#[test]
fn single_client_federation_equals_centralized_bitwise() {
    let bank = FactorBank::new(24, 4, 78);
    let hospitals = vec![make_hospital(0, 555, 60, &bank, 4, 0.0, 0.0)];

    let federated = run_experiment(
        &small_config(AggregationMode::FedEhrGen, 7, 5.0),
        &hospitals,
        EvalCaps::default(),
    )
    .unwrap();
    let centralized = run_experiment(
        &small_config(AggregationMode::Centralized, 7, 5.0),
        &hospitals,
        EvalCaps::default(),
    )
    .unwrap();

    assert_eq!(
        federated.pipeline.stage1.global_encoder.flatten(),
        centralized.pipeline.stage1.global_encoder.flatten()
    );
    assert_eq!(
        federated.pipeline.stage2.global.flatten(),
        centralized.pipeline.stage2.global.flatten()
    );
    assert_eq!(
        federated.pipeline.pooled_synthetic,
        centralized.pipeline.pooled_synthetic
    );
    for (a, b) in federated
        .metrics
        .rows()
        .iter()
        .zip(centralized.metrics.rows().iter())
    {
        assert_eq!(a, b);
    }
}

#[test]
fn full_pipeline_is_deterministic() {
    let bank = FactorBank::new(24, 4, 79);
    let hospitals: Vec<HospitalData> = (0..3)
        .map(|i| make_hospital(i, 1000 + i as u64, 50 + 10 * i, &bank, 4, 0.6, 0.2 * i as f64))
        .collect();
    let cfg = small_config(AggregationMode::FedEhrGen, 31, 5.0);

    let a = run_experiment(&cfg, &hospitals, EvalCaps::default()).unwrap();
    let b = run_experiment(&cfg, &hospitals, EvalCaps::default()).unwrap();
    assert_eq!(a.metrics.rows(), b.metrics.rows());
    assert_eq!(
        a.pipeline.stage2.global.flatten(),
        b.pipeline.stage2.global.flatten()
    );
    for (ra, rb) in a.pipeline.stage2.rounds.iter().zip(b.pipeline.stage2.rounds.iter()) {
        assert_eq!(ra.val_elbo, rb.val_elbo);
        assert_eq!(ra.dbar, rb.dbar);
    }
}

#[test]
fn threaded_execution_matches_sequential() {
    let bank = FactorBank::new(24, 4, 80);
    let hospitals: Vec<HospitalData> = (0..3)
        .map(|i| make_hospital(i, 2000 + i as u64, 50, &bank, 4, 0.5, 0.0))
        .collect();
    let mut cfg = small_config(AggregationMode::FedEhrGen, 13, 5.0);
    let sequential = run_pipeline(&cfg, &hospitals).unwrap();
    cfg.parallelism = Parallelism::Threads(3);
    let threaded = run_pipeline(&cfg, &hospitals).unwrap();
    assert_eq!(
        sequential.stage2.global.flatten(),
        threaded.stage2.global.flatten()
    );
    assert_eq!(sequential.pooled_synthetic, threaded.pooled_synthetic);
}

/// Coordinate-wise averaging of two permuted copies of one encoder destroys
/// the model, while matching them onto a common ordering before averaging
/// recovers it exactly; reconstruction loss shows the gap.
#[test]
fn plain_averaging_fails_where_matched_averaging_recovers() {
    let mut rng = Rng::from_seed(404);
    let mut data = BinarySequenceTensor::zeros(30, 2, 12);
    for n in 0..30 {
        for t in 0..2 {
            for d in 0..12 {
                if rng.bernoulli(0.3) {
                    data.set(n, t, d, true);
                }
            }
        }
    }
    let mut model = BaeParams::new(12, 10, 5, &mut rng);
    let budget = TrainBudget {
        max_epochs: 120,
        batch: 60,
        lr: 1e-2,
        conv_tol: 1e-6,
        conv_patience: 5,
    };
    bae::train_local_bae(&mut model, &data, &budget, &mut rng).unwrap();
    let baseline = bae::mean_bce(&model, &data, 64).unwrap();

    // two clients that hold the same trained encoder under different neuron
    // orderings
    let perm_of = |rng: &mut Rng, sizes: &[usize]| -> Vec<Permutation> {
        sizes
            .iter()
            .map(|&m| {
                let mut map: Vec<usize> = (0..m).collect();
                rng.shuffle(&mut map);
                Permutation::new(map).unwrap()
            })
            .collect()
    };
    let perms_a = perm_of(&mut rng, &[10, 5]);
    let perms_b = perm_of(&mut rng, &[10, 5]);
    let enc_a = permute_encoder(&model.encoder, &perms_a).unwrap();
    let enc_b = permute_encoder(&model.encoder, &perms_b).unwrap();
    let weights = AggregationWeights::from_sizes(&[1, 1]).unwrap();

    // matched: align both onto the first client's ordering
    let reference = enc_a.clone();
    let match_a = match_encoder(&enc_a, &reference, NeuronCostKind::SquaredEuclidean).unwrap();
    let match_b = match_encoder(&enc_b, &reference, NeuronCostKind::SquaredEuclidean).unwrap();
    let matched = matched_average(
        &[enc_a.clone(), enc_b.clone()],
        &[match_a, match_b],
        &weights,
    )
    .unwrap();
    let plain = fedavg_aggregate(&[enc_a.clone(), enc_b], &weights).unwrap();

    // evaluate both aggregates against the decoder that matches the
    // reference ordering
    let mut decoder_a = model.decoder.clone();
    decoder_a[0].weights = perms_a.last().unwrap().apply_rows(&decoder_a[0].weights);
    let eval = |encoder: Vec<fedgen_core::nn::DenseLayer>| -> f64 {
        let candidate = BaeParams {
            encoder,
            decoder: decoder_a.clone(),
        };
        bae::mean_bce(&candidate, &data, 64).unwrap()
    };
    let matched_loss = eval(matched);
    let plain_loss = eval(plain);
    assert!(
        (matched_loss - baseline).abs() < 1e-9,
        "matched averaging must recover the model exactly: {matched_loss} vs {baseline}"
    );
    assert!(
        plain_loss > matched_loss + 0.01,
        "plain averaging must strictly hurt reconstruction: {plain_loss} vs {matched_loss}"
    );
}

#[test]
fn planted_outlier_hospital_is_downweighted() {
    let bank = FactorBank::new(24, 4, 81);
    let mut hospitals: Vec<HospitalData> = (0..3)
        .map(|i| make_hospital(i, 3000 + i as u64, 60, &bank, 4, 0.3, 0.0))
        .collect();
    // hospital 2 drifts hard in both covariates and dynamics
    hospitals[2] = make_hospital(2, 3002, 60, &bank, 4, 3.0, 1.5);

    let mut cfg = small_config(AggregationMode::FedEhrGen, 17, 5.0);
    cfg.stage2.rounds = 6;
    let out = run_pipeline(&cfg, &hospitals).unwrap();
    let sizes: Vec<usize> = hospitals.iter().map(|h| h.train.num_samples()).collect();
    let alpha = AggregationWeights::from_sizes(&sizes).unwrap();
    for record in out.stage2.rounds.iter().filter(|r| r.round > 3) {
        assert!(
            record.alpha_tilde[2] < alpha.alpha()[2],
            "round {}: outlier weight {} vs alpha {}",
            record.round,
            record.alpha_tilde[2],
            alpha.alpha()[2]
        );
    }
}
