//! Per-hospital binary autoencoder: per-timestep encoding of multi-hot
//! observations, reconstruction training, decoder-side permutation adaptation
//! after server aggregation, and latent tensor extraction.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{BinarySequenceTensor, LatentSequenceTensor};
use crate::error::CoreError;
use crate::matching::Permutation;
use crate::nn::{
    bce_loss, Activation, Adam, DenseGrad, DenseLayer, ParamSet, BCE_CLAMP,
};
use crate::rng::Rng;
use crate::tensor::Matrix;

/// Encoder/decoder pair. The encoder ends in a tanh latent layer of width
/// `d`; the decoder mirrors it and ends in sigmoid Bernoulli parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BaeParams {
    pub encoder: Vec<DenseLayer>,
    pub decoder: Vec<DenseLayer>,
}

/// Gradient buffers mirroring [`BaeParams`].
#[derive(Debug, Clone)]
pub struct BaeGrads {
    pub encoder: Vec<DenseGrad>,
    pub decoder: Vec<DenseGrad>,
}

impl BaeGrads {
    pub fn zeros_like(params: &BaeParams) -> Self {
        BaeGrads {
            encoder: params.encoder.iter().map(DenseGrad::zeros_like).collect(),
            decoder: params.decoder.iter().map(DenseGrad::zeros_like).collect(),
        }
    }

    fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for g in self.encoder.iter().chain(self.decoder.iter()) {
            out.push(g.weights.data());
            out.push(g.bias.as_slice());
        }
        out
    }

    fn decoder_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for g in &self.decoder {
            out.push(g.weights.data());
            out.push(g.bias.as_slice());
        }
        out
    }
}

impl ParamSet for BaeParams {
    fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = self.encoder.param_slices();
        out.extend(self.decoder.param_slices());
        out
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.encoder.param_slices_mut();
        out.extend(self.decoder.param_slices_mut());
        out
    }
}

impl BaeParams {
    /// `features -> hidden (relu) -> latent (tanh)` encoder with a mirrored
    /// `latent -> hidden (relu) -> features (sigmoid)` decoder.
    pub fn new(features: usize, hidden: usize, latent: usize, rng: &mut Rng) -> Self {
        BaeParams {
            encoder: vec![
                DenseLayer::new(features, hidden, Activation::Relu, rng),
                DenseLayer::new(hidden, latent, Activation::Tanh, rng),
            ],
            decoder: vec![
                DenseLayer::new(latent, hidden, Activation::Relu, rng),
                DenseLayer::new(hidden, features, Activation::Sigmoid, rng),
            ],
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.encoder.first().map(|l| l.in_dim()).unwrap_or(0)
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.last().map(|l| l.out_dim()).unwrap_or(0)
    }

    /// Deterministic latent code of one observation.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>, CoreError> {
        encode_with(&self.encoder, x)
    }

    /// Bernoulli parameters for one latent code; values lie strictly in
    /// `(0, 1)` because the output activation is a sigmoid.
    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>, CoreError> {
        if z.len() != self.decoder.first().map(|l| l.in_dim()).unwrap_or(0) {
            return Err(CoreError::shape(
                "decode",
                format!("latent of width {}", self.decoder[0].in_dim()),
                format!("latent of width {}", z.len()),
            ));
        }
        let mut cur = z.to_vec();
        for layer in &self.decoder {
            cur = layer.forward(&cur)?;
        }
        Ok(cur)
    }
}

/// Encoder-only forward pass.
pub fn encode_with(encoder: &[DenseLayer], x: &[f64]) -> Result<Vec<f64>, CoreError> {
    if x.len() != encoder.first().map(|l| l.in_dim()).unwrap_or(0) {
        return Err(CoreError::shape(
            "encode",
            format!("input of width {}", encoder.first().map(|l| l.in_dim()).unwrap_or(0)),
            format!("input of width {}", x.len()),
        ));
    }
    let mut cur = x.to_vec();
    for layer in encoder {
        cur = layer.forward(&cur)?;
    }
    Ok(cur)
}

/// Mean binary cross-entropy and full gradients for one observation batch.
/// The final sigmoid is fused with the loss, so the output-layer gradient is
/// computed on pre-activations.
pub fn bce_loss_and_grads(params: &BaeParams, x: &Matrix) -> (f64, BaeGrads) {
    assert_eq!(
        params.decoder.last().map(|l| l.activation),
        Some(Activation::Sigmoid),
        "fused BCE backward requires a sigmoid output layer"
    );
    let batch = x.rows();
    let d_out = x.cols();
    let enc_acts = crate::nn::forward_stack(&params.encoder, x);
    let dec_acts = crate::nn::forward_stack(&params.decoder, enc_acts.last().unwrap());
    let probs = dec_acts.last().unwrap();

    let scale = 1.0 / (batch * d_out) as f64;
    let mut loss = 0.0;
    for (p, t) in probs.data().iter().zip(x.data().iter()) {
        let pc = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        loss -= t * crate::fmath::ln(pc) + (1.0 - t) * crate::fmath::ln(1.0 - pc);
    }
    loss *= scale;

    let mut grads = BaeGrads::zeros_like(params);

    // decoder backward; the last layer starts from the fused pre-activation
    // gradient (p - x) * scale
    let n_dec = params.decoder.len();
    let mut dpre = probs.clone();
    for (dp, t) in dpre.data_mut().iter_mut().zip(x.data().iter()) {
        *dp = (*dp - t) * scale;
    }
    let mut d_cur = params.decoder[n_dec - 1]
        .backward_from_preact(&dec_acts[n_dec - 1], &dpre, &mut grads.decoder[n_dec - 1], true)
        .unwrap();
    for l in (0..n_dec - 1).rev() {
        d_cur = params.decoder[l]
            .backward_batch(&dec_acts[l], &dec_acts[l + 1], &d_cur, &mut grads.decoder[l], true)
            .unwrap();
    }

    // encoder backward
    let n_enc = params.encoder.len();
    for l in (0..n_enc).rev() {
        let want_dx = l > 0;
        let dx = params.encoder[l].backward_batch(
            &enc_acts[l],
            &enc_acts[l + 1],
            &d_cur,
            &mut grads.encoder[l],
            want_dx,
        );
        if let Some(dx) = dx {
            d_cur = dx;
        }
    }

    (loss, grads)
}

/// Mean reconstruction BCE over every `(sample, timestep)` pair, evaluated in
/// fixed-order batches.
pub fn mean_bce(
    params: &BaeParams,
    data: &BinarySequenceTensor,
    batch: usize,
) -> Result<f64, CoreError> {
    if data.num_samples() == 0 {
        return Err(CoreError::invalid("mean_bce", "empty data"));
    }
    let pairs = all_pairs(data);
    let mut total = 0.0;
    for chunk in pairs.chunks(batch.max(1)) {
        let x = data.gather_rows(chunk);
        let enc_acts = crate::nn::forward_stack(&params.encoder, &x);
        let dec_acts = crate::nn::forward_stack(&params.decoder, enc_acts.last().unwrap());
        let probs = dec_acts.last().unwrap();
        for (i, &(_, _)) in chunk.iter().enumerate() {
            total += bce_loss(x.row(i), probs.row(i))?;
        }
    }
    Ok(total / pairs.len() as f64)
}

fn all_pairs(data: &BinarySequenceTensor) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(data.num_samples() * data.timesteps());
    for n in 0..data.num_samples() {
        for t in 0..data.timesteps() {
            pairs.push((n, t));
        }
    }
    pairs
}

/// Local training budget; `conv_tol`/`conv_patience` implement the
/// train-until-convergence rule (stop when the epoch-over-epoch improvement
/// of the evaluation-pass BCE stays below `conv_tol` for `conv_patience`
/// consecutive epochs, hard-capped at `max_epochs`).
#[derive(Debug, Clone)]
pub struct TrainBudget {
    pub max_epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub conv_tol: f64,
    pub conv_patience: usize,
}

/// Outcome of one local training call.
#[derive(Debug, Clone, Copy)]
pub struct TrainStats {
    pub epochs_run: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Which parameters a training phase updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scope {
    Joint,
    DecoderOnly,
}

#[allow(clippy::too_many_arguments)]
fn run_epochs(
    params: &mut BaeParams,
    data: &BinarySequenceTensor,
    pairs: &mut [(usize, usize)],
    epochs: usize,
    batch: usize,
    lr: f64,
    scope: Scope,
    rng: &mut Rng,
) {
    if epochs == 0 || pairs.is_empty() {
        return;
    }
    let count = match scope {
        Scope::Joint => params.param_count(),
        Scope::DecoderOnly => params.decoder.param_count(),
    };
    let mut adam = Adam::new(lr, count);
    for _ in 0..epochs {
        rng.shuffle(pairs);
        for chunk in pairs.chunks(batch.max(1)) {
            let x = data.gather_rows(chunk);
            let (_, grads) = bce_loss_and_grads(params, &x);
            match scope {
                Scope::Joint => {
                    let mut p = params.param_slices_mut();
                    adam.step(&mut p, &grads.slices());
                }
                Scope::DecoderOnly => {
                    let mut p = params.decoder.param_slices_mut();
                    adam.step(&mut p, &grads.decoder_slices());
                }
            }
        }
    }
}

/// Trains the autoencoder on every `(sample, timestep)` observation until the
/// convergence rule fires or the epoch cap is reached. With a zero epoch cap
/// the parameters are returned unchanged.
pub fn train_local_bae(
    params: &mut BaeParams,
    data: &BinarySequenceTensor,
    budget: &TrainBudget,
    rng: &mut Rng,
) -> Result<TrainStats, CoreError> {
    if data.num_samples() == 0 {
        return Err(CoreError::invalid("train_local_bae", "empty data"));
    }
    let initial_loss = mean_bce(params, data, budget.batch)?;
    if budget.max_epochs == 0 {
        return Ok(TrainStats {
            epochs_run: 0,
            initial_loss,
            final_loss: initial_loss,
        });
    }
    let mut pairs = all_pairs(data);
    let mut prev = initial_loss;
    let mut final_loss = initial_loss;
    let mut stall = 0usize;
    let mut epochs_run = 0usize;
    for _ in 0..budget.max_epochs {
        run_epochs(params, data, &mut pairs, 1, budget.batch, budget.lr, Scope::Joint, rng);
        epochs_run += 1;
        let eval = mean_bce(params, data, budget.batch)?;
        final_loss = eval;
        if prev - eval < budget.conv_tol {
            stall += 1;
            if stall >= budget.conv_patience {
                break;
            }
        } else {
            stall = 0;
        }
        prev = eval;
    }
    Ok(TrainStats {
        epochs_run,
        initial_loss,
        final_loss,
    })
}

/// Adopts the aggregated global encoder and realigns the local decoder.
///
/// The decoder's first layer consumed latents in this hospital's previous
/// coordinate order; `latent_perm` (this hospital's latent-layer permutation
/// from the server's matching) reorders its input channels to the global
/// order. The decoder is then fine-tuned with the encoder frozen for
/// `frozen_epochs`, and finally both halves jointly for `joint_epochs`.
#[allow(clippy::too_many_arguments)]
pub fn adapt_decoder(
    params: &mut BaeParams,
    global_encoder: &[DenseLayer],
    latent_perm: &Permutation,
    data: &BinarySequenceTensor,
    frozen_epochs: usize,
    joint_epochs: usize,
    batch: usize,
    lr: f64,
    rng: &mut Rng,
) -> Result<(), CoreError> {
    let local_shapes: Vec<(usize, usize)> = params
        .encoder
        .iter()
        .map(|l| (l.in_dim(), l.out_dim()))
        .collect();
    let global_shapes: Vec<(usize, usize)> = global_encoder
        .iter()
        .map(|l| (l.in_dim(), l.out_dim()))
        .collect();
    if local_shapes != global_shapes {
        return Err(CoreError::shape(
            "adapt_decoder",
            format!("{local_shapes:?}"),
            format!("{global_shapes:?}"),
        ));
    }
    if latent_perm.len() != params.latent_dim() {
        return Err(CoreError::shape(
            "adapt_decoder",
            format!("latent permutation of length {}", params.latent_dim()),
            format!("length {}", latent_perm.len()),
        ));
    }
    params.encoder = global_encoder.to_vec();
    params.decoder[0].weights = latent_perm.apply_rows(&params.decoder[0].weights);

    let mut pairs = all_pairs(data);
    run_epochs(params, data, &mut pairs, frozen_epochs, batch, lr, Scope::DecoderOnly, rng);
    run_epochs(params, data, &mut pairs, joint_epochs, batch, lr, Scope::Joint, rng);
    Ok(())
}

/// Forwards every observation through `encoder`, producing the aligned
/// `N x T x d` latent tensor (labels are carried over).
pub fn compute_latents(
    encoder: &[DenseLayer],
    data: &BinarySequenceTensor,
) -> Result<LatentSequenceTensor, CoreError> {
    let d_in = encoder.first().map(|l| l.in_dim()).unwrap_or(0);
    if data.features() != d_in {
        return Err(CoreError::shape(
            "compute_latents",
            format!("features {d_in}"),
            format!("features {}", data.features()),
        ));
    }
    let latent = encoder.last().map(|l| l.out_dim()).unwrap_or(0);
    let (n, t) = (data.num_samples(), data.timesteps());
    let mut out = LatentSequenceTensor::zeros(n, t, latent);
    let pairs = all_pairs(data);
    for chunk in pairs.chunks(512) {
        let x = data.gather_rows(chunk);
        let acts = crate::nn::forward_stack(encoder, &x);
        let z = acts.last().unwrap();
        for (i, &(ni, ti)) in chunk.iter().enumerate() {
            out.step_mut(ni, ti).copy_from_slice(z.row(i));
        }
    }
    for ni in 0..n {
        out.set_label(ni, data.label(ni));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_data(n: usize, t: usize, d: usize, density: f64, seed: u64) -> BinarySequenceTensor {
        let mut rng = Rng::from_seed(seed);
        let mut data = BinarySequenceTensor::zeros(n, t, d);
        for i in 0..n {
            data.set_label(i, u8::from(rng.bernoulli(0.5)));
            for ti in 0..t {
                for di in 0..d {
                    if rng.bernoulli(density) {
                        data.set(i, ti, di, true);
                    }
                }
            }
        }
        data
    }

    #[test]
    fn encode_is_deterministic_and_bounded() {
        let mut rng = Rng::from_seed(1);
        let params = BaeParams::new(12, 8, 4, &mut rng);
        let x: Vec<f64> = (0..12).map(|i| f64::from(i % 3 == 0)).collect();
        let a = params.encode(&x).unwrap();
        let b = params.encode(&x).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|z| z.abs() < 1.0), "tanh latents stay in (-1, 1)");
    }

    #[test]
    fn identity_encoder_projects_input() {
        // single identity-activation layer with W = I restricted to the
        // first d coordinates
        let d = 3;
        let encoder = vec![DenseLayer {
            weights: Matrix::eye(6, d),
            bias: vec![0.0; d],
            activation: Activation::Identity,
        }];
        let x = [1.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        let z = encode_with(&encoder, &x).unwrap();
        assert_eq!(z, vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn zero_decoder_outputs_half() {
        let mut rng = Rng::from_seed(2);
        let mut params = BaeParams::new(10, 6, 3, &mut rng);
        for layer in params.decoder.iter_mut() {
            layer.weights.fill(0.0);
            layer.bias.iter_mut().for_each(|b| *b = 0.0);
        }
        let out = params.decode(&[0.3, -0.9, 0.5]).unwrap();
        assert!(out.iter().all(|&p| p == 0.5));
    }

    #[test]
    fn decode_stays_strictly_inside_unit_interval() {
        let mut rng = Rng::from_seed(3);
        let params = BaeParams::new(10, 6, 3, &mut rng);
        for _ in 0..20 {
            let z: Vec<f64> = (0..3).map(|_| 10.0 * rng.normal()).collect();
            let out = params.decode(&z).unwrap();
            assert!(out.iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }

    #[test]
    fn width_mismatches_error() {
        let mut rng = Rng::from_seed(4);
        let params = BaeParams::new(10, 6, 3, &mut rng);
        assert!(params.encode(&[0.0; 9]).is_err());
        assert!(params.decode(&[0.0; 4]).is_err());
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let mut rng = Rng::from_seed(5);
        let mut params = BaeParams::new(8, 6, 3, &mut rng);
        let before = params.flatten();
        let data = toy_data(6, 2, 8, 0.3, 7);
        let budget = TrainBudget {
            max_epochs: 0,
            batch: 16,
            lr: 1e-3,
            conv_tol: 1e-4,
            conv_patience: 3,
        };
        let stats = train_local_bae(&mut params, &data, &budget, &mut rng).unwrap();
        assert_eq!(stats.epochs_run, 0);
        assert_eq!(params.flatten(), before);
    }

    #[test]
    fn small_lr_training_does_not_increase_loss() {
        let mut rng = Rng::from_seed(6);
        let mut params = BaeParams::new(12, 8, 4, &mut rng);
        let data = toy_data(20, 3, 12, 0.25, 8);
        let budget = TrainBudget {
            max_epochs: 8,
            batch: 16,
            lr: 2e-4,
            conv_tol: 0.0,
            conv_patience: usize::MAX,
        };
        let stats = train_local_bae(&mut params, &data, &budget, &mut rng).unwrap();
        assert!(
            stats.final_loss <= stats.initial_loss + 1e-4,
            "{} -> {}",
            stats.initial_loss,
            stats.final_loss
        );
    }

    #[test]
    fn constant_zero_data_drives_outputs_to_zero() {
        let mut rng = Rng::from_seed(7);
        let mut params = BaeParams::new(10, 8, 4, &mut rng);
        let data = BinarySequenceTensor::zeros(12, 2, 10);
        let budget = TrainBudget {
            max_epochs: 200,
            batch: 24,
            lr: 5e-2,
            conv_tol: 1e-5,
            conv_patience: 3,
        };
        let stats = train_local_bae(&mut params, &data, &budget, &mut rng).unwrap();
        assert!(stats.final_loss < 0.05, "final loss {}", stats.final_loss);
    }

    #[test]
    fn training_is_seed_deterministic() {
        let data = toy_data(10, 2, 8, 0.3, 9);
        let budget = TrainBudget {
            max_epochs: 5,
            batch: 8,
            lr: 1e-3,
            conv_tol: 0.0,
            conv_patience: usize::MAX,
        };
        let run = || {
            let mut rng = Rng::from_seed(77);
            let mut params = BaeParams::new(8, 6, 3, &mut rng);
            let mut train_rng = Rng::from_tags(77, &[1]);
            train_local_bae(&mut params, &data, &budget, &mut train_rng).unwrap();
            params.flatten()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn overfits_a_tiny_dataset() {
        let mut rng = Rng::from_seed(10);
        let mut params = BaeParams::new(16, 32, 8, &mut rng);
        let data = toy_data(20, 1, 16, 0.3, 11);
        let budget = TrainBudget {
            max_epochs: 400,
            batch: 20,
            lr: 1e-2,
            conv_tol: 1e-6,
            conv_patience: 10,
        };
        train_local_bae(&mut params, &data, &budget, &mut rng).unwrap();
        let mut correct = 0usize;
        let mut total = 0usize;
        for n in 0..20 {
            let x = data.gather_rows(&[(n, 0)]);
            let z = params.encode(x.row(0)).unwrap();
            let p = params.decode(&z).unwrap();
            for (pi, xi) in p.iter().zip(x.row(0).iter()) {
                correct += usize::from((pi.round() - xi).abs() < 0.5);
                total += 1;
            }
        }
        let acc = correct as f64 / total as f64;
        assert!(acc >= 0.9, "bit accuracy {acc}");
    }

    #[test]
    fn permutation_consistency_of_encode_decode() {
        let mut rng = Rng::from_seed(12);
        let params = BaeParams::new(10, 7, 5, &mut rng);
        let mut map: Vec<usize> = (0..5).collect();
        rng.shuffle(&mut map);
        let perm = Permutation::new(map).unwrap();

        let mut permuted = params.clone();
        let last = permuted.encoder.len() - 1;
        permuted.encoder[last].weights = perm.apply_cols(&permuted.encoder[last].weights);
        permuted.encoder[last].bias = perm.apply_slice(&permuted.encoder[last].bias);
        permuted.decoder[0].weights = perm.apply_rows(&permuted.decoder[0].weights);

        for _ in 0..10 {
            let x: Vec<f64> = (0..10).map(|_| f64::from(rng.bernoulli(0.4))).collect();
            let a = params.decode(&params.encode(&x).unwrap()).unwrap();
            let b = permuted.decode(&permuted.encode(&x).unwrap()).unwrap();
            for (ai, bi) in a.iter().zip(b.iter()) {
                assert!((ai - bi).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn adapt_with_identity_and_same_encoder_keeps_loss() {
        let mut rng = Rng::from_seed(13);
        let mut params = BaeParams::new(10, 6, 4, &mut rng);
        let data = toy_data(10, 2, 10, 0.3, 14);
        let before = mean_bce(&params, &data, 64).unwrap();
        let global = params.encoder.clone();
        adapt_decoder(
            &mut params,
            &global,
            &Permutation::identity(4),
            &data,
            0,
            0,
            64,
            1e-3,
            &mut rng,
        )
        .unwrap();
        let after = mean_bce(&params, &data, 64).unwrap();
        assert!((before - after).abs() < 1e-15);
    }

    #[test]
    fn mismatched_permutation_hurts_a_trained_model() {
        let mut rng = Rng::from_seed(15);
        let mut params = BaeParams::new(12, 10, 6, &mut rng);
        let data = toy_data(24, 2, 12, 0.3, 16);
        let budget = TrainBudget {
            max_epochs: 150,
            batch: 48,
            lr: 1e-2,
            conv_tol: 1e-6,
            conv_patience: 5,
        };
        train_local_bae(&mut params, &data, &budget, &mut rng).unwrap();
        let trained_loss = mean_bce(&params, &data, 64).unwrap();

        // permute the latent layer but "forget" to permute the decoder
        let mut broken = params.clone();
        let perm = Permutation::new(vec![1, 2, 3, 4, 5, 0]).unwrap();
        let last = broken.encoder.len() - 1;
        broken.encoder[last].weights = perm.apply_cols(&broken.encoder[last].weights);
        broken.encoder[last].bias = perm.apply_slice(&broken.encoder[last].bias);
        let broken_loss = mean_bce(&broken, &data, 64).unwrap();
        assert!(
            broken_loss > trained_loss,
            "mismatched permutation should hurt: {broken_loss} vs {trained_loss}"
        );
    }

    #[test]
    fn adapt_rejects_bad_inputs() {
        let mut rng = Rng::from_seed(17);
        let mut params = BaeParams::new(10, 6, 4, &mut rng);
        let data = toy_data(10, 1, 10, 0.3, 18);
        let other = BaeParams::new(10, 5, 4, &mut Rng::from_seed(18));
        assert!(adapt_decoder(
            &mut params,
            &other.encoder,
            &Permutation::identity(4),
            &data,
            0,
            0,
            32,
            1e-3,
            &mut rng
        )
        .is_err());
        let global = params.encoder.clone();
        assert!(adapt_decoder(
            &mut params,
            &global,
            &Permutation::identity(3),
            &data,
            0,
            0,
            32,
            1e-3,
            &mut rng
        )
        .is_err());
    }

    #[test]
    fn latents_have_expected_shape_and_are_pure() {
        let mut rng = Rng::from_seed(19);
        let params = BaeParams::new(10, 6, 4, &mut rng);
        let data = toy_data(6, 3, 10, 0.3, 20);
        let a = compute_latents(&params.encoder, &data).unwrap();
        let b = compute_latents(&params.encoder, &data).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            (a.num_samples(), a.timesteps(), a.latent_dim()),
            (6, 3, 4)
        );
        assert_eq!(a.labels(), data.labels());

        let empty = BinarySequenceTensor::zeros(0, 3, 10);
        let z = compute_latents(&params.encoder, &empty).unwrap();
        assert_eq!((z.num_samples(), z.timesteps(), z.latent_dim()), (0, 3, 4));
    }

    #[test]
    fn duplicate_rows_give_duplicate_latents() {
        let mut rng = Rng::from_seed(21);
        let params = BaeParams::new(8, 6, 3, &mut rng);
        let mut data = BinarySequenceTensor::zeros(2, 1, 8);
        for d in [0usize, 3, 5] {
            data.set(0, 0, d, true);
            data.set(1, 0, d, true);
        }
        let latents = compute_latents(&params.encoder, &data).unwrap();
        assert_eq!(latents.step(0, 0), latents.step(1, 0));
    }
}
