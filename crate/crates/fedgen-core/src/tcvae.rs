//! Temporal conditional VAE over aligned latent sequences.
//!
//! A two-layer LSTM backbone consumes `[h_{t-1}; c]` and summarizes history
//! into a state `s_t`; three dense heads parameterize per-step diagonal
//! Gaussians: a posterior `q(z_t | h_t, s_t, c)`, a temporal prior
//! `p(z_t | s_t, c)`, and a likelihood `p(h_t | z_t, s_t, c)`. Training
//! minimizes per-step Gaussian reconstruction NLL plus `lambda` times the
//! posterior/prior KL; generation rolls the prior autoregressively and never
//! touches the posterior head.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::LatentSequenceTensor;
use crate::error::CoreError;
use crate::fmath;
use crate::nn::{
    Activation, Adam, DenseGrad, DenseLayer, LstmBackbone, LstmBatchCache, LstmGrad, LstmState,
    ParamSet,
};
use crate::rng::Rng;
use crate::tensor::Matrix;

const LN_2PI: f64 = 1.8378770664093453;
/// Log-variance outputs are saturated to this band for numeric safety; the
/// gradient is masked outside it.
const LOGVAR_BOUND: f64 = 8.0;
const TAG_ELBO_NOISE: u64 = 0xE1B0;

/// Two-layer dense head producing `(mu, log_var)` of a diagonal Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub hidden: DenseLayer,
    pub out: DenseLayer,
}

/// Gradients mirroring a [`Head`].
#[derive(Debug, Clone)]
pub struct HeadGrad {
    pub hidden: DenseGrad,
    pub out: DenseGrad,
}

struct HeadCache {
    x: Matrix,
    hid: Matrix,
    lv_mask: Matrix,
}

impl Head {
    fn new(input: usize, hidden: usize, out_dim: usize, rng: &mut Rng) -> Self {
        Head {
            hidden: DenseLayer::new(input, hidden, Activation::Tanh, rng),
            out: DenseLayer::new(hidden, 2 * out_dim, Activation::Identity, rng),
        }
    }

    fn out_dim(&self) -> usize {
        self.out.out_dim() / 2
    }

    /// Batched forward: returns `(mu, log_var)` as `batch x out_dim` each.
    fn forward_batch(&self, x: &Matrix) -> (Matrix, Matrix, HeadCache) {
        let hid = self.hidden.forward_batch(x);
        let raw = self.out.forward_batch(&hid);
        let d = self.out_dim();
        let batch = x.rows();
        let mut mu = Matrix::zeros(batch, d);
        let mut lv = Matrix::zeros(batch, d);
        let mut mask = Matrix::zeros(batch, d);
        for b in 0..batch {
            let row = raw.row(b);
            for j in 0..d {
                mu.set(b, j, row[j]);
                let v = row[d + j];
                if v.abs() < LOGVAR_BOUND {
                    lv.set(b, j, v);
                    mask.set(b, j, 1.0);
                } else {
                    lv.set(b, j, v.clamp(-LOGVAR_BOUND, LOGVAR_BOUND));
                }
            }
        }
        (mu, lv, HeadCache { x: x.clone(), hid, lv_mask: mask })
    }

    fn forward_single(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>), CoreError> {
        let hid = self.hidden.forward(x)?;
        let raw = self.out.forward(&hid)?;
        let d = self.out_dim();
        let mu = raw[..d].to_vec();
        let lv = raw[d..]
            .iter()
            .map(|v| v.clamp(-LOGVAR_BOUND, LOGVAR_BOUND))
            .collect();
        Ok((mu, lv))
    }

    /// Backward from `(d_mu, d_log_var)`; accumulates into `grad` and returns
    /// the gradient on the head input.
    fn backward_batch(
        &self,
        cache: &HeadCache,
        d_mu: &Matrix,
        d_lv: &Matrix,
        grad: &mut HeadGrad,
    ) -> Matrix {
        let d = self.out_dim();
        let batch = cache.x.rows();
        let mut d_raw = Matrix::zeros(batch, 2 * d);
        for b in 0..batch {
            for j in 0..d {
                d_raw.set(b, j, d_mu.get(b, j));
                d_raw.set(b, d + j, d_lv.get(b, j) * cache.lv_mask.get(b, j));
            }
        }
        // output layer is identity, so d_raw is already the pre-activation grad
        let d_hid = self
            .out
            .backward_from_preact(&cache.hid, &d_raw, &mut grad.out, true)
            .unwrap();
        self.hidden
            .backward_batch(&cache.x, &cache.hid, &d_hid, &mut grad.hidden, true)
            .unwrap()
    }
}

/// Parameter groups of the temporal conditional VAE.
#[derive(Debug, Clone, PartialEq)]
pub struct TcvaeParams {
    pub backbone: LstmBackbone,
    pub posterior: Head,
    pub prior: Head,
    pub likelihood: Head,
    latent_dim: usize,
    z_dim: usize,
    cond_dim: usize,
}

/// Gradients mirroring [`TcvaeParams`].
#[derive(Debug, Clone)]
pub struct TcvaeGrads {
    pub backbone: LstmGrad,
    pub posterior: HeadGrad,
    pub prior: HeadGrad,
    pub likelihood: HeadGrad,
}

impl TcvaeGrads {
    pub fn zeros_like(params: &TcvaeParams) -> Self {
        let head = |h: &Head| HeadGrad {
            hidden: DenseGrad::zeros_like(&h.hidden),
            out: DenseGrad::zeros_like(&h.out),
        };
        TcvaeGrads {
            backbone: LstmGrad::zeros_like(&params.backbone),
            posterior: head(&params.posterior),
            prior: head(&params.prior),
            likelihood: head(&params.likelihood),
        }
    }

    /// Flattened view in the same order as [`TcvaeParams::param_slices`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in 0..self.backbone.w_x.len() {
            out.push(self.backbone.w_x[l].data());
            out.push(self.backbone.w_h[l].data());
            out.push(self.backbone.bias[l].as_slice());
        }
        for h in [&self.posterior, &self.prior, &self.likelihood] {
            out.push(h.hidden.weights.data());
            out.push(h.hidden.bias.as_slice());
            out.push(h.out.weights.data());
            out.push(h.out.bias.as_slice());
        }
        out
    }
}

impl ParamSet for TcvaeParams {
    fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for cell in &self.backbone.cells {
            out.push(cell.w_x.data());
            out.push(cell.w_h.data());
            out.push(cell.bias.as_slice());
        }
        for h in [&self.posterior, &self.prior, &self.likelihood] {
            out.push(h.hidden.weights.data());
            out.push(h.hidden.bias.as_slice());
            out.push(h.out.weights.data());
            out.push(h.out.bias.as_slice());
        }
        out
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for cell in &mut self.backbone.cells {
            out.push(cell.w_x.data_mut());
            out.push(cell.w_h.data_mut());
            out.push(cell.bias.as_mut_slice());
        }
        for h in [
            &mut self.posterior,
            &mut self.prior,
            &mut self.likelihood,
        ] {
            out.push(h.hidden.weights.data_mut());
            out.push(h.hidden.bias.as_mut_slice());
            out.push(h.out.weights.data_mut());
            out.push(h.out.bias.as_mut_slice());
        }
        out
    }
}

impl TcvaeParams {
    /// Backbone input is `[h; c]`; the posterior reads `[h_t; s_t; c]`, the
    /// prior `[s_t; c]`, and the likelihood `[z_t; s_t; c]`.
    pub fn new(
        latent_dim: usize,
        z_dim: usize,
        cond_dim: usize,
        lstm_hidden: usize,
        head_hidden: usize,
        rng: &mut Rng,
    ) -> Self {
        let backbone = LstmBackbone::new(latent_dim + cond_dim, lstm_hidden, rng);
        TcvaeParams {
            posterior: Head::new(latent_dim + lstm_hidden + cond_dim, head_hidden, z_dim, rng),
            prior: Head::new(lstm_hidden + cond_dim, head_hidden, z_dim, rng),
            likelihood: Head::new(z_dim + lstm_hidden + cond_dim, head_hidden, latent_dim, rng),
            backbone,
            latent_dim,
            z_dim,
            cond_dim,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn z_dim(&self) -> usize {
        self.z_dim
    }

    pub fn cond_dim(&self) -> usize {
        self.cond_dim
    }

    pub fn one_hot(&self, label: u8) -> Vec<f64> {
        let mut c = vec![0.0; self.cond_dim];
        c[(label as usize).min(self.cond_dim - 1)] = 1.0;
        c
    }
}

/// One teacher-forced step of the model (single sample): updates the state
/// with `[h_prev; c]`, evaluates all three heads, and samples `z_t` from the
/// posterior with the supplied standard-normal noise. Returns
/// `(state', mu_q, sigma_q, mu_p, sigma_p, z_t, mu_x, sigma_x)`.
#[allow(clippy::type_complexity)]
pub fn forward_step(
    params: &TcvaeParams,
    state: &LstmState,
    h_prev: &[f64],
    h_t: &[f64],
    cond: &[f64],
    noise: &[f64],
) -> Result<
    (
        LstmState,
        Vec<f64>,
        Vec<f64>,
        Vec<f64>,
        Vec<f64>,
        Vec<f64>,
        Vec<f64>,
        Vec<f64>,
    ),
    CoreError,
> {
    if h_prev.len() != params.latent_dim || h_t.len() != params.latent_dim {
        return Err(CoreError::shape(
            "tcvae_forward_step",
            format!("latent width {}", params.latent_dim),
            format!("widths {} / {}", h_prev.len(), h_t.len()),
        ));
    }
    if cond.len() != params.cond_dim {
        return Err(CoreError::shape(
            "tcvae_forward_step",
            format!("condition width {}", params.cond_dim),
            format!("condition width {}", cond.len()),
        ));
    }
    let mut x_in = h_prev.to_vec();
    x_in.extend_from_slice(cond);
    let (state_next, s_t) = params.backbone.step(state, &x_in)?;

    let mut post_in = h_t.to_vec();
    post_in.extend_from_slice(&s_t);
    post_in.extend_from_slice(cond);
    let (mu_q, lv_q) = params.posterior.forward_single(&post_in)?;

    let mut prior_in = s_t.clone();
    prior_in.extend_from_slice(cond);
    let (mu_p, lv_p) = params.prior.forward_single(&prior_in)?;

    let sigma_q: Vec<f64> = lv_q.iter().map(|&v| fmath::exp(0.5 * v)).collect();
    let sigma_p: Vec<f64> = lv_p.iter().map(|&v| fmath::exp(0.5 * v)).collect();
    let z = crate::nn::reparameterize(&mu_q, &sigma_q, noise)?;

    let mut lik_in = z.clone();
    lik_in.extend_from_slice(&s_t);
    lik_in.extend_from_slice(cond);
    let (mu_x, lv_x) = params.likelihood.forward_single(&lik_in)?;
    let sigma_x: Vec<f64> = lv_x.iter().map(|&v| fmath::exp(0.5 * v)).collect();

    Ok((state_next, mu_q, sigma_q, mu_p, sigma_p, z, mu_x, sigma_x))
}

fn hcat(parts: &[&Matrix]) -> Matrix {
    let rows = parts[0].rows();
    let cols: usize = parts.iter().map(|p| p.cols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    for r in 0..rows {
        let dst = out.row_mut(r);
        let mut off = 0;
        for p in parts {
            dst[off..off + p.cols()].copy_from_slice(p.row(r));
            off += p.cols();
        }
    }
    out
}

fn split_cols(m: &Matrix, widths: &[usize]) -> Vec<Matrix> {
    debug_assert_eq!(widths.iter().sum::<usize>(), m.cols());
    let mut out = Vec::with_capacity(widths.len());
    let mut off = 0;
    for &w in widths {
        let mut part = Matrix::zeros(m.rows(), w);
        for r in 0..m.rows() {
            part.row_mut(r).copy_from_slice(&m.row(r)[off..off + w]);
        }
        out.push(part);
        off += w;
    }
    out
}

fn gather_steps(latents: &LatentSequenceTensor, samples: &[usize], t: usize) -> Matrix {
    let d = latents.latent_dim();
    let mut m = Matrix::zeros(samples.len(), d);
    for (r, &n) in samples.iter().enumerate() {
        m.row_mut(r).copy_from_slice(latents.step(n, t));
    }
    m
}

fn cond_rows(params: &TcvaeParams, latents: &LatentSequenceTensor, samples: &[usize]) -> Matrix {
    let mut c = Matrix::zeros(samples.len(), params.cond_dim);
    for (r, &n) in samples.iter().enumerate() {
        let one_hot = params.one_hot(latents.label(n));
        c.row_mut(r).copy_from_slice(&one_hot);
    }
    c
}

/// Loss of one batch (mean over samples of the per-step NLL + `lambda` * KL
/// summed over time) together with gradients for every parameter group.
/// Posterior noise is drawn from `rng` in a fixed order, so callers control
/// reproducibility through the stream.
pub fn elbo_and_grads(
    params: &TcvaeParams,
    latents: &LatentSequenceTensor,
    samples: &[usize],
    lambda: f64,
    rng: &mut Rng,
) -> Result<(f64, TcvaeGrads), CoreError> {
    if samples.is_empty() {
        return Err(CoreError::invalid("tcvae_elbo", "empty batch"));
    }
    if latents.latent_dim() != params.latent_dim {
        return Err(CoreError::shape(
            "tcvae_elbo",
            format!("latent width {}", params.latent_dim),
            format!("latent width {}", latents.latent_dim()),
        ));
    }
    if lambda < 0.0 {
        return Err(CoreError::invalid("tcvae_elbo", "negative lambda"));
    }
    let batch = samples.len();
    let t_len = latents.timesteps();
    let (d, z_dim, s_dim) = (params.latent_dim, params.z_dim, params.backbone.hidden_dim());
    let cond = cond_rows(params, latents, samples);
    let scale = 1.0 / batch as f64;

    struct StepRecord {
        lstm: LstmBatchCache,
        post: HeadCache,
        prior: HeadCache,
        lik: HeadCache,
        mu_q: Matrix,
        lv_q: Matrix,
        mu_p: Matrix,
        lv_p: Matrix,
        mu_x: Matrix,
        lv_x: Matrix,
        eps: Matrix,
        h_t: Matrix,
    }

    let mut records: Vec<StepRecord> = Vec::with_capacity(t_len);
    let mut state = params.backbone.zero_batch_state(batch);
    let mut loss = 0.0;
    for t in 0..t_len {
        let h_prev = if t == 0 {
            Matrix::zeros(batch, d)
        } else {
            gather_steps(latents, samples, t - 1)
        };
        let h_t = gather_steps(latents, samples, t);
        let x_in = hcat(&[&h_prev, &cond]);
        let (next_state, s_t, lstm_cache) = params.backbone.step_batch(&state, &x_in);
        state = next_state;

        let post_in = hcat(&[&h_t, &s_t, &cond]);
        let (mu_q, lv_q, post_cache) = params.posterior.forward_batch(&post_in);
        let prior_in = hcat(&[&s_t, &cond]);
        let (mu_p, lv_p, prior_cache) = params.prior.forward_batch(&prior_in);

        let eps = Matrix::from_fn(batch, z_dim, |_, _| rng.normal());
        let mut z = Matrix::zeros(batch, z_dim);
        for b in 0..batch {
            for j in 0..z_dim {
                z.set(
                    b,
                    j,
                    mu_q.get(b, j) + fmath::exp(0.5 * lv_q.get(b, j)) * eps.get(b, j),
                );
            }
        }
        let lik_in = hcat(&[&z, &s_t, &cond]);
        let (mu_x, lv_x, lik_cache) = params.likelihood.forward_batch(&lik_in);

        for b in 0..batch {
            for j in 0..d {
                let diff = h_t.get(b, j) - mu_x.get(b, j);
                let lv = lv_x.get(b, j);
                loss += scale * 0.5 * (diff * diff * fmath::exp(-lv) + lv + LN_2PI);
            }
            for j in 0..z_dim {
                let (vq, vp) = (fmath::exp(lv_q.get(b, j)), fmath::exp(lv_p.get(b, j)));
                let dm = mu_q.get(b, j) - mu_p.get(b, j);
                loss += scale
                    * lambda
                    * 0.5
                    * ((vq + dm * dm) / vp - 1.0 + lv_p.get(b, j) - lv_q.get(b, j));
            }
        }
        records.push(StepRecord {
            lstm: lstm_cache,
            post: post_cache,
            prior: prior_cache,
            lik: lik_cache,
            mu_q,
            lv_q,
            mu_p,
            lv_p,
            mu_x,
            lv_x,
            eps,
            h_t,
        });
    }

    // backward through time
    let mut grads = TcvaeGrads::zeros_like(params);
    let mut d_state = params.backbone.zero_state_grads(batch);
    for rec in records.iter().rev() {
        // likelihood NLL
        let mut d_mu_x = Matrix::zeros(batch, d);
        let mut d_lv_x = Matrix::zeros(batch, d);
        for b in 0..batch {
            for j in 0..d {
                let inv_var = fmath::exp(-rec.lv_x.get(b, j));
                let diff = rec.h_t.get(b, j) - rec.mu_x.get(b, j);
                d_mu_x.set(b, j, -scale * diff * inv_var);
                d_lv_x.set(b, j, scale * 0.5 * (1.0 - diff * diff * inv_var));
            }
        }
        let d_lik_in =
            params
                .likelihood
                .backward_batch(&rec.lik, &d_mu_x, &d_lv_x, &mut grads.likelihood);
        let parts = split_cols(&d_lik_in, &[z_dim, s_dim, params.cond_dim]);
        let d_z = &parts[0];
        let mut d_s = parts[1].clone();

        // KL terms
        let mut d_mu_q = Matrix::zeros(batch, z_dim);
        let mut d_lv_q = Matrix::zeros(batch, z_dim);
        let mut d_mu_p = Matrix::zeros(batch, z_dim);
        let mut d_lv_p = Matrix::zeros(batch, z_dim);
        for b in 0..batch {
            for j in 0..z_dim {
                let (vq, vp) = (fmath::exp(rec.lv_q.get(b, j)), fmath::exp(rec.lv_p.get(b, j)));
                let dm = rec.mu_q.get(b, j) - rec.mu_p.get(b, j);
                let w = scale * lambda;
                d_mu_q.set(b, j, w * dm / vp);
                d_mu_p.set(b, j, -w * dm / vp);
                d_lv_q.set(b, j, w * 0.5 * (vq / vp - 1.0));
                d_lv_p.set(b, j, w * 0.5 * (1.0 - (vq + dm * dm) / vp));
                // reparameterization path through z = mu_q + exp(lv_q/2) * eps
                let dz = d_z.get(b, j);
                d_mu_q.set(b, j, d_mu_q.get(b, j) + dz);
                d_lv_q.set(
                    b,
                    j,
                    d_lv_q.get(b, j)
                        + dz * rec.eps.get(b, j) * 0.5 * fmath::exp(0.5 * rec.lv_q.get(b, j)),
                );
            }
        }

        let d_post_in =
            params
                .posterior
                .backward_batch(&rec.post, &d_mu_q, &d_lv_q, &mut grads.posterior);
        let parts = split_cols(&d_post_in, &[d, s_dim, params.cond_dim]);
        d_s.axpy(1.0, &parts[1]);

        let d_prior_in = params
            .prior
            .backward_batch(&rec.prior, &d_mu_p, &d_lv_p, &mut grads.prior);
        let parts = split_cols(&d_prior_in, &[s_dim, params.cond_dim]);
        d_s.axpy(1.0, &parts[0]);

        d_state = params
            .backbone
            .backward_step(&rec.lstm, &d_s, d_state, &mut grads.backbone);
    }

    Ok((loss, grads))
}

/// Forward-only ELBO over a whole latent tensor with a dedicated noise
/// stream; used for validation-loss tracking.
pub fn elbo_value(
    params: &TcvaeParams,
    latents: &LatentSequenceTensor,
    lambda: f64,
    noise_seed: u64,
) -> Result<f64, CoreError> {
    let n = latents.num_samples();
    if n == 0 {
        return Err(CoreError::invalid("tcvae_elbo", "empty batch"));
    }
    let mut rng = Rng::from_tags(noise_seed, &[TAG_ELBO_NOISE]);
    let mut total = 0.0;
    let samples: Vec<usize> = (0..n).collect();
    for chunk in samples.chunks(512) {
        // gradients are discarded; the forward path dominates the cost
        let (loss, _) = elbo_and_grads(params, latents, chunk, lambda, &mut rng)?;
        total += loss * chunk.len() as f64;
    }
    Ok(total / n as f64)
}

/// One epoch of minibatch training; returns the size-weighted mean batch
/// loss. Batch order and posterior noise come from `rng`.
pub fn train_epoch(
    params: &mut TcvaeParams,
    latents: &LatentSequenceTensor,
    lambda: f64,
    batch: usize,
    adam: &mut Adam,
    rng: &mut Rng,
) -> Result<f64, CoreError> {
    let n = latents.num_samples();
    if n == 0 {
        return Err(CoreError::invalid("train_local_tcvae", "empty data"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut total = 0.0;
    for chunk in order.chunks(batch.max(1)) {
        let (loss, grads) = elbo_and_grads(params, latents, chunk, lambda, rng)?;
        total += loss * chunk.len() as f64;
        let mut slices = params.param_slices_mut();
        adam.step(&mut slices, &grads.slices());
    }
    Ok(total / n as f64)
}

/// Local training for a fixed number of epochs (the protocol uses one per
/// round); zero epochs leaves the parameters untouched and reports the
/// current loss. Returns the last epoch's mean training loss.
pub fn train_local_tcvae(
    params: &mut TcvaeParams,
    latents: &LatentSequenceTensor,
    lambda: f64,
    epochs: usize,
    batch: usize,
    adam: &mut Adam,
    rng: &mut Rng,
) -> Result<f64, CoreError> {
    if latents.num_samples() == 0 {
        return Err(CoreError::invalid("train_local_tcvae", "empty data"));
    }
    if epochs == 0 {
        let samples: Vec<usize> = (0..latents.num_samples()).collect();
        let (loss, _) = elbo_and_grads(params, latents, &samples, lambda, rng)?;
        return Ok(loss);
    }
    let mut last = 0.0;
    for _ in 0..epochs {
        last = train_epoch(params, latents, lambda, batch, adam, rng)?;
    }
    Ok(last)
}

/// Per-sample, per-step posterior moments `(mu, var)` under the current
/// parameters, computed on a deterministic teacher-forced pass (the posterior
/// depends on the data only, never on sampled z).
#[derive(Debug, Clone)]
pub struct PosteriorMoments {
    pub n: usize,
    pub t: usize,
    pub z_dim: usize,
    /// `n x t x z_dim`, row-major.
    pub means: Vec<f64>,
    /// Same layout.
    pub vars: Vec<f64>,
}

pub fn posterior_moments(
    params: &TcvaeParams,
    latents: &LatentSequenceTensor,
) -> Result<PosteriorMoments, CoreError> {
    let n = latents.num_samples();
    if n == 0 {
        return Err(CoreError::invalid("posterior_moments", "empty data"));
    }
    let t_len = latents.timesteps();
    let z_dim = params.z_dim;
    let mut means = vec![0.0; n * t_len * z_dim];
    let mut vars = vec![0.0; n * t_len * z_dim];
    let samples: Vec<usize> = (0..n).collect();
    for chunk in samples.chunks(512) {
        let cond = cond_rows(params, latents, chunk);
        let mut state = params.backbone.zero_batch_state(chunk.len());
        for t in 0..t_len {
            let h_prev = if t == 0 {
                Matrix::zeros(chunk.len(), params.latent_dim)
            } else {
                gather_steps(latents, chunk, t - 1)
            };
            let h_t = gather_steps(latents, chunk, t);
            let x_in = hcat(&[&h_prev, &cond]);
            let (next_state, s_t, _) = params.backbone.step_batch(&state, &x_in);
            state = next_state;
            let post_in = hcat(&[&h_t, &s_t, &cond]);
            let (mu_q, lv_q, _) = params.posterior.forward_batch(&post_in);
            for (r, &sample) in chunk.iter().enumerate() {
                let base = (sample * t_len + t) * z_dim;
                for j in 0..z_dim {
                    means[base + j] = mu_q.get(r, j);
                    vars[base + j] = fmath::exp(lv_q.get(r, j));
                }
            }
        }
    }
    Ok(PosteriorMoments {
        n,
        t: t_len,
        z_dim,
        means,
        vars,
    })
}

/// Autoregressive generation (prior head only): starting from zero state and
/// a zero previous latent, each step samples `z_t` from the temporal prior
/// and emits the likelihood mean (or a sample when `sample_emission`).
pub fn generate_latent_sequence(
    params: &TcvaeParams,
    cond: &[f64],
    t_len: usize,
    rng: &mut Rng,
    sample_emission: bool,
) -> Result<Vec<Vec<f64>>, CoreError> {
    if t_len == 0 {
        return Err(CoreError::invalid("generate_latent_sequence", "T must be >= 1"));
    }
    if cond.len() != params.cond_dim {
        return Err(CoreError::shape(
            "generate_latent_sequence",
            format!("condition width {}", params.cond_dim),
            format!("condition width {}", cond.len()),
        ));
    }
    let mut state = params.backbone.zero_state();
    let mut h_prev = vec![0.0; params.latent_dim];
    let mut out = Vec::with_capacity(t_len);
    for _ in 0..t_len {
        let mut x_in = h_prev.clone();
        x_in.extend_from_slice(cond);
        let (next_state, s_t) = params.backbone.step(&state, &x_in)?;
        state = next_state;

        let mut prior_in = s_t.clone();
        prior_in.extend_from_slice(cond);
        let (mu_p, lv_p) = params.prior.forward_single(&prior_in)?;
        let sigma_p: Vec<f64> = lv_p.iter().map(|&v| fmath::exp(0.5 * v)).collect();
        let noise = rng.normal_vec(params.z_dim);
        let z = crate::nn::reparameterize(&mu_p, &sigma_p, &noise)?;

        let mut lik_in = z;
        lik_in.extend_from_slice(&s_t);
        lik_in.extend_from_slice(cond);
        let (mu_x, lv_x) = params.likelihood.forward_single(&lik_in)?;
        let h_t = if sample_emission {
            let sigma_x: Vec<f64> = lv_x.iter().map(|&v| fmath::exp(0.5 * v)).collect();
            let noise = rng.normal_vec(params.latent_dim);
            crate::nn::reparameterize(&mu_x, &sigma_x, &noise)?
        } else {
            mu_x
        };
        h_prev = h_t.clone();
        out.push(h_t);
    }
    Ok(out)
}
