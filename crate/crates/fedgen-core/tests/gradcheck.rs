//! Central finite-difference verification of every analytic gradient the
//! training loops rely on: the autoencoder's fused sigmoid + BCE backward and
//! the temporal VAE's full ELBO backward (all heads plus the recurrent
//! backbone), each on a battery of random small instances.

use fedgen_core::bae::{bce_loss_and_grads, BaeParams};
use fedgen_core::data::LatentSequenceTensor;
use fedgen_core::nn::ParamSet;
use fedgen_core::rng::Rng;
use fedgen_core::tcvae::{elbo_and_grads, TcvaeParams};
use fedgen_core::tensor::Matrix;

const FD_STEP: f64 = 1e-5;
const REL_TOL: f64 = 1e-5;
// Sits above the fd roundoff floor (~1e-9 for losses of magnitude ~10) and
// below any gradient scale where the relative criterion is meaningful.
const ABS_TOL: f64 = 1e-8;

fn check_close(analytic: &[f64], fd: &[f64], label: &str) -> f64 {
    assert_eq!(analytic.len(), fd.len());
    let mut worst = 0.0f64;
    for (i, (&a, &f)) in analytic.iter().zip(fd.iter()).enumerate() {
        let err = (a - f).abs();
        let tol = REL_TOL * a.abs().max(f.abs()) + ABS_TOL;
        assert!(
            err <= tol,
            "{label}: param {i} analytic {a} vs fd {f} (err {err:.3e}, tol {tol:.3e})"
        );
        let scale = a.abs().max(f.abs());
        if scale > 1e-3 {
            worst = worst.max(err / scale);
        }
    }
    worst
}

fn finite_difference<P: ParamSet>(params: &P, mut loss_of: impl FnMut(&P) -> f64) -> Vec<f64> {
    let flat = params.flatten();
    let mut fd = Vec::with_capacity(flat.len());
    let mut work = params.clone();
    for i in 0..flat.len() {
        let mut plus = flat.clone();
        plus[i] += FD_STEP;
        work.load_flat(&plus);
        let up = loss_of(&work);
        let mut minus = flat.clone();
        minus[i] -= FD_STEP;
        work.load_flat(&minus);
        let down = loss_of(&work);
        fd.push((up - down) / (2.0 * FD_STEP));
    }
    fd
}

/// Relu is non-differentiable at zero, so finite differences disagree with
/// the subgradient whenever a pre-activation sits within the fd step of the
/// kink. Instances are resampled until both relu layers are in general
/// position (margin 1e-3 >> fd step).
fn kink_free_instance(trial: u64) -> (BaeParams, Matrix) {
    for attempt in 0..64u64 {
        let mut rng = Rng::from_tags(0xBAE0, &[trial, attempt]);
        let features = 4 + rng.below(5);
        let hidden = 4 + rng.below(4);
        let latent = 2 + rng.below(3);
        let batch = 1 + rng.below(3);
        let params = BaeParams::new(features, hidden, latent, &mut rng);
        let x = Matrix::from_fn(batch, features, |_, _| f64::from(rng.bernoulli(0.4)));

        let margin = 1e-3;
        let pre_activations = |layer: &fedgen_core::nn::DenseLayer, input: &[f64]| {
            let mut probe = layer.clone();
            probe.activation = fedgen_core::nn::Activation::Identity;
            probe.forward(input).unwrap()
        };
        let mut clear = true;
        for b in 0..x.rows() {
            clear &= pre_activations(&params.encoder[0], x.row(b))
                .iter()
                .all(|&v| v.abs() > margin);
            let z = params.encode(x.row(b)).unwrap();
            clear &= pre_activations(&params.decoder[0], &z)
                .iter()
                .all(|&v| v.abs() > margin);
        }
        if clear {
            return (params, x);
        }
    }
    panic!("no kink-free instance found for trial {trial}");
}

#[test]
fn bae_bce_gradients_match_finite_differences() {
    let mut worst = 0.0f64;
    for trial in 0..20u64 {
        let (params, x) = kink_free_instance(trial);
        let (_, grads) = bce_loss_and_grads(&params, &x);
        let mut analytic = Vec::new();
        for g in grads.encoder.iter().chain(grads.decoder.iter()) {
            analytic.extend_from_slice(g.weights.data());
            analytic.extend_from_slice(&g.bias);
        }
        let fd = finite_difference(&params, |p| bce_loss_and_grads(p, &x).0);
        worst = worst.max(check_close(&analytic, &fd, &format!("bae trial {trial}")));
    }
    println!("bae gradcheck worst relative error: {worst:.3e}");
    assert!(worst < REL_TOL);
}

#[test]
fn tcvae_elbo_gradients_match_finite_differences() {
    let mut worst = 0.0f64;
    for trial in 0..20u64 {
        let mut rng = Rng::from_tags(0x7C4E, &[trial]);
        let latent = 3 + rng.below(2);
        let z_dim = 2 + rng.below(2);
        let lstm_hidden = 3 + rng.below(3);
        let head_hidden = 4 + rng.below(3);
        let t_len = 1 + rng.below(3);
        let n = 1 + rng.below(2);
        let lambda = rng.uniform_in(0.0, 1.5);
        let params = TcvaeParams::new(latent, z_dim, 2, lstm_hidden, head_hidden, &mut rng);

        let mut latents = LatentSequenceTensor::zeros(n, t_len, latent);
        for i in 0..n {
            latents.set_label(i, u8::from(rng.bernoulli(0.5)));
            for t in 0..t_len {
                for v in latents.step_mut(i, t) {
                    *v = rng.uniform_in(-0.9, 0.9);
                }
            }
        }
        let samples: Vec<usize> = (0..n).collect();
        let noise_seed = 0x5EED ^ trial;

        let (_, grads) = elbo_and_grads(
            &params,
            &latents,
            &samples,
            lambda,
            &mut Rng::from_seed(noise_seed),
        )
        .unwrap();
        let analytic: Vec<f64> = grads
            .slices()
            .into_iter()
            .flat_map(|s| s.to_vec())
            .collect();
        let fd = finite_difference(&params, |p| {
            elbo_and_grads(p, &latents, &samples, lambda, &mut Rng::from_seed(noise_seed))
                .unwrap()
                .0
        });
        worst = worst.max(check_close(&analytic, &fd, &format!("tcvae trial {trial}")));
    }
    println!("tcvae gradcheck worst relative error: {worst:.3e}");
    assert!(worst < REL_TOL);
}
