use alloc::format;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::fmath;
use crate::tensor::check_len;

/// Probabilities are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` before taking
/// logs, guarding against saturated sigmoid outputs.
pub const BCE_CLAMP: f64 = 1e-7;

/// Mean binary cross-entropy `-(1/D) sum_d [x log p + (1-x) log(1-p)]`.
pub fn bce_loss(target: &[f64], prob: &[f64]) -> Result<f64, CoreError> {
    check_len("bce_loss", target.len(), prob.len())?;
    if target.is_empty() {
        return Err(CoreError::invalid("bce_loss", "empty vectors"));
    }
    let mut acc = 0.0;
    for (&x, &p) in target.iter().zip(prob.iter()) {
        let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        acc -= x * fmath::ln(p) + (1.0 - x) * fmath::ln(1.0 - p);
    }
    Ok(acc / target.len() as f64)
}

/// KL divergence `KL(N(mu_q, var_q) || N(mu_p, var_p))` between diagonal
/// Gaussians, summed over dimensions. Zero exactly when the parameters are
/// equal.
pub fn gaussian_kl(
    mu_q: &[f64],
    var_q: &[f64],
    mu_p: &[f64],
    var_p: &[f64],
) -> Result<f64, CoreError> {
    check_len("gaussian_kl", mu_q.len(), var_q.len())?;
    check_len("gaussian_kl", mu_q.len(), mu_p.len())?;
    check_len("gaussian_kl", mu_q.len(), var_p.len())?;
    let mut acc = 0.0;
    for i in 0..mu_q.len() {
        let (vq, vp) = (var_q[i], var_p[i]);
        if vq <= 0.0 || vp <= 0.0 {
            return Err(CoreError::invalid(
                "gaussian_kl",
                format!("non-positive variance at index {i}: q={vq}, p={vp}"),
            ));
        }
        let dm = mu_q[i] - mu_p[i];
        acc += 0.5 * ((vq + dm * dm) / vp - 1.0 + fmath::ln(vp) - fmath::ln(vq));
    }
    Ok(acc)
}

/// Gaussian negative log-likelihood of `target` under `N(mu, exp(log_var))`,
/// summed over dimensions and including the `0.5 log(2 pi sigma^2)` terms.
pub fn gaussian_nll(target: &[f64], mu: &[f64], log_var: &[f64]) -> Result<f64, CoreError> {
    check_len("gaussian_nll", target.len(), mu.len())?;
    check_len("gaussian_nll", target.len(), log_var.len())?;
    const LN_2PI: f64 = 1.8378770664093453;
    let mut acc = 0.0;
    for i in 0..target.len() {
        let inv_var = fmath::exp(-log_var[i]);
        let diff = target[i] - mu[i];
        acc += 0.5 * (diff * diff * inv_var + log_var[i] + LN_2PI);
    }
    Ok(acc)
}

/// Reparameterization `mu + sigma .* noise`.
pub fn reparameterize(mu: &[f64], sigma: &[f64], noise: &[f64]) -> Result<Vec<f64>, CoreError> {
    check_len("reparameterize", mu.len(), sigma.len())?;
    check_len("reparameterize", mu.len(), noise.len())?;
    if let Some(i) = sigma.iter().position(|&s| s < 0.0) {
        return Err(CoreError::invalid(
            "reparameterize",
            format!("negative sigma at index {i}"),
        ));
    }
    Ok(mu
        .iter()
        .zip(sigma.iter())
        .zip(noise.iter())
        .map(|((&m, &s), &e)| m + s * e)
        .collect())
}
