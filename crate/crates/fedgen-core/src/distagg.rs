//! Distribution-aware aggregation for the temporal VAE stage.
//!
//! Each hospital summarizes its per-timestep posterior mixture by moment
//! matching (law of total variance) into a diagonal Gaussian per step; the
//! server computes the pairwise mean temporal KL divergence between those
//! summaries and softmax-reweights the sample-size weights so hospitals whose
//! latent distributions diverge from the rest contribute less.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::fmath;
use crate::matching::AggregationWeights;
use crate::nn::gaussian_kl;
use crate::tcvae::{PosteriorMoments, TcvaeParams};
use crate::tensor::Matrix;

/// Variances below this floor are clamped, preventing KL blow-ups from
/// collapsed posteriors.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Moment-matched diagonal Gaussian of a hospital's posterior mixture, one
/// per timestep. This is the only statistic a hospital shares with the
/// server in the second stage: `T * 2 * z_dim` numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentDistributionSummary {
    t_len: usize,
    z_dim: usize,
    /// `t x z_dim`, row-major.
    means: Vec<f64>,
    /// Same layout; entries are at least [`VARIANCE_FLOOR`].
    vars: Vec<f64>,
}

impl LatentDistributionSummary {
    pub fn timesteps(&self) -> usize {
        self.t_len
    }

    pub fn z_dim(&self) -> usize {
        self.z_dim
    }

    pub fn mean_at(&self, t: usize) -> &[f64] {
        &self.means[t * self.z_dim..(t + 1) * self.z_dim]
    }

    pub fn var_at(&self, t: usize) -> &[f64] {
        &self.vars[t * self.z_dim..(t + 1) * self.z_dim]
    }
}

/// Moment-matches the per-sample posterior moments into one diagonal
/// Gaussian per timestep: the mixture mean is the mean of posterior means;
/// the mixture variance is the mean posterior variance plus the population
/// variance of the posterior means.
pub fn summarize_latent_distribution(
    moments: &PosteriorMoments,
) -> Result<LatentDistributionSummary, CoreError> {
    if moments.n == 0 {
        return Err(CoreError::invalid(
            "summarize_latent_distribution",
            "no samples",
        ));
    }
    let (n, t_len, z_dim) = (moments.n, moments.t, moments.z_dim);
    let mut means = vec![0.0; t_len * z_dim];
    let mut vars = vec![0.0; t_len * z_dim];
    let inv_n = 1.0 / n as f64;
    for t in 0..t_len {
        for j in 0..z_dim {
            let mut mean = 0.0;
            let mut mean_var = 0.0;
            for s in 0..n {
                let base = (s * t_len + t) * z_dim + j;
                mean += moments.means[base];
                mean_var += moments.vars[base];
            }
            mean *= inv_n;
            mean_var *= inv_n;
            let mut between = 0.0;
            for s in 0..n {
                let base = (s * t_len + t) * z_dim + j;
                let d = moments.means[base] - mean;
                between += d * d;
            }
            between *= inv_n;
            means[t * z_dim + j] = mean;
            vars[t * z_dim + j] = (mean_var + between).max(VARIANCE_FLOOR);
        }
    }
    Ok(LatentDistributionSummary {
        t_len,
        z_dim,
        means,
        vars,
    })
}

/// Mean over timesteps of the closed-form KL between the two hospitals'
/// per-step summaries; asymmetric in general.
pub fn temporal_divergence(
    a: &LatentDistributionSummary,
    b: &LatentDistributionSummary,
) -> Result<f64, CoreError> {
    if a.t_len != b.t_len || a.z_dim != b.z_dim {
        return Err(CoreError::shape(
            "temporal_divergence",
            format!("{}x{}", a.t_len, a.z_dim),
            format!("{}x{}", b.t_len, b.z_dim),
        ));
    }
    let mut acc = 0.0;
    for t in 0..a.t_len {
        acc += gaussian_kl(a.mean_at(t), a.var_at(t), b.mean_at(t), b.var_at(t))?;
    }
    Ok(acc / a.t_len as f64)
}

/// `K x K` matrix of pairwise temporal divergences with a zero diagonal.
pub fn divergence_matrix(
    summaries: &[LatentDistributionSummary],
) -> Result<Matrix, CoreError> {
    let k = summaries.len();
    let mut m = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            if i != j {
                m.set(i, j, temporal_divergence(&summaries[i], &summaries[j])?);
            }
        }
    }
    Ok(m)
}

/// Softmax reweighting `alpha_k exp(-tau dbar_k) / sum_j alpha_j exp(-tau dbar_j)`
/// where `dbar_k` is hospital `k`'s mean divergence to the others. `tau = 0`
/// returns the sample-size weights unchanged (the exponent vanishes), and a
/// single hospital always receives weight one.
pub fn distribution_weights(
    divergences: &Matrix,
    alpha: &AggregationWeights,
    tau: f64,
) -> Result<Vec<f64>, CoreError> {
    let k = alpha.len();
    if divergences.rows() != k || divergences.cols() != k {
        return Err(CoreError::shape(
            "distribution_weights",
            format!("{k}x{k}"),
            divergences.shape_string(),
        ));
    }
    if tau < 0.0 {
        return Err(CoreError::invalid("distribution_weights", "negative tau"));
    }
    if k == 1 {
        return Ok(vec![1.0]);
    }
    if tau == 0.0 {
        return Ok(alpha.alpha().to_vec());
    }
    let mut dbar = vec![0.0; k];
    for (i, d) in dbar.iter_mut().enumerate() {
        let mut acc = 0.0;
        for j in 0..k {
            if j != i {
                acc += divergences.get(i, j);
            }
        }
        *d = acc / (k - 1) as f64;
    }
    let mut weights: Vec<f64> = alpha
        .alpha()
        .iter()
        .zip(dbar.iter())
        .map(|(&a, &d)| a * fmath::exp(-tau * d))
        .collect();
    let total: f64 = weights.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return Err(CoreError::degenerate(
            "distribution_weights",
            format!("weight normalizer {total} is unusable"),
        ));
    }
    for w in weights.iter_mut() {
        *w /= total;
    }
    Ok(weights)
}

/// Mean divergence of each hospital to the others (the `dbar` vector that
/// feeds the reweighting); exposed for round logging.
pub fn mean_divergences(divergences: &Matrix) -> Vec<f64> {
    let k = divergences.rows();
    if k <= 1 {
        return vec![0.0; k];
    }
    (0..k)
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..k {
                if j != i {
                    acc += divergences.get(i, j);
                }
            }
            acc / (k - 1) as f64
        })
        .collect()
}

/// Component-wise aggregation of the TCVAE parameter groups (posterior,
/// prior, likelihood heads, and the recurrent backbone) with the given
/// weights.
pub fn distribution_aware_aggregate(
    sets: &[TcvaeParams],
    weights: &[f64],
) -> Result<TcvaeParams, CoreError> {
    crate::nn::weighted_combine(sets, weights)
}
