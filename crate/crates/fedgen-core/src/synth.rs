//! Reproducible synthetic multi-hospital cohorts.
//!
//! Hospitals draw from one shared linear-Gaussian factor process (so a common
//! cross-hospital structure exists to recover) and differ by a per-hospital
//! logit offset (covariate shift), a hazard scaling of the factor dynamics
//! (temporal shift), size, sparsity, and label prevalence. Observations are
//! Bernoulli draws from factor-driven logits; labels follow a logistic rule
//! on mean factor activity so downstream prediction has learnable signal.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::BinarySequenceTensor;
use crate::error::CoreError;
use crate::fmath;
use crate::rng::Rng;
use crate::tensor::Matrix;

const TAG_BANK: u64 = 0xFAC7_0BA5;
const TAG_COHORT: u64 = 0xC0_0947;
const TAG_LABELS: u64 = 0x1A_BE15;

/// Shared latent structure of one experiment: factor loadings, a power-law
/// feature-frequency profile, per-factor AR(1) dynamics, and the labeling
/// rule. All hospitals of an experiment share one bank.
#[derive(Debug, Clone)]
pub struct FactorBank {
    /// `factors x features` loading matrix.
    pub loading: Matrix,
    /// Per-feature base log-odds (power-law frequency profile).
    pub intercepts: Vec<f64>,
    /// Per-factor AR(1) coefficients in `(0, 1)`.
    pub ar_coef: Vec<f64>,
    /// Weights of the logistic labeling rule over mean factor activity.
    pub label_weights: Vec<f64>,
    /// Sharpness of the labeling rule.
    pub label_sharpness: f64,
}

impl FactorBank {
    pub fn new(features: usize, factors: usize, seed: u64) -> Self {
        let mut rng = Rng::from_tags(seed, &[TAG_BANK]);
        let loading = Matrix::from_fn(factors, features, |_, _| 1.2 * rng.normal());
        // power-law frequency profile, normalized to unit mean, anchored at a
        // reference density of 0.1; per-cohort calibration shifts it later
        let mut profile: Vec<f64> = (0..features)
            .map(|d| fmath::powf((d + 1) as f64, -0.8))
            .collect();
        let mean = profile.iter().sum::<f64>() / features as f64;
        for p in profile.iter_mut() {
            *p /= mean;
        }
        let intercepts = profile
            .iter()
            .map(|&p| {
                let q = (0.1 * p).clamp(1e-4, 0.4);
                fmath::ln(q / (1.0 - q))
            })
            .collect();
        let ar_coef = (0..factors).map(|_| rng.uniform_in(0.6, 0.95)).collect();
        let mut label_weights: Vec<f64> = (0..factors).map(|_| rng.normal()).collect();
        let norm = fmath::sqrt(label_weights.iter().map(|w| w * w).sum::<f64>()).max(1e-12);
        for w in label_weights.iter_mut() {
            *w /= norm;
        }
        FactorBank {
            loading,
            intercepts,
            ar_coef,
            label_weights,
            label_sharpness: 3.0,
        }
    }

    pub fn factors(&self) -> usize {
        self.loading.rows()
    }

    pub fn features(&self) -> usize {
        self.loading.cols()
    }
}

/// Everything that makes one hospital's cohort distinct.
#[derive(Debug, Clone)]
pub struct HospitalCohortSpec {
    pub hospital_id: usize,
    pub n_samples: usize,
    /// Target mean feature density in `(0, 0.5]`.
    pub sparsity: f64,
    /// Per-feature logit bias (covariate shift); empty means zero offset.
    pub covariate_offset: Vec<f64>,
    /// Hazard log-scaling of factor dynamics (temporal shift); `0` is neutral,
    /// positive values speed factor mixing up, negative values slow it down.
    pub temporal_shift: f64,
    pub label_prevalence: f64,
    pub seed: u64,
}

impl HospitalCohortSpec {
    pub fn validate(&self, features: usize) -> Result<(), CoreError> {
        if self.n_samples == 0 {
            return Err(CoreError::invalid("generate_cohort", "n_samples is zero"));
        }
        if !(self.sparsity > 0.0 && self.sparsity <= 0.5) {
            return Err(CoreError::invalid(
                "generate_cohort",
                format!("sparsity target {} outside (0, 0.5]", self.sparsity),
            ));
        }
        if !(self.label_prevalence > 0.0 && self.label_prevalence < 1.0) {
            return Err(CoreError::invalid(
                "generate_cohort",
                format!("label prevalence {} outside (0, 1)", self.label_prevalence),
            ));
        }
        if !self.covariate_offset.is_empty() && self.covariate_offset.len() != features {
            return Err(CoreError::shape(
                "generate_cohort",
                format!("offset of width {features} (or empty)"),
                format!("offset of width {}", self.covariate_offset.len()),
            ));
        }
        if !self.temporal_shift.is_finite() {
            return Err(CoreError::invalid("generate_cohort", "non-finite temporal shift"));
        }
        Ok(())
    }
}

/// Solves `mean sigmoid(logits + c) = target` for the scalar shift `c` by
/// bisection; `f` is monotone increasing in `c`.
fn calibrate_shift(logits: &[f64], target: f64) -> f64 {
    let mean_at = |c: f64| -> f64 {
        logits.iter().map(|&l| fmath::sigmoid(l + c)).sum::<f64>() / logits.len() as f64
    };
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Samples one hospital's cohort. Pure function of `(spec, bank, timesteps)`.
pub fn generate_cohort(
    spec: &HospitalCohortSpec,
    bank: &FactorBank,
    timesteps: usize,
) -> Result<BinarySequenceTensor, CoreError> {
    spec.validate(bank.features())?;
    if timesteps == 0 {
        return Err(CoreError::invalid("generate_cohort", "timesteps is zero"));
    }
    let (n, t_len, d_len, f_len) = (spec.n_samples, timesteps, bank.features(), bank.factors());
    let mut rng = Rng::from_tags(spec.seed, &[TAG_COHORT, spec.hospital_id as u64]);

    // stationary AR(1) factor trajectories with hospital-scaled hazard
    let hazard = fmath::exp(spec.temporal_shift);
    let ar: Vec<f64> = bank
        .ar_coef
        .iter()
        .map(|&a| fmath::powf(a, hazard).clamp(0.0, 0.999))
        .collect();
    let noise_scale: Vec<f64> = ar.iter().map(|&a| fmath::sqrt(1.0 - a * a)).collect();
    let mut factors = vec![0.0f64; n * t_len * f_len];
    for s in 0..n {
        for f in 0..f_len {
            factors[(s * t_len) * f_len + f] = rng.normal();
        }
        for t in 1..t_len {
            for f in 0..f_len {
                let prev = factors[(s * t_len + t - 1) * f_len + f];
                factors[(s * t_len + t) * f_len + f] =
                    ar[f] * prev + noise_scale[f] * rng.normal();
            }
        }
    }

    // logits before global density calibration
    let zero_offset = vec![0.0; d_len];
    let offset: &[f64] = if spec.covariate_offset.is_empty() {
        &zero_offset
    } else {
        &spec.covariate_offset
    };
    let mut logits = vec![0.0f64; n * t_len * d_len];
    for s in 0..n {
        for t in 0..t_len {
            let u = &factors[(s * t_len + t) * f_len..(s * t_len + t + 1) * f_len];
            let base = (s * t_len + t) * d_len;
            let row = &mut logits[base..base + d_len];
            for (d, slot) in row.iter_mut().enumerate() {
                *slot = bank.intercepts[d] + offset[d];
            }
            for (f, &uf) in u.iter().enumerate() {
                if uf == 0.0 {
                    continue;
                }
                let load_row = bank.loading.row(f);
                for (slot, &l) in row.iter_mut().zip(load_row.iter()) {
                    *slot += uf * l;
                }
            }
        }
    }
    let shift = calibrate_shift(&logits, spec.sparsity);

    let mut tensor = BinarySequenceTensor::zeros(n, t_len, d_len);
    for s in 0..n {
        for t in 0..t_len {
            let base = (s * t_len + t) * d_len;
            for d in 0..d_len {
                if rng.bernoulli(fmath::sigmoid(logits[base + d] + shift)) {
                    tensor.set(s, t, d, true);
                }
            }
        }
    }

    // logistic labeling rule on mean factor activity, threshold calibrated to
    // the target prevalence on this cohort's scores
    let mut scores = vec![0.0f64; n];
    for (s, score) in scores.iter_mut().enumerate() {
        let mut acc = 0.0;
        for t in 0..t_len {
            let u = &factors[(s * t_len + t) * f_len..(s * t_len + t + 1) * f_len];
            for (w, &uf) in bank.label_weights.iter().zip(u.iter()) {
                acc += w * uf;
            }
        }
        *score = bank.label_sharpness * acc / t_len as f64;
    }
    let label_shift = calibrate_shift(&scores, spec.label_prevalence);
    let mut label_rng = Rng::from_tags(spec.seed, &[TAG_LABELS, spec.hospital_id as u64]);
    for (s, &score) in scores.iter().enumerate() {
        tensor.set_label(s, u8::from(label_rng.bernoulli(fmath::sigmoid(score + label_shift))));
    }
    Ok(tensor)
}
