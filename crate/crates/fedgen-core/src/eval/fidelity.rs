//! Fidelity metrics: per-feature prevalence, coefficient of determination
//! between real and synthetic per-(timestep, feature) means, and a Gaussian
//! kernel maximum mean discrepancy on flattened per-patient samples.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::BinarySequenceTensor;
use crate::error::CoreError;
use crate::fmath;
use crate::rng::Rng;
use crate::tensor::Matrix;

/// Marginal activation frequency of each feature: pooled over samples and
/// timesteps, plus the per-timestep `T x D` matrix (pooled over samples
/// only).
pub fn prevalence(tensor: &BinarySequenceTensor) -> Result<(Vec<f64>, Matrix), CoreError> {
    let (n, t, d) = (
        tensor.num_samples(),
        tensor.timesteps(),
        tensor.features(),
    );
    if n == 0 || t == 0 || d == 0 {
        return Err(CoreError::invalid("prevalence", "empty tensor"));
    }
    let mut per_step = Matrix::zeros(t, d);
    for ni in 0..n {
        for ti in 0..t {
            let row = per_step.row_mut(ti);
            for (di, slot) in row.iter_mut().enumerate() {
                if tensor.get(ni, ti, di) {
                    *slot += 1.0;
                }
            }
        }
    }
    per_step.scale(1.0 / n as f64);
    let mut pooled = vec![0.0; d];
    for ti in 0..t {
        for (p, v) in pooled.iter_mut().zip(per_step.row(ti).iter()) {
            *p += v;
        }
    }
    for p in pooled.iter_mut() {
        *p /= t as f64;
    }
    Ok((pooled, per_step))
}

/// `1 - sum (mu_real - mu_syn)^2 / sum (mu_real - mean(mu_real))^2` over the
/// per-(timestep, feature) mean grids. Sample counts may differ; `T` and `D`
/// must match. Errors when the real means have zero variance.
pub fn r2_fidelity(
    real: &BinarySequenceTensor,
    syn: &BinarySequenceTensor,
) -> Result<f64, CoreError> {
    if real.timesteps() != syn.timesteps() || real.features() != syn.features() {
        return Err(CoreError::shape(
            "r2_fidelity",
            alloc::format!("T={}, D={}", real.timesteps(), real.features()),
            alloc::format!("T={}, D={}", syn.timesteps(), syn.features()),
        ));
    }
    let (_, real_means) = prevalence(real)?;
    let (_, syn_means) = prevalence(syn)?;
    let cells = (real.timesteps() * real.features()) as f64;
    let grand = real_means.data().iter().sum::<f64>() / cells;
    let mut num = 0.0;
    let mut den = 0.0;
    for (r, s) in real_means.data().iter().zip(syn_means.data().iter()) {
        num += (r - s) * (r - s);
        den += (r - grand) * (r - grand);
    }
    if den == 0.0 {
        return Err(CoreError::degenerate(
            "r2_fidelity",
            "real per-(t,d) means are constant; denominator is zero".to_string(),
        ));
    }
    Ok(1.0 - num / den)
}

fn hamming(a: &[u64], b: &[u64]) -> u32 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x ^ y).count_ones())
        .sum()
}

pub(crate) fn subsample_words(
    tensor: &BinarySequenceTensor,
    cap: usize,
    rng: &mut Rng,
) -> Vec<Vec<u64>> {
    let n = tensor.num_samples();
    let mut indices: Vec<usize> = (0..n).collect();
    if n > cap {
        rng.shuffle(&mut indices);
        indices.truncate(cap);
        indices.sort_unstable();
    }
    indices.iter().map(|&i| tensor.sample_words(i)).collect()
}

/// Squared maximum mean discrepancy with a Gaussian kernel
/// `k(x, y) = exp(-||x - y||^2 / h)`; the bandwidth `h` is the median of the
/// pairwise squared distances over the pooled (sub)sample. Both sides are
/// capped at `cap` samples, drawn with the given seed. The estimator keeps
/// the diagonal terms, so identical sample sets give exactly zero.
pub fn mmd(
    real: &BinarySequenceTensor,
    syn: &BinarySequenceTensor,
    cap: usize,
    seed: u64,
) -> Result<f64, CoreError> {
    if real.num_samples() < 2 || syn.num_samples() < 2 {
        return Err(CoreError::invalid(
            "mmd",
            "need at least 2 samples on each side",
        ));
    }
    if real.timesteps() != syn.timesteps() || real.features() != syn.features() {
        return Err(CoreError::shape(
            "mmd",
            alloc::format!("T={}, D={}", real.timesteps(), real.features()),
            alloc::format!("T={}, D={}", syn.timesteps(), syn.features()),
        ));
    }
    let mut rng = Rng::from_tags(seed, &[0x33D5]);
    let xs = subsample_words(real, cap, &mut rng);
    let ys = subsample_words(syn, cap, &mut rng);
    let (n, m) = (xs.len(), ys.len());

    // pooled pairwise squared distances (Hamming == squared Euclidean on bits)
    let pooled: Vec<&Vec<u64>> = xs.iter().chain(ys.iter()).collect();
    let total = pooled.len();
    let mut dists: Vec<u32> = Vec::with_capacity(total * (total - 1) / 2);
    for i in 0..total {
        for j in (i + 1)..total {
            dists.push(hamming(pooled[i], pooled[j]));
        }
    }
    dists.sort_unstable();
    let med = dists[dists.len() / 2] as f64;
    let h = if med > 0.0 { med } else { 1.0 };

    let kernel_sum = |a: &[Vec<u64>], b: &[Vec<u64>]| -> f64 {
        let mut acc = 0.0;
        for x in a {
            for y in b {
                let d = hamming(x, y) as f64;
                acc += fmath::exp(-d / h);
            }
        }
        acc
    };
    let s_xx = kernel_sum(&xs, &xs) / (n * n) as f64;
    let s_yy = kernel_sum(&ys, &ys) / (m * m) as f64;
    let s_xy = kernel_sum(&xs, &ys) / (n * m) as f64;
    Ok(s_xx + s_yy - 2.0 * s_xy)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_tensor(n: usize, t: usize, d: usize, density: f64, seed: u64) -> BinarySequenceTensor {
        let mut rng = Rng::from_seed(seed);
        let mut tensor = BinarySequenceTensor::zeros(n, t, d);
        for i in 0..n {
            tensor.set_label(i, u8::from(rng.bernoulli(0.5)));
            for ti in 0..t {
                for di in 0..d {
                    if rng.bernoulli(density) {
                        tensor.set(i, ti, di, true);
                    }
                }
            }
        }
        tensor
    }

    #[test]
    fn prevalence_extremes_and_loop_oracle() {
        let zeros = BinarySequenceTensor::zeros(3, 2, 4);
        let (p, _) = prevalence(&zeros).unwrap();
        assert!(p.iter().all(|&x| x == 0.0));

        let mut ones = BinarySequenceTensor::zeros(2, 2, 3);
        for n in 0..2 {
            for t in 0..2 {
                for d in 0..3 {
                    ones.set(n, t, d, true);
                }
            }
        }
        let (p, _) = prevalence(&ones).unwrap();
        assert!(p.iter().all(|&x| x == 1.0));

        let tensor = random_tensor(5, 3, 7, 0.4, 3);
        let (pooled, per_step) = prevalence(&tensor).unwrap();
        for (d, &pooled_d) in pooled.iter().enumerate() {
            let mut count = 0usize;
            for n in 0..5 {
                for t in 0..3 {
                    count += tensor.get(n, t, d) as usize;
                }
            }
            let oracle = count as f64 / 15.0;
            assert!((pooled_d - oracle).abs() < 1e-12);
            for t in 0..3 {
                let mut ct = 0usize;
                for n in 0..5 {
                    ct += tensor.get(n, t, d) as usize;
                }
                assert!((per_step.get(t, d) - ct as f64 / 5.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn r2_self_is_one() {
        let tensor = random_tensor(10, 3, 6, 0.3, 5);
        assert_eq!(r2_fidelity(&tensor, &tensor).unwrap(), 1.0);
    }

    #[test]
    fn r2_hand_case_is_zero() {
        // real: T=2, D=1, N=5 with per-step means 0.2 and 0.4
        let mut real = BinarySequenceTensor::zeros(5, 2, 1);
        real.set(0, 0, 0, true); // t0: one of five
        real.set(0, 1, 0, true); // t1: two of five
        real.set(1, 1, 0, true);
        // syn: N=10 with means 0.3 and 0.3
        let mut syn = BinarySequenceTensor::zeros(10, 2, 1);
        for n in 0..3 {
            syn.set(n, 0, 0, true);
            syn.set(n, 1, 0, true);
        }
        let r2 = r2_fidelity(&real, &syn).unwrap();
        assert!(r2.abs() < 1e-12, "r2 = {r2}");
    }

    #[test]
    fn r2_errors_on_constant_real_means() {
        let real = BinarySequenceTensor::zeros(4, 2, 3);
        let syn = random_tensor(4, 2, 3, 0.5, 6);
        assert!(r2_fidelity(&real, &syn).is_err());
    }

    #[test]
    fn mmd_of_identical_sets_is_zero() {
        let tensor = random_tensor(30, 2, 10, 0.3, 7);
        let v = mmd(&tensor, &tensor, 100, 9).unwrap();
        assert!(v.abs() < 1e-12, "mmd = {v}");
    }

    #[test]
    fn mmd_is_symmetric() {
        let a = random_tensor(25, 2, 10, 0.3, 8);
        let b = random_tensor(20, 2, 10, 0.45, 9);
        let ab = mmd(&a, &b, 100, 11).unwrap();
        let ba = mmd(&b, &a, 100, 11).unwrap();
        assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn mmd_two_point_masses_matches_closed_form() {
        // all-zeros vs all-ones over D=8, T=1: every cross distance is 8,
        // every within distance 0, so the pooled median bandwidth is 8 and
        // MMD^2 = 2 (1 - exp(-8/h)).
        let n = 12;
        let zeros = BinarySequenceTensor::zeros(n, 1, 8);
        let mut ones = BinarySequenceTensor::zeros(n, 1, 8);
        for i in 0..n {
            for d in 0..8 {
                ones.set(i, 0, d, true);
            }
        }
        let v = mmd(&zeros, &ones, 100, 13).unwrap();
        let h = 8.0;
        let expect = 2.0 * (1.0 - (-8.0f64 / h).exp());
        assert!((v - expect).abs() < 1e-12, "{v} vs {expect}");
    }

    #[test]
    fn mmd_needs_two_samples_per_side() {
        let a = random_tensor(1, 2, 4, 0.3, 10);
        let b = random_tensor(5, 2, 4, 0.3, 11);
        assert!(mmd(&a, &b, 10, 1).is_err());
    }
}
