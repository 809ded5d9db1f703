//! Minimal neural-network kernel: dense layers, a stacked LSTM backbone,
//! element losses, and an Adam optimizer. Backpropagation is hand-derived
//! for the fixed architectures used by the pipeline and is verified against
//! central finite differences in the test suites.

mod activation;
mod adam;
mod dense;
mod loss;
mod lstm;

pub use activation::Activation;
pub use adam::Adam;
pub(crate) use dense::forward_stack;
pub use dense::{DenseGrad, DenseLayer};
pub use loss::{bce_loss, gaussian_kl, gaussian_nll, reparameterize, BCE_CLAMP};
pub use lstm::{LstmBackbone, LstmBatchCache, LstmBatchState, LstmCell, LstmGrad, LstmState};

use alloc::vec::Vec;

/// Access to the trainable scalars of a parameter container, in a fixed
/// traversal order. Backing both optimizer updates and federated averaging
/// with the same traversal keeps the two bit-consistent.
pub trait ParamSet: Clone {
    fn param_slices(&self) -> Vec<&[f64]>;
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]>;

    fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for s in self.param_slices() {
            out.extend_from_slice(s);
        }
        out
    }

    fn load_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for s in self.param_slices_mut() {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        }
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }

    /// Sets every parameter to zero; turns a clone into a gradient buffer.
    fn zero_params(&mut self) {
        for s in self.param_slices_mut() {
            s.iter_mut().for_each(|x| *x = 0.0);
        }
    }
}

impl ParamSet for Vec<DenseLayer> {
    fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.len() * 2);
        for layer in self {
            out.push(layer.weights.data());
            out.push(layer.bias.as_slice());
        }
        out
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(self.len() * 2);
        for layer in self {
            out.push(layer.weights.data_mut());
            out.push(layer.bias.as_mut_slice());
        }
        out
    }
}

/// Weighted elementwise combination `sum_k w_k * sets[k]` of identically
/// shaped parameter containers.
pub fn weighted_combine<P: ParamSet>(
    sets: &[P],
    weights: &[f64],
) -> Result<P, crate::error::CoreError> {
    use crate::error::CoreError;
    if sets.is_empty() || sets.len() != weights.len() {
        return Err(CoreError::invalid(
            "weighted_combine",
            alloc::format!(
                "need matching non-empty sets and weights, got {} sets / {} weights",
                sets.len(),
                weights.len()
            ),
        ));
    }
    let reference: Vec<usize> = sets[0].param_slices().iter().map(|s| s.len()).collect();
    for (k, set) in sets.iter().enumerate().skip(1) {
        let shape: Vec<usize> = set.param_slices().iter().map(|s| s.len()).collect();
        if shape != reference {
            return Err(CoreError::shape(
                "weighted_combine",
                alloc::format!("{reference:?}"),
                alloc::format!("set {k}: {shape:?}"),
            ));
        }
    }
    let mut out = sets[0].clone();
    out.zero_params();
    {
        let mut out_slices = out.param_slices_mut();
        for (set, &w) in sets.iter().zip(weights.iter()) {
            for (dst, src) in out_slices.iter_mut().zip(set.param_slices()) {
                for (d, s) in dst.iter_mut().zip(src.iter()) {
                    *d += w * s;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn flatten_load_roundtrip() {
        let mut rng = Rng::from_seed(5);
        let stack = alloc::vec![
            DenseLayer::new(3, 4, Activation::Relu, &mut rng),
            DenseLayer::new(4, 2, Activation::Tanh, &mut rng),
        ];
        let flat = stack.flatten();
        assert_eq!(flat.len(), 3 * 4 + 4 + 4 * 2 + 2);
        let mut other = stack.clone();
        other.zero_params();
        assert!(other.flatten().iter().all(|&x| x == 0.0));
        other.load_flat(&flat);
        assert_eq!(other.flatten(), flat);
    }

    #[test]
    fn weighted_combine_averages() {
        let mut rng = Rng::from_seed(6);
        let a = alloc::vec![DenseLayer::new(2, 2, Activation::Identity, &mut rng)];
        let mut b = a.clone();
        for s in b.param_slices_mut() {
            s.iter_mut().for_each(|x| *x = 1.0);
        }
        let mut zeros = a.clone();
        zeros.zero_params();
        let combined = weighted_combine(&[zeros, b], &[0.25, 0.75]).unwrap();
        assert!(combined.flatten().iter().all(|&x| (x - 0.75).abs() < 1e-15));
    }
}
