use alloc::format;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::nn::Activation;
use crate::rng::Rng;
use crate::tensor::{add_row_bias, col_sums, matmul, matmul_a_bt, matmul_at_b, Matrix};

/// Fully connected layer.
///
/// `weights` is `input x output`: column `i` holds the incoming weights of
/// output neuron `i`, so a forward pass computes `f(W^T x + b)`. The neuron
/// matching aggregator relies on this column-per-neuron layout.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// Gradient buffer mirroring one [`DenseLayer`].
#[derive(Debug, Clone)]
pub struct DenseGrad {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl DenseGrad {
    pub fn zeros_like(layer: &DenseLayer) -> Self {
        DenseGrad {
            weights: Matrix::zeros(layer.weights.rows(), layer.weights.cols()),
            bias: alloc::vec![0.0; layer.bias.len()],
        }
    }

    pub fn zero(&mut self) {
        self.weights.fill(0.0);
        self.bias.iter_mut().for_each(|b| *b = 0.0);
    }
}

impl DenseLayer {
    /// Layer with weights drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`
    /// and zero bias.
    pub fn new(input: usize, output: usize, activation: Activation, rng: &mut Rng) -> Self {
        let bound = 1.0 / crate::fmath::sqrt(input as f64);
        DenseLayer {
            weights: Matrix::from_fn(input, output, |_, _| rng.uniform_in(-bound, bound)),
            bias: alloc::vec![0.0; output],
            activation,
        }
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.weights.rows()
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.weights.cols()
    }

    /// Single-sample forward pass `f(W^T x + b)`.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, CoreError> {
        if input.len() != self.in_dim() {
            return Err(CoreError::shape(
                "dense_forward",
                format!("input of width {}", self.in_dim()),
                format!("input of width {}", input.len()),
            ));
        }
        let mut out = self.bias.clone();
        for (k, &x) in input.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            let w_row = self.weights.row(k);
            for (o, w) in out.iter_mut().zip(w_row.iter()) {
                *o += x * w;
            }
        }
        for o in out.iter_mut() {
            *o = self.activation.apply(*o);
        }
        Ok(out)
    }

    /// Batched forward pass; `x` is `batch x in_dim`, result `batch x out_dim`
    /// holds post-activation values.
    pub fn forward_batch(&self, x: &Matrix) -> Matrix {
        assert_eq!(x.cols(), self.in_dim(), "dense forward_batch width mismatch");
        let mut pre = matmul(x, &self.weights);
        add_row_bias(&mut pre, &self.bias);
        for v in pre.data_mut() {
            *v = self.activation.apply(*v);
        }
        pre
    }

    /// Batched backward pass given this layer's input, output, and the loss
    /// gradient with respect to the output. Accumulates into `grad` and
    /// returns the gradient with respect to the input when `want_dx`.
    pub fn backward_batch(
        &self,
        x: &Matrix,
        y: &Matrix,
        d_out: &Matrix,
        grad: &mut DenseGrad,
        want_dx: bool,
    ) -> Option<Matrix> {
        let mut dz = d_out.clone();
        for (dz_v, y_v) in dz.data_mut().iter_mut().zip(y.data().iter()) {
            *dz_v *= self.activation.grad_from_output(*y_v);
        }
        self.backward_from_preact(x, &dz, grad, want_dx)
    }

    /// Backward pass from a pre-activation gradient (used when the loss and
    /// final activation are fused, e.g. sigmoid + binary cross-entropy).
    pub fn backward_from_preact(
        &self,
        x: &Matrix,
        dz: &Matrix,
        grad: &mut DenseGrad,
        want_dx: bool,
    ) -> Option<Matrix> {
        grad.weights.axpy(1.0, &matmul_at_b(x, dz));
        for (b, s) in grad.bias.iter_mut().zip(col_sums(dz)) {
            *b += s;
        }
        if want_dx {
            Some(matmul_a_bt(dz, &self.weights))
        } else {
            None
        }
    }
}

/// Forward pass through a stack of layers, returning every post-activation
/// (index 0 is the input itself).
pub(crate) fn forward_stack(layers: &[DenseLayer], x: &Matrix) -> Vec<Matrix> {
    let mut acts = Vec::with_capacity(layers.len() + 1);
    acts.push(x.clone());
    for layer in layers {
        let next = layer.forward_batch(acts.last().unwrap());
        acts.push(next);
    }
    acts
}
