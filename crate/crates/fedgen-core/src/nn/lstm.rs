use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::fmath;
use crate::nn::ParamSet;
use crate::rng::Rng;
use crate::tensor::{add_row_bias, col_sums, matmul, matmul_a_bt, matmul_at_b, Matrix};

/// One LSTM cell. Gate pre-activations are packed `[i | f | g | o]` along the
/// width-`4h` axis of `w_x` (`in x 4h`), `w_h` (`h x 4h`), and `bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    pub w_x: Matrix,
    pub w_h: Matrix,
    pub bias: Vec<f64>,
}

impl LstmCell {
    fn new(input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / fmath::sqrt(input.max(hidden) as f64);
        let mut bias = vec![0.0; 4 * hidden];
        // forget-gate bias starts at +1 for stable early memory
        for b in bias[hidden..2 * hidden].iter_mut() {
            *b = 1.0;
        }
        LstmCell {
            w_x: Matrix::from_fn(input, 4 * hidden, |_, _| rng.uniform_in(-bound, bound)),
            w_h: Matrix::from_fn(hidden, 4 * hidden, |_, _| rng.uniform_in(-bound, bound)),
            bias,
        }
    }

    #[inline]
    fn hidden(&self) -> usize {
        self.w_h.rows()
    }

    #[inline]
    fn input(&self) -> usize {
        self.w_x.rows()
    }
}

/// Stack of two LSTM cells; the step input of the second cell is the hidden
/// output of the first, and the backbone output is the top cell's hidden
/// vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmBackbone {
    pub cells: Vec<LstmCell>,
}

/// Per-cell hidden and cell state for single-sample stepping.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

/// Per-cell hidden and cell state for batched stepping.
#[derive(Debug, Clone)]
pub struct LstmBatchState {
    pub h: Vec<Matrix>,
    pub c: Vec<Matrix>,
}

#[derive(Debug, Clone)]
struct CellCache {
    x: Matrix,
    h_prev: Matrix,
    c_prev: Matrix,
    i: Matrix,
    f: Matrix,
    g: Matrix,
    o: Matrix,
    tc: Matrix,
}

/// Forward caches for one batched step, consumed by [`LstmBackbone::backward_step`].
#[derive(Debug, Clone)]
pub struct LstmBatchCache {
    cells: Vec<CellCache>,
}

/// Gradient buffers mirroring an [`LstmBackbone`].
#[derive(Debug, Clone)]
pub struct LstmGrad {
    pub w_x: Vec<Matrix>,
    pub w_h: Vec<Matrix>,
    pub bias: Vec<Vec<f64>>,
}

impl LstmGrad {
    pub fn zeros_like(backbone: &LstmBackbone) -> Self {
        LstmGrad {
            w_x: backbone
                .cells
                .iter()
                .map(|c| Matrix::zeros(c.w_x.rows(), c.w_x.cols()))
                .collect(),
            w_h: backbone
                .cells
                .iter()
                .map(|c| Matrix::zeros(c.w_h.rows(), c.w_h.cols()))
                .collect(),
            bias: backbone.cells.iter().map(|c| vec![0.0; c.bias.len()]).collect(),
        }
    }
}

impl LstmBackbone {
    /// Two stacked cells: `input_dim -> hidden -> hidden`.
    pub fn new(input_dim: usize, hidden: usize, rng: &mut Rng) -> Self {
        LstmBackbone {
            cells: vec![
                LstmCell::new(input_dim, hidden, rng),
                LstmCell::new(hidden, hidden, rng),
            ],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.cells[0].input()
    }

    pub fn hidden_dim(&self) -> usize {
        self.cells.last().map(|c| c.hidden()).unwrap_or(0)
    }

    /// All-zero state, matching "initialize recurrent state to zero".
    pub fn zero_state(&self) -> LstmState {
        LstmState {
            h: self.cells.iter().map(|c| vec![0.0; c.hidden()]).collect(),
            c: self.cells.iter().map(|c| vec![0.0; c.hidden()]).collect(),
        }
    }

    pub fn zero_batch_state(&self, batch: usize) -> LstmBatchState {
        LstmBatchState {
            h: self.cells.iter().map(|c| Matrix::zeros(batch, c.hidden())).collect(),
            c: self.cells.iter().map(|c| Matrix::zeros(batch, c.hidden())).collect(),
        }
    }

    fn check_state(&self, state: &LstmState) -> Result<(), CoreError> {
        if state.h.len() != self.cells.len() || state.c.len() != self.cells.len() {
            return Err(CoreError::invalid(
                "lstm_step",
                "state was not initialized for this backbone (cell count mismatch)",
            ));
        }
        for (l, cell) in self.cells.iter().enumerate() {
            if state.h[l].len() != cell.hidden() || state.c[l].len() != cell.hidden() {
                return Err(CoreError::shape(
                    "lstm_step",
                    format!("state width {} at cell {l}", cell.hidden()),
                    format!("state width {}", state.h[l].len()),
                ));
            }
        }
        Ok(())
    }

    /// Single-sample step: returns the new state and the top cell's hidden
    /// vector. Deterministic given `(state, input)`.
    pub fn step(&self, state: &LstmState, input: &[f64]) -> Result<(LstmState, Vec<f64>), CoreError> {
        if input.len() != self.input_dim() {
            return Err(CoreError::shape(
                "lstm_step",
                format!("input of width {}", self.input_dim()),
                format!("input of width {}", input.len()),
            ));
        }
        self.check_state(state)?;
        let mut next = state.clone();
        let mut x = input.to_vec();
        for (l, cell) in self.cells.iter().enumerate() {
            let h = cell.hidden();
            let mut pre = cell.bias.clone();
            for (k, &xv) in x.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                for (p, w) in pre.iter_mut().zip(cell.w_x.row(k).iter()) {
                    *p += xv * w;
                }
            }
            for (k, &hv) in state.h[l].iter().enumerate() {
                if hv == 0.0 {
                    continue;
                }
                for (p, w) in pre.iter_mut().zip(cell.w_h.row(k).iter()) {
                    *p += hv * w;
                }
            }
            let mut h_new = vec![0.0; h];
            for j in 0..h {
                let i_g = fmath::sigmoid(pre[j]);
                let f_g = fmath::sigmoid(pre[h + j]);
                let g_g = fmath::tanh(pre[2 * h + j]);
                let o_g = fmath::sigmoid(pre[3 * h + j]);
                let c_new = f_g * state.c[l][j] + i_g * g_g;
                next.c[l][j] = c_new;
                h_new[j] = o_g * fmath::tanh(c_new);
            }
            next.h[l] = h_new.clone();
            x = h_new;
        }
        Ok((next, x))
    }

    /// Batched step over `x` (`batch x input_dim`). Returns the new state,
    /// the top hidden output, and the caches needed for the backward pass.
    pub fn step_batch(
        &self,
        state: &LstmBatchState,
        x: &Matrix,
    ) -> (LstmBatchState, Matrix, LstmBatchCache) {
        assert_eq!(x.cols(), self.input_dim(), "lstm step_batch width mismatch");
        let batch = x.rows();
        let mut next = LstmBatchState {
            h: Vec::with_capacity(self.cells.len()),
            c: Vec::with_capacity(self.cells.len()),
        };
        let mut caches = Vec::with_capacity(self.cells.len());
        let mut input = x.clone();
        for (l, cell) in self.cells.iter().enumerate() {
            let h = cell.hidden();
            let mut pre = matmul(&input, &cell.w_x);
            pre.axpy(1.0, &matmul(&state.h[l], &cell.w_h));
            add_row_bias(&mut pre, &cell.bias);

            let mut i_m = Matrix::zeros(batch, h);
            let mut f_m = Matrix::zeros(batch, h);
            let mut g_m = Matrix::zeros(batch, h);
            let mut o_m = Matrix::zeros(batch, h);
            let mut c_m = Matrix::zeros(batch, h);
            let mut tc_m = Matrix::zeros(batch, h);
            let mut h_m = Matrix::zeros(batch, h);
            for b in 0..batch {
                let pre_row = pre.row(b);
                for j in 0..h {
                    let i_g = fmath::sigmoid(pre_row[j]);
                    let f_g = fmath::sigmoid(pre_row[h + j]);
                    let g_g = fmath::tanh(pre_row[2 * h + j]);
                    let o_g = fmath::sigmoid(pre_row[3 * h + j]);
                    let c_new = f_g * state.c[l].get(b, j) + i_g * g_g;
                    let tc = fmath::tanh(c_new);
                    i_m.set(b, j, i_g);
                    f_m.set(b, j, f_g);
                    g_m.set(b, j, g_g);
                    o_m.set(b, j, o_g);
                    c_m.set(b, j, c_new);
                    tc_m.set(b, j, tc);
                    h_m.set(b, j, o_g * tc);
                }
            }
            caches.push(CellCache {
                x: input.clone(),
                h_prev: state.h[l].clone(),
                c_prev: state.c[l].clone(),
                i: i_m,
                f: f_m,
                g: g_m,
                o: o_m,
                tc: tc_m,
            });
            next.c.push(c_m);
            next.h.push(h_m.clone());
            input = h_m;
        }
        (next, input, LstmBatchCache { cells: caches })
    }

    /// Backward pass for one step.
    ///
    /// `d_top` is the loss gradient on the top hidden output at this step;
    /// `d_state` carries `(dh, dc)` per cell arriving from the following step
    /// (zeros at the last step). Accumulates parameter gradients into `grad`
    /// and returns the `(dh, dc)` pair to carry into the previous step.
    pub fn backward_step(
        &self,
        cache: &LstmBatchCache,
        d_top: &Matrix,
        d_state: (Vec<Matrix>, Vec<Matrix>),
        grad: &mut LstmGrad,
    ) -> (Vec<Matrix>, Vec<Matrix>) {
        let (d_h_in, d_c_in) = d_state;
        let mut d_h_prev = Vec::with_capacity(self.cells.len());
        let mut d_c_prev = Vec::with_capacity(self.cells.len());
        let mut d_from_above: Option<Matrix> = None;
        for l in (0..self.cells.len()).rev() {
            let cell = &self.cells[l];
            let cc = &cache.cells[l];
            let h = cell.hidden();
            let batch = cc.x.rows();

            // gradient on this cell's hidden output
            let mut dh = d_h_in[l].clone();
            if l == self.cells.len() - 1 {
                dh.axpy(1.0, d_top);
            }
            if let Some(ref d_above) = d_from_above {
                dh.axpy(1.0, d_above);
            }

            let mut dpre = Matrix::zeros(batch, 4 * h);
            let mut dc_prev = Matrix::zeros(batch, h);
            for b in 0..batch {
                for j in 0..h {
                    let (i_g, f_g, g_g, o_g, tc) = (
                        cc.i.get(b, j),
                        cc.f.get(b, j),
                        cc.g.get(b, j),
                        cc.o.get(b, j),
                        cc.tc.get(b, j),
                    );
                    let dh_v = dh.get(b, j);
                    let dc = dh_v * o_g * (1.0 - tc * tc) + d_c_in[l].get(b, j);
                    let di = dc * g_g;
                    let df = dc * cc.c_prev.get(b, j);
                    let dg = dc * i_g;
                    let do_ = dh_v * tc;
                    dpre.set(b, j, di * i_g * (1.0 - i_g));
                    dpre.set(b, h + j, df * f_g * (1.0 - f_g));
                    dpre.set(b, 2 * h + j, dg * (1.0 - g_g * g_g));
                    dpre.set(b, 3 * h + j, do_ * o_g * (1.0 - o_g));
                    dc_prev.set(b, j, dc * f_g);
                }
            }
            grad.w_x[l].axpy(1.0, &matmul_at_b(&cc.x, &dpre));
            grad.w_h[l].axpy(1.0, &matmul_at_b(&cc.h_prev, &dpre));
            for (gb, s) in grad.bias[l].iter_mut().zip(col_sums(&dpre)) {
                *gb += s;
            }
            d_from_above = Some(matmul_a_bt(&dpre, &cell.w_x));
            d_h_prev.push(matmul_a_bt(&dpre, &cell.w_h));
            d_c_prev.push(dc_prev);
        }
        d_h_prev.reverse();
        d_c_prev.reverse();
        (d_h_prev, d_c_prev)
    }

    pub fn zero_state_grads(&self, batch: usize) -> (Vec<Matrix>, Vec<Matrix>) {
        let zeros: Vec<Matrix> = self
            .cells
            .iter()
            .map(|c| Matrix::zeros(batch, c.hidden()))
            .collect();
        (zeros.clone(), zeros)
    }
}

impl ParamSet for LstmBackbone {
    fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.cells.len() * 3);
        for cell in &self.cells {
            out.push(cell.w_x.data());
            out.push(cell.w_h.data());
            out.push(cell.bias.as_slice());
        }
        out
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(self.cells.len() * 3);
        for cell in &mut self.cells {
            out.push(cell.w_x.data_mut());
            out.push(cell.w_h.data_mut());
            out.push(cell.bias.as_mut_slice());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_zero_state_give_zero_output() {
        let mut rng = Rng::from_seed(1);
        let mut backbone = LstmBackbone::new(3, 4, &mut rng);
        backbone.zero_params();
        let state = backbone.zero_state();
        let (next, out) = backbone.step(&state, &[5.0, -1.0, 2.0]).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
        assert!(next.c.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn step_is_deterministic() {
        let mut rng = Rng::from_seed(2);
        let backbone = LstmBackbone::new(3, 5, &mut rng);
        let mut state = backbone.zero_state();
        let input = [0.3, -0.8, 1.4];
        // advance a step so the state is non-trivial
        let (s1, _) = backbone.step(&state, &input).unwrap();
        state = s1;
        let (a_state, a_out) = backbone.step(&state, &input).unwrap();
        let (b_state, b_out) = backbone.step(&state, &input).unwrap();
        assert_eq!(a_out, b_out);
        assert_eq!(a_state, b_state);
    }

    #[test]
    fn rejects_bad_input_width_and_state() {
        let mut rng = Rng::from_seed(3);
        let backbone = LstmBackbone::new(3, 4, &mut rng);
        let state = backbone.zero_state();
        assert!(backbone.step(&state, &[1.0, 2.0]).is_err());
        let bad_state = LstmState {
            h: vec![vec![0.0; 4]],
            c: vec![vec![0.0; 4]],
        };
        assert!(backbone.step(&bad_state, &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn batch_step_matches_single_step() {
        let mut rng = Rng::from_seed(4);
        let backbone = LstmBackbone::new(3, 4, &mut rng);
        let inputs = [[0.4, -0.2, 0.9], [1.0, 0.0, -0.5]];
        let x = Matrix::from_fn(2, 3, |i, j| inputs[i][j]);
        let bstate = backbone.zero_batch_state(2);
        let (bnext, bout, _) = backbone.step_batch(&bstate, &x);
        for (b, row) in inputs.iter().enumerate() {
            let (snext, sout) = backbone.step(&backbone.zero_state(), row).unwrap();
            for (j, &sout_j) in sout.iter().enumerate() {
                assert!((bout.get(b, j) - sout_j).abs() < 1e-15);
                assert!((bnext.c[0].get(b, j) - snext.c[0][j]).abs() < 1e-15);
                assert!((bnext.c[1].get(b, j) - snext.c[1][j]).abs() < 1e-15);
            }
        }
    }

    /// Finite-difference check of d(output)/d(weights) for a short rollout.
    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = Rng::from_seed(5);
        let mut backbone = LstmBackbone::new(2, 3, &mut rng);
        let t_len = 3usize;
        let batch = 2usize;
        let inputs: Vec<Matrix> = (0..t_len)
            .map(|_| Matrix::from_fn(batch, 2, |_, _| rng.normal()))
            .collect();
        // fixed projection so the loss is a scalar
        let probe: Vec<f64> = (0..3).map(|_| rng.normal()).collect();

        let loss_of = |bb: &LstmBackbone| -> f64 {
            let mut state = bb.zero_batch_state(batch);
            let mut loss = 0.0;
            for x in &inputs {
                let (next, out, _) = bb.step_batch(&state, x);
                state = next;
                for b in 0..batch {
                    for (j, p) in probe.iter().enumerate() {
                        loss += p * out.get(b, j);
                    }
                }
            }
            loss
        };

        // analytic gradient
        let mut grad = LstmGrad::zeros_like(&backbone);
        let mut caches = Vec::new();
        {
            let mut state = backbone.zero_batch_state(batch);
            for x in &inputs {
                let (next, _, cache) = backbone.step_batch(&state, x);
                caches.push(cache);
                state = next;
            }
            let mut d_state = backbone.zero_state_grads(batch);
            for cache in caches.iter().rev() {
                let d_top = Matrix::from_fn(batch, 3, |_, j| probe[j]);
                d_state = backbone.backward_step(cache, &d_top, d_state, &mut grad);
            }
        }
        let analytic: Vec<f64> = grad
            .w_x
            .iter()
            .flat_map(|m| m.data().iter().copied())
            .chain(grad.w_h.iter().flat_map(|m| m.data().iter().copied()))
            .chain(grad.bias.iter().flatten().copied())
            .collect();

        // finite differences over every parameter, same traversal order
        let mut fd = Vec::with_capacity(analytic.len());
        let h_step = 1e-5;
        let n_cells = backbone.cells.len();
        for group in 0..3 {
            for l in 0..n_cells {
                let len = match group {
                    0 => backbone.cells[l].w_x.data().len(),
                    1 => backbone.cells[l].w_h.data().len(),
                    _ => backbone.cells[l].bias.len(),
                };
                for idx in 0..len {
                    let read = |bb: &mut LstmBackbone, delta: f64| -> f64 {
                        let slot = match group {
                            0 => &mut bb.cells[l].w_x.data_mut()[idx],
                            1 => &mut bb.cells[l].w_h.data_mut()[idx],
                            _ => &mut bb.cells[l].bias[idx],
                        };
                        *slot += delta;
                        0.0
                    };
                    read(&mut backbone, h_step);
                    let plus = loss_of(&backbone);
                    read(&mut backbone, -2.0 * h_step);
                    let minus = loss_of(&backbone);
                    read(&mut backbone, h_step);
                    fd.push((plus - minus) / (2.0 * h_step));
                }
            }
        }
        assert_eq!(fd.len(), analytic.len());
        for (k, (&a, &f)) in analytic.iter().zip(fd.iter()).enumerate() {
            let err = (a - f).abs();
            let tol = 1e-6 * a.abs().max(f.abs()) + 1e-9;
            assert!(err <= tol, "param {k}: analytic {a} vs fd {f}");
        }
    }
}
