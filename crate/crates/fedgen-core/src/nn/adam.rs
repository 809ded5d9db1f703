use alloc::vec;
use alloc::vec::Vec;

/// Adam optimizer over a fixed flattened parameter layout.
///
/// Moment buffers are allocated once for the total parameter count; `step`
/// walks the caller's parameter and gradient slices in the same fixed order
/// every time, so updates are reproducible.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    /// Adam with the default momentum parameters `beta = (0.9, 0.999)`,
    /// `eps = 1e-8`.
    pub fn new(lr: f64, param_count: usize) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        assert_eq!(params.len(), grads.len(), "adam: slice count mismatch");
        self.t += 1;
        let b1t = 1.0 - crate::fmath::powf(self.beta1, self.t as f64);
        let b2t = 1.0 - crate::fmath::powf(self.beta2, self.t as f64);
        let mut off = 0;
        for (p_slice, g_slice) in params.iter_mut().zip(grads.iter()) {
            assert_eq!(p_slice.len(), g_slice.len(), "adam: slice length mismatch");
            for (p, &g) in p_slice.iter_mut().zip(g_slice.iter()) {
                let m = &mut self.m[off];
                let v = &mut self.v[off];
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / b1t;
                let v_hat = *v / b2t;
                *p -= self.lr * m_hat / (crate::fmath::sqrt(v_hat) + self.eps);
                off += 1;
            }
        }
        assert_eq!(off, self.m.len(), "adam: parameter count drifted");
    }
}
