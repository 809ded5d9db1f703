//! Server-side matching aggregation for encoder stacks.
//!
//! Hidden neurons of independently trained encoders are only defined up to a
//! permutation, so coordinate-wise averaging of raw weight matrices mixes
//! unrelated neurons. This module aligns each client's neurons to a reference
//! via minimum-cost bipartite assignment (Hungarian algorithm), layer by
//! layer from input to output, carrying each layer's permutation into the
//! next layer's input channels, and then averages the aligned layers. Plain
//! sample-size-weighted averaging is also provided as the baseline path.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::nn::{DenseLayer, ParamSet};
use crate::tensor::Matrix;

/// A permutation of `{0..len-1}`; entry `i` is the destination index of
/// source element `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    map: Vec<usize>,
}

impl Permutation {
    pub fn identity(len: usize) -> Self {
        Permutation {
            map: (0..len).collect(),
        }
    }

    pub fn new(map: Vec<usize>) -> Result<Self, CoreError> {
        let mut seen = vec![false; map.len()];
        for &dst in &map {
            if dst >= map.len() || seen[dst] {
                return Err(CoreError::invalid(
                    "permutation",
                    format!("mapping {map:?} is not a bijection"),
                ));
            }
            seen[dst] = true;
        }
        Ok(Permutation { map })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.map.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Destination index of source `i`.
    #[inline]
    pub fn dest(&self, i: usize) -> usize {
        self.map[i]
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(i, &d)| i == d)
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0usize; self.map.len()];
        for (i, &d) in self.map.iter().enumerate() {
            inv[d] = i;
        }
        Permutation { map: inv }
    }

    /// `dst[self.dest(i)] = src[i]`.
    pub fn apply_slice<T: Clone>(&self, src: &[T]) -> Vec<T> {
        assert_eq!(src.len(), self.map.len(), "permutation length mismatch");
        let mut dst = src.to_vec();
        for (i, &d) in self.map.iter().enumerate() {
            dst[d] = src[i].clone();
        }
        dst
    }

    /// Reorders columns: column `i` of `m` lands at column `dest(i)`.
    pub fn apply_cols(&self, m: &Matrix) -> Matrix {
        assert_eq!(m.cols(), self.map.len(), "column permutation mismatch");
        let mut out = Matrix::zeros(m.rows(), m.cols());
        for i in 0..m.rows() {
            let src = m.row(i);
            let dst = out.row_mut(i);
            for (j, &d) in self.map.iter().enumerate() {
                dst[d] = src[j];
            }
        }
        out
    }

    /// Reorders rows: row `i` of `m` lands at row `dest(i)`.
    pub fn apply_rows(&self, m: &Matrix) -> Matrix {
        assert_eq!(m.rows(), self.map.len(), "row permutation mismatch");
        let mut out = Matrix::zeros(m.rows(), m.cols());
        for (i, &d) in self.map.iter().enumerate() {
            out.row_mut(d).copy_from_slice(m.row(i));
        }
        out
    }
}

/// Per-hospital sample-size weights `alpha_k = N_k / sum N`.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationWeights {
    alpha: Vec<f64>,
}

impl AggregationWeights {
    pub fn from_sizes(sizes: &[usize]) -> Result<Self, CoreError> {
        if sizes.is_empty() || sizes.iter().all(|&s| s == 0) {
            return Err(CoreError::invalid(
                "aggregation_weights",
                "need at least one non-empty client",
            ));
        }
        let total: usize = sizes.iter().sum();
        Ok(AggregationWeights {
            alpha: sizes.iter().map(|&s| s as f64 / total as f64).collect(),
        })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    /// Index of the largest weight (first one on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &a) in self.alpha.iter().enumerate() {
            if a > self.alpha[best] {
                best = i;
            }
        }
        best
    }
}

/// Squared Euclidean distance between two neuron vectors
/// (incoming weights with the bias appended).
pub fn neuron_cost(a: &[f64], b: &[f64]) -> Result<f64, CoreError> {
    crate::tensor::check_len("neuron_cost", a.len(), b.len())?;
    Ok(a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum())
}

/// Cosine-distance alternative (`1 - cos`), exposed through configuration.
pub fn neuron_cost_cosine(a: &[f64], b: &[f64]) -> Result<f64, CoreError> {
    crate::tensor::check_len("neuron_cost", a.len(), b.len())?;
    let dot: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>();
    let nb: f64 = b.iter().map(|y| y * y).sum::<f64>();
    let denom = crate::fmath::sqrt(na * nb);
    if denom == 0.0 {
        return Ok(if na == nb { 0.0 } else { 1.0 });
    }
    Ok(1.0 - dot / denom)
}

/// Which neuron-distance feeds the assignment cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeuronCostKind {
    SquaredEuclidean,
    Cosine,
}

impl NeuronCostKind {
    fn eval(self, a: &[f64], b: &[f64]) -> Result<f64, CoreError> {
        match self {
            NeuronCostKind::SquaredEuclidean => neuron_cost(a, b),
            NeuronCostKind::Cosine => neuron_cost_cosine(a, b),
        }
    }
}

/// Minimum-cost assignment on a square cost matrix.
///
/// Jonker-Volgenant style potentials formulation, O(m^3). The column scan
/// takes the first strict improvement, so ties resolve to the lowest index
/// and the result is deterministic.
pub fn hungarian_solve(cost: &Matrix) -> Result<Permutation, CoreError> {
    let m = cost.rows();
    if m != cost.cols() {
        return Err(CoreError::shape(
            "hungarian_solve",
            String::from("square matrix"),
            cost.shape_string(),
        ));
    }
    if !cost.is_finite() {
        return Err(CoreError::invalid("hungarian_solve", "non-finite cost entry"));
    }
    if m == 0 {
        return Ok(Permutation::identity(0));
    }

    let inf = f64::INFINITY;
    let mut u = vec![0.0f64; m + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut assigned_row = vec![0usize; m + 1]; // row assigned to column j (1-based, 0 = none)
    let mut way = vec![0usize; m + 1];

    for i in 1..=m {
        assigned_row[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = assigned_row[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost.get(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[assigned_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if assigned_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            assigned_row[j0] = assigned_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut map = vec![0usize; m];
    for j in 1..=m {
        if assigned_row[j] > 0 {
            map[assigned_row[j] - 1] = j - 1;
        }
    }
    Permutation::new(map)
}

fn check_same_shapes(
    op: &'static str,
    a: &[DenseLayer],
    b: &[DenseLayer],
) -> Result<(), CoreError> {
    let shape = |s: &[DenseLayer]| -> Vec<(usize, usize)> {
        s.iter().map(|l| (l.in_dim(), l.out_dim())).collect()
    };
    if shape(a) != shape(b) {
        return Err(CoreError::shape(
            op,
            format!("{:?}", shape(b)),
            format!("{:?}", shape(a)),
        ));
    }
    Ok(())
}

/// Neuron columns of a layer with the bias element appended, after the rows
/// (input channels) have been reordered by the previous layer's permutation.
fn neuron_columns(layer: &DenseLayer, prev: &Permutation) -> Vec<Vec<f64>> {
    let effective = prev.apply_rows(&layer.weights);
    (0..layer.out_dim())
        .map(|j| {
            let mut col = effective.col(j);
            col.push(layer.bias[j]);
            col
        })
        .collect()
}

/// Aligns `local`'s neurons to `reference`, layer by layer from input to
/// output. Layer `l`'s columns are first row-permuted by layer `l-1`'s solved
/// permutation so the assignment compares like with like; the returned list
/// has one permutation per layer, including the final latent layer.
pub fn match_encoder(
    local: &[DenseLayer],
    reference: &[DenseLayer],
    cost_kind: NeuronCostKind,
) -> Result<Vec<Permutation>, CoreError> {
    check_same_shapes("match_encoder", local, reference)?;
    let mut perms = Vec::with_capacity(local.len());
    let mut prev = Permutation::identity(local.first().map(|l| l.in_dim()).unwrap_or(0));
    for (layer, ref_layer) in local.iter().zip(reference.iter()) {
        let cols = neuron_columns(layer, &prev);
        let ref_cols = neuron_columns(ref_layer, &Permutation::identity(ref_layer.in_dim()));
        let m = layer.out_dim();
        let mut cost = Matrix::zeros(m, m);
        for (i, ci) in cols.iter().enumerate() {
            for (j, rj) in ref_cols.iter().enumerate() {
                cost.set(i, j, cost_kind.eval(ci, rj)?);
            }
        }
        let perm = hungarian_solve(&cost)?;
        prev = perm.clone();
        perms.push(perm);
    }
    Ok(perms)
}

/// Applies a per-layer permutation list to an encoder: each layer's columns
/// and bias are reordered by its own permutation and its rows by the previous
/// layer's, preserving the computed function when the same reordering is
/// applied downstream.
pub fn permute_encoder(
    encoder: &[DenseLayer],
    perms: &[Permutation],
) -> Result<Vec<DenseLayer>, CoreError> {
    if encoder.len() != perms.len() {
        return Err(CoreError::shape(
            "permute_encoder",
            format!("{} permutations", encoder.len()),
            format!("{} permutations", perms.len()),
        ));
    }
    let mut out = Vec::with_capacity(encoder.len());
    let mut prev = Permutation::identity(encoder.first().map(|l| l.in_dim()).unwrap_or(0));
    for (layer, perm) in encoder.iter().zip(perms.iter()) {
        if perm.len() != layer.out_dim() || prev.len() != layer.in_dim() {
            return Err(CoreError::shape(
                "permute_encoder",
                format!("{}x{} layer", layer.in_dim(), layer.out_dim()),
                format!("perms {} -> {}", prev.len(), perm.len()),
            ));
        }
        let weights = perm.apply_cols(&prev.apply_rows(&layer.weights));
        let bias = perm.apply_slice(&layer.bias);
        out.push(DenseLayer {
            weights,
            bias,
            activation: layer.activation,
        });
        prev = perm.clone();
    }
    Ok(out)
}

/// Permutation-aware weighted average: every encoder is first aligned by its
/// permutation list, then layers are averaged with `alpha`.
pub fn matched_average(
    encoders: &[Vec<DenseLayer>],
    perms: &[Vec<Permutation>],
    weights: &AggregationWeights,
) -> Result<Vec<DenseLayer>, CoreError> {
    if encoders.is_empty() || encoders.len() != perms.len() || encoders.len() != weights.len() {
        return Err(CoreError::invalid(
            "matched_average",
            format!(
                "inconsistent inputs: {} encoders, {} permutation lists, {} weights",
                encoders.len(),
                perms.len(),
                weights.len()
            ),
        ));
    }
    for enc in encoders.iter().skip(1) {
        check_same_shapes("matched_average", enc, &encoders[0])?;
    }
    let aligned: Vec<Vec<DenseLayer>> = encoders
        .iter()
        .zip(perms.iter())
        .map(|(enc, p)| permute_encoder(enc, p))
        .collect::<Result<_, _>>()?;
    crate::nn::weighted_combine(&aligned, weights.alpha())
}

/// Plain sample-size-weighted elementwise average of identically shaped
/// parameter sets (the baseline aggregation rule).
pub fn fedavg_aggregate<P: ParamSet>(
    sets: &[P],
    weights: &AggregationWeights,
) -> Result<P, CoreError> {
    crate::nn::weighted_combine(sets, weights.alpha())
}

/// How the round-0 matching reference is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceMode {
    /// Plain weighted average of the round-0 local encoders (default).
    FedAvgInit,
    /// The largest hospital's encoder anchors the ordering.
    MajorityAnchor,
}

/// The matching reference for a round: at round 0 it is built from the local
/// encoders per `mode`; from round 1 on it is the previous round's matched
/// global encoder.
pub fn select_reference(
    round: usize,
    previous_global: Option<&Vec<DenseLayer>>,
    round0_locals: Option<&[Vec<DenseLayer>]>,
    weights: &AggregationWeights,
    mode: ReferenceMode,
) -> Result<Vec<DenseLayer>, CoreError> {
    if round == 0 {
        let locals = round0_locals.ok_or_else(|| {
            CoreError::invalid("select_reference", "round 0 requires the local encoders")
        })?;
        if locals.len() != weights.len() {
            return Err(CoreError::invalid(
                "select_reference",
                format!("{} encoders vs {} weights", locals.len(), weights.len()),
            ));
        }
        match mode {
            ReferenceMode::FedAvgInit => fedavg_aggregate(locals, weights),
            ReferenceMode::MajorityAnchor => Ok(locals[weights.argmax()].clone()),
        }
    } else {
        previous_global.cloned().ok_or_else(|| {
            CoreError::invalid(
                "select_reference",
                "rounds past 0 require the previous global encoder",
            )
        })
    }
}
