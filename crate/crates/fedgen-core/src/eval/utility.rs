//! Downstream utility: a logistic-regression risk model on time-pooled
//! feature means, scored with tie-aware AUROC and step-integrated AUPRC on a
//! held-out real test set.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::BinarySequenceTensor;
use crate::error::CoreError;
use crate::fmath;
use crate::nn::Adam;
use crate::tensor::Matrix;

/// Linear scorer over per-feature time-pooled means.
#[derive(Debug, Clone)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

/// `N x D` matrix of per-sample feature means over time.
pub fn pooled_features(tensor: &BinarySequenceTensor) -> Matrix {
    let (n, t, d) = (
        tensor.num_samples(),
        tensor.timesteps(),
        tensor.features(),
    );
    let mut m = Matrix::zeros(n, d);
    for ni in 0..n {
        let row = m.row_mut(ni);
        for ti in 0..t {
            for (di, slot) in row.iter_mut().enumerate() {
                if tensor.get(ni, ti, di) {
                    *slot += 1.0;
                }
            }
        }
        for slot in row.iter_mut() {
            *slot /= t as f64;
        }
    }
    m
}

/// Fits the classifier by full-batch gradient descent to convergence
/// (gradient sup-norm below 1e-6 or 2000 steps). A small L2 penalty (1e-4)
/// keeps the optimum finite on separable data. Errors when the training set
/// has a single class.
pub fn train_downstream(
    features: &Matrix,
    labels: &[u8],
) -> Result<LogisticModel, CoreError> {
    let n = features.rows();
    if n == 0 || labels.len() != n {
        return Err(CoreError::invalid(
            "train_downstream",
            "empty or mismatched training set",
        ));
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 || positives == n {
        return Err(CoreError::degenerate(
            "train_downstream",
            "training set contains a single class",
        ));
    }
    let d = features.cols();
    let l2 = 1e-4;
    let mut weights = vec![0.0f64; d];
    let mut bias = vec![0.0f64; 1];
    let mut adam = Adam::new(0.05, d + 1);
    for _ in 0..2000 {
        let mut gw = vec![0.0f64; d];
        let mut gb = 0.0f64;
        for (i, &label) in labels.iter().enumerate() {
            let row = features.row(i);
            let mut logit = bias[0];
            for (w, x) in weights.iter().zip(row.iter()) {
                logit += w * x;
            }
            let err = (fmath::sigmoid(logit) - label as f64) / n as f64;
            for (g, x) in gw.iter_mut().zip(row.iter()) {
                *g += err * x;
            }
            gb += err;
        }
        for (g, w) in gw.iter_mut().zip(weights.iter()) {
            *g += l2 * w;
        }
        let sup = gw
            .iter()
            .chain(core::iter::once(&gb))
            .fold(0.0f64, |acc, g| acc.max(fmath::abs(*g)));
        if sup < 1e-6 {
            break;
        }
        let gb_slice = [gb];
        adam.step(&mut [&mut weights, &mut bias], &[&gw, &gb_slice]);
    }
    Ok(LogisticModel {
        weights,
        bias: bias[0],
    })
}

/// Predicted positive-class probabilities.
pub fn predict(model: &LogisticModel, features: &Matrix) -> Vec<f64> {
    (0..features.rows())
        .map(|i| {
            let mut logit = model.bias;
            for (w, x) in model.weights.iter().zip(features.row(i).iter()) {
                logit += w * x;
            }
            fmath::sigmoid(logit)
        })
        .collect()
}

/// Tie-aware AUROC via the midrank U statistic; equals the fraction of
/// correctly ordered positive/negative pairs with ties counted as half.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64, CoreError> {
    crate::tensor::check_len("auroc", scores.len(), labels.len())?;
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(CoreError::degenerate(
            "auroc",
            "need both classes in the evaluation set",
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut ranks = vec![0.0f64; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = midrank;
        }
        i = j + 1;
    }
    let rank_sum_pos: f64 = ranks
        .iter()
        .zip(labels.iter())
        .filter(|(_, &l)| l == 1)
        .map(|(r, _)| r)
        .sum();
    let u = rank_sum_pos - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos * neg) as f64)
}

/// Step-interpolated area under the precision-recall curve: thresholds sweep
/// the distinct scores from high to low and each recall increment is weighted
/// by the precision at that threshold.
pub fn auprc(scores: &[f64], labels: &[u8]) -> Result<f64, CoreError> {
    crate::tensor::check_len("auprc", scores.len(), labels.len())?;
    let pos = labels.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == labels.len() {
        return Err(CoreError::degenerate(
            "auprc",
            "need both classes in the evaluation set",
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j + 1;
    }
    Ok(area)
}

/// AUROC and AUPRC of a model on a real test tensor.
pub fn score_downstream(
    model: &LogisticModel,
    test: &BinarySequenceTensor,
) -> Result<(f64, f64), CoreError> {
    let features = pooled_features(test);
    let scores = predict(model, &features);
    Ok((
        auroc(&scores, test.labels())?,
        auprc(&scores, test.labels())?,
    ))
}
