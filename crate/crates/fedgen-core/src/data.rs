//! Tensor containers for binary observation sequences and real-valued latent
//! sequences, the byte-exact file container both are stored in, and the
//! stratified train/validation/test split.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, FormatError};
use crate::rng::Rng;
use crate::tensor::Matrix;

/// Magic prefix of the tensor container format.
pub const TENSOR_MAGIC: &[u8; 8] = b"FGSIMT01";

/// `N x T x D` multi-hot observation tensor with per-sample binary labels.
/// Bits are packed little-endian into 64-bit words, indexed by
/// `(n * T + t) * D + d`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinarySequenceTensor {
    n: usize,
    t: usize,
    d: usize,
    bits: Vec<u64>,
    labels: Vec<u8>,
}

impl BinarySequenceTensor {
    pub fn zeros(n: usize, t: usize, d: usize) -> Self {
        let words = (n * t * d).div_ceil(64);
        BinarySequenceTensor {
            n,
            t,
            d,
            bits: vec![0u64; words],
            labels: vec![0u8; n],
        }
    }

    #[inline]
    pub fn num_samples(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn timesteps(&self) -> usize {
        self.t
    }

    #[inline]
    pub fn features(&self) -> usize {
        self.d
    }

    #[inline]
    fn bit_index(&self, n: usize, t: usize, d: usize) -> usize {
        debug_assert!(n < self.n && t < self.t && d < self.d);
        (n * self.t + t) * self.d + d
    }

    #[inline]
    pub fn get(&self, n: usize, t: usize, d: usize) -> bool {
        let idx = self.bit_index(n, t, d);
        (self.bits[idx / 64] >> (idx % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, n: usize, t: usize, d: usize, v: bool) {
        let idx = self.bit_index(n, t, d);
        if v {
            self.bits[idx / 64] |= 1u64 << (idx % 64);
        } else {
            self.bits[idx / 64] &= !(1u64 << (idx % 64));
        }
    }

    #[inline]
    pub fn label(&self, n: usize) -> u8 {
        self.labels[n]
    }

    pub fn set_label(&mut self, n: usize, v: u8) {
        self.labels[n] = v;
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Fraction of set bits over the whole tensor.
    pub fn density(&self) -> f64 {
        let total = self.n * self.t * self.d;
        if total == 0 {
            return 0.0;
        }
        let ones: u64 = self.bits.iter().map(|w| w.count_ones() as u64).sum();
        ones as f64 / total as f64
    }

    /// Fraction of samples with label 1.
    pub fn label_prevalence(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        self.labels.iter().map(|&l| l as usize).sum::<usize>() as f64 / self.n as f64
    }

    /// Copies the observation rows named by `(sample, timestep)` pairs into a
    /// `pairs.len() x D` matrix of 0/1 values.
    pub fn gather_rows(&self, pairs: &[(usize, usize)]) -> Matrix {
        let mut m = Matrix::zeros(pairs.len(), self.d);
        for (r, &(n, t)) in pairs.iter().enumerate() {
            let row = m.row_mut(r);
            for (d, slot) in row.iter_mut().enumerate() {
                if self.get(n, t, d) {
                    *slot = 1.0;
                }
            }
        }
        m
    }

    /// One sample's `T x D` bits flattened to an f64 row.
    pub fn sample_row(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.t * self.d];
        for t in 0..self.t {
            for d in 0..self.d {
                if self.get(n, t, d) {
                    out[t * self.d + d] = 1.0;
                }
            }
        }
        out
    }

    /// One sample's `T x D` bits re-packed into dedicated words
    /// (for Hamming-distance computations).
    pub fn sample_words(&self, n: usize) -> Vec<u64> {
        let len = self.t * self.d;
        let mut out = vec![0u64; len.div_ceil(64)];
        for t in 0..self.t {
            for d in 0..self.d {
                if self.get(n, t, d) {
                    let idx = t * self.d + d;
                    out[idx / 64] |= 1u64 << (idx % 64);
                }
            }
        }
        out
    }

    /// New tensor holding the given samples, in order.
    pub fn subset(&self, samples: &[usize]) -> BinarySequenceTensor {
        let mut out = BinarySequenceTensor::zeros(samples.len(), self.t, self.d);
        for (r, &n) in samples.iter().enumerate() {
            out.labels[r] = self.labels[n];
            for t in 0..self.t {
                for d in 0..self.d {
                    if self.get(n, t, d) {
                        out.set(r, t, d, true);
                    }
                }
            }
        }
        out
    }

    /// Concatenates tensors along the sample axis. All inputs must agree on
    /// `T` and `D`.
    pub fn concat(parts: &[&BinarySequenceTensor]) -> Result<BinarySequenceTensor, CoreError> {
        let first = parts
            .first()
            .ok_or_else(|| CoreError::invalid("concat", "no tensors given"))?;
        let (t, d) = (first.t, first.d);
        for (k, p) in parts.iter().enumerate() {
            if p.t != t || p.d != d {
                return Err(CoreError::shape(
                    "concat",
                    format!("T={t}, D={d}"),
                    format!("tensor {k}: T={}, D={}", p.t, p.d),
                ));
            }
        }
        let n_total: usize = parts.iter().map(|p| p.n).sum();
        let mut out = BinarySequenceTensor::zeros(n_total, t, d);
        let mut offset = 0;
        for p in parts {
            for n in 0..p.n {
                out.labels[offset + n] = p.labels[n];
                for ti in 0..t {
                    for di in 0..d {
                        if p.get(n, ti, di) {
                            out.set(offset + n, ti, di, true);
                        }
                    }
                }
            }
            offset += p.n;
        }
        Ok(out)
    }
}

/// `N x T x d` real-valued latent sequence tensor with per-sample labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSequenceTensor {
    n: usize,
    t: usize,
    d: usize,
    data: Vec<f64>,
    labels: Vec<u8>,
}

impl LatentSequenceTensor {
    pub fn zeros(n: usize, t: usize, d: usize) -> Self {
        LatentSequenceTensor {
            n,
            t,
            d,
            data: vec![0.0; n * t * d],
            labels: vec![0u8; n],
        }
    }

    pub fn from_parts(
        n: usize,
        t: usize,
        d: usize,
        data: Vec<f64>,
        labels: Vec<u8>,
    ) -> Result<Self, CoreError> {
        if data.len() != n * t * d || labels.len() != n {
            return Err(CoreError::shape(
                "latent_tensor",
                format!("{n}x{t}x{d} data with {n} labels"),
                format!("{} values with {} labels", data.len(), labels.len()),
            ));
        }
        Ok(LatentSequenceTensor { n, t, d, data, labels })
    }

    #[inline]
    pub fn num_samples(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn timesteps(&self) -> usize {
        self.t
    }

    #[inline]
    pub fn latent_dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn step(&self, n: usize, t: usize) -> &[f64] {
        let base = (n * self.t + t) * self.d;
        &self.data[base..base + self.d]
    }

    #[inline]
    pub fn step_mut(&mut self, n: usize, t: usize) -> &mut [f64] {
        let base = (n * self.t + t) * self.d;
        &mut self.data[base..base + self.d]
    }

    pub fn label(&self, n: usize) -> u8 {
        self.labels[n]
    }

    pub fn set_label(&mut self, n: usize, v: u8) {
        self.labels[n] = v;
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn concat(parts: &[&LatentSequenceTensor]) -> Result<LatentSequenceTensor, CoreError> {
        let first = parts
            .first()
            .ok_or_else(|| CoreError::invalid("concat", "no tensors given"))?;
        let (t, d) = (first.t, first.d);
        for (k, p) in parts.iter().enumerate() {
            if p.t != t || p.d != d {
                return Err(CoreError::shape(
                    "concat",
                    format!("T={t}, d={d}"),
                    format!("tensor {k}: T={}, d={}", p.t, p.d),
                ));
            }
        }
        let n: usize = parts.iter().map(|p| p.n).sum();
        let mut data = Vec::with_capacity(n * t * d);
        let mut labels = Vec::with_capacity(n);
        for p in parts {
            data.extend_from_slice(&p.data);
            labels.extend_from_slice(&p.labels);
        }
        Ok(LatentSequenceTensor { n, t, d, data, labels })
    }
}

/// A decoded tensor container: either packed bits or fp64 payload.
#[derive(Debug, Clone, PartialEq)]
pub enum DecodedTensor {
    Binary(BinarySequenceTensor),
    Dense(LatentSequenceTensor),
}

/// Serializes a binary tensor into the container format:
/// 8-byte magic, three u64-le dims `(N, T, D)`, one flag byte `0`,
/// `ceil(N*T*D/8)` payload bytes (bit `(n*T+t)*D+d` is bit `i%8` of byte
/// `i/8`), then `N` label bytes.
pub fn encode_binary(tensor: &BinarySequenceTensor) -> Vec<u8> {
    let n_bits = tensor.n * tensor.t * tensor.d;
    let n_payload = n_bits.div_ceil(8);
    let mut out = Vec::with_capacity(8 + 24 + 1 + n_payload + tensor.n);
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&(tensor.n as u64).to_le_bytes());
    out.extend_from_slice(&(tensor.t as u64).to_le_bytes());
    out.extend_from_slice(&(tensor.d as u64).to_le_bytes());
    out.push(0u8);
    for (i, word) in tensor.bits.iter().enumerate() {
        let bytes = word.to_le_bytes();
        let remaining = n_payload - (i * 8).min(n_payload);
        out.extend_from_slice(&bytes[..remaining.min(8)]);
    }
    out.extend_from_slice(&tensor.labels);
    out
}

/// Serializes a real-valued tensor with flag byte `1` and an fp64-le payload.
pub fn encode_dense(tensor: &LatentSequenceTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 24 + 1 + tensor.data.len() * 8 + tensor.n);
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&(tensor.n as u64).to_le_bytes());
    out.extend_from_slice(&(tensor.t as u64).to_le_bytes());
    out.extend_from_slice(&(tensor.d as u64).to_le_bytes());
    out.push(1u8);
    for v in &tensor.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&tensor.labels);
    out
}

fn read_u64(bytes: &[u8], offset: usize) -> u64 {
    let mut buf = [0u8; 8];
    buf.copy_from_slice(&bytes[offset..offset + 8]);
    u64::from_le_bytes(buf)
}

/// Parses a tensor container. Validates magic, flag, dimension overflow, and
/// exact payload length.
pub fn decode(bytes: &[u8]) -> Result<DecodedTensor, FormatError> {
    const HEADER: usize = 8 + 24 + 1;
    if bytes.len() < HEADER {
        return Err(FormatError::Truncated {
            expected: HEADER,
            actual: bytes.len(),
        });
    }
    if &bytes[..8] != TENSOR_MAGIC {
        return Err(FormatError::BadMagic);
    }
    let n = read_u64(bytes, 8);
    let t = read_u64(bytes, 16);
    let d = read_u64(bytes, 24);
    let flag = bytes[32];
    let cells = n
        .checked_mul(t)
        .and_then(|x| x.checked_mul(d))
        .ok_or(FormatError::DimOverflow)?;
    if cells > (usize::MAX / 8) as u64 || n > usize::MAX as u64 {
        return Err(FormatError::DimOverflow);
    }
    let (n, t, d, cells) = (n as usize, t as usize, d as usize, cells as usize);
    let payload_len = match flag {
        0 => cells.div_ceil(8),
        1 => cells
            .checked_mul(8)
            .ok_or(FormatError::DimOverflow)?,
        other => return Err(FormatError::BadFlag(other)),
    };
    let expected = HEADER + payload_len + n;
    if bytes.len() < expected {
        return Err(FormatError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(FormatError::TrailingBytes);
    }
    let payload = &bytes[HEADER..HEADER + payload_len];
    let labels = bytes[HEADER + payload_len..].to_vec();
    match flag {
        0 => {
            let mut tensor = BinarySequenceTensor::zeros(n, t, d);
            for (i, word) in tensor.bits.iter_mut().enumerate() {
                let mut buf = [0u8; 8];
                let start = i * 8;
                let take = (payload_len - start).min(8);
                buf[..take].copy_from_slice(&payload[start..start + take]);
                *word = u64::from_le_bytes(buf);
            }
            tensor.labels = labels;
            Ok(DecodedTensor::Binary(tensor))
        }
        _ => {
            let mut data = Vec::with_capacity(cells);
            for chunk in payload.chunks_exact(8) {
                let mut buf = [0u8; 8];
                buf.copy_from_slice(chunk);
                data.push(f64::from_le_bytes(buf));
            }
            Ok(DecodedTensor::Dense(LatentSequenceTensor {
                n,
                t,
                d,
                data,
                labels,
            }))
        }
    }
}

/// Stratified split into `(train, val, test)` by label.
///
/// Validation and test sizes are `floor(ratio * N)` and the remainder goes to
/// train; within each target size, per-class slots follow largest-remainder
/// rounding of the class proportions. Classes with at least three samples are
/// guaranteed one slot in validation and test (growing those splits beyond
/// the floor when necessary), so every split sees every well-represented
/// class.
pub fn split_cohort(
    tensor: &BinarySequenceTensor,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(BinarySequenceTensor, BinarySequenceTensor, BinarySequenceTensor), CoreError> {
    let n = tensor.num_samples();
    let (r_train, r_val, r_test) = ratios;
    if (r_train + r_val + r_test - 1.0).abs() > 1e-9 {
        return Err(CoreError::invalid(
            "split_cohort",
            format!("ratios must sum to 1, got {}", r_train + r_val + r_test),
        ));
    }
    if r_train <= 0.0 || r_val < 0.0 || r_test < 0.0 {
        return Err(CoreError::invalid("split_cohort", "negative or zero ratio"));
    }
    if n < 10 {
        return Err(CoreError::degenerate(
            "split_cohort",
            format!("need at least 10 samples, got {n}"),
        ));
    }

    // per-class index pools, shuffled deterministically
    let mut class0: Vec<usize> = Vec::new();
    let mut class1: Vec<usize> = Vec::new();
    for i in 0..n {
        if tensor.label(i) == 0 {
            class0.push(i);
        } else {
            class1.push(i);
        }
    }
    let mut rng = Rng::from_tags(seed, &[0x53504c49]);
    rng.shuffle(&mut class0);
    rng.shuffle(&mut class1);
    let mut pools = [class0, class1];
    let counts = [pools[0].len(), pools[1].len()];
    let eligible = counts.iter().filter(|&&c| c >= 3).count();

    let mut n_val = (r_val * n as f64) as usize;
    let mut n_test = (r_test * n as f64) as usize;
    n_val = n_val.max(eligible);
    n_test = n_test.max(eligible);

    // largest-remainder allocation of one split across the two classes
    let allocate = |size: usize, pools: &mut [Vec<usize>; 2]| -> Vec<usize> {
        let avail = [pools[0].len(), pools[1].len()];
        let total = avail[0] + avail[1];
        let mut quota = [0usize; 2];
        let mut frac = [0f64; 2];
        for c in 0..2 {
            let exact = size as f64 * avail[c] as f64 / total.max(1) as f64;
            quota[c] = (exact as usize).min(avail[c]);
            frac[c] = exact - quota[c] as f64;
        }
        // top up to the requested size by largest fractional remainder
        while quota[0] + quota[1] < size {
            let pick = if (frac[0] > frac[1] || quota[1] >= avail[1]) && quota[0] < avail[0] {
                0
            } else {
                1
            };
            quota[pick] += 1;
            frac[pick] = -1.0;
        }
        // guarantee a slot for any class with >= 3 samples overall
        for c in 0..2 {
            if counts[c] >= 3 && quota[c] == 0 && size > 0 {
                let other = 1 - c;
                if quota[other] > 1 {
                    quota[other] -= 1;
                    quota[c] = 1;
                }
            }
        }
        let mut taken = Vec::with_capacity(size);
        for c in 0..2 {
            for _ in 0..quota[c] {
                taken.push(pools[c].pop().expect("quota exceeded pool"));
            }
        }
        taken
    };

    let val_idx = allocate(n_val, &mut pools);
    let test_idx = allocate(n_test, &mut pools);
    let mut train_idx: Vec<usize> = pools[0].iter().chain(pools[1].iter()).copied().collect();
    train_idx.sort_unstable();
    let mut val_idx = val_idx;
    let mut test_idx = test_idx;
    val_idx.sort_unstable();
    test_idx.sort_unstable();

    Ok((
        tensor.subset(&train_idx),
        tensor.subset(&val_idx),
        tensor.subset(&test_idx),
    ))
}
