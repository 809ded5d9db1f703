//! Tensor files, data-directory manifests, and parameter checkpoints.

use std::fs;
use std::path::{Path, PathBuf};

use crate::AppError;
use fedgen_core::data::{
    decode, encode_binary, encode_dense, BinarySequenceTensor, DecodedTensor, LatentSequenceTensor,
};
use fedgen_core::nn::{DenseLayer, ParamSet};
use fedgen_core::tcvae::TcvaeParams;

pub fn write_binary_tensor(path: &Path, tensor: &BinarySequenceTensor) -> Result<(), AppError> {
    fs::write(path, encode_binary(tensor))?;
    Ok(())
}

pub fn write_dense_tensor(path: &Path, tensor: &LatentSequenceTensor) -> Result<(), AppError> {
    fs::write(path, encode_dense(tensor))?;
    Ok(())
}

pub fn read_binary_tensor(path: &Path) -> Result<BinarySequenceTensor, AppError> {
    let bytes = fs::read(path)
        .map_err(|e| AppError::data(format!("{}: {e}", path.display())))?;
    match decode(&bytes).map_err(|e| AppError::data(format!("{}: {e}", path.display())))? {
        DecodedTensor::Binary(t) => Ok(t),
        DecodedTensor::Dense(_) => Err(AppError::data(format!(
            "{}: expected a packed-bit tensor, found fp64 payload",
            path.display()
        ))),
    }
}

/// One hospital's entry in a generated data directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub hospital: usize,
    pub seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
}

pub fn split_file_name(hospital: usize, split: &str) -> String {
    format!("hospital_{hospital}_{split}.bin")
}

/// Writes `manifest.txt`: a header line with `(T, D)` and one line per
/// hospital with its seed and split sizes.
pub fn write_manifest(
    dir: &Path,
    timesteps: usize,
    features: usize,
    entries: &[ManifestEntry],
) -> Result<(), AppError> {
    let mut text = format!("tensor {timesteps} {features}\n");
    for e in entries {
        text.push_str(&format!(
            "hospital {} seed {} train {} val {} test {}\n",
            e.hospital, e.seed, e.n_train, e.n_val, e.n_test
        ));
    }
    fs::write(dir.join("manifest.txt"), text)?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<(usize, usize, Vec<ManifestEntry>), AppError> {
    let path = dir.join("manifest.txt");
    let text = fs::read_to_string(&path)
        .map_err(|e| AppError::data(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| AppError::data("manifest is empty"))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 3 || parts[0] != "tensor" {
        return Err(AppError::data("manifest header must be 'tensor T D'"));
    }
    let parse = |s: &str| -> Result<usize, AppError> {
        s.parse::<usize>()
            .map_err(|_| AppError::data(format!("manifest: '{s}' is not an integer")))
    };
    let t = parse(parts[1])?;
    let d = parse(parts[2])?;
    let mut entries = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 10 || parts[0] != "hospital" {
            return Err(AppError::data(format!("malformed manifest line: {line}")));
        }
        entries.push(ManifestEntry {
            hospital: parse(parts[1])?,
            seed: parts[3]
                .parse::<u64>()
                .map_err(|_| AppError::data("manifest: bad seed"))?,
            n_train: parse(parts[5])?,
            n_val: parse(parts[7])?,
            n_test: parse(parts[9])?,
        });
    }
    Ok((t, d, entries))
}

/// Serializes a parameter vector as an fp64 tensor container (`1 x 1 x P`)
/// next to a plain-text manifest describing the parameter layout.
fn write_checkpoint(path: &Path, flat: &[f64], manifest: &str) -> Result<(), AppError> {
    let tensor = LatentSequenceTensor::from_parts(1, 1, flat.len(), flat.to_vec(), vec![0u8])
        .map_err(|e| AppError::runtime(e.to_string()))?;
    write_dense_tensor(path, &tensor)?;
    fs::write(path.with_extension("manifest"), manifest)?;
    Ok(())
}

fn dense_stack_manifest(kind: &str, layers: &[DenseLayer]) -> String {
    let mut out = format!("kind {kind}\n");
    for layer in layers {
        out.push_str(&format!(
            "layer in {} out {} act {:?}\n",
            layer.in_dim(),
            layer.out_dim(),
            layer.activation
        ));
    }
    out
}

pub fn write_encoder_checkpoint(
    dir: &Path,
    round: usize,
    encoder: &[DenseLayer],
) -> Result<PathBuf, AppError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("round_{round}.ckpt"));
    let stack: Vec<DenseLayer> = encoder.to_vec();
    write_checkpoint(&path, &stack.flatten(), &dense_stack_manifest("encoder", encoder))?;
    Ok(path)
}

pub fn write_tcvae_checkpoint(
    dir: &Path,
    round: usize,
    params: &TcvaeParams,
) -> Result<PathBuf, AppError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("round_{round}.ckpt"));
    let manifest = format!(
        "kind tcvae\nlatent {} z {} cond {} groups backbone,posterior,prior,likelihood\nparams {}\n",
        params.latent_dim(),
        params.z_dim(),
        params.cond_dim(),
        params.param_count()
    );
    write_checkpoint(&path, &params.flatten(), &manifest)?;
    Ok(path)
}
