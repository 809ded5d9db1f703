//! The metric battery: generation fidelity, downstream predictive utility,
//! and attack-based privacy risk, plus the composite report produced for
//! every experiment run.

pub mod fidelity;
pub mod privacy;
pub mod utility;

pub use fidelity::{mmd, prevalence, r2_fidelity};
pub use privacy::{mir, nnaa};
pub use utility::{auprc, auroc, pooled_features, predict, score_downstream, train_downstream};

use alloc::string::String;
use alloc::vec::Vec;

use crate::data::BinarySequenceTensor;
use crate::error::CoreError;
use crate::tensor::Matrix;

/// Fidelity of a synthetic cohort against real data.
#[derive(Debug, Clone)]
pub struct FidelityReport {
    pub r2: f64,
    pub mmd: f64,
    pub prevalence_real: Vec<f64>,
    pub prevalence_syn: Vec<f64>,
    pub per_step_real: Matrix,
    pub per_step_syn: Matrix,
}

/// Which data trains the downstream classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainRegime {
    Real,
    Synth,
    Hybrid,
}

impl TrainRegime {
    pub fn name(self) -> &'static str {
        match self {
            TrainRegime::Real => "real",
            TrainRegime::Synth => "synth",
            TrainRegime::Hybrid => "hybrid",
        }
    }
}

/// AUROC/AUPRC per training regime, always scored on real held-out data.
#[derive(Debug, Clone)]
pub struct UtilityReport {
    pub rows: Vec<(TrainRegime, f64, f64)>,
}

impl UtilityReport {
    pub fn get(&self, regime: TrainRegime) -> Option<(f64, f64)> {
        self.rows
            .iter()
            .find(|(r, _, _)| *r == regime)
            .map(|&(_, roc, prc)| (roc, prc))
    }
}

/// Privacy attack results.
#[derive(Debug, Clone, Copy)]
pub struct PrivacyReport {
    pub mir: f64,
    pub nnaa: f64,
}

/// All metrics of one run.
#[derive(Debug, Clone)]
pub struct ExperimentMetrics {
    pub fidelity: FidelityReport,
    pub utility: UtilityReport,
    pub privacy: PrivacyReport,
}

impl ExperimentMetrics {
    /// `(metric, regime, value)` rows for report serialization.
    pub fn rows(&self) -> Vec<(String, String, f64)> {
        let mut out = Vec::new();
        let s = |x: &str| String::from(x);
        out.push((s("r2"), s("synth"), self.fidelity.r2));
        out.push((s("mmd"), s("synth"), self.fidelity.mmd));
        for &(regime, roc, prc) in &self.utility.rows {
            out.push((s("auroc"), s(regime.name()), roc));
            out.push((s("auprc"), s(regime.name()), prc));
        }
        out.push((s("mir"), s("synth"), self.privacy.mir));
        out.push((s("nnaa"), s("synth"), self.privacy.nnaa));
        out
    }
}

/// Subsampling caps for the quadratic-cost metrics.
#[derive(Debug, Clone, Copy)]
pub struct EvalCaps {
    pub mmd: usize,
    pub privacy: usize,
}

impl Default for EvalCaps {
    fn default() -> Self {
        EvalCaps {
            mmd: 1000,
            privacy: 1000,
        }
    }
}

/// Runs the full battery for one generator output.
///
/// Fidelity compares a (possibly oversampled) synthetic draw against real
/// held-out test data; when no dedicated draw is given, the released cohort
/// doubles as the fidelity sample. Utility trains the downstream classifier
/// on real, synthetic, and hybrid (real + synthetic) training data, always
/// scoring on the real test set. Privacy attacks run against the released
/// synthetic cohort, with the generator's training pool as members and test
/// data as holdout.
pub fn evaluate_experiment(
    real_train: &BinarySequenceTensor,
    real_test: &BinarySequenceTensor,
    synthetic: &BinarySequenceTensor,
    fidelity_synthetic: Option<&BinarySequenceTensor>,
    caps: EvalCaps,
    seed: u64,
) -> Result<ExperimentMetrics, CoreError> {
    let fidelity_sample = fidelity_synthetic.unwrap_or(synthetic);
    let (prevalence_real, per_step_real) = prevalence(real_test)?;
    let (prevalence_syn, per_step_syn) = prevalence(fidelity_sample)?;
    let fidelity = FidelityReport {
        r2: r2_fidelity(real_test, fidelity_sample)?,
        mmd: mmd(real_test, fidelity_sample, caps.mmd, seed)?,
        prevalence_real,
        prevalence_syn,
        per_step_real,
        per_step_syn,
    };

    let hybrid = BinarySequenceTensor::concat(&[real_train, synthetic])?;
    let mut rows = Vec::new();
    for (regime, train) in [
        (TrainRegime::Real, real_train),
        (TrainRegime::Synth, synthetic),
        (TrainRegime::Hybrid, &hybrid),
    ] {
        let features = pooled_features(train);
        let model = train_downstream(&features, train.labels())?;
        let (roc, prc) = score_downstream(&model, real_test)?;
        rows.push((regime, roc, prc));
    }

    let privacy = PrivacyReport {
        mir: mir(real_train, real_test, synthetic, caps.privacy, seed)?,
        nnaa: nnaa(real_train, synthetic, caps.privacy, seed)?,
    };

    Ok(ExperimentMetrics {
        fidelity,
        utility: UtilityReport { rows },
        privacy,
    })
}
