//! Generative models used to enlarge or repair the training data: a graph
//! VAE that samples labelled window sequences, and an adversarial imputer
//! for missing readings.

pub mod vae;
pub mod wgan;

use serde::{Deserialize, Serialize};

pub use vae::{
    bce_loss, kl_divergence, train_vae, vae_elbo, vae_encode, vae_generate, LatentSample, VaeEpoch, VaeModel, VaeRun,
};
pub use wgan::{
    bernoulli_mask, masked_rmse, mean_impute, record_windows, records_from_windows, sinusoid_windows, train_wgan, wgan_impute, wgan_train_step, MaskedBatch, RecordWindows, WganConfig, WganModel, WganOptim, WganStep,
};

use crate::config::TrainConfig;
use crate::data::WindowSequenceSample;
use crate::error::{BgnError, Result};
use crate::trainer::{run_ensemble, EnsembleReport, MeanStd, Splits};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenMode {
    /// Generated samples are appended to the training split.
    Augment,
    /// Generated (imputed) samples replace the training split.
    Impute,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonRow {
    /// `BGN` for the original training split, `BGN*` for the generated one.
    pub model: String,
    pub train_samples: usize,
    pub rmse: MeanStd,
    pub mae: MeanStd,
    pub report: EnsembleReport,
}

/// Trains an ensemble on the original training split and one on the split
/// modified by `extra`, both evaluated on the unchanged test split.
pub fn retrain_with_generated(
    config: &TrainConfig,
    splits: &Splits,
    extra: &[WindowSequenceSample],
    mode: GenMode,
    seeds: &[u64],
    jobs: usize,
) -> Result<Vec<ComparisonRow>> {
    if extra.is_empty() {
        return Err(BgnError::Data("no generated samples".into()));
    }
    let train = match mode {
        GenMode::Augment => splits.train.iter().chain(extra).cloned().collect(),
        GenMode::Impute => extra.to_vec(),
    };
    let modified = Splits {
        train,
        ..splits.clone()
    };
    let mut rows = Vec::with_capacity(2);
    for (label, s) in [("BGN", splits), ("BGN*", &modified)] {
        let report = run_ensemble(config, s, seeds, jobs)?;
        rows.push(ComparisonRow {
            model: label.to_string(),
            train_samples: s.train.len(),
            rmse: report.rmse,
            mae: report.mae,
            report,
        });
    }
    Ok(rows)
}
