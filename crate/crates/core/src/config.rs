//! Run configuration shared by the trainer, the generative models and the CLI.

use serde::{Deserialize, Serialize};

use crate::data::WindowSpec;
use crate::error::{BgnError, Result};
use crate::graph_inference::DEFAULT_TEMPERATURE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Point estimate trained with squared error.
    Bgn,
    /// Gaussian mean/variance trained with negative log-likelihood.
    BgnUe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    None,
    /// Fully connected graph; no inferred adjacency.
    Fcg,
    /// Edge scores from projected features only; embeddings unused.
    NoEmbeddings,
    /// Edge scores from embeddings only: one static graph.
    NoFeatures,
    /// Projected features go straight to the recurrent stage.
    NoGnn,
    /// Mean over windows plus a linear map instead of the GRU.
    NoRnn,
}

impl Ablation {
    pub const ALL: [Ablation; 6] = [
        Ablation::None,
        Ablation::Fcg,
        Ablation::NoEmbeddings,
        Ablation::NoFeatures,
        Ablation::NoGnn,
        Ablation::NoRnn,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Ablation::None => "BGN",
            Ablation::Fcg => "w/ fcg",
            Ablation::NoEmbeddings => "w/o b_i",
            Ablation::NoFeatures => "w/o x_i^t",
            Ablation::NoGnn => "w/o GNN",
            Ablation::NoRnn => "w/o RNN",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalMode {
    /// The GRU runs across the `seq_len` windows of a sample.
    WindowSequence,
    /// Only the last window is encoded; the GRU takes a single step.
    SingleStep,
}

/// Adjacency used when no Gumbel noise is drawn (evaluation).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalGraph {
    /// `softmax(θ/γ)` channel 0: the noise-free relaxation at the training
    /// temperature, close to a hard graph for small `γ`.
    NoiseFree,
    /// `softmax(θ)` channel 0: the probability that a Gumbel draw selects
    /// the edge, i.e. the mean of the training-time hard sample.
    Expected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub variant: Variant,
    pub ablation: Ablation,
    pub d: usize,
    pub hidden: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub scheduler_patience: usize,
    pub early_stop_patience: usize,
    pub gamma: f64,
    pub dropout: f64,
    pub window: usize,
    pub stride: usize,
    pub seq_len: usize,
    pub seed: u64,
    /// Global gradient-norm cap; `null` disables clipping.
    pub clip_norm: Option<f64>,
    /// Divide the summed Gaussian NLL by the batch size.
    pub nll_batch_mean: bool,
    pub temporal_mode: TemporalMode,
    pub eval_graph: EvalGraph,
    /// Re-estimate batch-norm statistics after every epoch from a full
    /// training-mode pass, instead of keeping the momentum averages.
    pub bn_recalibration: bool,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub folds: usize,
    pub runs: usize,
    pub latent_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Bgn,
            ablation: Ablation::None,
            d: 32,
            hidden: 32,
            lr: 1e-3,
            batch_size: 48,
            max_epochs: 100,
            scheduler_patience: 10,
            early_stop_patience: 20,
            gamma: DEFAULT_TEMPERATURE,
            dropout: 0.2,
            window: 64,
            stride: 16,
            seq_len: 8,
            seed: 0,
            clip_norm: Some(5.0),
            nll_batch_mean: true,
            temporal_mode: TemporalMode::WindowSequence,
            eval_graph: EvalGraph::NoiseFree,
            bn_recalibration: true,
            val_fraction: 0.2,
            test_fraction: 0.2,
            folds: 10,
            runs: 5,
            latent_dim: 16,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d", self.d),
            ("hidden", self.hidden),
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("window", self.window),
            ("stride", self.stride),
            ("seq_len", self.seq_len),
            ("runs", self.runs),
            ("latent_dim", self.latent_dim),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(BgnError::Config(format!("`{k}` must be positive")));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(BgnError::Config(format!("`lr` must be positive, got {}", self.lr)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(BgnError::Config(format!("`gamma` must be positive, got {}", self.gamma)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(BgnError::Config(format!("`dropout` must lie in [0, 1), got {}", self.dropout)));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(BgnError::Config(format!("`clip_norm` must be positive, got {c}")));
            }
        }
        for (k, v) in [("val_fraction", self.val_fraction), ("test_fraction", self.test_fraction)] {
            if !(0.0..1.0).contains(&v) {
                return Err(BgnError::Config(format!("`{k}` must lie in [0, 1), got {v}")));
            }
        }
        if self.folds < 2 {
            return Err(BgnError::Config(format!("`folds` must be at least 2, got {}", self.folds)));
        }
        Ok(())
    }

    pub fn window_spec(&self) -> WindowSpec {
        WindowSpec {
            window: self.window,
            stride: self.stride,
            seq_len: self.seq_len,
        }
    }

    /// Applies a `key=value` override; the value is parsed as JSON and falls
    /// back to a plain string.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| BgnError::Config(format!("override `{assignment}` is not key=value")))?;
        let value: serde_json::Value =
            serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
        let mut obj = serde_json::to_value(&*self)?;
        let map = obj.as_object_mut().expect("config serializes to an object");
        if !map.contains_key(key) {
            return Err(BgnError::Config(format!("unknown config key `{key}`")));
        }
        map.insert(key.to_string(), value);
        *self = serde_json::from_value(obj).map_err(|e| BgnError::Config(format!("`{key}`: {e}")))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = TrainConfig::default();
        c.validate().unwrap();
        assert_eq!((c.d, c.batch_size, c.max_epochs), (32, 48, 100));
        assert_eq!(c.gamma, 0.05);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<TrainConfig>(r#"{"d": 8, "depth": 3}"#).is_err());
        let c: TrainConfig = serde_json::from_str(r#"{"d": 8, "ablation": "no_rnn"}"#).unwrap();
        assert_eq!((c.d, c.ablation, c.hidden), (8, Ablation::NoRnn, 32));
    }

    #[test]
    fn overrides() {
        let mut c = TrainConfig::default();
        c.apply_override("lr=0.01").unwrap();
        c.apply_override("variant=bgn_ue").unwrap();
        c.apply_override("clip_norm=null").unwrap();
        assert_eq!((c.lr, c.variant, c.clip_norm), (0.01, Variant::BgnUe, None));
        assert!(c.apply_override("nope=1").is_err());
        assert!(c.apply_override("d=-1").is_err());
        assert!(c.apply_override("d").is_err());
    }

    #[test]
    fn invalid_values() {
        let bad = |f: fn(&mut TrainConfig)| {
            let mut c = TrainConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.d = 0));
        assert!(bad(|c| c.lr = 0.0));
        assert!(bad(|c| c.dropout = 1.0));
        assert!(bad(|c| c.gamma = -1.0));
        assert!(bad(|c| c.folds = 1));
    }
}
