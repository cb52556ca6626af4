//! Run configuration: everything a training or evaluation run needs,
//! persisted verbatim next to its outputs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use grounder_losses::{LossNormalization, LossWeights};
use grounder_model::ModelConfig;

use crate::error::{CliError, Result};

pub const VERSION_STRING: &str = concat!("grounder-v", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub betas: (f64, f64),
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            betas: (0.9, 0.999),
            weight_decay: 1e-4,
        }
    }
}

/// How OVD training captions are assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CaptionMode {
    /// All dataset categories concatenated into one long string.
    #[default]
    FullVocab,
    /// Only the image's categories, padded with sampled negatives.
    PositivesPlusNegatives,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub caption_mode: CaptionMode,
    /// Negatives appended per sample in `positives_plus_negatives` mode.
    pub n_negatives: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            caption_mode: CaptionMode::FullVocab,
            n_negatives: 2,
        }
    }
}

/// Reduction from a phrase's token probabilities to one phrase score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PhraseScoreReduce {
    #[default]
    Max,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FlickrProtocolConfig {
    #[default]
    Any,
    Merged,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub phrase_score_reduce: PhraseScoreReduce,
    /// Detections below this score are dropped before OVD metrics.
    pub score_floor: f64,
    pub flickr_protocol: FlickrProtocolConfig,
    /// Default score threshold for the perfect-F1 protocol.
    pub grefcoco_threshold: f64,
    pub sweep_thresholds: Vec<f64>,
    /// Description length bucket upper bounds (s, m, l); vl is the rest.
    pub d3_buckets: (usize, usize, usize),
    pub recall_ks: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            phrase_score_reduce: PhraseScoreReduce::Max,
            score_floor: 0.0,
            flickr_protocol: FlickrProtocolConfig::Any,
            grefcoco_threshold: 0.7,
            sweep_thresholds: vec![0.5, 0.6, 0.7, 0.8],
            d3_buckets: (3, 6, 10),
            recall_ks: vec![1, 5, 10],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub loss: LossWeights,
    pub loss_normalization: LossNormalization,
    pub optimizer: OptimizerConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub seed: u64,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let content = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&content).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Config(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }
}
