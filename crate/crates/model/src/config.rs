use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

/// Similarity used by language-guided query selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    /// The contrastive head's own scaled dot product plus bias.
    #[default]
    ScaledDot,
    /// Cosine similarity; invariant under positive scaling of either side.
    Cosine,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_enhancer_layers: usize,
    pub n_decoder_layers: usize,
    pub num_query: usize,
    pub n_feature_levels: usize,
    pub deformable_points: usize,
    pub ffn_dim: usize,
    /// Prior probability used to initialize the contrastive bias to
    /// `-ln((1-p)/p)`.
    pub bias_prior: f64,
    pub seed: u64,
    pub vocab_size: usize,
    pub max_text_len: usize,
    /// First-level patch size; later levels halve the grid.
    pub patch_size: usize,
    pub selection_similarity: Similarity,
    /// Mask self-attention between tokens of unrelated phrases in the text
    /// encoder. Off by default.
    pub cross_phrase_mask: bool,
    /// Sinusoidal positions for text tokens; disabling makes the text
    /// encoder permutation-equivariant (useful for tests).
    pub text_pos_encoding: bool,
}

impl Default for ModelConfig {
    /// Desk-scale defaults; full-scale values (900 queries, 6+6 layers)
    /// remain valid configs.
    fn default() -> Self {
        Self {
            d_model: 16,
            n_heads: 2,
            n_enhancer_layers: 2,
            n_decoder_layers: 2,
            num_query: 20,
            n_feature_levels: 2,
            deformable_points: 4,
            ffn_dim: 32,
            bias_prior: 0.01,
            seed: 0,
            vocab_size: 64,
            max_text_len: 64,
            patch_size: 4,
            selection_similarity: Similarity::ScaledDot,
            cross_phrase_mask: false,
            text_pos_encoding: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.d_model % self.n_heads != 0 {
            return Err(ModelError::Config(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.d_model % 8 != 0 {
            // box positional encodings split d_model over 4 coords x sin/cos
            return Err(ModelError::Config(format!(
                "d_model {} must be a multiple of 8",
                self.d_model
            )));
        }
        if self.num_query == 0 {
            return Err(ModelError::Config("num_query must be >= 1".into()));
        }
        if !(self.bias_prior > 0.0 && self.bias_prior < 1.0) {
            return Err(ModelError::Config(format!(
                "bias_prior {} must lie in (0, 1)",
                self.bias_prior
            )));
        }
        if self.n_feature_levels == 0 {
            return Err(ModelError::Config("need at least one feature level".into()));
        }
        if self.deformable_points == 0 {
            return Err(ModelError::Config("need at least one sampling point".into()));
        }
        if self.patch_size < 2 {
            return Err(ModelError::Config("patch_size must be >= 2".into()));
        }
        if self.vocab_size < 3 {
            return Err(ModelError::Config("vocabulary needs pad/unk/sep".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Minimum input edge so every level keeps at least one cell.
    pub fn min_image_edge(&self) -> usize {
        1 << (self.n_feature_levels + 1)
    }

    /// Image extent after zero-padding so every feature level divides
    /// evenly. Normalized model coordinates refer to this extent.
    pub fn padded_extent(&self, h: usize, w: usize) -> (usize, usize) {
        let unit = self.patch_size << (self.n_feature_levels - 1);
        (h.div_ceil(unit) * unit, w.div_ceil(unit) * unit)
    }

    pub fn contrastive_bias_init(&self) -> f64 {
        -((1.0 - self.bias_prior) / self.bias_prior).ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_defaults_validate() {
        ModelConfig::default().validate().unwrap();
    }

    #[test]
    fn full_scale_values_remain_valid() {
        let cfg = ModelConfig {
            d_model: 256,
            n_heads: 8,
            n_enhancer_layers: 6,
            n_decoder_layers: 6,
            num_query: 900,
            n_feature_levels: 4,
            ..Default::default()
        };
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_indivisible_heads() {
        let cfg = ModelConfig {
            d_model: 16,
            n_heads: 3,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn bias_init_matches_prior() {
        let cfg = ModelConfig {
            bias_prior: 0.01,
            ..Default::default()
        };
        assert!((cfg.contrastive_bias_init() + 99f64.ln()).abs() < 1e-12);
    }
}
