//! Grounding network at configurable desk scale: toy image/text encoders, a
//! feature-enhancer stack fusing both modalities, language-guided query
//! selection, a cross-modality decoder with iterative box refinement, and a
//! contrastive text-alignment head.

pub mod checkpoint;
mod config;
mod decoder;
mod enhancer;
mod error;
mod heads;
mod image;
mod layers;
mod model;
mod params;
mod posenc;
mod selection;
mod text_enc;

pub use config::{ModelConfig, Similarity};
pub use error::{ModelError, Result};
pub use heads::contrastive_embedding;
pub use image::{ImageFeatures, LevelMeta};
pub use model::{LayerPrediction, Model, Prediction};
pub use params::{Bound, ParamId, ParamStore};
pub use posenc::{box_positions, grid_positions, text_positions};
pub use selection::{select_top, selection_scores, QueryState};
pub use text_enc::TextFeatures;
