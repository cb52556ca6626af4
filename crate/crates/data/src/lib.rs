//! Data pipeline: the unified OVD/PG/REC annotation model, a COCO-style
//! converter, epoch chunking, and a synthetic rectangle-world generator for
//! desk-scale training and evaluation.

mod chunk;
mod coco;
mod error;
mod manifest;
mod synth;
mod unified;

pub use chunk::epoch_partition;
pub use coco::{convert_coco_style, parse_coco_json, CocoDataset, ConvertStats};
pub use error::{DataError, Result};
pub use manifest::{DatasetManifest, DescriptionEntry};
pub use synth::{
    category_palette, read_ppm, render_pixels, synth_generate, write_ppm, SynthDataset, SynthSpec,
};
pub use unified::{
    load_unified, save_unified, GroundingSample, Instance, LoadOutcome, PhraseSpan, Task,
    SCHEMA_VERSION,
};
