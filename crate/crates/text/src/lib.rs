//! Text frontend: a toy lowercasing tokenizer with exact span tracking,
//! caption assembly for detection-style category lists, positive maps tying
//! ground-truth instances to caption tokens, and seeded negative-sample
//! augmentation.

mod caption;
mod error;
mod positive_map;
mod tokenize;
mod vocab;

pub use caption::{assemble_ovd_caption, assemble_with_negatives, sample_negatives, AugmentedCaption};
pub use error::{Result, TextError};
pub use positive_map::{build_positive_map, PositiveMap};
pub use tokenize::{tokenize, PhraseGroup, TokenizedCaption};
pub use vocab::{Vocabulary, PAD_TOKEN, SEP_TOKEN, UNK_TOKEN};
