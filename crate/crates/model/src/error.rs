use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] grounder_autodiff::TensorError),

    #[error("invalid model config: {0}")]
    Config(String),

    #[error("input image {h}x{w} is too small for {levels} feature levels (need >= {min})")]
    ImageTooSmall { h: usize, w: usize, levels: usize, min: usize },

    #[error("token id {id} outside vocabulary of size {vocab_size}")]
    TokenOutOfVocab { id: u32, vocab_size: usize },

    #[error("num_query {num_query} exceeds {n_tokens} image tokens")]
    TooManyQueries { num_query: usize, n_tokens: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;
