use thiserror::Error;

#[derive(Debug, Error)]
pub enum LossError {
    #[error(transparent)]
    Tensor(#[from] grounder_autodiff::TensorError),

    #[error("cost matrix contains a non-finite value at ({row}, {col})")]
    NonFiniteCost { row: usize, col: usize },

    #[error("positive map covers {map_tokens} tokens but predictions have {pred_tokens}")]
    TokenCountMismatch { map_tokens: usize, pred_tokens: usize },

    #[error("positive map has {map_rows} rows but {n_gt} ground-truth boxes were given")]
    GtCountMismatch { map_rows: usize, n_gt: usize },

    #[error("invalid loss configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, LossError>;
