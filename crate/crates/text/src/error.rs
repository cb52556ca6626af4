use thiserror::Error;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("caption is empty")]
    EmptyText,

    #[error("phrase {phrase:?} would be cut by the {max_len}-token budget")]
    PhraseTruncated { phrase: String, max_len: usize },

    #[error("category {0:?} contains the separator \". \"")]
    CategoryContainsSeparator(String),

    #[error("category list is empty")]
    NoCategories,

    #[error("phrase id {0} does not exist in the caption's phrase groups")]
    DanglingPhraseId(usize),

    #[error("phrase span {start}..{end} does not align with token boundaries of {text:?}")]
    MisalignedSpan { start: usize, end: usize, text: String },

    #[error("negative pool holds {pool} entries, {requested} requested")]
    PoolTooSmall { pool: usize, requested: usize },

    #[error("vocabulary error: {0}")]
    Vocab(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TextError>;
