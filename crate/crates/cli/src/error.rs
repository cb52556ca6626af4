use thiserror::Error;

/// Errors classified by exit code: config 2, data 3, numeric 4, io 5.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Io(_) => 5,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<grounder_data::DataError> for CliError {
    fn from(e: grounder_data::DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<grounder_text::TextError> for CliError {
    fn from(e: grounder_text::TextError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<grounder_model::ModelError> for CliError {
    fn from(e: grounder_model::ModelError) -> Self {
        use grounder_model::ModelError as M;
        match &e {
            M::Config(_) | M::TooManyQueries { .. } => CliError::Config(e.to_string()),
            M::Tensor(t) => tensor_error(t),
            M::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<grounder_losses::LossError> for CliError {
    fn from(e: grounder_losses::LossError) -> Self {
        use grounder_losses::LossError as L;
        match &e {
            L::Tensor(t) => tensor_error(t),
            L::NonFiniteCost { .. } => CliError::Numeric(e.to_string()),
            L::Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<grounder_metrics::MetricError> for CliError {
    fn from(e: grounder_metrics::MetricError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<grounder_autodiff::TensorError> for CliError {
    fn from(e: grounder_autodiff::TensorError) -> Self {
        tensor_error(&e)
    }
}

fn tensor_error(e: &grounder_autodiff::TensorError) -> CliError {
    use grounder_autodiff::TensorError as T;
    match e {
        T::NonFinite { .. } => CliError::Numeric(e.to_string()),
        T::Config(_) => CliError::Config(e.to_string()),
        _ => CliError::Data(e.to_string()),
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
