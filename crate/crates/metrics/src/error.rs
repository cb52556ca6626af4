use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("category {0} has no frequency bucket assigned")]
    UnbucketedCategory(u64),

    #[error("description {0} has no presence/absence tag")]
    UntaggedDescription(u64),

    #[error("category {0} appears in both base and novel partitions")]
    OverlappingPartition(u64),

    #[error("category {0} is in neither base nor novel partition")]
    UnpartitionedCategory(u64),

    #[error("{0} must not be empty")]
    EmptyInput(&'static str),

    #[error("invalid box [{0}, {1}, {2}, {3}]: x2 > x1 and y2 > y1 required")]
    InvalidBox(f64, f64, f64, f64),

    #[error("score {0} is not finite")]
    InvalidScore(f64),
}

pub type Result<T> = std::result::Result<T, MetricError>;
