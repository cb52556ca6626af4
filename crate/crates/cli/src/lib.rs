//! Library surface of the command-line pipeline, exposed so integration
//! tests can drive training and evaluation in-process.

pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod tools;
pub mod train;

pub use config::{
    CaptionMode, EvalConfig, FlickrProtocolConfig, OptimizerConfig, PhraseScoreReduce, RunConfig,
    TrainConfig, VERSION_STRING,
};
pub use error::{CliError, Result};
pub use eval::{evaluate_dataset, load_run_context, run_eval, EvalMode, EvalOptions};
pub use tools::{inspect_checkpoint, run_convert, run_synth};
pub use train::{run_train, train_steps, TrainOutcome};
