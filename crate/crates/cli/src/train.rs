//! The training loop: forward, match, loss, backward, optimizer step, one
//! sample at a time, with epoch chunking and a CSV loss curve.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use grounder_autodiff::{AdamW, Tape};
use grounder_data::epoch_partition;
use grounder_losses::{total_loss, LossBreakdown};
use grounder_model::{checkpoint, Model};

use crate::config::{RunConfig, VERSION_STRING};
use crate::dataset::{build_example, load_dataset, LoadedDataset};
use crate::error::{CliError, Result};

pub struct TrainOutcome {
    pub losses: Vec<LossBreakdown>,
    pub checkpoint_path: PathBuf,
    pub run_config: RunConfig,
}

pub fn run_train(
    config: &RunConfig,
    manifest_path: &Path,
    steps_override: Option<usize>,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    let dataset = load_dataset(manifest_path)?;
    let steps = steps_override.unwrap_or(config.train.steps);

    // resolve the config against the dataset and persist it verbatim
    let mut resolved = config.clone();
    resolved.model.seed = config.seed;
    resolved.model.vocab_size = dataset.vocab.len();
    resolved.train.steps = steps;
    std::fs::create_dir_all(out_dir)?;
    resolved.save(&out_dir.join("config.json"))?;
    std::fs::write(out_dir.join("version.txt"), format!("{VERSION_STRING}\n"))?;
    dataset.vocab.save(&out_dir.join("vocab.txt"))?;

    let mut model = Model::new(resolved.model.clone())?;
    let mut opt = AdamW::new(
        resolved.optimizer.lr,
        resolved.optimizer.betas,
        resolved.optimizer.weight_decay,
    )?;

    let losses = train_steps(&mut model, &mut opt, &resolved, &dataset, steps)?;

    let checkpoint_path = out_dir.join("checkpoint.ckpt");
    checkpoint::save(&model.store, &checkpoint_path)?;
    write_loss_curve(&out_dir.join("loss_curve.csv"), &losses)?;

    Ok(TrainOutcome {
        losses,
        checkpoint_path,
        run_config: resolved,
    })
}

/// The inner loop, exposed for in-process tests.
pub fn train_steps(
    model: &mut Model,
    opt: &mut AdamW,
    config: &RunConfig,
    dataset: &LoadedDataset,
    steps: usize,
) -> Result<Vec<LossBreakdown>> {
    let n = dataset.samples.len();
    if n == 0 {
        return Err(CliError::Data("training dataset is empty".into()));
    }
    let chunk = dataset.manifest.chunk_size.unwrap_or(n).max(1);

    let mut losses = Vec::with_capacity(steps);
    let mut epoch = 0usize;
    let mut pos = 0usize;
    let (mut start, mut len) = epoch_partition(n, chunk, epoch)?;
    for step in 0..steps {
        if pos >= len {
            epoch += 1;
            pos = 0;
            (start, len) = epoch_partition(n, chunk, epoch)?;
        }
        let idx = start + pos;
        pos += 1;

        let sample = &dataset.samples[idx];
        let example = build_example(
            sample,
            config,
            &dataset.manifest.categories,
            &dataset.vocab,
            config.seed.wrapping_add(step as u64),
        )?;

        let mut tape = Tape::new();
        let bound = model.store.bind(&mut tape);
        let step_err = |e: CliError| match e {
            CliError::Numeric(msg) => CliError::Numeric(format!("step {step}: {msg}")),
            other => other,
        };
        let pred = model
            .forward(&mut tape, &bound, &dataset.images[idx], &example.tokenized)
            .map_err(|e| step_err(e.into()))?;
        let (loss_var, breakdown) = total_loss(
            &mut tape,
            &pred,
            &example.gt,
            &config.loss,
            config.loss_normalization,
        )
        .map_err(|e| step_err(e.into()))?;
        if !breakdown.total.is_finite() {
            return Err(CliError::Numeric(format!(
                "step {step}: non-finite loss (cls {}, l1 {}, giou {})",
                breakdown.cls, breakdown.l1, breakdown.giou
            )));
        }
        tape.backward(loss_var).map_err(|e| step_err(e.into()))?;
        model.store.accumulate_grads(&tape, &bound);
        {
            let (params, grads) = model.store.params_and_grads();
            opt.step(params, grads).map_err(|e| step_err(e.into()))?;
        }
        model.store.zero_grads();
        losses.push(breakdown);
    }
    Ok(losses)
}

fn write_loss_curve(path: &Path, losses: &[LossBreakdown]) -> Result<()> {
    let mut csv = String::from("step,total,cls,l1,giou\n");
    for (i, l) in losses.iter().enumerate() {
        writeln!(csv, "{},{},{},{},{}", i, l.total, l.cls, l.l1, l.giou)
            .expect("string write");
    }
    std::fs::write(path, csv)?;
    Ok(())
}
