//! Attribute-head training on the Known split.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use otfuse_core::io::save_heads;
use otfuse_core::scene::{attribute_accuracy, train_heads, SceneHeads};

use crate::dataset::{Dataset, Split};
use crate::error::{CliError, CliResult};

pub const HEADS_FILE: &str = "heads.json";
pub const LOSS_TRACE_FILE: &str = "loss_trace.csv";

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub heads: SceneHeads,
    pub loss_trace: Vec<f64>,
    /// Per-attribute accuracy (weather, time of day, road type) on the
    /// training samples and on every sample.
    pub train_accuracy: [f64; 3],
    pub overall_accuracy: [f64; 3],
}

pub fn loss_trace_csv(trace: &[f64]) -> String {
    let mut out = String::from("step,loss\n");
    for (step, loss) in trace.iter().enumerate() {
        let _ = writeln!(out, "{step},{loss:.12e}");
    }
    out
}

/// Trains from the dataset's shipped heads on Known samples only.
pub fn train(dataset: &Dataset, steps: usize, learning_rate: f64) -> CliResult<TrainSummary> {
    let train_data = dataset.labeled_embeddings(Some(Split::Known))?;
    if train_data.is_empty() {
        return Err(CliError::Data("dataset has no Known samples to train on".into()));
    }
    let outcome = train_heads(&train_data, &dataset.initial_heads, steps, learning_rate)?;
    let everything = dataset.labeled_embeddings(None)?;
    Ok(TrainSummary {
        train_accuracy: attribute_accuracy(&outcome.heads, &train_data)?,
        overall_accuracy: attribute_accuracy(&outcome.heads, &everything)?,
        heads: outcome.heads,
        loss_trace: outcome.loss_trace,
    })
}

pub fn write_outputs(summary: &TrainSummary, dataset: &Dataset, out: &Path) -> CliResult<()> {
    fs::create_dir_all(out).map_err(|e| CliError::Data(format!("{}: {e}", out.display())))?;
    save_heads(&out.join(HEADS_FILE), &dataset.manifest.attributes, &summary.heads)?;
    fs::write(out.join(LOSS_TRACE_FILE), loss_trace_csv(&summary.loss_trace))?;
    Ok(())
}
