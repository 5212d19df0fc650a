//! Pieces shared by several subcommands: data preparation, evaluation
//! batches and small text helpers.

use std::fs;
use std::path::Path;

use gogan_core::data::{
    gen_procedural_images, load_dataset, sample_gaussian_mixture, split_dataset, Dataset, LoadMode,
};
use gogan_core::gan::{NoisePrior, PriorKind};
use gogan_core::rng::substream;
use gogan_core::tensor::Tensor;
use rand::RngCore;

use crate::config::{DataSource, ExperimentConfig};
use crate::error::{CliError, CliResult};

pub struct PreparedData {
    pub full: Dataset,
    pub train: Dataset,
    pub test: Dataset,
}

/// Builds or loads the dataset and splits it with the master seed.
pub fn prepare_data(cfg: &ExperimentConfig) -> CliResult<PreparedData> {
    let full = match &cfg.data.source {
        DataSource::Mixture { samples, .. } => {
            let spec = cfg.data.source.mixture_spec().expect("mixture source");
            sample_gaussian_mixture(&spec, *samples, cfg.seed)?
        }
        DataSource::Procedural { samples, size } => gen_procedural_images(*samples, *size, cfg.seed)?,
        DataSource::Csv(p) => load_dataset(p, LoadMode::Points)?,
        DataSource::PgmDir(p) => load_dataset(p, LoadMode::Images)?,
    };
    let (train, test) = split_dataset(&full, cfg.data.train_fraction, cfg.seed)?;
    Ok(PreparedData { full, train, test })
}

/// Held-out real samples and matching latent noise for score evaluation.
pub fn eval_batch(
    cfg: &ExperimentConfig,
    test: &Dataset,
    latent_dim: usize,
    prior: PriorKind,
) -> CliResult<(Tensor, Tensor)> {
    let n = cfg.train.eval_samples.min(test.len());
    let real = test.samples.select_rows(&(0..n).collect::<Vec<_>>())?;
    let noise = NoisePrior::new(prior, latent_dim, substream(cfg.seed, "eval.noise")).sample(n)?;
    Ok((real, noise))
}

/// A `u64` seed drawn from the named substream of `master`.
pub fn derived_seed(master: u64, name: &str) -> u64 {
    substream(master, name).next_u64()
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn join_floats(v: &[f64], sep: &str) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(sep)
}

/// `0.25` → `"25"`, used in file names and column labels.
pub fn percent_label(fraction: f64) -> String {
    let p = fraction * 100.0;
    if (p - p.round()).abs() < 1e-9 {
        format!("{}", p.round() as i64)
    } else {
        format!("{p}").replace('.', "p")
    }
}

pub fn gap_trace_name(stage: usize) -> String {
    format!("gap_trace_stage_{stage}.csv")
}
