//! Shared configuration flags: config file, key overrides, topology preset.
//!
//! Application order: file (or defaults) -> --ablation preset -> --set
//! overrides, so explicit keys always win over the preset.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use panet_core::error::{Error, Result};
use panet_core::model::checkpoint::load_checkpoint;
use panet_core::model::{FapdVariant, ModelConfig};
use panet_core::tensor::Tensor;
use panet_core::train::config::{apply_override, parse_config_text, RunConfig};

/// Model topology presets: the full model and its two reduced baselines.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Ablation {
    /// Deformable decoder plus multi-grid region perception
    #[default]
    Full,
    /// Plain-conv decoder, no region perception
    FapdSc,
    /// Deformable decoder, no region perception
    NoCapm,
}

#[derive(Args, Debug)]
pub struct ConfigArgs {
    /// Config file: one `dotted.key = value` per line, # comments
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Override one config key, e.g. --set train.steps=500 (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,

    /// Topology preset, applied before --set overrides
    #[arg(long, value_enum, default_value_t = Ablation::Full)]
    pub ablation: Ablation,
}

pub fn build_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
            parse_config_text(&text)?
        }
        None => RunConfig::default(),
    };
    match args.ablation {
        Ablation::Full => {}
        Ablation::FapdSc => {
            cfg.model.fapd_variant = FapdVariant::Standard;
            cfg.model.branch_grids.clear();
        }
        Ablation::NoCapm => cfg.model.branch_grids.clear(),
    }
    for kv in &args.set {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| Error::ConfigError(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        apply_override(&mut cfg, key.trim(), value.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Load a checkpoint and refuse it unless it was written by a model with
/// this exact topology.
pub fn load_matching_checkpoint(
    path: &Path,
    model: &ModelConfig,
) -> Result<Vec<(String, Tensor<f32>)>> {
    let (digest, entries) = load_checkpoint(path)?;
    if digest != model.digest() {
        return Err(Error::CheckpointError(format!(
            "{}: written by a different model configuration; pass the matching \
             --config/--set/--ablation",
            path.display()
        )));
    }
    Ok(entries)
}
