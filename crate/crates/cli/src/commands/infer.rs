//! Inference: arbitrary photo sizes are reflect-padded to the model's
//! granularity, synthesized, then cropped back, so the sketch always has
//! the input's exact dimensions.

use std::path::PathBuf;

use clap::Args;
use panet_core::error::{Error, Result};
use panet_core::io::image::{crop_to_record, load_image, pad_to_multiple, save_image};
use panet_core::model::checkpoint::fill_params_from_entries;
use panet_core::model::panet::panet_forward;
use panet_core::model::params::ModelParams;
use panet_core::tensor::Tensor;

use crate::commands::{ensure_out, list_images};
use crate::config::{build_config, load_matching_checkpoint, ConfigArgs};

#[derive(Args, Debug)]
pub struct InferArgs {
    /// Trained checkpoint; its configuration must match --config/--set/--ablation
    #[arg(long)]
    pub checkpoint: PathBuf,

    /// A photo file, or a directory of photos (png/pgm/ppm)
    #[arg(long)]
    pub input: PathBuf,

    /// Output directory for the synthesized sketches
    #[arg(long)]
    pub out: PathBuf,

    #[command(flatten)]
    pub config: ConfigArgs,
}

pub fn run(args: &InferArgs) -> Result<i32> {
    let cfg = build_config(&args.config)?;
    let entries = load_matching_checkpoint(&args.checkpoint, &cfg.model)?;
    let mut params = ModelParams::<f32>::zeros(&cfg.model)?;
    fill_params_from_entries(&mut params, &entries)?;

    let inputs = list_images(&args.input)?;
    ensure_out(&args.out)?;
    for path in &inputs {
        let photo: Tensor<f32> = load_image(path)?;
        let (c, _, _) = photo.dims3()?;
        if c != cfg.model.input_channels {
            return Err(Error::data(format!(
                "{}: {c} channels, model expects {}",
                path.display(),
                cfg.model.input_channels
            )));
        }
        let (padded, record) = pad_to_multiple(&photo, 8, &cfg.model.branch_grids)?;
        let (c, h, w) = padded.dims3()?;
        let x = padded.reshape(&[1, c, h, w])?;
        let (y, _) = panet_forward(&x, &params.gen, &cfg.model)?;
        let sketch = crop_to_record(&y.reshape(&[1, h, w])?, &record)?;
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::data(format!("{}: unusable file name", path.display())))?;
        let out_path = args.out.join(format!("{stem}.png"));
        save_image(&sketch, &out_path)?;
        println!("{} -> {}", path.display(), out_path.display());
    }
    Ok(0)
}
