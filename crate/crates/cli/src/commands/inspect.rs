//! Inspection: for one output pixel, enumerate the 9^3 = 729 input
//! locations the three stacked deformable decoder convolutions read
//! through the upsampling chain, and render them over the photo. Also
//! writes channel-mean heatmaps of the decoder output and of each region
//! branch.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use panet_core::error::{Error, Result};
use panet_core::io::image::{load_image, pad_to_multiple, save_image};
use panet_core::model::checkpoint::fill_params_from_entries;
use panet_core::model::inspect::ancestral_sampling_locations;
use panet_core::model::panet::panet_forward;
use panet_core::model::params::ModelParams;
use panet_core::tensor::Tensor;

use crate::commands::ensure_out;
use crate::config::{build_config, load_matching_checkpoint, ConfigArgs};
use crate::render::{channel_mean, normalize_unit, overlay_taps};

fn parse_pixel(s: &str) -> std::result::Result<(usize, usize), String> {
    let (y, x) = s.split_once(',').ok_or("expected Y,X".to_string())?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("'{v}': {e}"));
    Ok((parse(y)?, parse(x)?))
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    /// Photo to inspect
    #[arg(long)]
    pub image: PathBuf,

    /// Output pixel as row,column in the photo's coordinates
    #[arg(long, value_parser = parse_pixel)]
    pub pixel: (usize, usize),

    /// Trained checkpoint; omitted means freshly initialized weights
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,

    /// Seed for the fresh weights when no checkpoint is given
    #[arg(long, default_value_t = 7)]
    pub seed: u64,

    /// Ignore the learned offsets and report the static composed stencil
    #[arg(long)]
    pub zero_offsets: bool,

    /// Output directory
    #[arg(long)]
    pub out: PathBuf,

    #[command(flatten)]
    pub config: ConfigArgs,
}

pub fn run(args: &InspectArgs) -> Result<i32> {
    let cfg = build_config(&args.config)?;
    let photo: Tensor<f32> = load_image(&args.image)?;
    let (c, h, w) = photo.dims3()?;
    if c != cfg.model.input_channels {
        return Err(Error::data(format!(
            "{}: {c} channels, model expects {}",
            args.image.display(),
            cfg.model.input_channels
        )));
    }
    let (py, px) = args.pixel;
    if py >= h || px >= w {
        return Err(Error::InvalidParam(format!(
            "pixel ({py}, {px}) outside the {h}x{w} photo"
        )));
    }

    let params = match &args.checkpoint {
        Some(ck) => {
            let entries = load_matching_checkpoint(ck, &cfg.model)?;
            let mut p = ModelParams::<f32>::zeros(&cfg.model)?;
            fill_params_from_entries(&mut p, &entries)?;
            p
        }
        None => ModelParams::<f32>::init(&cfg.model, args.seed)?,
    };

    let (padded, _) = pad_to_multiple(&photo, 8, &cfg.model.branch_grids)?;
    let (c, hp, wp) = padded.dims3()?;
    let x = padded.reshape(&[1, c, hp, wp])?;

    let taps =
        ancestral_sampling_locations(&x, &params.gen, &cfg.model, (py, px), args.zero_offsets)?;
    ensure_out(&args.out)?;

    let mut csv = String::from("i,j,k,y,x\n");
    for t in &taps {
        writeln!(csv, "{},{},{},{},{}", t.i, t.j, t.k, t.y, t.x).expect("string write");
    }
    let csv_path = args.out.join("taps.csv");
    std::fs::write(&csv_path, &csv)?;

    let distinct: BTreeSet<String> =
        taps.iter().map(|t| format!("{:.6},{:.6}", t.y, t.x)).collect();
    println!(
        "pixel ({py}, {px}): {} sampling locations, {} distinct{}",
        taps.len(),
        distinct.len(),
        if args.zero_offsets { " (offsets zeroed)" } else { "" }
    );
    println!("locations: {}", csv_path.display());

    let (overlay, visible) = overlay_taps(&padded, &taps)?;
    let overlay_path = args.out.join("taps.png");
    save_image(&overlay, &overlay_path)?;
    println!("overlay ({visible} inside the frame): {}", overlay_path.display());

    let (_, cache) = panet_forward(&x, &params.gen, &cfg.model)?;
    let mut decoder_map = channel_mean(&cache.fapd_out)?;
    normalize_unit(&mut decoder_map);
    let decoder_path = args.out.join("heatmap_decoder.png");
    save_image(&decoder_map, &decoder_path)?;
    println!("decoder heatmap: {}", decoder_path.display());

    if cfg.model.branch_grids.is_empty() {
        println!("region perception disabled; no branch heatmaps");
        return Ok(0);
    }
    let (_, total_c, bh, bw) = cache.head_in.dims4()?;
    let oc = cfg.model.capm_out_channels;
    debug_assert_eq!(total_c, oc * cfg.model.branch_grids.len());
    for (b, grid) in cfg.model.branch_grids.iter().enumerate() {
        let plane = bh * bw;
        let slice = &cache.head_in.data()[b * oc * plane..(b + 1) * oc * plane];
        let branch = Tensor::from_vec(&[1, oc, bh, bw], slice.to_vec())?;
        let mut map = channel_mean(&branch)?;
        normalize_unit(&mut map);
        let path = args.out.join(format!("heatmap_branch{grid}.png"));
        save_image(&map, &path)?;
        println!("branch grid {grid} heatmap: {}", path.display());
    }
    Ok(0)
}
