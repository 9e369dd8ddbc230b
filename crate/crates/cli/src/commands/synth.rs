use std::path::PathBuf;

use clap::Args;
use panet_core::error::Result;
use panet_core::io::fixture::synth_fixture;

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Seed for scene geometry, colors and clutter
    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    /// Number of photo/sketch pairs
    #[arg(long, default_value_t = 4)]
    pub count: usize,

    /// Square image side in pixels; must be a multiple of 8
    #[arg(long, default_value_t = 64)]
    pub size: usize,

    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &SynthArgs) -> Result<i32> {
    let manifest = synth_fixture(&args.out, args.seed, args.count, args.size)?;
    println!(
        "wrote {} photo/sketch pairs at {}x{} under {}",
        manifest.entries.len(),
        args.size,
        args.size,
        args.out.display()
    );
    println!("manifest: {}", args.out.join("manifest.csv").display());
    Ok(0)
}
