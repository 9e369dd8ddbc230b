use std::path::PathBuf;

use clap::Args;
use panet_core::error::Result;
use panet_core::metrics::eval::{eval_set, report_csv};

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Directory of predicted sketches
    #[arg(long)]
    pub pred: PathBuf,

    /// Directory of ground-truth sketches (same filenames)
    #[arg(long)]
    pub gt: PathBuf,

    /// Output directory for the CSV report
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &EvalArgs) -> Result<i32> {
    let report = eval_set(&args.pred, &args.gt)?;
    crate::commands::ensure_out(&args.out)?;
    let path = args.out.join("report.csv");
    std::fs::write(&path, report_csv(&report))?;
    for row in &report.rows {
        println!(
            "{}: ssim {:.2}  fsim {:.2}  scoot {:.2}",
            row.name,
            row.ssim * 100.0,
            row.fsim * 100.0,
            row.scoot * 100.0
        );
    }
    println!(
        "mean over {} images: ssim {:.2}  fsim {:.2}  scoot {:.2}",
        report.rows.len(),
        report.mean_ssim * 100.0,
        report.mean_fsim * 100.0,
        report.mean_scoot * 100.0
    );
    println!("report: {}", path.display());
    Ok(0)
}
