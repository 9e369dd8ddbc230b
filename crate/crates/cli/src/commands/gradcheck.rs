use clap::Args;
use panet_core::error::{Error, Result};

use crate::suite::{run_suite, Fault};

#[derive(Args, Debug)]
pub struct GradArgs {
    /// Max allowed relative error per operator; the end-to-end model check
    /// runs at 10x this value
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,

    /// Seed for test instances and coordinate sampling
    #[arg(long, default_value_t = 0x5EED)]
    pub seed: u64,

    /// Inject a known-wrong backward pass (accepted: deform_conv); the run
    /// must then fail, which exercises the harness itself
    #[arg(long, value_name = "OP")]
    pub corrupt: Option<String>,
}

pub fn run(args: &GradArgs) -> Result<i32> {
    if !(args.tol > 0.0) || !args.tol.is_finite() {
        return Err(Error::InvalidParam(format!("--tol must be positive, got {}", args.tol)));
    }
    let fault = match args.corrupt.as_deref() {
        None => None,
        Some("deform_conv") => Some(Fault::DeformConv),
        Some(other) => {
            return Err(Error::InvalidParam(format!(
                "unknown --corrupt target '{other}' (accepted: deform_conv)"
            )))
        }
    };
    if fault.is_some() {
        println!("fault injection on: deform_conv weight gradient scaled by 1.01\n");
    }
    let outcome = run_suite(args.tol, args.seed, fault)?;
    if outcome.failed == 0 {
        println!("all {} gradient checks passed at tol {:.1e}", outcome.total, args.tol);
        Ok(0)
    } else {
        println!("{}/{} gradient checks FAILED at tol {:.1e}", outcome.failed, outcome.total, args.tol);
        Ok(1)
    }
}
