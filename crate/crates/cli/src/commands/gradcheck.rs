use std::path::PathBuf;

use clap::Args;
use ddjscc_core::autodiff::OpKind;
use ddjscc_core::gradcheck::{run_gradcheck, GradcheckOptions, CHECKS};
use serde::Serialize;

use crate::error::CliError;
use crate::manifest::{resolve_seed, RunManifest};

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Check a single operation, or `pipeline` for the end-to-end graph.
    #[arg(long)]
    op: Option<String>,
    /// Random shapes per operation.
    #[arg(long, default_value_t = 3)]
    shapes: usize,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    /// Coordinates compared per input tensor.
    #[arg(long, default_value_t = 24)]
    samples: usize,
    /// Falls back to DDJSCC_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for the manifest and gradcheck.json; without it the
    /// manifest is printed to stderr.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Corrupts one backward rule, e.g. `conv2d`. Negative control.
    #[arg(long, hide = true)]
    inject_fault: Option<String>,
}

#[derive(Serialize)]
struct GradcheckJob<'a> {
    op: &'a Option<String>,
    shapes: usize,
    tolerance: f64,
    samples: usize,
    seed: u64,
    inject_fault: &'a Option<String>,
}

fn fault_kind(name: &str) -> Result<OpKind, CliError> {
    let kind = match name.to_ascii_lowercase().replace(['_', '-'], "").as_str() {
        "conv2d" => OpKind::Conv2d,
        "convtranspose2d" => OpKind::ConvTranspose2d,
        "dense" | "matmul" => OpKind::Matmul,
        "addbias" => OpKind::AddBias,
        "prelu" => OpKind::Prelu,
        "add" => OpKind::Add,
        "scale" => OpKind::Scale,
        "sum" => OpKind::Sum,
        "mse" => OpKind::Mse,
        "appendchannels" => OpKind::AppendChannels,
        "reshape" => OpKind::Reshape,
        "truncate" => OpKind::Truncate,
        "zeroextend" => OpKind::ZeroExtend,
        "powernormalize" => OpKind::PowerNormalize,
        "complexaffine" => OpKind::ComplexAffine,
        "selectrows" => OpKind::SelectRows,
        _ => return Err(CliError::usage(format!("no backward rule named `{name}`"))),
    };
    Ok(kind)
}

pub fn run(args: GradcheckArgs) -> Result<(), CliError> {
    if let Some(op) = &args.op {
        if !CHECKS.contains(&op.as_str()) {
            return Err(CliError::usage(format!("unknown op `{op}`; known: {}", CHECKS.join(", "))));
        }
    }
    let seed = resolve_seed(args.seed, None)?;
    let opts = GradcheckOptions {
        op: args.op.clone(),
        shapes: args.shapes,
        seed,
        tolerance: args.tolerance,
        samples: args.samples,
        fault: args.inject_fault.as_deref().map(fault_kind).transpose()?,
    };
    let job = GradcheckJob {
        op: &args.op,
        shapes: args.shapes,
        tolerance: args.tolerance,
        samples: args.samples,
        seed,
        inject_fault: &args.inject_fault,
    };
    let mut manifest = RunManifest::begin("gradcheck", &job, seed, args.out.as_deref())?;
    let result = check(&opts, args.out.as_deref());
    manifest.finish(&result)?;
    result
}

fn check(opts: &GradcheckOptions, out: Option<&std::path::Path>) -> Result<(), CliError> {
    let reports = run_gradcheck(opts)?;
    for r in &reports {
        println!(
            "{:<16} case {}  {:>3} coords  max rel err {:.2e}  {}",
            r.op,
            r.case,
            r.checked,
            r.max_rel_error,
            if r.passed { "ok" } else { "FAIL" }
        );
    }
    if let Some(dir) = out {
        std::fs::write(dir.join("gradcheck.json"), serde_json::to_string_pretty(&reports)?)?;
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    println!("gradcheck: {}/{} cases passed", reports.len() - failed, reports.len());
    if failed > 0 {
        return Err(CliError::Check(format!(
            "{failed} gradient case(s) exceed relative error {}",
            opts.tolerance
        )));
    }
    Ok(())
}
