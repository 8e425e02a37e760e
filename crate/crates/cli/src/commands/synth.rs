use std::path::PathBuf;

use clap::Args;
use ddjscc_core::dataset::{write_image_dir, Split};
use serde::Serialize;

use crate::error::CliError;
use crate::manifest::{resolve_seed, RunManifest};
use crate::parse::DataSource;

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    count: usize,
    /// Side length in pixels.
    #[arg(long, default_value_t = 32)]
    size: usize,
    /// Falls back to DDJSCC_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct SynthJob {
    data: DataSource,
}

pub fn run(args: SynthArgs) -> Result<(), CliError> {
    if args.count == 0 {
        return Err(CliError::usage("--count must be at least 1"));
    }
    let seed = resolve_seed(args.seed, None)?;
    let source = DataSource::synthetic(args.count, args.size, seed);
    let set = source.load(Split::Train)?;
    let mut manifest = RunManifest::begin("synth-data", &SynthJob { data: source }, seed, Some(&args.out))?;
    let result = write_image_dir(&set, &args.out).map_err(CliError::from);
    manifest.finish(&result)?;
    let files = result?;
    println!("wrote {} images to {}", files.len(), args.out.display());
    Ok(())
}
