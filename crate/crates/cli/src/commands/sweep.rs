use std::path::{Path, PathBuf};

use clap::Args;
use ddjscc_core::codec::{read_checkpoint, CheckpointHeader};
use ddjscc_core::dataset::Split;
use ddjscc_core::evaluator::{compare_dynamic_vs_fixed, evaluate_grid, export_results, Thresholds};
use ddjscc_core::trainer::EpochLedger;
use ddjscc_core::{Channel, ChannelMode, Codec, SweepSpec, TrainedMode};
use serde::{Deserialize, Serialize};

use super::ChannelArg;
use crate::error::CliError;
use crate::manifest::{load_job, resolve_seed, RunManifest};
use crate::parse::{DataSource, Depths, Grid};

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// JSON job file, or the manifest of an earlier sweep.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for the manifest, sweep.csv and report.json.
    #[arg(long)]
    out: PathBuf,
    /// Checkpoint of the dynamic model.
    #[arg(long)]
    dynamic: Option<PathBuf>,
    /// Comma-separated checkpoints of fixed baselines.
    #[arg(long, value_delimiter = ',')]
    fixed: Vec<PathBuf>,
    /// SNR points in dB, e.g. -6,-3,0,...,27.
    #[arg(long, allow_hyphen_values = true)]
    snr: Option<Grid>,
    /// CR points, decimals or fractions, e.g. 1/12,1/6,1/4.
    #[arg(long)]
    cr: Option<Grid>,
    /// Depths to evaluate; defaults to every depth of the dynamic model.
    #[arg(long)]
    n: Option<Depths>,
    /// Noise draws per test image per cell.
    #[arg(long)]
    trials: Option<usize>,
    /// Falls back to the job file, then DDJSCC_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    channel: Option<ChannelArg>,
    /// Peak pixel value for PSNR on the [0, 1] image scale; 1 by default.
    #[arg(long)]
    max_i: Option<f64>,
    /// Test images: synth:COUNT:SIZE:SEED or a directory of PPM/PGM files.
    #[arg(long)]
    test: Option<DataSource>,
    /// Worker threads for grid cells. Results do not depend on it.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Exit with status 4 when any acceptance check fails.
    #[arg(long = "assert")]
    assert_checks: bool,
}

/// A sweep with every grid axis pinned once resolved.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepJob {
    pub dynamic: Option<PathBuf>,
    pub fixed: Vec<PathBuf>,
    pub test: DataSource,
    pub snr_points: Option<Vec<f64>>,
    pub cr_points: Option<Vec<f64>>,
    pub n_points: Option<Vec<usize>>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub channel: Option<ChannelMode>,
    pub max_i: Option<f64>,
    pub thresholds: Thresholds,
}

impl Default for SweepJob {
    fn default() -> Self {
        SweepJob {
            dynamic: None,
            fixed: Vec::new(),
            test: DataSource::synthetic(200, 32, 12),
            snr_points: None,
            cr_points: None,
            n_points: None,
            trials: None,
            seed: None,
            channel: None,
            max_i: None,
            thresholds: Thresholds::default(),
        }
    }
}

pub fn resolve(args: &SweepArgs) -> Result<SweepJob, CliError> {
    let mut job = match &args.config {
        Some(path) => load_job::<SweepJob>(path, "/seed")?.0,
        None => SweepJob::default(),
    };
    if args.dynamic.is_some() {
        job.dynamic = args.dynamic.clone();
    }
    if !args.fixed.is_empty() {
        job.fixed = args.fixed.clone();
    }
    if let Some(Grid(v)) = &args.snr {
        job.snr_points = Some(v.clone());
    }
    if let Some(Grid(v)) = &args.cr {
        job.cr_points = Some(v.clone());
    }
    if let Some(Depths(v)) = &args.n {
        job.n_points = Some(v.clone());
    }
    if args.trials.is_some() {
        job.trials = args.trials;
    }
    if let Some(c) = args.channel {
        job.channel = Some(c.into());
    }
    if args.max_i.is_some() {
        job.max_i = args.max_i;
    }
    if let Some(t) = &args.test {
        job.test = t.clone();
    }
    job.seed = Some(resolve_seed(args.seed, job.seed)?);
    if args.jobs == 0 {
        return Err(CliError::usage("--jobs must be at least 1"));
    }
    Ok(job)
}

fn load(path: &Path) -> Result<(Codec, CheckpointHeader), CliError> {
    if !path.is_file() {
        return Err(CliError::usage(format!("checkpoint {} does not exist", path.display())));
    }
    Ok(read_checkpoint(path)?)
}

pub fn run(args: SweepArgs) -> Result<(), CliError> {
    let mut job = resolve(&args)?;
    let dyn_path = job.dynamic.clone().ok_or_else(|| CliError::usage("--dynamic is required"))?;
    let (dyn_codec, dyn_header) = load(&dyn_path)?;
    if dyn_codec.mode() != TrainedMode::Dynamic {
        return Err(CliError::usage(format!(
            "{} holds a {} model, not a dynamic one",
            dyn_path.display(),
            dyn_codec.mode().label()
        )));
    }
    let mut fixed = Vec::new();
    for path in &job.fixed {
        let (codec, header) = load(path)?;
        let TrainedMode::Fixed(n) = codec.mode() else {
            return Err(CliError::usage(format!("{} holds a dynamic model, not a baseline", path.display())));
        };
        fixed.push((path.clone(), n, codec, header));
    }

    let defaults = SweepSpec::default_for(dyn_codec.layers(), 0);
    let spec = SweepSpec {
        snr_points: job.snr_points.get_or_insert(defaults.snr_points).clone(),
        cr_points: job.cr_points.get_or_insert(defaults.cr_points).clone(),
        n_points: job.n_points.get_or_insert(defaults.n_points).clone(),
        trials: *job.trials.get_or_insert(defaults.trials),
        seed: job.seed.unwrap_or_default(),
        max_i: *job.max_i.get_or_insert(1.0),
        channel: Channel {
            mode: *job.channel.get_or_insert(ChannelMode::Awgn),
            ..Channel::default()
        },
    };
    spec.validate()?;
    let test = job.test.load(Split::Test)?;
    let arch = dyn_codec.arch();
    let want = [arch.channels, arch.height, arch.width];
    if test.images[0].shape() != want {
        return Err(CliError::usage(format!(
            "test images are {:?} but the model expects {want:?}",
            test.images[0].shape()
        )));
    }

    let mut manifest = RunManifest::begin("sweep", &job, spec.seed, Some(&args.out))?;
    let result = sweep(&args, &job, &spec, (&dyn_path, &dyn_codec, &dyn_header), &fixed, &test);
    manifest.finish(&result)?;
    result
}

fn sweep(
    args: &SweepArgs,
    job: &SweepJob,
    spec: &SweepSpec,
    dynamic: (&Path, &Codec, &CheckpointHeader),
    fixed: &[(PathBuf, usize, Codec, CheckpointHeader)],
    test: &ddjscc_core::ImageSet,
) -> Result<(), CliError> {
    let (dyn_path, dyn_codec, dyn_header) = dynamic;
    eprintln!("evaluating dynamic model on {} cells", spec.cells().len());
    let mut results = vec![evaluate_grid(dyn_codec, Some(dyn_path.to_path_buf()), test, spec, args.jobs)?];
    for (path, n, codec, _) in fixed {
        eprintln!("evaluating {}", codec.mode().label());
        let spec_n = SweepSpec {
            n_points: vec![*n],
            ..spec.clone()
        };
        results.push(evaluate_grid(codec, Some(path.clone()), test, &spec_n, args.jobs)?);
    }
    let ledger = EpochLedger::new(dyn_header.epochs, fixed.iter().map(|(_, n, _, h)| (*n, h.epochs)).collect());
    let report = compare_dynamic_vs_fixed(&results[0], &results[1..], &ledger, job.thresholds)?;
    let (csv, json) = export_results(&args.out, &results, Some(&report))?;

    for d in &report.per_n {
        let fixed = d.fixed_db.map(|f| format!("  fixed {f:.3} dB")).unwrap_or_default();
        println!("n={}: dynamic {:.3} dB{fixed}", d.n, d.dynamic_db);
    }
    if let Some(g) = report.grand_fixed_db {
        println!("grand average: dynamic {:.3} dB, fixed {g:.3} dB", report.grand_dynamic_db);
    }
    for c in &report.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("wrote {} and {}", csv.display(), json.display());
    if args.assert_checks && !report.passed {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        return Err(CliError::Assertion(failed.join(", ")));
    }
    Ok(())
}
