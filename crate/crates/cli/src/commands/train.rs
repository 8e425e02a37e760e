use std::path::PathBuf;

use clap::{Args, ValueEnum};
use ddjscc_core::dataset::Split;
use ddjscc_core::trainer::{train, TrainOptions};
use ddjscc_core::{ChannelMode, EpochStats, LayerConfig, TrainConfig, TrainedMode};
use serde::{Deserialize, Serialize};

use super::ChannelArg;
use crate::error::CliError;
use crate::manifest::{load_job, resolve_seed, RunManifest};
use crate::parse::{parse_range, DataSource, Depths};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Dynamic,
    Fixed,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// JSON job file, or the manifest of an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory for the manifest, stats and checkpoints.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Depth of a fixed baseline (with `--mode fixed`).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Training SNR range in dB, LO:HI.
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    snr: Option<[f64; 2]>,
    /// Training CR range, LO:HI; fractions such as 1/12 are accepted.
    #[arg(long, value_parser = parse_range)]
    cr: Option<[f64; 2]>,
    /// Total layer count L.
    #[arg(long)]
    layers: Option<usize>,
    /// Feature widths after the two down-sampling layers, W1,W2.
    #[arg(long)]
    widths: Option<Depths>,
    #[arg(long, value_enum)]
    channel: Option<ChannelArg>,
    /// Falls back to the job file, then DDJSCC_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Training images: synth:COUNT:SIZE:SEED or a directory of PPM/PGM files.
    #[arg(long)]
    data: Option<DataSource>,
    /// Validation images, same forms as --data. Enables best.ckpt.
    #[arg(long)]
    val: Option<DataSource>,
}

/// Everything a training run depends on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainJob {
    pub train: TrainConfig,
    pub data: DataSource,
    pub val: Option<DataSource>,
}

impl Default for TrainJob {
    fn default() -> Self {
        TrainJob {
            train: TrainConfig::default(),
            data: DataSource::synthetic(2000, 32, 11),
            val: None,
        }
    }
}

pub fn resolve(args: &TrainArgs) -> Result<TrainJob, CliError> {
    let (mut job, file_seed) = match &args.config {
        Some(path) => {
            let (job, has_seed): (TrainJob, bool) = load_job(path, "/train/seed")?;
            let seed = has_seed.then_some(job.train.seed);
            (job, seed)
        }
        None => (TrainJob::default(), None),
    };
    let t = &mut job.train;
    t.mode = match (args.mode, args.n) {
        (Some(ModeArg::Dynamic), Some(_)) => return Err(CliError::usage("--n only applies to --mode fixed")),
        (Some(ModeArg::Dynamic), None) => TrainedMode::Dynamic,
        (Some(ModeArg::Fixed), Some(n)) | (None, Some(n)) => TrainedMode::Fixed(n),
        (Some(ModeArg::Fixed), None) => match t.mode {
            TrainedMode::Fixed(n) => TrainedMode::Fixed(n),
            TrainedMode::Dynamic => return Err(CliError::usage("--mode fixed needs --n")),
        },
        (None, None) => t.mode,
    };
    if let Some(v) = args.epochs {
        t.epochs = v;
    }
    if let Some(v) = args.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = args.lr {
        t.lr = v;
    }
    if let Some(v) = args.snr {
        t.snr_range = v;
    }
    if let Some(v) = args.cr {
        t.cr_range = v;
    }
    if let Some(v) = args.layers {
        t.layers = v;
    }
    if let Some(Depths(w)) = &args.widths {
        let [a, b] = w.as_slice() else {
            return Err(CliError::usage("--widths takes exactly two values, W1,W2"));
        };
        t.widths = [*a, *b];
    }
    if let Some(c) = args.channel {
        t.channel = ChannelMode::from(c);
    }
    t.seed = resolve_seed(args.seed, file_seed)?;
    if let Some(d) = &args.data {
        job.data = d.clone();
    }
    if let Some(v) = &args.val {
        job.val = Some(v.clone());
    }
    job.train.validate()?;
    Ok(job)
}

pub fn run(args: TrainArgs) -> Result<(), CliError> {
    let job = resolve(&args)?;
    let cfg = &job.train;
    let data = job.data.load(Split::Train)?;
    let val = job.val.as_ref().map(|v| v.load(Split::Test)).transpose()?;
    let target = match cfg.mode {
        TrainedMode::Dynamic => format!("dynamic model over depths 2..={}", cfg.layers - 1),
        TrainedMode::Fixed(n) => format!("fixed baseline {}", LayerConfig::from_depth(n, cfg.layers)?),
    };
    let mut manifest = RunManifest::begin("train", &job, cfg.seed, Some(&args.out))?;
    eprintln!("training {target} on {} images for {} epochs", data.len(), cfg.epochs);

    let progress = |s: &EpochStats| {
        let val = s.val_psnr_db.map(|v| format!(", val {v:.2} dB")).unwrap_or_default();
        eprintln!("epoch {:>3}: loss {:.5} ({:.1} s{val})", s.epoch, s.mean_loss, s.duration_s);
    };
    let opts = TrainOptions {
        run_dir: Some(&args.out),
        validation: val.as_ref(),
        progress: Some(&progress),
    };
    let result = train(&data, cfg, opts).map_err(CliError::from);
    manifest.finish(&result)?;
    if let Some(ckpt) = result?.checkpoint {
        println!("{}", ckpt.display());
    }
    Ok(())
}
