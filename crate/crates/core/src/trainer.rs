//! Randomized-depth training of the shared-parameter codec, and the
//! fixed-depth baselines it is compared against.
//!
//! Every mini-batch draws one episode (depth n, SNR, CR), runs encoder,
//! channel and decoder under the configuration for n, and takes one Adam
//! step. Layers the episode skips receive exactly zero gradient, so their
//! weights and moment buffers are left alone.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamConfig, Tape};
use crate::channel::{Channel, ChannelMode};
use crate::codec::{write_checkpoint, Arch, CheckpointHeader, Codec, Conditioning, LayerConfig, TrainedMode};
use crate::dataset::{batch_iter, ImageSet};
use crate::error::{Error, Result};
use crate::evaluator::{mean_and_stderr, psnr_from_mse, reconstruct};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub snr_range: [f64; 2],
    pub cr_range: [f64; 2],
    pub layers: usize,
    pub seed: u64,
    pub mode: TrainedMode,
    /// Feature widths after the first and second down-sampling layers.
    pub widths: [usize; 2],
    pub channel: ChannelMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 60,
            batch_size: 16,
            lr: 1e-4,
            snr_range: [0.0, 27.0],
            cr_range: [0.1, 0.9],
            layers: 8,
            seed: 0,
            mode: TrainedMode::Dynamic,
            widths: [16, 32],
            channel: ChannelMode::Awgn,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.snr_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::usage(format!("bad SNR range {lo}:{hi}")));
        }
        let [rl, rh] = self.cr_range;
        if !(0.0 < rl && rl <= rh && rh <= 1.0) {
            return Err(Error::usage(format!("CR range {rl}:{rh} must satisfy 0 < min <= max <= 1")));
        }
        if self.epochs == 0 {
            return Err(Error::usage("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::usage("batch size must be at least 1"));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::usage(format!("learning rate {} must be finite and non-negative", self.lr)));
        }
        if let TrainedMode::Fixed(n) = self.mode {
            LayerConfig::from_depth(n, self.layers)?;
        }
        if self.widths.contains(&0) {
            return Err(Error::usage("feature widths must be positive"));
        }
        Ok(())
    }

    /// Codec architecture for images [C, H, W]. The code layer is sized for
    /// the top of the CR range and conditioning normalizes over the SNR
    /// range.
    pub fn arch(&self, image_shape: &[usize]) -> Result<Arch> {
        let [c, h, w] = image_shape else {
            return Err(Error::dim(format!("expected [C, H, W] images, got {image_shape:?}")));
        };
        let arch = Arch {
            layers: self.layers,
            channels: *c,
            height: *h,
            width: *w,
            width1: self.widths[0],
            width2: self.widths[1],
            cr_max: self.cr_range[1],
            snr_range: self.snr_range,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig::with_lr(self.lr)
    }

    pub fn channel(&self) -> Channel {
        Channel {
            mode: self.channel,
            ..Channel::default()
        }
    }

    /// Seed for parameter initialization.
    pub fn init_seed(&self) -> u64 {
        self.seed
    }

    fn shuffle_seed(&self) -> u64 {
        splitmix(self.seed ^ 0x5348_5546)
    }

    fn episode_seed(&self) -> u64 {
        splitmix(self.seed ^ 0x4550_4953)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One mini-batch's depth and channel conditions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub n: usize,
    pub snr_db: f64,
    pub cr: f64,
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Depth uniform over 2..=L-1 (or the trained depth for a fixed model),
/// SNR and CR uniform over their ranges.
pub fn sample_episode<R: Rng + ?Sized>(cfg: &TrainConfig, rng: &mut R) -> Episode {
    let n = match cfg.mode {
        TrainedMode::Dynamic => rng.random_range(2..cfg.layers),
        TrainedMode::Fixed(n) => n,
    };
    let snr_db = uniform(rng, cfg.snr_range);
    let cr = uniform(rng, cfg.cr_range);
    Episode { n, snr_db, cr }
}

/// Forward pass, backward pass and one Adam step on `batch`. Returns the
/// loss measured before the update. A non-finite loss is reported as a
/// divergence with zero epoch and batch positions, which [`train`] fills
/// in.
pub fn train_step<R: Rng + ?Sized>(
    codec: &mut Codec,
    batch: &Tensor,
    episode: &Episode,
    channel: &Channel,
    adam: &AdamConfig,
    rng: &mut R,
) -> Result<f64> {
    let cfg = LayerConfig::from_depth(episode.n, codec.layers())?;
    let cond = Conditioning::new(episode.snr_db, episode.cr)?;
    let mut tape = Tape::new();
    let x = tape.input(batch.clone());
    let y = codec.transmit_on(&mut tape, x, &cond, &cfg, channel, rng)?;
    let l = tape.mse(y, x)?;
    let loss = tape.value(l).item();
    if !loss.is_finite() {
        return Err(Error::Divergence {
            epoch: 0,
            batch: 0,
            detail: format!("loss {loss} at {episode:?}"),
        });
    }
    codec.params_mut().zero_grad();
    tape.backward(l, codec.params_mut())?;
    codec.params_mut().adam_step(adam)?;
    Ok(loss)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub mean_loss: f64,
    /// Mini-batches per sampled depth.
    pub n_counts: BTreeMap<usize, usize>,
    pub duration_s: f64,
    /// Mean validation PSNR, when a validation set was given.
    pub val_psnr_db: Option<f64>,
}

/// Epochs spent by the dynamic model against the baseline suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLedger {
    pub dynamic_epochs: usize,
    /// (depth, epochs) per fixed baseline.
    pub fixed_epochs: Vec<(usize, usize)>,
    pub total_fixed_epochs: usize,
    /// dynamic / total fixed.
    pub ratio: f64,
}

impl EpochLedger {
    pub fn new(dynamic_epochs: usize, fixed_epochs: Vec<(usize, usize)>) -> Self {
        let total: usize = fixed_epochs.iter().map(|&(_, e)| e).sum();
        EpochLedger {
            dynamic_epochs,
            total_fixed_epochs: total,
            ratio: dynamic_epochs as f64 / total as f64,
            fixed_epochs,
        }
    }

    /// Ledger for a dynamic configuration and its baseline suite.
    pub fn from_configs(dynamic: &TrainConfig, fixed: &[TrainConfig]) -> Self {
        let entries = fixed
            .iter()
            .map(|c| match c.mode {
                TrainedMode::Fixed(n) => (n, c.epochs),
                TrainedMode::Dynamic => (0, c.epochs),
            })
            .collect();
        Self::new(dynamic.epochs, entries)
    }

    pub fn is_consistent(&self) -> bool {
        let total: usize = self.fixed_epochs.iter().map(|&(_, e)| e).sum();
        total == self.total_fixed_epochs && self.ratio == self.dynamic_epochs as f64 / total as f64
    }

    pub fn summary(&self) -> String {
        format!(
            "dynamic {} epochs vs {} fixed runs totalling {} epochs: ratio {}/{} = {:.4}",
            self.dynamic_epochs,
            self.fixed_epochs.len(),
            self.total_fixed_epochs,
            self.dynamic_epochs,
            self.total_fixed_epochs,
            self.ratio
        )
    }
}

/// Trained codec plus its per-epoch statistics.
pub struct TrainOutcome {
    pub codec: Codec,
    pub stats: Vec<EpochStats>,
    /// Final checkpoint, when a run directory was given.
    pub checkpoint: Option<PathBuf>,
}

/// Optional extras for [`train`].
#[derive(Default)]
pub struct TrainOptions<'a> {
    /// Directory for `config.json`, `stats.csv` and per-epoch checkpoints.
    pub run_dir: Option<&'a Path>,
    /// Scored after every epoch; the best epoch is kept as `best.ckpt`.
    pub validation: Option<&'a ImageSet>,
    /// Called after every epoch.
    pub progress: Option<&'a dyn Fn(&EpochStats)>,
}

struct RunDir {
    dir: PathBuf,
    stats: std::fs::File,
    depths: Vec<usize>,
}

impl RunDir {
    fn create(dir: &Path, cfg: &TrainConfig) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(cfg)?)?;
        let depths: Vec<usize> = (2..cfg.layers).collect();
        let mut stats = std::fs::File::create(dir.join("stats.csv"))?;
        let mut header = "epoch,mean_loss,duration_s".to_string();
        for n in &depths {
            header.push_str(&format!(",n{n}"));
        }
        header.push_str(",val_psnr_db\n");
        stats.write_all(header.as_bytes())?;
        Ok(RunDir {
            dir: dir.to_path_buf(),
            stats,
            depths,
        })
    }

    fn record(&mut self, s: &EpochStats) -> Result<()> {
        let mut line = format!("{},{:.16e},{:.3}", s.epoch, s.mean_loss, s.duration_s);
        for n in &self.depths {
            line.push_str(&format!(",{}", s.n_counts.get(n).copied().unwrap_or(0)));
        }
        match s.val_psnr_db {
            Some(v) => line.push_str(&format!(",{v:.16e}\n")),
            None => line.push_str(",\n"),
        }
        self.stats.write_all(line.as_bytes())?;
        self.stats.flush()?;
        Ok(())
    }

    fn checkpoint(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }
}

/// Mean PSNR of `codec` over `set` at mid-range SNR and CR, over every
/// depth the model serves, with fixed noise.
pub fn validation_psnr(codec: &Codec, set: &ImageSet, cfg: &TrainConfig) -> Result<f64> {
    let cond = Conditioning::new(
        (cfg.snr_range[0] + cfg.snr_range[1]) / 2.0,
        (cfg.cr_range[0] + cfg.cr_range[1]) / 2.0,
    )?;
    let depths: Vec<usize> = match cfg.mode {
        TrainedMode::Dynamic => (2..cfg.layers).collect(),
        TrainedMode::Fixed(n) => vec![n],
    };
    let mut values = Vec::new();
    for n in depths {
        let layer_cfg = LayerConfig::from_depth(n, cfg.layers)?;
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix(cfg.seed ^ n as u64));
        for chunk in set.images.chunks(50) {
            let refs: Vec<&Tensor> = chunk.iter().collect();
            let x = Tensor::stack(&refs)?;
            let y = reconstruct(codec, &x, &cond, &layer_cfg, &cfg.channel(), &mut rng)?;
            let per = x.len() / chunk.len();
            for (a, b) in x.data().chunks(per).zip(y.data().chunks(per)) {
                let mse = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / per as f64;
                values.push(psnr_from_mse(mse, 1.0).db);
            }
        }
    }
    Ok(mean_and_stderr(&values).0)
}

/// Trains one codec from a single initialization. Deterministic given
/// `cfg.seed`: parameter initialization, batch order, episodes and channel
/// noise all derive from it.
pub fn train(data: &ImageSet, cfg: &TrainConfig, opts: TrainOptions<'_>) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::usage("training set is empty"));
    }
    let arch = cfg.arch(data.images[0].shape())?;
    let mut codec = Codec::new(arch, cfg.init_seed())?;
    codec.set_mode(cfg.mode);
    // Fail on oversized CRs before any work.
    codec.symbols(cfg.cr_range[0])?;
    let adam = cfg.adam();
    let channel = cfg.channel();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.episode_seed());
    let mut run = opts.run_dir.map(|d| RunDir::create(d, cfg)).transpose()?;
    let mut stats = Vec::with_capacity(cfg.epochs);
    let mut best: Option<f64> = None;
    let mut last_ckpt = None;

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let mut total = 0.0;
        let mut counts = BTreeMap::new();
        let batches = batch_iter(data, cfg.batch_size, cfg.shuffle_seed(), epoch - 1)?;
        let steps = batches.num_batches();
        for (b, batch) in batches.enumerate() {
            let ep = sample_episode(cfg, &mut rng);
            let loss = train_step(&mut codec, &batch, &ep, &channel, &adam, &mut rng).map_err(|e| match e {
                Error::Divergence { detail, .. } => {
                    if let Some(r) = &run {
                        let dump = r.checkpoint("divergence.ckpt");
                        let header = CheckpointHeader::describe(&codec, cfg.seed, epoch - 1, cfg.snr_range, cfg.cr_range);
                        let _ = write_checkpoint(&dump, &codec, &header);
                    }
                    Error::Divergence {
                        epoch,
                        batch: b + 1,
                        detail,
                    }
                }
                other => other,
            })?;
            total += loss;
            *counts.entry(ep.n).or_insert(0) += 1;
        }
        let val_psnr_db = opts.validation.map(|v| validation_psnr(&codec, v, cfg)).transpose()?;
        let s = EpochStats {
            epoch,
            mean_loss: total / steps as f64,
            n_counts: counts,
            duration_s: start.elapsed().as_secs_f64(),
            val_psnr_db,
        };
        if let Some(r) = &mut run {
            let header = CheckpointHeader::describe(&codec, cfg.seed, epoch, cfg.snr_range, cfg.cr_range);
            let path = r.checkpoint(&format!("epoch_{epoch}.ckpt"));
            write_checkpoint(&path, &codec, &header)?;
            if let Some(v) = val_psnr_db {
                if best.is_none_or(|b| v > b) {
                    best = Some(v);
                    write_checkpoint(&r.checkpoint("best.ckpt"), &codec, &header)?;
                }
            }
            r.record(&s)?;
            last_ckpt = Some(path);
        }
        if let Some(p) = opts.progress {
            p(&s);
        }
        stats.push(s);
    }
    Ok(TrainOutcome {
        codec,
        stats,
        checkpoint: last_ckpt,
    })
}

/// Trains a baseline that always runs at depth `n` of `cfg.mode`.
pub fn train_fixed_baseline(data: &ImageSet, cfg: &TrainConfig, opts: TrainOptions<'_>) -> Result<TrainOutcome> {
    match cfg.mode {
        TrainedMode::Fixed(_) => train(data, cfg, opts),
        TrainedMode::Dynamic => Err(Error::usage("baseline training needs a fixed depth")),
    }
}

/// Configurations for the fixed-depth baseline suite: one per depth
/// 2..=L-1, each with `epochs` epochs and its own initialization seed.
pub fn baseline_suite(dynamic: &TrainConfig, epochs: usize) -> Vec<TrainConfig> {
    (2..dynamic.layers)
        .map(|n| TrainConfig {
            epochs,
            mode: TrainedMode::Fixed(n),
            seed: splitmix(dynamic.seed.wrapping_add(1000 + n as u64)),
            ..dynamic.clone()
        })
        .collect()
}
