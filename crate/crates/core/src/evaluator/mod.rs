//! PSNR and grid evaluation of trained codecs over SNR x CR x depth.

mod compare;
mod export;

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::channel::Channel;
use crate::codec::{Codec, Conditioning, LayerConfig, TrainedMode};
use crate::dataset::ImageSet;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use compare::{compare_dynamic_vs_fixed, Check, ComparisonReport, CellDelta, DepthAverage, Thresholds};
pub use export::{export_results, import_sweep_csv, SweepRow};

/// PSNR reported when the reconstruction is exact.
pub const PSNR_CAP_DB: f64 = 99.0;

/// Default SNR grid in dB.
pub const DEFAULT_SNR_POINTS: [f64; 12] = [-6.0, -3.0, 0.0, 3.0, 6.0, 9.0, 12.0, 15.0, 18.0, 21.0, 24.0, 27.0];

/// Default test compression ratios.
pub const DEFAULT_CR_POINTS: [f64; 3] = [1.0 / 12.0, 1.0 / 6.0, 0.25];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Psnr {
    pub db: f64,
    /// Set when the MSE was zero and `db` holds [`PSNR_CAP_DB`].
    pub capped: bool,
}

/// 10 log10(max_i^2 / mse(x, x_hat)), capped at 99 dB for identical inputs.
pub fn psnr(x: &Tensor, x_hat: &Tensor, max_i: f64) -> Result<Psnr> {
    if x.shape() != x_hat.shape() {
        return Err(Error::dim(format!("psnr of shapes {:?} and {:?}", x.shape(), x_hat.shape())));
    }
    if max_i.is_nan() || max_i <= 0.0 {
        return Err(Error::usage(format!("peak value must be positive, got {max_i}")));
    }
    Ok(psnr_from_mse(mse(x.data(), x_hat.data()), max_i))
}

pub fn psnr_from_mse(mse: f64, max_i: f64) -> Psnr {
    if mse == 0.0 {
        Psnr {
            db: PSNR_CAP_DB,
            capped: true,
        }
    } else {
        Psnr {
            db: 10.0 * (max_i * max_i / mse).log10(),
            capped: false,
        }
    }
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub snr_points: Vec<f64>,
    pub cr_points: Vec<f64>,
    pub n_points: Vec<usize>,
    /// Independent noise draws per test image per cell.
    pub trials: usize,
    pub seed: u64,
    /// Peak pixel value used by PSNR.
    pub max_i: f64,
    #[serde(default)]
    pub channel: Channel,
}

impl SweepSpec {
    /// Default grids for a codec with `layers` layers.
    pub fn default_for(layers: usize, seed: u64) -> Self {
        SweepSpec {
            snr_points: DEFAULT_SNR_POINTS.to_vec(),
            cr_points: DEFAULT_CR_POINTS.to_vec(),
            n_points: (2..layers).collect(),
            trials: 8,
            seed,
            max_i: 1.0,
            channel: Channel::awgn(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.snr_points.is_empty() || self.cr_points.is_empty() || self.n_points.is_empty() {
            return Err(Error::usage("sweep grids must be non-empty"));
        }
        if self.trials == 0 {
            return Err(Error::usage("trials must be at least 1"));
        }
        if self.snr_points.iter().any(|s| s.is_nan() || *s == f64::NEG_INFINITY) {
            return Err(Error::usage("SNR points must be numbers above -inf"));
        }
        if self.max_i.is_nan() || self.max_i <= 0.0 {
            return Err(Error::usage("peak value must be positive"));
        }
        Ok(())
    }

    /// Cells in grid order: n outermost, then CR, then SNR.
    pub fn cells(&self) -> Vec<(usize, f64, f64)> {
        let mut out = Vec::new();
        for &n in &self.n_points {
            for &cr in &self.cr_points {
                for &snr in &self.snr_points {
                    out.push((n, snr, cr));
                }
            }
        }
        out
    }

    /// Stream index of a cell, shared by every model evaluated on the same
    /// SNR and CR axes so that they see the same noise.
    fn stream(&self, n: usize, snr_i: usize, cr_i: usize) -> u64 {
        let per_n = (self.snr_points.len() * self.cr_points.len()) as u64;
        n as u64 * per_n + (cr_i * self.snr_points.len() + snr_i) as u64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub n: usize,
    pub snr_db: f64,
    pub cr: f64,
    /// Mean over uncapped samples.
    pub mean_psnr_db: f64,
    pub stderr_db: f64,
    /// trials x test-set size.
    pub samples: usize,
    /// Samples with zero MSE, excluded from the mean.
    pub capped: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub model: TrainedMode,
    pub checkpoint: Option<PathBuf>,
    pub spec: SweepSpec,
    pub cells: Vec<CellResult>,
}

impl SweepResult {
    pub fn cell(&self, n: usize, snr_db: f64, cr: f64) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.n == n && c.snr_db == snr_db && c.cr == cr)
    }
}

/// Images per forward pass during evaluation.
const EVAL_CHUNK: usize = 50;

/// Clamped reconstructions of `x` [B,C,H,W] through the full pipeline.
pub fn reconstruct(
    codec: &Codec,
    x: &Tensor,
    cond: &Conditioning,
    cfg: &LayerConfig,
    channel: &Channel,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let xv = tape.input(x.clone());
    let y = codec.transmit_on(&mut tape, xv, cond, cfg, channel, rng)?;
    Ok(tape.value(y).map(|v| v.clamp(0.0, 1.0)))
}

fn evaluate_cell(
    codec: &Codec,
    test: &[Tensor],
    spec: &SweepSpec,
    (n, snr_i, cr_i): (usize, usize, usize),
) -> Result<CellResult> {
    let (snr_db, cr) = (spec.snr_points[snr_i], spec.cr_points[cr_i]);
    let cond = Conditioning::new(snr_db, cr)?;
    let cfg = LayerConfig::from_depth(n, codec.layers())?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(spec.stream(n, snr_i, cr_i));
    let mut values = Vec::with_capacity(spec.trials * test.len());
    let mut capped = 0;
    for _ in 0..spec.trials {
        for chunk in test.chunks(EVAL_CHUNK) {
            let refs: Vec<&Tensor> = chunk.iter().collect();
            let x = Tensor::stack(&refs)?;
            let y = reconstruct(codec, &x, &cond, &cfg, &spec.channel, &mut rng)?;
            let per = x.len() / chunk.len();
            for (a, b) in x.data().chunks(per).zip(y.data().chunks(per)) {
                let p = psnr_from_mse(mse(a, b), spec.max_i);
                if p.capped {
                    capped += 1;
                } else {
                    values.push(p.db);
                }
            }
        }
    }
    let (mean, stderr) = mean_and_stderr(&values);
    Ok(CellResult {
        n,
        snr_db,
        cr,
        mean_psnr_db: mean,
        stderr_db: stderr,
        samples: spec.trials * test.len(),
        capped,
    })
}

/// Sample mean and standard error of the mean. A single sample has zero
/// standard error; no samples gives the cap value.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    match values.len() {
        0 => (PSNR_CAP_DB, 0.0),
        1 => (values[0], 0.0),
        m => {
            let mean = values.iter().sum::<f64>() / m as f64;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
            (mean, (var / m as f64).sqrt())
        }
    }
}

/// Evaluates `codec` on every cell of `spec`. A fixed-depth model may only
/// be evaluated at the depth it was trained for. Cells run on up to
/// `jobs` threads; results do not depend on `jobs`.
pub fn evaluate_grid(
    codec: &Codec,
    checkpoint: Option<PathBuf>,
    test: &ImageSet,
    spec: &SweepSpec,
    jobs: usize,
) -> Result<SweepResult> {
    spec.validate()?;
    if test.is_empty() {
        return Err(Error::usage("empty test set"));
    }
    if let TrainedMode::Fixed(trained) = codec.mode() {
        if let Some(&n) = spec.n_points.iter().find(|&&n| n != trained) {
            return Err(Error::Protocol(format!(
                "fixed model trained at n={trained} cannot be evaluated at n={n}"
            )));
        }
    }
    for &n in &spec.n_points {
        LayerConfig::from_depth(n, codec.layers())?;
    }
    for &cr in &spec.cr_points {
        codec.symbols(cr)?;
    }
    let mut indices = Vec::new();
    for &n in &spec.n_points {
        for cr_i in 0..spec.cr_points.len() {
            for snr_i in 0..spec.snr_points.len() {
                indices.push((n, snr_i, cr_i));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::usage(format!("thread pool: {e}")))?;
    let cells = pool.install(|| {
        indices
            .par_iter()
            .map(|&idx| evaluate_cell(codec, &test.images, spec, idx))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(SweepResult {
        model: codec.mode(),
        checkpoint,
        spec: spec.clone(),
        cells,
    })
}
