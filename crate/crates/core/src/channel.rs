//! Power normalization and the simulated wireless channel.
//!
//! The channel applies `z~ = h s + n` with `n ~ CN(0, sigma^2 I)`: real and
//! imaginary noise parts are independent N(0, sigma^2 / 2), so the complex
//! per-symbol noise power is sigma^2 and the received SNR is
//! `|h|^2 P_max / sigma^2`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::codec::SemanticCode;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Default average power per symbol.
pub const DEFAULT_P_MAX: f64 = 1.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelMode {
    /// Unit gain, additive noise only.
    #[default]
    Awgn,
    /// Flat Rayleigh fading, h ~ CN(0, 1), with perfect equalization at the
    /// receiver.
    Rayleigh,
    /// Unit gain and no noise. The codec is still conditioned on the
    /// nominal SNR.
    Noiseless,
}

/// Channel state for one transmission.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelRealization {
    pub h: Complex64,
    /// Complex noise variance. Zero only for an infinite SNR.
    pub sigma2: f64,
    pub p_max: f64,
}

impl ChannelRealization {
    /// Realization whose received SNR is exactly `snr_db` for gain `h`.
    pub fn from_snr_db(snr_db: f64, h: Complex64, p_max: f64) -> Result<Self> {
        if p_max.is_nan() || p_max <= 0.0 {
            return Err(Error::usage(format!("p_max must be positive, got {p_max}")));
        }
        if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
            return Err(Error::usage(format!("invalid SNR {snr_db} dB")));
        }
        Ok(ChannelRealization {
            h,
            sigma2: snr_db_to_sigma2(snr_db, h, p_max),
            p_max,
        })
    }

    /// Linear SNR implied by this realization.
    pub fn snr(&self) -> f64 {
        self.h.norm_sqr() * self.p_max / self.sigma2
    }
}

/// Noise variance giving SNR `snr_db` for gain `h` and power `p_max`:
/// sigma^2 = |h|^2 P_max / 10^(snr_db / 10).
pub fn snr_db_to_sigma2(snr_db: f64, h: Complex64, p_max: f64) -> f64 {
    h.norm_sqr() * p_max / 10f64.powf(snr_db / 10.0)
}

pub fn sigma2_to_snr_db(sigma2: f64, h: Complex64, p_max: f64) -> f64 {
    10.0 * (h.norm_sqr() * p_max / sigma2).log10()
}

/// Scales `z` so that its mean symbol power is exactly `p_max`.
pub fn power_normalize(z: &SemanticCode, p_max: f64) -> Result<SemanticCode> {
    let energy = z.energy();
    if energy == 0.0 {
        return Err(Error::Degenerate("cannot power-normalize an all-zero code".into()));
    }
    let c = (z.len() as f64 * p_max / energy).sqrt();
    SemanticCode::from_interleaved(z.interleaved().iter().map(|v| c * v).collect())
}

/// Draws the channel gain for `mode`.
pub fn sample_fading<R: Rng + ?Sized>(mode: ChannelMode, rng: &mut R) -> Complex64 {
    match mode {
        ChannelMode::Awgn | ChannelMode::Noiseless => Complex64::new(1.0, 0.0),
        ChannelMode::Rayleigh => {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(s * re, s * im)
        }
    }
}

/// Interleaved samples of K i.i.d. CN(0, sigma2) symbols.
pub fn sample_noise<R: Rng + ?Sized>(k: usize, sigma2: f64, rng: &mut R) -> Vec<f64> {
    let std = (sigma2 / 2.0).sqrt();
    (0..2 * k)
        .map(|_| {
            let v: f64 = rng.sample(StandardNormal);
            std * v
        })
        .collect()
}

/// `z~ = h s + n` for one code.
pub fn transmit<R: Rng + ?Sized>(
    s: &SemanticCode,
    real: &ChannelRealization,
    rng: &mut R,
) -> SemanticCode {
    let noise = if real.sigma2 > 0.0 {
        sample_noise(s.len(), real.sigma2, rng)
    } else {
        vec![0.0; 2 * s.len()]
    };
    let out: Vec<f64> = s
        .symbols()
        .zip(noise.chunks_exact(2))
        .flat_map(|(z, n)| {
            let y = real.h * z + Complex64::new(n[0], n[1]);
            [y.re, y.im]
        })
        .collect();
    SemanticCode::from_interleaved(out).expect("length preserved")
}

/// A channel model used inside the differentiable pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub mode: ChannelMode,
    pub p_max: f64,
}

impl Default for Channel {
    fn default() -> Self {
        Channel {
            mode: ChannelMode::Awgn,
            p_max: DEFAULT_P_MAX,
        }
    }
}

impl Channel {
    pub fn awgn() -> Self {
        Self::default()
    }

    /// Draws a realization at average SNR `snr_db`. In fading mode the noise
    /// variance is set from E[|h|^2] = 1, so `snr_db` is the average SNR and
    /// the realized SNR follows the fading gain.
    pub fn realize<R: Rng + ?Sized>(&self, snr_db: f64, rng: &mut R) -> Result<ChannelRealization> {
        let h = sample_fading(self.mode, rng);
        let mut sigma2 = ChannelRealization::from_snr_db(snr_db, Complex64::new(1.0, 0.0), self.p_max)?.sigma2;
        if self.mode == ChannelMode::Noiseless {
            sigma2 = 0.0;
        }
        Ok(ChannelRealization {
            h,
            sigma2,
            p_max: self.p_max,
        })
    }

    /// Normalizes every row of `z` [B,2K] to `p_max`, sends each row through
    /// its own realization at `snr_db` with fresh noise and, for fading,
    /// equalizes by 1/h. Noise enters the tape as a constant.
    pub fn apply<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        z: Var,
        snr_db: f64,
        rng: &mut R,
    ) -> Result<Var> {
        let s = tape.power_normalize(z, self.p_max)?;
        let shape = tape.shape(s).to_vec();
        let (batch, width) = (shape[0], shape[1]);
        let mut gains = Vec::with_capacity(batch);
        let mut noise = Vec::with_capacity(batch * width);
        for _ in 0..batch {
            let real = self.realize(snr_db, rng)?;
            gains.push((real.h.re, real.h.im));
            if real.sigma2 > 0.0 {
                noise.extend(sample_noise(width / 2, real.sigma2, rng));
            } else {
                noise.extend(std::iter::repeat_n(0.0, width));
            }
        }
        let noise = Tensor::new(shape, noise)?;
        let received = tape.complex_affine(s, &gains, Some(&noise))?;
        match self.mode {
            ChannelMode::Awgn | ChannelMode::Noiseless => Ok(received),
            ChannelMode::Rayleigh => {
                let inv: Vec<(f64, f64)> = gains
                    .iter()
                    .map(|&(re, im)| {
                        let g = Complex64::new(1.0, 0.0) / Complex64::new(re, im);
                        (g.re, g.im)
                    })
                    .collect();
                tape.complex_affine(received, &inv, None)
            }
        }
    }
}
