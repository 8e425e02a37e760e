//! Encoder and decoder layer stacks with skip-through routing.
//!
//! Every layer's weights exist at all times; a [`LayerConfig`] decides which
//! layers run. An active layer consumes the output of the most recent active
//! layer before it, so skipped layers never enter the tape and receive no
//! gradient.
//!
//! Layer roles (L layers, `w1`/`w2` feature widths):
//!
//! | layer     | encoder                          | decoder                                   |
//! |-----------|----------------------------------|-------------------------------------------|
//! | 1         | conv 4x4/2, (C+2) -> w1, PReLU   | tconv 3x3/1, (code+2) -> w2, PReLU        |
//! | 2         | conv 4x4/2, w1 -> w2, PReLU      | tconv 3x3/1, w2 -> w2, PReLU              |
//! | 3..L-1    | x + PReLU(conv 3x3/1 (x))        | x + PReLU(tconv 3x3/1 (x))                |
//! | L         | conv 3x3/1, w2 -> code, flatten  | tconv 4x4/2 w2 -> w1, PReLU, tconv 4x4/2 w1 -> C |
//!
//! The two conditioning values (normalized SNR and compression ratio) are
//! appended as constant feature planes to the encoder input and to the
//! decoder input.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::code::{symbols_for, SemanticCode};
use super::config::{LayerConfig, MIN_LAYERS};
use crate::autodiff::{ParamId, ParamStore, Tape, Var};
use crate::channel::Channel;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const PRELU_INIT: f64 = 0.25;
const CONDITIONING_PLANES: usize = 2;

/// Architecture hyper-parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arch {
    /// Total layer count L on each side.
    pub layers: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Feature width after the first down-sampling layer.
    pub width1: usize,
    /// Feature width of layers 2..L-1.
    pub width2: usize,
    /// Largest compression ratio the code layer can serve.
    pub cr_max: f64,
    /// SNR interval (dB) mapped onto [0, 1] for conditioning. Values
    /// outside it extrapolate linearly.
    pub snr_range: [f64; 2],
}

impl Default for Arch {
    fn default() -> Self {
        Arch {
            layers: 8,
            channels: 3,
            height: 32,
            width: 32,
            width1: 16,
            width2: 32,
            cr_max: 0.9,
            snr_range: [0.0, 27.0],
        }
    }
}

impl Arch {
    pub fn validate(&self) -> Result<()> {
        if self.layers < MIN_LAYERS {
            return Err(Error::usage(format!("need at least {MIN_LAYERS} layers")));
        }
        if self.channels == 0 || self.width1 == 0 || self.width2 == 0 {
            return Err(Error::usage("channel and feature widths must be positive"));
        }
        if self.height < 4 || self.width < 4 || !self.height.is_multiple_of(4) || !self.width.is_multiple_of(4) {
            return Err(Error::usage(format!(
                "image size {}x{} must be a positive multiple of 4",
                self.height, self.width
            )));
        }
        symbols_for(self.cr_max, self.input_len())?;
        if !(self.snr_range[0].is_finite() && self.snr_range[1].is_finite())
            || self.snr_range[0] > self.snr_range[1]
        {
            return Err(Error::usage(format!("bad SNR range {:?}", self.snr_range)));
        }
        Ok(())
    }

    /// Real values per image, N.
    pub fn input_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    /// Largest symbol count K_max = floor(cr_max * N / 2).
    pub fn max_symbols(&self) -> usize {
        (self.cr_max * self.input_len() as f64 / 2.0).floor() as usize
    }

    /// Spatial size of the code feature map.
    pub fn code_hw(&self) -> (usize, usize) {
        (self.height / 4, self.width / 4)
    }

    /// Channels of the code layer's feature map, enough to hold 2 K_max reals.
    pub fn code_channels(&self) -> usize {
        let (h, w) = self.code_hw();
        (2 * self.max_symbols()).div_ceil(h * w)
    }
}

/// Channel conditions a code is produced for.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conditioning {
    pub snr_db: f64,
    pub cr: f64,
}

impl Conditioning {
    pub fn new(snr_db: f64, cr: f64) -> Result<Self> {
        if !snr_db.is_finite() {
            return Err(Error::usage(format!("SNR must be finite, got {snr_db}")));
        }
        if !(cr > 0.0 && cr <= 1.0) {
            return Err(Error::usage(format!("compression ratio {cr} outside (0, 1]")));
        }
        Ok(Conditioning { snr_db, cr })
    }
}

/// What configuration space a parameter set was trained on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "depth", rename_all = "lowercase")]
pub enum TrainedMode {
    Dynamic,
    Fixed(usize),
}

impl TrainedMode {
    pub fn label(&self) -> String {
        match self {
            TrainedMode::Dynamic => "dynamic".into(),
            TrainedMode::Fixed(n) => format!("fixed{n}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Side {
    Encoder,
    Decoder,
}

#[derive(Clone, Debug)]
struct LayerParams {
    weight: ParamId,
    bias: ParamId,
    slope: Option<ParamId>,
    /// Second stage of the decoder's last layer.
    tail: Option<(ParamId, ParamId)>,
}

impl LayerParams {
    fn ids(&self) -> Vec<ParamId> {
        let mut v = vec![self.weight, self.bias];
        v.extend(self.slope);
        if let Some((w, b)) = self.tail {
            v.extend([w, b]);
        }
        v
    }
}

/// Encoder and decoder weights for every layer.
#[derive(Clone, Debug)]
pub struct Codec {
    arch: Arch,
    store: ParamStore,
    encoder: Vec<LayerParams>,
    decoder: Vec<LayerParams>,
    mode: TrainedMode,
}

fn glorot(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let receptive: usize = shape[2..].iter().product();
    let bound = (6.0 / ((shape[0] + shape[1]) * receptive) as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.random_range(-bound..=bound))
}

impl Codec {
    /// Fresh parameters: Glorot-uniform kernels, zero biases, PReLU slopes
    /// of 0.25, all drawn from `seed`.
    pub fn new(arch: Arch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let l = arch.layers;
        let (c, w1, w2, code) = (arch.channels, arch.width1, arch.width2, arch.code_channels());
        let cond = CONDITIONING_PLANES;

        let mut conv = |store: &mut ParamStore,
                        name: String,
                        shape: [usize; 4],
                        bias_len: usize,
                        slope: bool|
         -> Result<(ParamId, ParamId, Option<ParamId>)> {
            let w = store.add(format!("{name}.weight"), glorot(&shape, &mut rng))?;
            let b = store.add(format!("{name}.bias"), Tensor::zeros(&[bias_len]))?;
            let a = if slope {
                Some(store.add(format!("{name}.slope"), Tensor::scalar(PRELU_INIT))?)
            } else {
                None
            };
            Ok((w, b, a))
        };

        let mut encoder = Vec::with_capacity(l);
        for i in 1..=l {
            let name = format!("enc{i}");
            // conv kernels are [out, in, k, k]
            let (shape, bias, slope) = match i {
                1 => ([w1, c + cond, 4, 4], w1, true),
                2 => ([w2, w1, 4, 4], w2, true),
                _ if i == l => ([code, w2, 3, 3], code, false),
                _ => ([w2, w2, 3, 3], w2, true),
            };
            let (weight, bias, slope) = conv(&mut store, name, shape, bias, slope)?;
            encoder.push(LayerParams { weight, bias, slope, tail: None });
        }

        let mut decoder = Vec::with_capacity(l);
        for i in 1..=l {
            let name = format!("dec{i}");
            // transposed-conv kernels are [in, out, k, k]
            let (shape, bias) = match i {
                1 => ([code + cond, w2, 3, 3], w2),
                _ if i == l => ([w2, w1, 4, 4], w1),
                _ => ([w2, w2, 3, 3], w2),
            };
            let (weight, bias, slope) = conv(&mut store, name.clone(), shape, bias, true)?;
            let tail = if i == l {
                let (w, b, _) = conv(&mut store, format!("{name}.out"), [w1, c, 4, 4], c, false)?;
                Some((w, b))
            } else {
                None
            };
            decoder.push(LayerParams { weight, bias, slope, tail });
        }
        // Start reconstructions at mid-grey.
        let (_, out_bias) = decoder[l - 1].tail.expect("decoder output stage");
        store.value_mut(out_bias).data_mut().fill(0.5);

        Ok(Codec {
            arch,
            store,
            encoder,
            decoder,
            mode: TrainedMode::Dynamic,
        })
    }

    pub fn arch(&self) -> &Arch {
        &self.arch
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn mode(&self) -> TrainedMode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: TrainedMode) {
        self.mode = mode;
    }

    pub fn layers(&self) -> usize {
        self.arch.layers
    }

    /// Parameters of 1-based encoder layer `i`.
    pub fn encoder_layer_params(&self, i: usize) -> Vec<ParamId> {
        self.encoder[i - 1].ids()
    }

    /// Parameters of 1-based decoder layer `i`.
    pub fn decoder_layer_params(&self, i: usize) -> Vec<ParamId> {
        self.decoder[i - 1].ids()
    }

    /// Symbol count for compression ratio `cr`.
    pub fn symbols(&self, cr: f64) -> Result<usize> {
        let k = symbols_for(cr, self.arch.input_len())?;
        if k > self.arch.max_symbols() {
            return Err(Error::usage(format!(
                "compression ratio {cr} needs {k} symbols, codec provides at most {}",
                self.arch.max_symbols()
            )));
        }
        Ok(k)
    }

    fn check_config(&self, cfg: &LayerConfig) -> Result<()> {
        if cfg.layers() != self.arch.layers {
            return Err(Error::dim(format!(
                "{}-layer configuration for a {}-layer codec",
                cfg.layers(),
                self.arch.layers
            )));
        }
        Ok(())
    }

    fn conditioning_planes(&self, cond: &Conditioning) -> [f64; CONDITIONING_PLANES] {
        let [lo, hi] = self.arch.snr_range;
        let snr = if hi > lo { (cond.snr_db - lo) / (hi - lo) } else { 0.0 };
        [snr, cond.cr]
    }

    /// Convolution plus bias. `weight_rows`/`bias_rows` restrict the kernel
    /// to a subset of its leading-axis slices.
    #[allow(clippy::too_many_arguments)]
    fn affine(
        &self,
        tape: &mut Tape,
        side: Side,
        h: Var,
        p: &LayerParams,
        stride: usize,
        pad: usize,
        weight_rows: Option<&[usize]>,
        bias_rows: Option<&[usize]>,
    ) -> Result<Var> {
        let mut w = tape.param(&self.store, p.weight);
        if let Some(rows) = weight_rows {
            w = tape.select_rows(w, rows)?;
        }
        let y = match side {
            Side::Encoder => tape.conv2d(h, w, stride, pad)?,
            Side::Decoder => tape.conv_transpose2d(h, w, stride, pad)?,
        };
        let mut b = tape.param(&self.store, p.bias);
        if let Some(rows) = bias_rows {
            b = tape.select_rows(b, rows)?;
        }
        tape.add_bias(y, b)
    }

    fn activate(&self, tape: &mut Tape, y: Var, p: &LayerParams) -> Result<Var> {
        match p.slope {
            Some(a) => {
                let a = tape.param(&self.store, a);
                tape.prelu(y, a)
            }
            None => Ok(y),
        }
    }

    /// `code_planes` limits the encoder's code layer to its first output
    /// planes, or the decoder's first layer to its first code input planes
    /// plus the conditioning planes. Other planes would be discarded by the
    /// compression mask (encoder) or are all zero (decoder).
    fn apply_layer(&self, tape: &mut Tape, side: Side, i: usize, h: Var, code_planes: Option<usize>) -> Result<Var> {
        let l = self.arch.layers;
        let p = match side {
            Side::Encoder => &self.encoder[i - 1],
            Side::Decoder => &self.decoder[i - 1],
        };
        let interior = i > 2 && i < l;
        let (stride, pad) = match (side, i) {
            (Side::Encoder, 1 | 2) => (2, 1),
            (Side::Decoder, _) if i == l => (2, 1),
            _ => (1, 1),
        };
        let code = self.arch.code_channels();
        let (weight_rows, bias_rows): (Option<Vec<usize>>, Option<Vec<usize>>) = match (side, code_planes) {
            (Side::Encoder, Some(m)) if i == l && m < code => (Some((0..m).collect()), Some((0..m).collect())),
            (Side::Decoder, Some(m)) if i == 1 && m < code => {
                (Some((0..m).chain(code..code + CONDITIONING_PLANES).collect()), None)
            }
            _ => (None, None),
        };
        let y = self.affine(tape, side, h, p, stride, pad, weight_rows.as_deref(), bias_rows.as_deref())?;
        let y = self.activate(tape, y, p)?;
        if interior {
            return tape.add(h, y);
        }
        if let Some((w, b)) = p.tail {
            let w = tape.param(&self.store, w);
            let out = tape.conv_transpose2d(y, w, 2, 1)?;
            let b = tape.param(&self.store, b);
            return tape.add_bias(out, b);
        }
        Ok(y)
    }

    /// Records encoder layer `i` alone on `tape`. The code layer L returns
    /// its raw feature map, before flattening and masking.
    pub fn encoder_layer(&self, tape: &mut Tape, i: usize, h: Var) -> Result<Var> {
        self.apply_layer(tape, Side::Encoder, i, h, None)
    }

    pub fn decoder_layer(&self, tape: &mut Tape, i: usize, h: Var) -> Result<Var> {
        self.apply_layer(tape, Side::Decoder, i, h, None)
    }

    /// Code-map planes needed to carry 2K reals.
    fn planes_for(&self, k: usize) -> usize {
        let (h, w) = self.arch.code_hw();
        (2 * k).div_ceil(h * w)
    }

    /// Appends the conditioning planes to an image batch [B,C,H,W].
    pub fn encoder_input(&self, tape: &mut Tape, x: Var, cond: &Conditioning) -> Result<Var> {
        let xs = tape.shape(x);
        let a = &self.arch;
        if xs.len() != 4 || xs[1] != a.channels || xs[2] != a.height || xs[3] != a.width {
            return Err(Error::dim(format!(
                "codec expects [B, {}, {}, {}] images, got {xs:?}",
                a.channels, a.height, a.width
            )));
        }
        let planes = self.conditioning_planes(cond);
        tape.append_channels(x, &planes)
    }

    /// Encoder forward pass: images [B,C,H,W] to real codes [B,2K].
    pub fn encode_on(&self, tape: &mut Tape, x: Var, cond: &Conditioning, cfg: &LayerConfig) -> Result<Var> {
        self.check_config(cfg)?;
        let k = self.symbols(cond.cr)?;
        let planes = self.planes_for(k);
        let mut h = self.encoder_input(tape, x, cond)?;
        for i in cfg.active_layers() {
            h = self.apply_layer(tape, Side::Encoder, i, h, Some(planes))?;
        }
        let (hh, ww) = self.arch.code_hw();
        let batch = tape.shape(h)[0];
        let flat = tape.reshape(h, &[batch, planes * hh * ww])?;
        if 2 * k == planes * hh * ww {
            return Ok(flat);
        }
        tape.truncate(flat, 2 * k)
    }

    /// Decoder forward pass: received real codes [B,2K] to images
    /// [B,C,H,W]. Positions beyond 2K are zero-filled.
    pub fn decode_on(&self, tape: &mut Tape, code: Var, cond: &Conditioning, cfg: &LayerConfig) -> Result<Var> {
        self.check_config(cfg)?;
        let k = self.symbols(cond.cr)?;
        let cs = tape.shape(code).to_vec();
        if cs.len() != 2 || cs[1] != 2 * k {
            return Err(Error::dim(format!(
                "compression ratio {} implies codes of {} reals, got {cs:?}",
                cond.cr,
                2 * k
            )));
        }
        let (hh, ww) = self.arch.code_hw();
        let planes = self.planes_for(k);
        let filled = if 2 * k == planes * hh * ww {
            code
        } else {
            tape.zero_extend(code, planes * hh * ww)?
        };
        let grid = tape.reshape(filled, &[cs[0], planes, hh, ww])?;
        let extra = self.conditioning_planes(cond);
        let mut h = tape.append_channels(grid, &extra)?;
        for i in cfg.active_layers() {
            h = self.apply_layer(tape, Side::Decoder, i, h, Some(planes))?;
        }
        Ok(h)
    }

    /// Encoder, power normalization, channel and decoder under one shared
    /// layer configuration. Returns the unclamped reconstruction.
    #[allow(clippy::too_many_arguments)]
    pub fn transmit_on<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        x: Var,
        cond: &Conditioning,
        cfg: &LayerConfig,
        channel: &Channel,
        rng: &mut R,
    ) -> Result<Var> {
        let z = self.encode_on(tape, x, cond, cfg)?;
        let received = channel.apply(tape, z, cond.snr_db, rng)?;
        self.decode_on(tape, received, cond, cfg)
    }

    /// Codes for a batch of images, one per batch element.
    pub fn encode(&self, x: &Tensor, cond: &Conditioning, cfg: &LayerConfig) -> Result<Vec<SemanticCode>> {
        let mut tape = Tape::new();
        let xv = tape.input(x.clone());
        let z = self.encode_on(&mut tape, xv, cond, cfg)?;
        let width = tape.shape(z)[1];
        tape.value(z)
            .data()
            .chunks(width)
            .map(|row| SemanticCode::from_interleaved(row.to_vec()))
            .collect()
    }

    /// Reconstructions [B,C,H,W] for received codes, unclamped.
    pub fn decode(&self, codes: &[SemanticCode], cond: &Conditioning, cfg: &LayerConfig) -> Result<Tensor> {
        let first = codes.first().ok_or_else(|| Error::usage("no codes to decode"))?;
        let width = first.interleaved().len();
        let mut data = Vec::with_capacity(codes.len() * width);
        for c in codes {
            if c.interleaved().len() != width {
                return Err(Error::dim("codes in one batch must share a length"));
            }
            data.extend_from_slice(c.interleaved());
        }
        let mut tape = Tape::new();
        let zv = tape.input(Tensor::new(vec![codes.len(), width], data)?);
        let out = self.decode_on(&mut tape, zv, cond, cfg)?;
        Ok(tape.value(out).clone())
    }

    pub(crate) fn from_parts(arch: Arch, store: ParamStore, mode: TrainedMode) -> Result<Self> {
        let mut fresh = Codec::new(arch, 0)?;
        if fresh.store.len() != store.len() {
            return Err(Error::Checkpoint(format!(
                "architecture declares {} tensors, checkpoint has {}",
                fresh.store.len(),
                store.len()
            )));
        }
        for id in fresh.store.ids().collect::<Vec<_>>() {
            let name = fresh.store.name(id).to_string();
            let src = store
                .id(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))?;
            fresh
                .store
                .set_value(id, store.value(src).clone())
                .map_err(|e| Error::Checkpoint(format!("{name}: {e}")))?;
        }
        fresh.mode = mode;
        Ok(fresh)
    }
}
