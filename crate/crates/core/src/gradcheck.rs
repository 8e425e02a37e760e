//! Finite-difference verification of every differentiable operation and of
//! the full encode, normalize, transmit, decode, MSE pipeline.
//!
//! Each case builds a random scalar objective, computes analytic gradients
//! with one reverse sweep, and compares a sample of coordinates against
//! central differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autodiff::{OpKind, Tape, Var};
use crate::channel::Channel;
use crate::codec::{Arch, Codec, Conditioning, LayerConfig};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Names accepted by [`GradcheckOptions::op`].
pub const CHECKS: &[&str] = &[
    "conv2d",
    "conv_transpose2d",
    "dense",
    "add_bias",
    "prelu",
    "add",
    "scale",
    "sum",
    "mse",
    "append_channels",
    "reshape",
    "truncate",
    "zero_extend",
    "power_normalize",
    "complex_affine",
    "select_rows",
    "pipeline",
];

#[derive(Clone, Debug)]
pub struct GradcheckOptions {
    /// Restrict the suite to one entry of [`CHECKS`].
    pub op: Option<String>,
    /// Random shapes per operation.
    pub shapes: usize,
    pub seed: u64,
    pub tolerance: f64,
    /// Coordinates sampled per input tensor.
    pub samples: usize,
    /// Corrupts the backward rule of one operation kind. Used to confirm
    /// the suite can fail.
    pub fault: Option<OpKind>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            op: None,
            shapes: 3,
            seed: 0,
            tolerance: 1e-4,
            samples: 24,
            fault: None,
        }
    }
}

/// Outcome of one (operation, shape) case.
#[derive(Clone, Debug, Serialize)]
pub struct CaseReport {
    pub op: String,
    pub case: usize,
    pub shapes: Vec<Vec<usize>>,
    pub checked: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

/// Relative error with a small absolute floor so that gradients that are
/// zero on both sides count as agreement.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

type Build = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>;

struct OpCase {
    inputs: Vec<Tensor>,
    build: Build,
    step: f64,
}

/// Runs the suite. Unknown operation names are a usage error.
pub fn run_gradcheck(opts: &GradcheckOptions) -> Result<Vec<CaseReport>> {
    if let Some(op) = &opts.op {
        if !CHECKS.contains(&op.as_str()) {
            return Err(Error::usage(format!("unknown gradcheck op `{op}`; known: {}", CHECKS.join(", "))));
        }
    }
    if opts.shapes == 0 || opts.samples == 0 {
        return Err(Error::usage("gradcheck needs at least one shape and one sample"));
    }
    let mut reports = Vec::new();
    for (idx, &name) in CHECKS.iter().enumerate() {
        if opts.op.as_deref().is_some_and(|o| o != name) {
            continue;
        }
        for case in 0..opts.shapes {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ ((idx as u64) << 32) ^ case as u64);
            let report = if name == "pipeline" {
                check_pipeline(case, &mut rng, opts)?
            } else {
                let c = op_case(name, &mut rng)?;
                check_case(name, case, &c, &mut rng, opts)?
            };
            reports.push(report);
        }
    }
    Ok(reports)
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Objective sum(y * probe), expressed with tape primitives as
/// N/4 (mse(y, -p) - mse(y, p)).
fn probe_objective(tape: &mut Tape, y: Var) -> Result<Var> {
    let shape = tape.shape(y).to_vec();
    let n = shape.iter().product::<usize>() as f64;
    let probe = Tensor::from_fn(&shape, |i| ((i * 7919 + 13) % 17) as f64 / 17.0 - 0.5);
    let p = tape.input(probe);
    let neg = tape.scale(p, -1.0);
    let a = tape.mse(y, neg)?;
    let b = tape.mse(y, p)?;
    let b = tape.scale(b, -1.0);
    let d = tape.add(a, b)?;
    Ok(tape.scale(d, n / 4.0))
}

fn op_case(name: &str, rng: &mut ChaCha8Rng) -> Result<OpCase> {
    let b = rng.random_range(1..=3);
    let c = rng.random_range(1..=3);
    let s = rng.random_range(3..=6);
    let step = 1e-5;
    let case = |inputs, build: Build| Ok(OpCase { inputs, build, step });
    match name {
        "conv2d" => {
            let f = rng.random_range(1..=3);
            let k = rng.random_range(1..=3);
            let stride = rng.random_range(1..=2);
            let pad = rng.random_range(0..=1);
            let x = random(&[b, c, s, s], rng);
            let w = random(&[f, c, k, k], rng);
            case(vec![x, w], Box::new(move |t, v| t.conv2d(v[0], v[1], stride, pad)))
        }
        "conv_transpose2d" => {
            let f = rng.random_range(1..=3);
            let k = rng.random_range(2..=4);
            let stride = rng.random_range(1..=2);
            let pad = rng.random_range(0..=1);
            let x = random(&[b, c, s, s], rng);
            let w = random(&[c, f, k, k], rng);
            case(vec![x, w], Box::new(move |t, v| t.conv_transpose2d(v[0], v[1], stride, pad)))
        }
        "dense" => {
            let (i, o) = (rng.random_range(1..=5), rng.random_range(1..=5));
            let inputs = vec![random(&[b, i], rng), random(&[i, o], rng), random(&[o], rng)];
            case(inputs, Box::new(|t, v| t.dense(v[0], v[1], v[2])))
        }
        "add_bias" => {
            let inputs = vec![random(&[b, c, s, s], rng), random(&[c], rng)];
            case(inputs, Box::new(|t, v| t.add_bias(v[0], v[1])))
        }
        "prelu" => {
            // Keep inputs away from the kink at zero.
            let x = Tensor::from_fn(&[b, c, s], |_| {
                let m = rng.random_range(0.05..1.0);
                if rng.random_bool(0.5) {
                    m
                } else {
                    -m
                }
            });
            let slope = Tensor::scalar(rng.random_range(0.0..1.0));
            case(vec![x, slope], Box::new(|t, v| t.prelu(v[0], v[1])))
        }
        "add" => {
            let inputs = vec![random(&[b, c, s], rng), random(&[b, c, s], rng)];
            case(inputs, Box::new(|t, v| t.add(v[0], v[1])))
        }
        "scale" => {
            let alpha = rng.random_range(-2.0..2.0);
            case(vec![random(&[b, c, s], rng)], Box::new(move |t, v| Ok(t.scale(v[0], alpha))))
        }
        "sum" => case(vec![random(&[b, c, s], rng)], Box::new(|t, v| Ok(t.sum(v[0])))),
        "mse" => {
            let inputs = vec![random(&[b, c, s], rng), random(&[b, c, s], rng)];
            case(inputs, Box::new(|t, v| t.mse(v[0], v[1])))
        }
        "append_channels" => {
            let planes: Vec<f64> = (0..rng.random_range(1..=2)).map(|_| rng.random_range(0.0..1.0)).collect();
            case(
                vec![random(&[b, c, s, s], rng)],
                Box::new(move |t, v| t.append_channels(v[0], &planes)),
            )
        }
        "reshape" => case(
            vec![random(&[b, c, s, s], rng)],
            Box::new(move |t, v| t.reshape(v[0], &[b, c * s * s])),
        ),
        "truncate" => {
            let m = 2 * rng.random_range(2..=6);
            let keep = rng.random_range(1..m);
            case(vec![random(&[b, m], rng)], Box::new(move |t, v| t.truncate(v[0], keep)))
        }
        "zero_extend" => {
            let m = rng.random_range(1..=6);
            let total = m + rng.random_range(1..=4);
            case(vec![random(&[b, m], rng)], Box::new(move |t, v| t.zero_extend(v[0], total)))
        }
        "power_normalize" => {
            let k = rng.random_range(1..=6);
            let p_max = rng.random_range(0.5..2.0);
            case(
                vec![random(&[b, 2 * k], rng)],
                Box::new(move |t, v| t.power_normalize(v[0], p_max)),
            )
        }
        "complex_affine" => {
            let k = rng.random_range(1..=6);
            let gains: Vec<(f64, f64)> = (0..b).map(|_| (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0))).collect();
            let offset = random(&[b, 2 * k], rng);
            case(
                vec![random(&[b, 2 * k], rng)],
                Box::new(move |t, v| t.complex_affine(v[0], &gains, Some(&offset))),
            )
        }
        "select_rows" => {
            let rows = rng.random_range(2..=5);
            let picks: Vec<usize> = (0..rng.random_range(1..=6)).map(|_| rng.random_range(0..rows)).collect();
            case(
                vec![random(&[rows, c, s], rng)],
                Box::new(move |t, v| t.select_rows(v[0], &picks)),
            )
        }
        other => Err(Error::usage(format!("no operation case for `{other}`"))),
    }
}

fn check_case(name: &str, case: usize, c: &OpCase, rng: &mut ChaCha8Rng, opts: &GradcheckOptions) -> Result<CaseReport> {
    let eval = |vals: &[Tensor], grads: bool| -> Result<(f64, Vec<Tensor>)> {
        let mut t = Tape::new();
        if grads {
            if let Some(kind) = opts.fault {
                t.inject_gradient_fault(kind);
            }
        }
        let vars: Vec<Var> = vals.iter().map(|v| t.input(v.clone())).collect();
        let y = (c.build)(&mut t, &vars)?;
        let obj = probe_objective(&mut t, y)?;
        let value = t.value(obj).item();
        if !grads {
            return Ok((value, Vec::new()));
        }
        let g = t.gradients(obj)?;
        let grads = vars
            .iter()
            .map(|&v| g.wrt(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape(v))))
            .collect();
        Ok((value, grads))
    };
    let (_, analytic) = eval(&c.inputs, true)?;
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (which, input) in c.inputs.iter().enumerate() {
        for i in pick(input.len(), opts.samples, rng) {
            let mut plus = c.inputs.clone();
            plus[which].data_mut()[i] += c.step;
            let mut minus = c.inputs.clone();
            minus[which].data_mut()[i] -= c.step;
            let fd = (eval(&plus, false)?.0 - eval(&minus, false)?.0) / (2.0 * c.step);
            worst = worst.max(relative_error(analytic[which].data()[i], fd));
            checked += 1;
        }
    }
    Ok(CaseReport {
        op: name.to_string(),
        case,
        shapes: c.inputs.iter().map(|t| t.shape().to_vec()).collect(),
        checked,
        max_rel_error: worst,
        passed: worst <= opts.tolerance,
    })
}

/// All coordinates when the tensor is small, otherwise a random sample.
fn pick(len: usize, samples: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if len <= samples {
        (0..len).collect()
    } else {
        rand::seq::index::sample(rng, len, samples).into_vec()
    }
}

/// End-to-end check on a small codec at a random layer configuration.
/// The channel noise is frozen by reseeding its generator for every
/// evaluation.
fn check_pipeline(case: usize, rng: &mut ChaCha8Rng, opts: &GradcheckOptions) -> Result<CaseReport> {
    let layers = rng.random_range(4..=6);
    let arch = Arch {
        layers,
        channels: rng.random_range(1..=3),
        height: 8,
        width: 8,
        width1: rng.random_range(2..=4),
        width2: rng.random_range(2..=4),
        cr_max: 0.5,
        snr_range: [0.0, 20.0],
    };
    let mut codec = Codec::new(arch.clone(), rng.random())?;
    // Move PReLU slopes and biases off their initial values so every
    // parameter kind carries a generic gradient.
    for id in codec.params().ids() {
        let jitter = Tensor::from_fn(codec.params().value(id).shape(), |_| rng.random_range(-0.1..0.1));
        let v = codec.params_mut().value_mut(id);
        for (a, b) in v.data_mut().iter_mut().zip(jitter.data()) {
            *a += b;
        }
    }
    let n = rng.random_range(2..layers);
    let cfg = LayerConfig::from_depth(n, layers)?;
    let cond = Conditioning::new(rng.random_range(0.0..20.0), rng.random_range(0.1..0.5))?;
    let batch = 2;
    let x = Tensor::from_fn(&[batch, arch.channels, 8, 8], |_| rng.random_range(0.0..1.0));
    let noise_seed: u64 = rng.random();
    let step = 1e-4;

    let loss = |codec: &Codec, grads: bool| -> Result<(f64, Tape, Var)> {
        let mut tape = Tape::new();
        if grads {
            if let Some(kind) = opts.fault {
                tape.inject_gradient_fault(kind);
            }
        }
        let mut noise = ChaCha8Rng::seed_from_u64(noise_seed);
        let xv = tape.input(x.clone());
        let y = codec.transmit_on(&mut tape, xv, &cond, &cfg, &Channel::awgn(), &mut noise)?;
        let l = tape.mse(y, xv)?;
        Ok((tape.value(l).item(), tape, l))
    };

    let (_, tape, l) = loss(&codec, true)?;
    let mut store = codec.params().clone();
    store.zero_grad();
    tape.backward(l, &mut store)?;

    let active: Vec<_> = cfg
        .active_layers()
        .flat_map(|i| codec.encoder_layer_params(i).into_iter().chain(codec.decoder_layer_params(i)))
        .collect();
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut shapes = Vec::new();
    for id in active {
        let len = codec.params().value(id).len();
        shapes.push(codec.params().value(id).shape().to_vec());
        for i in pick(len, opts.samples.div_ceil(4), rng) {
            let orig = codec.params().value(id).data()[i];
            codec.params_mut().value_mut(id).data_mut()[i] = orig + step;
            let up = loss(&codec, false)?.0;
            codec.params_mut().value_mut(id).data_mut()[i] = orig - step;
            let down = loss(&codec, false)?.0;
            codec.params_mut().value_mut(id).data_mut()[i] = orig;
            let fd = (up - down) / (2.0 * step);
            worst = worst.max(relative_error(store.grad(id).data()[i], fd));
            checked += 1;
        }
    }
    Ok(CaseReport {
        op: "pipeline".into(),
        case,
        shapes,
        checked,
        max_rel_error: worst,
        passed: worst <= opts.tolerance,
    })
}
