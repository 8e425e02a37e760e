//! Complex channel codes and their real-valued packing.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A length-K vector of complex channel symbols, stored as interleaved
/// (re, im) pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticCode {
    interleaved: Vec<f64>,
}

impl SemanticCode {
    pub fn from_symbols(symbols: &[Complex64]) -> Self {
        SemanticCode {
            interleaved: symbols.iter().flat_map(|z| [z.re, z.im]).collect(),
        }
    }

    /// Wraps interleaved pairs; the length must be even and non-zero.
    pub fn from_interleaved(v: Vec<f64>) -> Result<Self> {
        if v.is_empty() || !v.len().is_multiple_of(2) {
            return Err(Error::dim(format!(
                "a complex code needs a non-empty even number of reals, got {}",
                v.len()
            )));
        }
        Ok(SemanticCode { interleaved: v })
    }

    /// Number of complex symbols K.
    pub fn len(&self) -> usize {
        self.interleaved.len() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.interleaved.is_empty()
    }

    pub fn symbol(&self, i: usize) -> Complex64 {
        Complex64::new(self.interleaved[2 * i], self.interleaved[2 * i + 1])
    }

    pub fn symbols(&self) -> impl Iterator<Item = Complex64> + '_ {
        self.interleaved
            .chunks_exact(2)
            .map(|p| Complex64::new(p[0], p[1]))
    }

    pub fn interleaved(&self) -> &[f64] {
        &self.interleaved
    }

    /// Sum of |z_k|^2.
    pub fn energy(&self) -> f64 {
        self.interleaved.iter().map(|v| v * v).sum()
    }

    /// Mean power per symbol, (1/K) * ||z||^2.
    pub fn mean_power(&self) -> f64 {
        self.energy() / self.len() as f64
    }
}

/// Pairs adjacent reals into complex symbols: (v[2k], v[2k+1]) -> v[2k] + j v[2k+1].
pub fn pack_complex(v: &Tensor) -> Result<SemanticCode> {
    SemanticCode::from_interleaved(v.data().to_vec())
}

/// Inverse of [`pack_complex`]; returns a 1-D tensor of 2K reals.
pub fn unpack_complex(code: &SemanticCode) -> Tensor {
    Tensor::new(vec![code.interleaved.len()], code.interleaved.clone())
        .expect("a code is never empty")
}

/// Number of complex symbols used for compression ratio `cr` on an input
/// of `n` real values: K = floor(cr * N / 2).
pub fn symbols_for(cr: f64, n: usize) -> Result<usize> {
    if !(cr > 0.0 && cr <= 1.0) {
        return Err(Error::usage(format!("compression ratio {cr} outside (0, 1]")));
    }
    let k = (cr * n as f64 / 2.0).floor() as usize;
    if k < 1 {
        return Err(Error::usage(format!(
            "compression ratio {cr} leaves no channel symbols for N = {n}"
        )));
    }
    Ok(k)
}

/// Keeps the first 2K reals of `v`, K = floor(cr * N / 2).
pub fn apply_cr_mask(v: &Tensor, cr: f64, n: usize) -> Result<Tensor> {
    let k = symbols_for(cr, n)?;
    if 2 * k > v.len() {
        return Err(Error::dim(format!(
            "compression ratio {cr} needs {} reals but only {} are available",
            2 * k,
            v.len()
        )));
    }
    Tensor::new(vec![2 * k], v.data()[..2 * k].to_vec())
}
