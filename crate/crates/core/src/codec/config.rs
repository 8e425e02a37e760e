//! Layer-activation configurations and their hierarchical constraints.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which of the L layers execute, index 0 being layer 1.
///
/// Valid configurations keep layers 1, 2 and L active and activate interior
/// layers as a prefix: layer i (3 <= i <= L-1) is active only if layer i-1
/// is. Valid configurations are therefore fully described by the depth `n`,
/// the highest active layer below L.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerConfig {
    bits: Vec<bool>,
}

/// Smallest layer count for which the constraints are meaningful.
pub const MIN_LAYERS: usize = 4;

impl LayerConfig {
    /// Checks the hierarchical constraints on a raw 0/1 vector meant for an
    /// L-layer codec.
    pub fn validate(bits: &[u8], layers: usize) -> Result<bool> {
        if layers < MIN_LAYERS {
            return Err(Error::dim(format!("need at least {MIN_LAYERS} layers, got {layers}")));
        }
        if bits.len() != layers {
            return Err(Error::dim(format!(
                "configuration has {} entries for a {layers}-layer codec",
                bits.len()
            )));
        }
        if bits.iter().any(|&b| b > 1) {
            return Ok(false);
        }
        let fixed = bits[0] == 1 && bits[1] == 1 && bits[layers - 1] == 1;
        let prefix = (2..layers - 1).all(|i| bits[i] <= bits[i - 1]);
        Ok(fixed && prefix)
    }

    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        if !Self::validate(bits, bits.len())? {
            return Err(Error::usage(format!("invalid layer configuration {bits:?}")));
        }
        Ok(LayerConfig {
            bits: bits.iter().map(|&b| b == 1).collect(),
        })
    }

    /// Layers 1..=n and layer L active, everything else skipped.
    pub fn from_depth(n: usize, layers: usize) -> Result<Self> {
        if layers < MIN_LAYERS {
            return Err(Error::usage(format!("need at least {MIN_LAYERS} layers, got {layers}")));
        }
        if !(2..layers).contains(&n) {
            return Err(Error::usage(format!(
                "depth {n} outside 2..={} for {layers} layers",
                layers - 1
            )));
        }
        Ok(LayerConfig {
            bits: (1..=layers).map(|i| i <= n || i == layers).collect(),
        })
    }

    /// All valid configurations for L layers, shallowest first.
    pub fn enumerate(layers: usize) -> Result<Vec<Self>> {
        if layers < MIN_LAYERS {
            return Err(Error::usage(format!("need at least {MIN_LAYERS} layers, got {layers}")));
        }
        (2..layers).map(|n| Self::from_depth(n, layers)).collect()
    }

    /// Number of unconstrained interior patterns, 2^(L-3), that the
    /// hierarchical rule reduces to L-2.
    pub fn unconstrained_count(layers: usize) -> u64 {
        1u64 << (layers.saturating_sub(3))
    }

    pub fn layers(&self) -> usize {
        self.bits.len()
    }

    /// Whether 1-based layer `i` runs.
    pub fn is_active(&self, i: usize) -> bool {
        self.bits[i - 1]
    }

    /// 1-based indices of active layers in execution order.
    pub fn active_layers(&self) -> impl Iterator<Item = usize> + '_ {
        (1..=self.bits.len()).filter(|&i| self.bits[i - 1])
    }

    /// The depth n: highest active layer below L.
    pub fn depth(&self) -> usize {
        (1..self.bits.len()).rev().find(|&i| self.bits[i - 1]).unwrap_or(1)
    }

    pub fn bits(&self) -> Vec<u8> {
        self.bits.iter().map(|&b| b as u8).collect()
    }

    /// Label listing active layers, e.g. `Set128`.
    pub fn name(&self) -> String {
        let sep = if self.bits.len() > 9 { "_" } else { "" };
        let idx: Vec<String> = self.active_layers().map(|i| i.to_string()).collect();
        format!("Set{}", idx.join(sep))
    }
}

impl fmt::Display for LayerConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}
