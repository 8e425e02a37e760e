//! Value parsers for command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ddjscc_core::dataset::{load_image_dir, synth_dataset, Split};
use ddjscc_core::ImageSet;
use serde::{Deserialize, Serialize};

/// A decimal number or a fraction such as `1/12`.
pub fn parse_real(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((num, den)) => {
            let num: f64 = num.trim().parse().map_err(|_| format!("bad numerator in `{s}`"))?;
            let den: f64 = den.trim().parse().map_err(|_| format!("bad denominator in `{s}`"))?;
            if den == 0.0 {
                return Err(format!("zero denominator in `{s}`"));
            }
            num / den
        }
        None => s.parse().map_err(|_| format!("`{s}` is not a number"))?,
    };
    if !v.is_finite() {
        return Err(format!("`{s}` is not finite"));
    }
    Ok(v)
}

/// `LO:HI`, each side a decimal or a fraction.
pub fn parse_range(s: &str) -> Result<[f64; 2], String> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| format!("expected LO:HI, got `{s}`"))?;
    Ok([parse_real(lo)?, parse_real(hi)?])
}

/// Comma-separated reals. A `...` item continues the step of the two items
/// before it up to the item after it, so `-6,-3,0,...,27` covers every
/// third dB.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid(pub Vec<f64>);

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let items: Vec<&str> = s.split(',').map(str::trim).collect();
        let mut out: Vec<f64> = Vec::new();
        let mut i = 0;
        while i < items.len() {
            if items[i] != "..." {
                out.push(parse_real(items[i])?);
                i += 1;
                continue;
            }
            let (Some(&end), [.., a, b]) = (items.get(i + 1), out.as_slice()) else {
                return Err(format!("`...` in `{s}` needs two items before it and one after"));
            };
            let (start, step) = (*b, b - a);
            let end = parse_real(end)?;
            if step == 0.0 || (end - start) / step <= 0.0 {
                return Err(format!("`...` in `{s}` does not step towards {end}"));
            }
            let count = ((end - start) / step).round();
            if (start + count * step - end).abs() > 1e-9 * end.abs().max(1.0) {
                return Err(format!("{end} is not on the grid through {a} and {b}"));
            }
            // Multiplying out avoids accumulated rounding.
            out.extend((1..=count as usize).map(|k| start + k as f64 * step));
            i += 2;
        }
        if out.is_empty() {
            return Err("empty list".into());
        }
        Ok(Grid(out))
    }
}

/// Comma-separated non-negative integers.
#[derive(Clone, Debug, PartialEq)]
pub struct Depths(pub Vec<usize>);

impl FromStr for Depths {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|t| t.trim().parse().map_err(|_| format!("`{t}` is not a depth")))
            .collect::<Result<Vec<_>, _>>()
            .map(Depths)
    }
}

/// Where images come from: `synth:COUNT:SIZE:SEED` for the generated
/// corpus, anything else is a directory of PPM/PGM files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DataSource {
    Synthetic { count: usize, size: usize, seed: u64 },
    Dir(PathBuf),
}

impl DataSource {
    pub fn synthetic(count: usize, size: usize, seed: u64) -> Self {
        DataSource::Synthetic { count, size, seed }
    }

    pub fn load(&self, split: Split) -> ddjscc_core::Result<ImageSet> {
        let set = match self {
            DataSource::Synthetic { count, size, seed } => synth_dataset(*count, *size, *seed)?,
            DataSource::Dir(dir) => load_image_dir(dir, "*.p[gp]m")?,
        };
        Ok(set.with_split(split))
    }

    pub fn dir(&self) -> Option<&Path> {
        match self {
            DataSource::Dir(d) => Some(d),
            DataSource::Synthetic { .. } => None,
        }
    }
}

impl FromStr for DataSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let Some(rest) = s.strip_prefix("synth:") else {
            if s.is_empty() {
                return Err("empty data path".into());
            }
            return Ok(DataSource::Dir(PathBuf::from(s)));
        };
        let parts: Vec<&str> = rest.split(':').collect();
        let [count, size, seed] = parts.as_slice() else {
            return Err(format!("expected synth:COUNT:SIZE:SEED, got `{s}`"));
        };
        let field = |v: &str, what: &str| v.parse::<u64>().map_err(|_| format!("bad {what} `{v}` in `{s}`"));
        Ok(DataSource::Synthetic {
            count: field(count, "count")? as usize,
            size: field(size, "size")? as usize,
            seed: field(seed, "seed")?,
        })
    }
}

impl TryFrom<String> for DataSource {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<DataSource> for String {
    fn from(d: DataSource) -> String {
        d.to_string()
    }
}

impl fmt::Display for DataSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataSource::Synthetic { count, size, seed } => write!(f, "synth:{count}:{size}:{seed}"),
            DataSource::Dir(d) => write!(f, "{}", d.display()),
        }
    }
}
