//! Image sets: Netpbm ingestion, patch extraction, a seeded synthetic
//! corpus and deterministic shuffled mini-batches.

pub mod pnm;
mod synth;

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use synth::synth_image;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    Files(Vec<PathBuf>),
    Synthetic { seed: u64 },
    Patches { size: usize, stride: usize, source: Box<Provenance> },
}

/// Images [C, H, W] with values in [0, 1], all with the same channel count.
#[derive(Clone, Debug)]
pub struct ImageSet {
    pub images: Vec<Tensor>,
    pub split: Split,
    pub provenance: Provenance,
}

impl ImageSet {
    /// Checks the shared-channel and range invariants.
    pub fn new(images: Vec<Tensor>, split: Split, provenance: Provenance) -> Result<Self> {
        if let Some(first) = images.first() {
            let c = first.shape()[0];
            for (i, img) in images.iter().enumerate() {
                if img.ndim() != 3 || img.shape()[0] != c {
                    return Err(Error::dim(format!("image {i} has shape {:?}, expected [{c}, H, W]", img.shape())));
                }
                if img.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::usage(format!("image {i} has values outside [0, 1]")));
                }
            }
        }
        Ok(ImageSet {
            images,
            split,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    /// Images `range` stacked into one [B, C, H, W] tensor.
    pub fn stack(&self, range: std::ops::Range<usize>) -> Result<Tensor> {
        let refs: Vec<&Tensor> = self.images[range].iter().collect();
        Tensor::stack(&refs)
    }
}

/// Loads every file in `dir` whose name matches the glob `pattern`, in
/// lexicographic order of file names.
pub fn load_image_dir(dir: &Path, pattern: &str) -> Result<ImageSet> {
    let pat = glob::Pattern::new(pattern).map_err(|e| Error::usage(format!("bad pattern `{pattern}`: {e}")))?;
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().map(|t| t.is_file()).unwrap_or(false))
        .filter(|e| pat.matches(&e.file_name().to_string_lossy()))
        .map(|e| e.path())
        .collect();
    if paths.is_empty() {
        return Err(Error::usage(format!("no files match `{pattern}` in {}", dir.display())));
    }
    paths.sort();
    let mut images = Vec::with_capacity(paths.len());
    let mut channels = None;
    for p in &paths {
        let img = pnm::read(p)?;
        if *channels.get_or_insert(img.channels) != img.channels {
            return Err(Error::Parse {
                path: p.clone(),
                msg: format!("{} channels, earlier files have {}", img.channels, channels.unwrap_or(0)),
            });
        }
        images.push(img.to_tensor());
    }
    ImageSet::new(images, Split::Train, Provenance::Files(paths))
}

/// Number of aligned crops per axis.
fn crops(len: usize, size: usize, stride: usize) -> usize {
    (len - size) / stride + 1
}

/// All size x size crops at `stride`, image by image, each in row-major
/// order of crop origins.
pub fn extract_patches(set: &ImageSet, size: usize, stride: usize) -> Result<ImageSet> {
    if size == 0 || stride == 0 {
        return Err(Error::usage("patch size and stride must be positive"));
    }
    let mut out = Vec::new();
    for (i, img) in set.images.iter().enumerate() {
        let [c, h, w] = img.shape() else {
            return Err(Error::dim("images must be [C, H, W]"));
        };
        let (c, h, w) = (*c, *h, *w);
        if size > h || size > w {
            return Err(Error::usage(format!("patch size {size} exceeds image {i} of {h}x{w}")));
        }
        for py in 0..crops(h, size, stride) {
            for px in 0..crops(w, size, stride) {
                let (oy, ox) = (py * stride, px * stride);
                out.push(Tensor::from_fn(&[c, size, size], |j| {
                    let (ch, y, x) = (j / (size * size), (j / size) % size, j % size);
                    img.data()[(ch * h + oy + y) * w + ox + x]
                }));
            }
        }
    }
    Ok(ImageSet {
        images: out,
        split: set.split,
        provenance: Provenance::Patches {
            size,
            stride,
            source: Box::new(set.provenance.clone()),
        },
    })
}

/// `count` RGB images of `size` x `size`. Image `i` depends only on
/// (`seed`, `i`), so prefixes of larger corpora agree.
pub fn synth_dataset(count: usize, size: usize, seed: u64) -> Result<ImageSet> {
    if count == 0 {
        return Err(Error::usage("synthetic corpus needs at least one image"));
    }
    if size == 0 {
        return Err(Error::usage("image size must be positive"));
    }
    let images = (0..count)
        .map(|i| synth_image(size, &mut synth::image_rng(seed, i)))
        .collect();
    Ok(ImageSet {
        images,
        split: Split::Train,
        provenance: Provenance::Synthetic { seed },
    })
}

/// Shuffled order of `len` items for one epoch.
pub fn epoch_permutation(len: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut rng);
    order
}

/// Mini-batches of one epoch, in a permutation fixed by (`seed`, `epoch`).
/// A final partial batch is dropped.
pub struct Batches<'a> {
    set: &'a ImageSet,
    order: Vec<usize>,
    batch: usize,
    next: usize,
}

impl Batches<'_> {
    pub fn num_batches(&self) -> usize {
        self.order.len() / self.batch
    }
}

impl Iterator for Batches<'_> {
    type Item = Tensor;

    fn next(&mut self) -> Option<Tensor> {
        let end = self.next + self.batch;
        if end > self.order.len() {
            return None;
        }
        let picked: Vec<&Tensor> = self.order[self.next..end].iter().map(|&i| &self.set.images[i]).collect();
        self.next = end;
        Some(Tensor::stack(&picked).expect("images in a set share a shape"))
    }
}

pub fn batch_iter(set: &ImageSet, batch_size: usize, seed: u64, epoch: usize) -> Result<Batches<'_>> {
    if batch_size == 0 || batch_size > set.len() {
        return Err(Error::usage(format!(
            "batch size {batch_size} must be between 1 and the set size {}",
            set.len()
        )));
    }
    Ok(Batches {
        set,
        order: epoch_permutation(set.len(), seed, epoch),
        batch: batch_size,
        next: 0,
    })
}

/// Writes `set` as numbered PPM/PGM files into `dir`.
pub fn write_image_dir(set: &ImageSet, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let digits = set.len().to_string().len().max(5);
    set.images
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let img = pnm::Pnm::from_tensor(img)?;
            let ext = if img.channels == 3 { "ppm" } else { "pgm" };
            let path = dir.join(format!("img_{i:0digits$}.{ext}"));
            img.write(&path)?;
            Ok(path)
        })
        .collect()
}
