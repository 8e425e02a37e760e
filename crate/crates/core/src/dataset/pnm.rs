//! Binary Netpbm images: PPM (P6, RGB) and PGM (P5, grayscale), 8 bits per
//! sample.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Decoded 8-bit image, channel-interleaved as stored in the file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pnm {
    pub channels: usize,
    pub width: usize,
    pub height: usize,
    pub samples: Vec<u8>,
}

impl Pnm {
    /// Channel-first tensor [C, H, W] with values v / 255.
    pub fn to_tensor(&self) -> Tensor {
        let (c, h, w) = (self.channels, self.height, self.width);
        Tensor::from_fn(&[c, h, w], |i| {
            let (ch, pix) = (i / (h * w), i % (h * w));
            f64::from(self.samples[pix * c + ch]) / 255.0
        })
    }

    /// Quantizes a [C, H, W] tensor in [0, 1] to 8-bit samples.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let s = t.shape();
        if s.len() != 3 || !(s[0] == 1 || s[0] == 3) {
            return Err(Error::dim(format!("expected a [1|3, H, W] image, got {s:?}")));
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        let mut samples = vec![0u8; c * h * w];
        for ch in 0..c {
            for pix in 0..h * w {
                let v = t.data()[ch * h * w + pix].clamp(0.0, 1.0);
                samples[pix * c + ch] = (v * 255.0).round() as u8;
            }
        }
        Ok(Pnm {
            channels: c,
            width: w,
            height: h,
            samples,
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let magic = if self.channels == 3 { "P6" } else { "P5" };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.samples);
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(&self.encode())?;
        f.flush()?;
        Ok(())
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> std::result::Result<usize, String> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(format!("missing {what}"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|e| format!("bad {what}: {e}"))
    }
}

/// Parses a P5 or P6 image from memory.
pub fn decode(bytes: &[u8]) -> std::result::Result<Pnm, String> {
    let channels = match bytes.get(..2) {
        Some(b"P6") => 3,
        Some(b"P5") => 1,
        _ => return Err("not a binary PPM (P6) or PGM (P5) file".into()),
    };
    let mut hdr = Header { bytes, pos: 2 };
    let width = hdr.number("width")?;
    let height = hdr.number("height")?;
    let maxval = hdr.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(format!("empty image {width}x{height}"));
    }
    if maxval != 255 {
        return Err(format!("maxval {maxval} unsupported, only 255"));
    }
    match bytes.get(hdr.pos) {
        Some(b) if b.is_ascii_whitespace() => hdr.pos += 1,
        _ => return Err("header must end with a single whitespace byte".into()),
    }
    let need = width * height * channels;
    let raster = &bytes[hdr.pos..];
    if raster.len() < need {
        return Err(format!("raster truncated: {} of {need} bytes", raster.len()));
    }
    Ok(Pnm {
        channels,
        width,
        height,
        samples: raster[..need].to_vec(),
    })
}

/// Reads and parses one file. Parse failures name the file.
pub fn read(path: &Path) -> Result<Pnm> {
    let bytes = std::fs::read(path)?;
    decode(&bytes).map_err(|msg| Error::Parse {
        path: path.to_path_buf(),
        msg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_with_comments() {
        let mut b = b"P5\n# made by hand\n2 # width\n1\n255\n".to_vec();
        b.extend([0, 128]);
        let img = decode(&b).unwrap();
        assert_eq!((img.channels, img.width, img.height), (1, 2, 1));
        assert_eq!(img.samples, vec![0, 128]);
    }

    #[test]
    fn rejects_bad_headers() {
        assert!(decode(b"P3\n1 1\n255\n1 2 3").is_err());
        assert!(decode(b"P6\n1 1\n65535\n\0\0\0\0\0\0").is_err());
        assert!(decode(b"P6\n2 2\n255\n\0\0").is_err());
        assert!(decode(b"P6\n0 2\n255\n").is_err());
        assert!(decode(b"P5\n1 1\n255").is_err());
    }

    #[test]
    fn encode_decode_round_trip() {
        let img = Pnm {
            channels: 3,
            width: 3,
            height: 2,
            samples: (0..18).map(|i| (i * 13) as u8).collect(),
        };
        assert_eq!(decode(&img.encode()).unwrap(), img);
        let t = img.to_tensor();
        assert_eq!(Pnm::from_tensor(&t).unwrap(), img);
    }
}
