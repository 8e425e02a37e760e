//! Procedural RGB images: a smooth color gradient, oriented sinusoidal
//! gratings and filled convex polygons.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

struct Polygon {
    center: (f64, f64),
    vertices: Vec<(f64, f64)>,
    color: [f64; 3],
    alpha: f64,
}

impl Polygon {
    fn random(size: f64, rng: &mut ChaCha8Rng) -> Self {
        let cx = rng.random_range(0.0..size);
        let cy = rng.random_range(0.0..size);
        let r = rng.random_range(0.1..0.35) * size;
        let sides = rng.random_range(3..=6);
        let mut angles: Vec<f64> = (0..sides).map(|_| rng.random_range(0.0..TAU)).collect();
        angles.sort_by(f64::total_cmp);
        let vertices = angles
            .into_iter()
            .map(|a| {
                let rr = r * rng.random_range(0.6..1.0);
                (cx + rr * a.cos(), cy + rr * a.sin())
            })
            .collect();
        Polygon {
            center: (cx, cy),
            vertices,
            color: [rng.random(), rng.random(), rng.random()],
            alpha: rng.random_range(0.6..1.0),
        }
    }

    /// Vertices are sorted by angle around `center`, so the polygon is
    /// star-shaped about it and is the union of the fan triangles.
    fn contains(&self, x: f64, y: f64) -> bool {
        let n = self.vertices.len();
        (0..n).any(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            in_triangle((x, y), self.center, a, b)
        })
    }
}

fn in_triangle(p: (f64, f64), a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> bool {
    let cross = |o: (f64, f64), u: (f64, f64), v: (f64, f64)| (u.0 - o.0) * (v.1 - o.1) - (u.1 - o.1) * (v.0 - o.0);
    let d1 = cross(a, b, p);
    let d2 = cross(b, c, p);
    let d3 = cross(c, a, p);
    let neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
    let pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
    !(neg && pos)
}

struct Grating {
    kx: f64,
    ky: f64,
    phase: f64,
    weights: [f64; 3],
}

/// One image [3, size, size] drawn from `rng`.
pub fn synth_image(size: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let s = size as f64;
    let c0: [f64; 3] = [rng.random(), rng.random(), rng.random()];
    let c1: [f64; 3] = [rng.random(), rng.random(), rng.random()];
    let theta = rng.random_range(0.0..TAU);
    let (dx, dy) = (theta.cos(), theta.sin());
    let gratings: Vec<Grating> = (0..rng.random_range(1..=2))
        .map(|_| {
            let cycles = rng.random_range(1.5..6.0);
            let angle = rng.random_range(0.0..TAU);
            let amp = rng.random_range(0.1..0.3);
            Grating {
                kx: TAU * cycles / s * angle.cos(),
                ky: TAU * cycles / s * angle.sin(),
                phase: rng.random_range(0.0..TAU),
                weights: [
                    amp * rng.random_range(-1.0..1.0),
                    amp * rng.random_range(-1.0..1.0),
                    amp * rng.random_range(-1.0..1.0),
                ],
            }
        })
        .collect();
    let polygons: Vec<Polygon> = (0..rng.random_range(1..=3)).map(|_| Polygon::random(s, rng)).collect();

    let mut img = Tensor::zeros(&[3, size, size]);
    let plane = size * size;
    let data = img.data_mut();
    for y in 0..size {
        for x in 0..size {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            // Projection onto the gradient direction, rescaled to [0, 1].
            let t = ((px - s / 2.0) * dx + (py - s / 2.0) * dy) / (s * std::f64::consts::SQRT_2) + 0.5;
            let mut rgb: [f64; 3] = std::array::from_fn(|ch| c0[ch] + (c1[ch] - c0[ch]) * t);
            for g in &gratings {
                let wave = (g.kx * px + g.ky * py + g.phase).sin();
                for (v, w) in rgb.iter_mut().zip(g.weights) {
                    *v += w * wave;
                }
            }
            for p in &polygons {
                if p.contains(px, py) {
                    for (v, c) in rgb.iter_mut().zip(p.color) {
                        *v = (1.0 - p.alpha) * *v + p.alpha * c;
                    }
                }
            }
            for ch in 0..3 {
                data[ch * plane + y * size + x] = rgb[ch].clamp(0.0, 1.0);
            }
        }
    }
    img
}

/// Generator for image `index` of the corpus seeded by `seed`.
pub(crate) fn image_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}
