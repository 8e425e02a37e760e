use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ddjscc_core::autodiff::{ParamStore, Tape};
use ddjscc_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

// Shapes of the default codec at batch 16: the stride-2 stem, a stride-1
// interior layer and the up-sampling layer.
/// Name, input shape, kernel shape, stride, padding.
type Case = (&'static str, [usize; 4], [usize; 4], usize, usize);

const CASES: [Case; 3] = [
    ("stem_s2", [16, 5, 32, 32], [16, 5, 4, 4], 2, 1),
    ("interior_s1", [16, 32, 8, 8], [32, 32, 3, 3], 1, 1),
    ("down_s2", [16, 16, 16, 16], [32, 16, 4, 4], 2, 1),
];

fn conv(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut group = c.benchmark_group("conv2d");
    for (name, xs, ws, stride, pad) in CASES {
        let x = random(&xs, &mut rng);
        let w = random(&ws, &mut rng);
        group.bench_with_input(BenchmarkId::new("forward", name), &(), |b, _| {
            b.iter(|| {
                let mut t = Tape::new();
                let xv = t.input(x.clone());
                let wv = t.input(w.clone());
                t.conv2d(xv, wv, stride, pad).unwrap()
            })
        });
        let mut store = ParamStore::new();
        group.bench_with_input(BenchmarkId::new("forward_backward", name), &(), |b, _| {
            b.iter(|| {
                let mut t = Tape::new();
                let xv = t.input(x.clone());
                let wv = t.input(w.clone());
                let y = t.conv2d(xv, wv, stride, pad).unwrap();
                let s = t.sum(y);
                t.backward(s, &mut store).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, conv);
criterion_main!(benches);
