//! Raw numeric kernels on row-major slices. Shapes are validated by the
//! callers in `tape`; everything here assumes consistent sizes.

/// Geometry of one 2-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub in_ch: usize,
    pub out_ch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        (self.in_h + 2 * self.pad - self.k) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w + 2 * self.pad - self.k) / self.stride + 1
    }

    fn col_rows(&self) -> usize {
        self.in_ch * self.k * self.k
    }

    fn col_cols(&self) -> usize {
        self.out_h() * self.out_w()
    }
}

/// `c = alpha * op(a) * op(b) + beta * c` with `op(a)` of shape m×k and
/// `op(b)` of shape k×n, all row-major.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above bound every index the strides can reach.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Output positions `o` whose input index `o*stride + k - pad` lies inside
/// `0..input`, as a half-open range.
fn valid_range(out: usize, input: usize, stride: usize, k: usize, pad: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(k).div_ceil(stride);
    let hi = if input + pad > k {
        (input + pad - k).div_ceil(stride).min(out)
    } else {
        0
    };
    (lo.min(hi), hi)
}

/// Writes the im2col block of one image into `cols`, whose rows are
/// `row_stride` long, starting at column `offset`.
fn im2col(g: &ConvGeom, img: &[f64], cols: &mut [f64], row_stride: usize, offset: usize) {
    let (oh, ow) = (g.out_h(), g.out_w());
    for c in 0..g.in_ch {
        let plane = &img[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ky in 0..g.k {
            let (ylo, yhi) = valid_range(oh, g.in_h, g.stride, ky, g.pad);
            for kx in 0..g.k {
                let (xlo, xhi) = valid_range(ow, g.in_w, g.stride, kx, g.pad);
                let row = (c * g.k + ky) * g.k + kx;
                let dst = &mut cols[row * row_stride + offset..row * row_stride + offset + oh * ow];
                for oy in 0..oh {
                    let line = &mut dst[oy * ow..(oy + 1) * ow];
                    if oy < ylo || oy >= yhi || xlo >= xhi {
                        line.fill(0.0);
                        continue;
                    }
                    let iy = oy * g.stride + ky - g.pad;
                    let src = &plane[iy * g.in_w..(iy + 1) * g.in_w];
                    line[..xlo].fill(0.0);
                    line[xhi..].fill(0.0);
                    let first = xlo * g.stride + kx - g.pad;
                    if g.stride == 1 {
                        line[xlo..xhi].copy_from_slice(&src[first..first + (xhi - xlo)]);
                    } else {
                        for (j, out) in line[xlo..xhi].iter_mut().enumerate() {
                            *out = src[first + j * g.stride];
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-adds an im2col block (laid out as in [`im2col`]) into one image.
fn col2im_add(g: &ConvGeom, cols: &[f64], row_stride: usize, offset: usize, img: &mut [f64]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    for c in 0..g.in_ch {
        let plane = &mut img[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ky in 0..g.k {
            let (ylo, yhi) = valid_range(oh, g.in_h, g.stride, ky, g.pad);
            for kx in 0..g.k {
                let (xlo, xhi) = valid_range(ow, g.in_w, g.stride, kx, g.pad);
                if xlo >= xhi {
                    continue;
                }
                let row = (c * g.k + ky) * g.k + kx;
                let src = &cols[row * row_stride + offset..row * row_stride + offset + oh * ow];
                for oy in ylo..yhi {
                    let iy = oy * g.stride + ky - g.pad;
                    let line = &src[oy * ow + xlo..oy * ow + xhi];
                    let first = iy * g.in_w + xlo * g.stride + kx - g.pad;
                    if g.stride == 1 {
                        plane[first..first + line.len()]
                            .iter_mut()
                            .zip(line)
                            .for_each(|(a, b)| *a += b);
                    } else {
                        for (j, v) in line.iter().enumerate() {
                            plane[first + j * g.stride] += v;
                        }
                    }
                }
            }
        }
    }
}

/// Lays out im2col blocks of every batch item side by side:
/// [C*k*k, B*H'*W'].
fn im2col_batch(g: &ConvGeom, x: &[f64]) -> Vec<f64> {
    let (rows, ncols) = (g.col_rows(), g.col_cols());
    let in_sz = g.in_ch * g.in_h * g.in_w;
    let width = ncols * g.batch;
    let mut cols = vec![0.0; rows * width];
    for b in 0..g.batch {
        im2col(g, &x[b * in_sz..(b + 1) * in_sz], &mut cols, width, b * ncols);
    }
    cols
}

/// [F, B*P] <-> [B, F, P]
fn batch_major(src: &[f64], f: usize, p: usize, batch: usize) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    for o in 0..f {
        for b in 0..batch {
            out[(b * f + o) * p..(b * f + o + 1) * p]
                .copy_from_slice(&src[o * batch * p + b * p..o * batch * p + (b + 1) * p]);
        }
    }
    out
}

fn channel_major(src: &[f64], f: usize, p: usize, batch: usize) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    for b in 0..batch {
        for o in 0..f {
            out[o * batch * p + b * p..o * batch * p + (b + 1) * p]
                .copy_from_slice(&src[(b * f + o) * p..(b * f + o + 1) * p]);
        }
    }
    out
}

/// Cross-correlation of `x` [B,C,H,W] with `w` [F,C,k,k].
pub fn conv2d_forward(g: &ConvGeom, x: &[f64], w: &[f64]) -> Vec<f64> {
    let (rows, ncols) = (g.col_rows(), g.col_cols());
    let cols = im2col_batch(g, x);
    let width = ncols * g.batch;
    let mut out = vec![0.0; g.out_ch * width];
    gemm(g.out_ch, rows, width, w, false, &cols, false, 0.0, &mut out);
    batch_major(&out, g.out_ch, ncols, g.batch)
}

/// Adjoint of [`conv2d_forward`] in its input: maps [B,F,H',W'] back to
/// [B,C,H,W]. This is also the forward pass of a transposed convolution.
pub fn conv2d_input_adjoint(g: &ConvGeom, gy: &[f64], w: &[f64]) -> Vec<f64> {
    let (rows, ncols) = (g.col_rows(), g.col_cols());
    let in_sz = g.in_ch * g.in_h * g.in_w;
    let width = ncols * g.batch;
    let gy_cm = channel_major(gy, g.out_ch, ncols, g.batch);
    let mut cols = vec![0.0; rows * width];
    gemm(rows, g.out_ch, width, w, true, &gy_cm, false, 0.0, &mut cols);
    let mut gx = vec![0.0; g.batch * in_sz];
    for b in 0..g.batch {
        col2im_add(g, &cols, width, b * ncols, &mut gx[b * in_sz..(b + 1) * in_sz]);
    }
    gx
}

/// Gradient of `<conv2d_forward(x, w), gy>` with respect to `w`.
pub fn conv2d_kernel_grad(g: &ConvGeom, x: &[f64], gy: &[f64]) -> Vec<f64> {
    let (rows, ncols) = (g.col_rows(), g.col_cols());
    let cols = im2col_batch(g, x);
    let width = ncols * g.batch;
    let gy_cm = channel_major(gy, g.out_ch, ncols, g.batch);
    let mut gw = vec![0.0; g.out_ch * rows];
    gemm(g.out_ch, width, rows, &gy_cm, false, &cols, true, 0.0, &mut gw);
    gw
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_loops_in_all_transpositions() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
        let at: Vec<f64> = (0..m * k).map(|i| a[(i % m) * k + i / m]).collect();
        let bt: Vec<f64> = (0..k * n).map(|i| b[(i % k) * n + i / k]).collect();
        let mut expect = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    expect[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        for (aa, ta) in [(&a, false), (&at, true)] {
            for (bb, tb) in [(&b, false), (&bt, true)] {
                let mut c = vec![0.0; m * n];
                gemm(m, k, n, aa, ta, bb, tb, 0.0, &mut c);
                for (x, y) in c.iter().zip(&expect) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn valid_ranges_match_bounds_checks() {
        for out in 1..7 {
            for input in 1..9 {
                for stride in 1..4 {
                    for k in 0..5 {
                        for pad in 0..3 {
                            let (lo, hi) = valid_range(out, input, stride, k, pad);
                            for o in 0..out {
                                let i = (o * stride + k) as isize - pad as isize;
                                let inside = i >= 0 && (i as usize) < input;
                                assert_eq!(inside, o >= lo && o < hi);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn output_size_formula() {
        let g = ConvGeom {
            batch: 1,
            in_ch: 1,
            out_ch: 1,
            in_h: 32,
            in_w: 30,
            k: 4,
            stride: 2,
            pad: 1,
        };
        assert_eq!((g.out_h(), g.out_w()), (16, 15));
    }
}
