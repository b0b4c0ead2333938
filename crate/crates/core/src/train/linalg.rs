//! Row-major f32 matrix products and im2col for the training engine.
//!
//! Every output element is a sequential sum in a fixed order, so results do
//! not depend on how rows are spread across threads.

use rayon::prelude::*;

use crate::tensor::ConvGeometry;

const PAR_THRESHOLD: usize = 1 << 16;

fn rows_mut(out: &mut [f32], width: usize, work: usize, f: impl Fn(usize, &mut [f32]) + Sync) {
    if width == 0 {
        return;
    }
    if work >= PAR_THRESHOLD {
        out.par_chunks_mut(width)
            .enumerate()
            .for_each(|(i, r)| f(i, r));
    } else {
        out.chunks_mut(width).enumerate().for_each(|(i, r)| f(i, r));
    }
}

/// `a (m×k) · bᵀ` where `b` is n×k.
pub(crate) fn matmul_nt(a: &[f32], m: usize, k: usize, b: &[f32], n: usize) -> Vec<f32> {
    let mut out = vec![0.0; m * n];
    rows_mut(&mut out, n, m * n * k, |i, row| {
        let ar = &a[i * k..(i + 1) * k];
        for (j, o) in row.iter_mut().enumerate() {
            let br = &b[j * k..(j + 1) * k];
            let mut acc = 0.0f32;
            for (x, y) in ar.iter().zip(br) {
                acc += x * y;
            }
            *o = acc;
        }
    });
    out
}

/// `a (m×n) · b (n×k)`.
pub(crate) fn matmul_nn(a: &[f32], m: usize, n: usize, b: &[f32], k: usize) -> Vec<f32> {
    let mut out = vec![0.0; m * k];
    rows_mut(&mut out, k, m * n * k, |i, row| {
        for (j, &av) in a[i * n..(i + 1) * n].iter().enumerate() {
            if av != 0.0 {
                for (o, &bv) in row.iter_mut().zip(&b[j * k..(j + 1) * k]) {
                    *o += av * bv;
                }
            }
        }
    });
    out
}

/// `aᵀ · b` with `a` m×n and `b` m×k, giving n×k.
pub(crate) fn matmul_tn(a: &[f32], m: usize, n: usize, b: &[f32], k: usize) -> Vec<f32> {
    let mut out = vec![0.0; n * k];
    rows_mut(&mut out, k, m * n * k, |j, row| {
        for i in 0..m {
            let av = a[i * n + j];
            if av != 0.0 {
                for (o, &bv) in row.iter_mut().zip(&b[i * k..(i + 1) * k]) {
                    *o += av * bv;
                }
            }
        }
    });
    out
}

/// Unfolds an NCHW batch into rows indexed by (image, out_y, out_x) and
/// columns by (channel, ky, kx). Padding positions get `T::default()`.
pub(crate) fn im2col<T: Copy + Default + Send + Sync>(
    x: &[T],
    n: usize,
    g: &ConvGeometry,
) -> Vec<T> {
    let (c, h, w) = (g.in_channels, g.input_h, g.input_w);
    let (oh, ow, kh, kw) = (g.output_h(), g.output_w(), g.kernel_h, g.kernel_w);
    let k = g.window_len();
    let mut out = vec![T::default(); n * oh * ow * k];
    out.par_chunks_mut(oh * ow * k)
        .enumerate()
        .for_each(|(b, img)| {
            let xb = &x[b * c * h * w..(b + 1) * c * h * w];
            for (r, row) in img.chunks_mut(k).enumerate() {
                let (y, xo) = (r / ow, r % ow);
                let mut col = 0;
                for ci in 0..c {
                    for ky in 0..kh {
                        let iy = (y * g.stride + ky) as isize - g.padding as isize;
                        for kx in 0..kw {
                            let ix = (xo * g.stride + kx) as isize - g.padding as isize;
                            if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                                row[col] = xb[(ci * h + iy as usize) * w + ix as usize];
                            }
                            col += 1;
                        }
                    }
                }
            }
        });
    out
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the input.
pub(crate) fn col2im(cols: &[f32], n: usize, g: &ConvGeometry) -> Vec<f32> {
    let (c, h, w) = (g.in_channels, g.input_h, g.input_w);
    let (oh, ow, kh, kw) = (g.output_h(), g.output_w(), g.kernel_h, g.kernel_w);
    let k = g.window_len();
    let mut out = vec![0.0f32; n * c * h * w];
    out.par_chunks_mut(c * h * w)
        .enumerate()
        .for_each(|(b, xb)| {
            let img = &cols[b * oh * ow * k..(b + 1) * oh * ow * k];
            for (r, row) in img.chunks(k).enumerate() {
                let (y, xo) = (r / ow, r % ow);
                let mut col = 0;
                for ci in 0..c {
                    for ky in 0..kh {
                        let iy = (y * g.stride + ky) as isize - g.padding as isize;
                        for kx in 0..kw {
                            let ix = (xo * g.stride + kx) as isize - g.padding as isize;
                            if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                                xb[(ci * h + iy as usize) * w + ix as usize] += row[col];
                            }
                            col += 1;
                        }
                    }
                }
            }
        });
    out
}

/// (n, oh·ow, o) row blocks to NCHW.
pub(crate) fn rows_to_nchw(rows: &[f32], n: usize, spatial: usize, o: usize) -> Vec<f32> {
    let mut out = vec![0.0; rows.len()];
    for b in 0..n {
        for s in 0..spatial {
            for c in 0..o {
                out[(b * o + c) * spatial + s] = rows[(b * spatial + s) * o + c];
            }
        }
    }
    out
}

pub(crate) fn nchw_to_rows(x: &[f32], n: usize, spatial: usize, o: usize) -> Vec<f32> {
    let mut out = vec![0.0; x.len()];
    for b in 0..n {
        for c in 0..o {
            for s in 0..spatial {
                out[(b * spatial + s) * o + c] = x[(b * o + c) * spatial + s];
            }
        }
    }
    out
}
