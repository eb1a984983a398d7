//! Per-sample kernels in HWC layout: 3×3 same-padded convolution via
//! im2col + GEMM, 2×2 max pooling, and their backward passes.

use rand::Rng;

use super::scalar::{rm, tr, Scalar};

/// Spatial shape of one HWC activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape3 {
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Shape3 {
    pub fn len(&self) -> usize {
        self.h * self.w * self.c
    }

    pub fn pooled(&self) -> Shape3 {
        Shape3 {
            h: self.h / 2,
            w: self.w / 2,
            c: self.c,
        }
    }
}

/// Rows are output pixels, columns `(ky, kx, ci)`.
pub fn im2col<T: Scalar>(input: &[T], s: Shape3, cols: &mut Vec<T>) {
    let k = 9 * s.c;
    cols.clear();
    cols.resize(s.h * s.w * k, T::zero());
    for y in 0..s.h {
        for x in 0..s.w {
            let row = &mut cols[(y * s.w + x) * k..(y * s.w + x + 1) * k];
            for ky in 0..3 {
                let sy = y as isize + ky as isize - 1;
                if sy < 0 || sy >= s.h as isize {
                    continue;
                }
                for kx in 0..3 {
                    let sx = x as isize + kx as isize - 1;
                    if sx < 0 || sx >= s.w as isize {
                        continue;
                    }
                    let src = (sy as usize * s.w + sx as usize) * s.c;
                    let dst = (ky * 3 + kx) * s.c;
                    row[dst..dst + s.c].copy_from_slice(&input[src..src + s.c]);
                }
            }
        }
    }
}

fn col2im_add<T: Scalar>(dcols: &[T], s: Shape3, dinput: &mut [T]) {
    let k = 9 * s.c;
    for y in 0..s.h {
        for x in 0..s.w {
            let row = &dcols[(y * s.w + x) * k..(y * s.w + x + 1) * k];
            for ky in 0..3 {
                let sy = y as isize + ky as isize - 1;
                if sy < 0 || sy >= s.h as isize {
                    continue;
                }
                for kx in 0..3 {
                    let sx = x as isize + kx as isize - 1;
                    if sx < 0 || sx >= s.w as isize {
                        continue;
                    }
                    let dst = (sy as usize * s.w + sx as usize) * s.c;
                    let src = (ky * 3 + kx) * s.c;
                    for (d, &g) in dinput[dst..dst + s.c].iter_mut().zip(&row[src..src + s.c]) {
                        *d += g;
                    }
                }
            }
        }
    }
}

/// `out = relu(conv(input, kernel) + bias)`; kernel is `[3, 3, cin, cout]`.
pub fn conv_relu_forward<T: Scalar>(input: &[T], s: Shape3, kernel: &[T], bias: &[T], out: &mut [T], cols: &mut Vec<T>) {
    let cout = bias.len();
    let pixels = s.h * s.w;
    let k = 9 * s.c;
    im2col(input, s, cols);
    for px in out.chunks_exact_mut(cout) {
        px.copy_from_slice(bias);
    }
    T::gemm(pixels, k, cout, cols, rm(k), kernel, rm(cout), T::one(), out, rm(cout));
    for v in out.iter_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Backward through ReLU and the convolution for one sample. `dout` is the
/// gradient at the ReLU output and is overwritten with the pre-activation
/// gradient. Kernel and bias gradients are accumulated.
#[allow(clippy::too_many_arguments)]
pub fn conv_relu_backward<T: Scalar>(
    input: &[T],
    s: Shape3,
    kernel: &[T],
    relu_out: &[T],
    dout: &mut [T],
    dkernel: &mut [T],
    dbias: &mut [T],
    dinput: Option<&mut [T]>,
    cols: &mut Vec<T>,
) {
    let cout = dbias.len();
    let pixels = s.h * s.w;
    let k = 9 * s.c;
    for (g, &o) in dout.iter_mut().zip(relu_out) {
        if o <= T::zero() {
            *g = T::zero();
        }
    }
    for px in dout.chunks_exact(cout) {
        for (b, &g) in dbias.iter_mut().zip(px) {
            *b += g;
        }
    }
    im2col(input, s, cols);
    // dK[k, cout] += colsᵀ · dout
    T::gemm(k, pixels, cout, cols, tr(k), dout, rm(cout), T::one(), dkernel, rm(cout));
    if let Some(dinput) = dinput {
        let mut dcols = vec![T::zero(); pixels * k];
        // dcols[px, k] = dout · Kᵀ
        T::gemm(pixels, cout, k, dout, rm(cout), kernel, tr(cout), T::zero(), &mut dcols, rm(k));
        col2im_add(&dcols, s, dinput);
    }
}

/// 2×2 stride-2 max pooling with floor division on odd sizes. Returns the
/// flat input index of each window's maximum (first in scan order on ties).
pub fn maxpool_forward<T: Scalar>(input: &[T], s: Shape3, out: &mut [T], argmax: &mut [u32]) {
    let o = s.pooled();
    for y in 0..o.h {
        for x in 0..o.w {
            for ch in 0..s.c {
                let mut best_idx = ((2 * y) * s.w + 2 * x) * s.c + ch;
                let mut best = input[best_idx];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = ((2 * y + dy) * s.w + 2 * x + dx) * s.c + ch;
                    if input[idx] > best {
                        best = input[idx];
                        best_idx = idx;
                    }
                }
                let oi = (y * o.w + x) * s.c + ch;
                out[oi] = best;
                argmax[oi] = best_idx as u32;
            }
        }
    }
}

pub fn maxpool_backward<T: Scalar>(dout: &[T], argmax: &[u32], dinput: &mut [T]) {
    dinput.iter_mut().for_each(|v| *v = T::zero());
    for (&g, &idx) in dout.iter().zip(argmax) {
        dinput[idx as usize] += g;
    }
}

/// Inverted-dropout multipliers: `1/(1−rate)` with probability `1−rate`,
/// otherwise 0.
pub fn dropout_mask<T: Scalar, R: Rng>(rng: &mut R, len: usize, rate: f64) -> Vec<T> {
    let keep = 1.0 - rate;
    let scale = T::of(1.0 / keep);
    (0..len).map(|_| if rng.gen::<f64>() < keep { scale } else { T::zero() }).collect()
}
