//! Raw slice kernels behind the graph operations.
//!
//! Layouts are row-major; images are `channels × height × width`.

use alloc::vec;
use alloc::vec::Vec;

use crate::scalar::Scalar;

/// `a[m×k] · b[k×n]`.
pub fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    T::gemm(m, k, n, T::one(), a, k, 1, b, n, 1, T::zero(), &mut out, n, 1);
    out
}

/// `y = w[rows×cols] · x (+ bias)`.
pub fn matvec<T: Scalar>(w: &[T], x: &[T], bias: Option<&[T]>, rows: usize, cols: usize) -> Vec<T> {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    let mut out = match bias {
        Some(b) => b.to_vec(),
        None => vec![T::zero(); rows],
    };
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        let mut acc = T::zero();
        for (wv, xv) in row.iter().zip(x) {
            acc += *wv * *xv;
        }
        *o += acc;
    }
    out
}

/// Unfold 3×3 neighbourhoods (zero padding 1) into a `(c·9) × (h·w)` matrix.
pub fn im2col3x3<T: Scalar>(input: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let hw = h * w;
    let mut cols = vec![T::zero(); c * 9 * hw];
    for ch in 0..c {
        let plane = &input[ch * hw..(ch + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[((ch * 9) + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &plane[sy as usize * w..][..w];
                    let dst = &mut row[y * w..][..w];
                    match kx {
                        0 => dst[1..].copy_from_slice(&src[..w - 1]),
                        1 => dst.copy_from_slice(src),
                        _ => dst[..w - 1].copy_from_slice(&src[1..]),
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col3x3`]: scatter-add columns back onto the image.
pub fn col2im3x3<T: Scalar>(cols: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let hw = h * w;
    let mut out = vec![T::zero(); c * hw];
    for ch in 0..c {
        let plane = &mut out[ch * hw..(ch + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[((ch * 9) + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[sy as usize * w..][..w];
                    let src = &row[y * w..][..w];
                    match kx {
                        0 => dst[..w - 1].iter_mut().zip(&src[1..]).for_each(|(d, s)| *d += *s),
                        1 => dst.iter_mut().zip(src).for_each(|(d, s)| *d += *s),
                        _ => dst[1..].iter_mut().zip(&src[..w - 1]).for_each(|(d, s)| *d += *s),
                    }
                }
            }
        }
    }
    out
}

/// 3×3 cross-correlation, stride 1, zero padding 1. Returns `(output, im2col matrix)`.
pub fn conv3x3<T: Scalar>(
    input: &[T],
    kernels: &[T],
    bias: &[T],
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
) -> (Vec<T>, Vec<T>) {
    let hw = h * w;
    let cols = im2col3x3(input, c_in, h, w);
    let mut out = Vec::with_capacity(c_out * hw);
    for &b in bias {
        out.extend(core::iter::repeat(b).take(hw));
    }
    T::gemm(c_out, c_in * 9, hw, T::one(), kernels, c_in * 9, 1, &cols, hw, 1, T::one(), &mut out, hw, 1);
    (out, cols)
}

/// 2×2 max pooling. Returns `(output, flat argmax index per output cell)`.
pub fn maxpool2x2<T: Scalar>(input: &[T], c: usize, h: usize, w: usize) -> (Vec<T>, Vec<u32>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut arg = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let base = ch * h * w;
        for y in 0..oh {
            for x in 0..ow {
                let candidates = [
                    base + 2 * y * w + 2 * x,
                    base + 2 * y * w + 2 * x + 1,
                    base + (2 * y + 1) * w + 2 * x,
                    base + (2 * y + 1) * w + 2 * x + 1,
                ];
                let mut best = candidates[0];
                for &i in &candidates[1..] {
                    if input[i] > input[best] {
                        best = i;
                    }
                }
                out.push(input[best]);
                arg.push(best as u32);
            }
        }
    }
    (out, arg)
}

/// Max-subtracted softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut out: Vec<T> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: T = out.iter().copied().sum();
    let inv = T::one() / sum;
    out.iter_mut().for_each(|v| *v *= inv);
    out
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}
