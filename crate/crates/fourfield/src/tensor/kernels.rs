//! Raw f64 kernels behind the graph ops: plain buffers in, plain buffers
//! out. Everything is row-major.

use crate::thread_count;
use rayon::prelude::*;

/// Number of elements a shape describes.
pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Row-major strides for a shape.
pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Right-aligned broadcast of two shapes, or `None` if incompatible.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let n = a.len().max(b.len());
    let mut out = vec![0usize; n];
    for i in 0..n {
        let da = if i < n - a.len() { 1 } else { a[i - (n - a.len())] };
        let db = if i < n - b.len() { 1 } else { b[i - (n - b.len())] };
        if da != db && da != 1 && db != 1 {
            return None;
        }
        out[i] = da.max(db);
    }
    Some(out)
}

/// Strides for reading `shape` as if broadcast to `out_shape` (0 where tiled).
fn broadcast_strides(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let n = out_shape.len();
    let pad = n - shape.len();
    let st = strides(shape);
    let mut out = vec![0usize; n];
    for i in 0..shape.len() {
        out[pad + i] = if shape[i] == 1 { 0 } else { st[i] };
    }
    out
}

/// Apply a binary elementwise op with broadcasting.
pub fn ew_binary(
    a: &[f64],
    a_shape: &[usize],
    b: &[f64],
    b_shape: &[usize],
    out_shape: &[usize],
    f: impl Fn(f64, f64) -> f64,
) -> Vec<f64> {
    let n = numel(out_shape);
    // Fast path: identical shapes, no index arithmetic.
    if a_shape == out_shape && b_shape == out_shape {
        return a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect();
    }
    let sa = broadcast_strides(a_shape, out_shape);
    let sb = broadcast_strides(b_shape, out_shape);
    let ndim = out_shape.len();
    let mut out = Vec::with_capacity(n);
    let mut idx = vec![0usize; ndim];
    let mut ia = 0usize;
    let mut ib = 0usize;
    for _ in 0..n {
        out.push(f(a[ia], b[ib]));
        // Odometer increment, updating the two read offsets in place.
        for d in (0..ndim).rev() {
            idx[d] += 1;
            ia += sa[d];
            ib += sb[d];
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
            ia -= sa[d] * out_shape[d];
            ib -= sb[d] * out_shape[d];
        }
    }
    out
}

/// Tile `a` (shape `a_shape`) to `out_shape`.
pub fn broadcast_to(a: &[f64], a_shape: &[usize], out_shape: &[usize]) -> Vec<f64> {
    ew_binary(a, a_shape, &[0.0], &[1], out_shape, |x, _| x)
}

/// Sum over `axes` (sorted, unique), keeping the reduced axes as extent 1.
pub fn sum_axes_keepdims(a: &[f64], shape: &[usize], axes: &[usize]) -> (Vec<f64>, Vec<usize>) {
    let mut out_shape = shape.to_vec();
    for &ax in axes {
        out_shape[ax] = 1;
    }
    let n_out = numel(&out_shape);
    let mut out = vec![0.0; n_out];
    let in_strides = strides(shape);
    let out_strides = strides(&out_shape);
    let ndim = shape.len();
    let mut idx = vec![0usize; ndim];
    let mut oi = 0usize;
    for &v in a.iter() {
        out[oi] += v;
        for d in (0..ndim).rev() {
            idx[d] += 1;
            if out_shape[d] != 1 {
                oi += out_strides[d];
            }
            if idx[d] < shape[d] {
                break;
            }
            idx[d] = 0;
            if out_shape[d] != 1 {
                oi -= out_strides[d] * shape[d];
            }
        }
    }
    let _ = in_strides;
    (out, out_shape)
}

/// Batched matmul over the last two axes; leading axes broadcast.
/// `a`: [..,M,K], `b`: [..,K,N] → [..,M,N].
pub fn matmul(
    a: &[f64],
    a_shape: &[usize],
    b: &[f64],
    b_shape: &[usize],
    out_shape: &[usize],
) -> Vec<f64> {
    let (m, k) = (a_shape[a_shape.len() - 2], a_shape[a_shape.len() - 1]);
    let n = b_shape[b_shape.len() - 1];
    let batch_shape = &out_shape[..out_shape.len() - 2];
    let n_batch = numel(batch_shape);

    let a_batch = &a_shape[..a_shape.len() - 2];
    let b_batch = &b_shape[..b_shape.len() - 2];
    let sa = broadcast_strides(a_batch, batch_shape);
    let sb = broadcast_strides(b_batch, batch_shape);

    let mut out = vec![0.0; n_batch * m * n];
    let threads = thread_count();

    let run_one = |bi: usize, out_chunk: &mut [f64]| {
        // Decompose the batch index into per-operand matrix offsets;
        // stride units are batch cells, so scale by matrix size.
        let mut rem = bi;
        let mut oa = 0usize;
        let mut ob = 0usize;
        for d in (0..batch_shape.len()).rev() {
            let c = rem % batch_shape[d];
            rem /= batch_shape[d];
            oa += c * sa[d];
            ob += c * sb[d];
        }
        let a_off = oa * m * k;
        let b_off = ob * k * n;
        matmul_2d(
            &a[a_off..a_off + m * k],
            &b[b_off..b_off + k * n],
            m,
            k,
            n,
            out_chunk,
            threads,
        );
    };

    if n_batch == 1 {
        run_one(0, &mut out);
    } else {
        for (bi, chunk) in out.chunks_mut(m * n).enumerate() {
            run_one(bi, chunk);
        }
    }
    out
}

/// C[m,n] = A[m,k] · B[k,n], ikj loop order so the inner loop streams rows.
fn matmul_2d(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, c: &mut [f64], threads: usize) {
    let row = |i: usize, c_row: &mut [f64]| {
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..p * n + n];
            for (cj, &bj) in c_row.iter_mut().zip(b_row) {
                *cj += aip * bj;
            }
        }
    };
    if threads > 1 && m >= 2 * threads {
        c.par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, c_row)| row(i, c_row));
    } else {
        for (i, c_row) in c.chunks_mut(n).enumerate() {
            row(i, c_row);
        }
    }
}

/// Swap the last two axes.
pub fn transpose_last2(a: &[f64], shape: &[usize]) -> Vec<f64> {
    let ndim = shape.len();
    let (r, c) = (shape[ndim - 2], shape[ndim - 1]);
    let batch = numel(&shape[..ndim - 2]);
    let mut out = vec![0.0; a.len()];
    for bi in 0..batch {
        let base = bi * r * c;
        for i in 0..r {
            for j in 0..c {
                out[base + j * r + i] = a[base + i * c + j];
            }
        }
    }
    out
}

/// Concatenate along `axis`. All inputs share every other extent.
pub fn concat(parts: &[(&[f64], &[usize])], axis: usize, out_shape: &[usize]) -> Vec<f64> {
    let outer: usize = out_shape[..axis].iter().product();
    let inner: usize = out_shape[axis + 1..].iter().product();
    let mut out = vec![0.0; numel(out_shape)];
    let total_axis = out_shape[axis];
    let mut offset = 0usize;
    for &(vals, shape) in parts {
        let len_axis = shape[axis];
        for o in 0..outer {
            let src = o * len_axis * inner;
            let dst = (o * total_axis + offset) * inner;
            out[dst..dst + len_axis * inner].copy_from_slice(&vals[src..src + len_axis * inner]);
        }
        offset += len_axis;
    }
    out
}

/// Copy the sub-block described by `ranges` (start,end per axis).
pub fn slice(a: &[f64], shape: &[usize], ranges: &[(usize, usize)]) -> (Vec<f64>, Vec<usize>) {
    let out_shape: Vec<usize> = ranges.iter().map(|&(s, e)| e - s).collect();
    let n = numel(&out_shape);
    let st = strides(shape);
    let mut out = Vec::with_capacity(n);
    let ndim = shape.len();
    let mut idx = vec![0usize; ndim];
    for _ in 0..n {
        let mut off = 0usize;
        for d in 0..ndim {
            off += (ranges[d].0 + idx[d]) * st[d];
        }
        out.push(a[off]);
        for d in (0..ndim).rev() {
            idx[d] += 1;
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    (out, out_shape)
}

/// Inverse of `slice`: embed `a` into zeros of `out_shape` at `ranges`.
pub fn pad_slice(a: &[f64], ranges: &[(usize, usize)], out_shape: &[usize]) -> Vec<f64> {
    let in_shape: Vec<usize> = ranges.iter().map(|&(s, e)| e - s).collect();
    let mut out = vec![0.0; numel(out_shape)];
    let st = strides(out_shape);
    let ndim = out_shape.len();
    let mut idx = vec![0usize; ndim];
    for &v in a {
        let mut off = 0usize;
        for d in 0..ndim {
            off += (ranges[d].0 + idx[d]) * st[d];
        }
        out[off] = v;
        for d in (0..ndim).rev() {
            idx[d] += 1;
            if idx[d] < in_shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    out
}

/// How out-of-bounds taps behave.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadMode {
    /// Out-of-bounds taps read zero.
    Zero,
    /// Out-of-bounds taps clamp to the nearest edge pixel.
    Replicate,
}

/// Geometry of an im2col / col2im pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub batch: usize,
    pub in_ch: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub pad_mode: PadMode,
}

impl ConvSpec {
    pub fn out_h(&self) -> usize {
        (self.h + 2 * self.pad - self.kh) / self.stride + 1
    }
    pub fn out_w(&self) -> usize {
        (self.w + 2 * self.pad - self.kw) / self.stride + 1
    }
    /// [B, oh*ow, C*kh*kw]
    pub fn col_shape(&self) -> Vec<usize> {
        vec![
            self.batch,
            self.out_h() * self.out_w(),
            self.in_ch * self.kh * self.kw,
        ]
    }
    pub fn image_shape(&self) -> Vec<usize> {
        vec![self.batch, self.in_ch, self.h, self.w]
    }
}

/// Resolve an out-of-bounds tap coordinate, or None to read zero.
fn tap(coord: isize, extent: usize, mode: PadMode) -> Option<usize> {
    if coord >= 0 && coord < extent as isize {
        Some(coord as usize)
    } else {
        match mode {
            PadMode::Zero => None,
            PadMode::Replicate => Some(coord.clamp(0, extent as isize - 1) as usize),
        }
    }
}

/// Unfold [B,C,H,W] into [B, oh*ow, C*kh*kw].
pub fn im2col(a: &[f64], spec: &ConvSpec) -> Vec<f64> {
    let (oh, ow) = (spec.out_h(), spec.out_w());
    let k = spec.in_ch * spec.kh * spec.kw;
    let mut out = vec![0.0; spec.batch * oh * ow * k];
    let img = spec.h * spec.w;
    for b in 0..spec.batch {
        let src_b = b * spec.in_ch * img;
        let dst_b = b * oh * ow * k;
        for oy in 0..oh {
            for ox in 0..ow {
                let dst_p = dst_b + (oy * ow + ox) * k;
                for c in 0..spec.in_ch {
                    for ky in 0..spec.kh {
                        let Some(y) = tap(
                            (oy * spec.stride + ky) as isize - spec.pad as isize,
                            spec.h,
                            spec.pad_mode,
                        ) else {
                            continue;
                        };
                        for kx in 0..spec.kw {
                            let Some(x) = tap(
                                (ox * spec.stride + kx) as isize - spec.pad as isize,
                                spec.w,
                                spec.pad_mode,
                            ) else {
                                continue;
                            };
                            out[dst_p + (c * spec.kh + ky) * spec.kw + kx] =
                                a[src_b + c * img + y * spec.w + x];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of `im2col`: scatter-add columns back into the image layout.
pub fn col2im(cols: &[f64], spec: &ConvSpec) -> Vec<f64> {
    let (oh, ow) = (spec.out_h(), spec.out_w());
    let k = spec.in_ch * spec.kh * spec.kw;
    let img = spec.h * spec.w;
    let mut out = vec![0.0; spec.batch * spec.in_ch * img];
    for b in 0..spec.batch {
        let dst_b = b * spec.in_ch * img;
        let src_b = b * oh * ow * k;
        for oy in 0..oh {
            for ox in 0..ow {
                let src_p = src_b + (oy * ow + ox) * k;
                for c in 0..spec.in_ch {
                    for ky in 0..spec.kh {
                        let Some(y) = tap(
                            (oy * spec.stride + ky) as isize - spec.pad as isize,
                            spec.h,
                            spec.pad_mode,
                        ) else {
                            continue;
                        };
                        for kx in 0..spec.kw {
                            let Some(x) = tap(
                                (ox * spec.stride + kx) as isize - spec.pad as isize,
                                spec.w,
                                spec.pad_mode,
                            ) else {
                                continue;
                            };
                            out[dst_b + c * img + y * spec.w + x] +=
                                cols[src_p + (c * spec.kh + ky) * spec.kw + kx];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Nearest-neighbour 2× upsample of [B,C,H,W].
pub fn upsample2x(a: &[f64], shape: &[usize]) -> Vec<f64> {
    let (b, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let mut out = vec![0.0; b * c * 4 * h * w];
    for bc in 0..b * c {
        let src = bc * h * w;
        let dst = bc * 4 * h * w;
        for y in 0..h {
            for x in 0..w {
                let v = a[src + y * w + x];
                let d = dst + 2 * y * 2 * w + 2 * x;
                out[d] = v;
                out[d + 1] = v;
                out[d + 2 * w] = v;
                out[d + 2 * w + 1] = v;
            }
        }
    }
    out
}

/// Adjoint of `upsample2x`: sum each 2×2 block.
pub fn downsample2x_sum(a: &[f64], shape: &[usize]) -> Vec<f64> {
    let (b, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0; b * c * oh * ow];
    for bc in 0..b * c {
        let src = bc * h * w;
        let dst = bc * oh * ow;
        for y in 0..oh {
            for x in 0..ow {
                let s = src + 2 * y * w + 2 * x;
                out[dst + y * ow + x] = a[s] + a[s + 1] + a[s + w] + a[s + w + 1];
            }
        }
    }
    out
}

/// Reverse the last axis (horizontal flip for image layouts).
pub fn flip_last(a: &[f64], shape: &[usize]) -> Vec<f64> {
    let w = shape[shape.len() - 1];
    let rows = a.len() / w;
    let mut out = vec![0.0; a.len()];
    for r in 0..rows {
        for x in 0..w {
            out[r * w + x] = a[r * w + (w - 1 - x)];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_rules() {
        assert_eq!(broadcast_shape(&[2, 3], &[3]), Some(vec![2, 3]));
        assert_eq!(broadcast_shape(&[2, 1], &[1, 4]), Some(vec![2, 4]));
        assert_eq!(broadcast_shape(&[2, 3], &[4]), None);
        assert_eq!(broadcast_shape(&[1], &[5]), Some(vec![5]));
    }

    #[test]
    fn matmul_hand() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0];
        let out = matmul(&a, &[2, 2], &b, &[2, 1], &[2, 1]);
        assert_eq!(out, vec![17.0, 39.0]);
    }

    #[test]
    fn matmul_batched_broadcast() {
        // a: [2,1,2] (batch 2), b: [2,2] broadcast over batch
        let a = [1.0, 0.0, 0.0, 1.0];
        let b = [1.0, 2.0, 3.0, 4.0];
        let out = matmul(&a, &[2, 1, 2], &b, &[2, 2], &[2, 1, 2]);
        assert_eq!(out, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn sum_keepdims() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let (out, shape) = sum_axes_keepdims(&a, &[2, 3], &[1]);
        assert_eq!(shape, vec![2, 1]);
        assert_eq!(out, vec![6.0, 15.0]);
        let (out, shape) = sum_axes_keepdims(&a, &[2, 3], &[0]);
        assert_eq!(shape, vec![1, 3]);
        assert_eq!(out, vec![5.0, 7.0, 9.0]);
    }

    #[test]
    fn slice_pad_roundtrip() {
        let a: Vec<f64> = (0..12).map(|v| v as f64).collect();
        let (s, sh) = slice(&a, &[3, 4], &[(1, 3), (0, 2)]);
        assert_eq!(sh, vec![2, 2]);
        assert_eq!(s, vec![4.0, 5.0, 8.0, 9.0]);
        let back = pad_slice(&s, &[(1, 3), (0, 2)], &[3, 4]);
        assert_eq!(back[4], 4.0);
        assert_eq!(back[0], 0.0);
        assert_eq!(back[9], 9.0);
    }

    #[test]
    fn im2col_col2im_adjoint() {
        // <im2col(x), y> == <x, col2im(y)> for random-ish data.
        let spec = ConvSpec {
            batch: 1,
            in_ch: 2,
            h: 4,
            w: 4,
            kh: 3,
            kw: 3,
            stride: 2,
            pad: 1,
            pad_mode: PadMode::Zero,
        };
        let x: Vec<f64> = (0..32).map(|i| (i as f64) * 0.31 - 3.0).collect();
        let cols = im2col(&x, &spec);
        let y: Vec<f64> = (0..cols.len()).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let back = col2im(&y, &spec);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn upsample_downsample_adjoint() {
        let x: Vec<f64> = (0..16).map(|i| i as f64).collect();
        let up = upsample2x(&x, &[1, 1, 4, 4]);
        assert_eq!(up.len(), 64);
        assert_eq!(up[0], 0.0);
        assert_eq!(up[1], 0.0);
        assert_eq!(up[8], 0.0);
        let down = downsample2x_sum(&up, &[1, 1, 8, 8]);
        for (d, x) in down.iter().zip(&x) {
            assert_eq!(*d, 4.0 * x);
        }
    }

    #[test]
    fn flip_involution() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let f = flip_last(&x, &[2, 3]);
        assert_eq!(f, vec![3.0, 2.0, 1.0, 6.0, 5.0, 4.0]);
        assert_eq!(flip_last(&f, &[2, 3]), x.to_vec());
    }
}
