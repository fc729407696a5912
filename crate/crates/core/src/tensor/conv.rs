//! Spatial convolution and pooling.
//!
//! `conv2d` unfolds each batch element to a column matrix and multiplies it
//! with the flattened kernel (im2col + sgemm), parallelized over the batch.
//! Gradient reductions fold per-sample partials in batch order, so results
//! are bit-identical regardless of thread count.

use super::ops::gemm;
use super::{Tensor, TensorData};
use rayon::prelude::*;

#[derive(Clone, Copy)]
struct ConvDims {
    b: usize,
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

fn im2col(x: &[f32], d: ConvDims, col: &mut [f32]) {
    let (h, w, kh, kw, ho, wo) = (d.h, d.w, d.kh, d.kw, d.ho, d.wo);
    let out_hw = ho * wo;
    for ci in 0..d.c_in {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (ci * kh * kw + ki * kw + kj) * out_hw;
                for oh in 0..ho {
                    let ih = (oh * d.stride + ki) as isize - d.pad as isize;
                    let dst = &mut col[row + oh * wo..row + (oh + 1) * wo];
                    if ih < 0 || ih >= h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src_row = &plane[ih as usize * w..(ih as usize + 1) * w];
                    for (ow, slot) in dst.iter_mut().enumerate() {
                        let iw = (ow * d.stride + kj) as isize - d.pad as isize;
                        *slot = if iw < 0 || iw >= w as isize {
                            0.0
                        } else {
                            src_row[iw as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im(col: &[f32], d: ConvDims, x: &mut [f32]) {
    let (h, w, kh, kw, ho, wo) = (d.h, d.w, d.kh, d.kw, d.ho, d.wo);
    let out_hw = ho * wo;
    for ci in 0..d.c_in {
        let plane = &mut x[ci * h * w..(ci + 1) * h * w];
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (ci * kh * kw + ki * kw + kj) * out_hw;
                for oh in 0..ho {
                    let ih = (oh * d.stride + ki) as isize - d.pad as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    for ow in 0..wo {
                        let iw = (ow * d.stride + kj) as isize - d.pad as isize;
                        if iw < 0 || iw >= w as isize {
                            continue;
                        }
                        plane[ih as usize * w + iw as usize] += col[row + oh * wo + ow];
                    }
                }
            }
        }
    }
}

fn conv_forward(x: &[f32], kernel: &[f32], d: ConvDims) -> Vec<f32> {
    let col_rows = d.c_in * d.kh * d.kw;
    let out_hw = d.ho * d.wo;
    let sample_in = d.c_in * d.h * d.w;
    let sample_out = d.c_out * out_hw;
    let mut out = vec![0.0; d.b * sample_out];
    out.par_chunks_mut(sample_out)
        .zip(x.par_chunks(sample_in))
        .for_each(|(out_s, x_s)| {
            let mut col = vec![0.0; col_rows * out_hw];
            im2col(x_s, d, &mut col);
            gemm(
                d.c_out,
                col_rows,
                out_hw,
                1.0,
                kernel,
                (col_rows, 1),
                &col,
                (out_hw, 1),
                0.0,
                out_s,
                (out_hw, 1),
            );
        });
    out
}

fn conv_backward(
    x: &[f32],
    kernel: &[f32],
    grad_out: &[f32],
    d: ConvDims,
) -> (Vec<f32>, Vec<f32>) {
    let col_rows = d.c_in * d.kh * d.kw;
    let out_hw = d.ho * d.wo;
    let sample_in = d.c_in * d.h * d.w;
    let sample_out = d.c_out * out_hw;

    let per_sample: Vec<(Vec<f32>, Vec<f32>)> = (0..d.b)
        .into_par_iter()
        .map(|s| {
            let x_s = &x[s * sample_in..(s + 1) * sample_in];
            let go_s = &grad_out[s * sample_out..(s + 1) * sample_out];
            let mut col = vec![0.0; col_rows * out_hw];
            im2col(x_s, d, &mut col);
            // dK_s = dOut_s @ col^T
            let mut dk = vec![0.0; d.c_out * col_rows];
            gemm(
                d.c_out,
                out_hw,
                col_rows,
                1.0,
                go_s,
                (out_hw, 1),
                &col,
                (1, out_hw),
                0.0,
                &mut dk,
                (col_rows, 1),
            );
            // dCol = K^T @ dOut_s, then fold back to the input plane
            let mut dcol = vec![0.0; col_rows * out_hw];
            gemm(
                col_rows,
                d.c_out,
                out_hw,
                1.0,
                kernel,
                (1, col_rows),
                go_s,
                (out_hw, 1),
                0.0,
                &mut dcol,
                (out_hw, 1),
            );
            let mut dx = vec![0.0; sample_in];
            col2im(&dcol, d, &mut dx);
            (dk, dx)
        })
        .collect();

    let mut dkernel = vec![0.0; d.c_out * col_rows];
    let mut dx = vec![0.0; d.b * sample_in];
    for (s, (dk_s, dx_s)) in per_sample.into_iter().enumerate() {
        for (acc, v) in dkernel.iter_mut().zip(&dk_s) {
            *acc += v;
        }
        dx[s * sample_in..(s + 1) * sample_in].copy_from_slice(&dx_s);
    }
    (dkernel, dx)
}

impl Tensor {
    /// 2-D convolution of `(B, C_in, H, W)` with `(C_out, C_in, kh, kw)`,
    /// zero padding, differentiable in both the input and the kernel.
    pub fn conv2d(&self, kernel: &Tensor, stride: usize, pad: usize) -> Tensor {
        assert!(self.same_tape(kernel), "conv2d: operands belong to different tapes");
        assert!(stride >= 1, "conv2d: stride must be at least 1");
        let vx = self.value();
        let vk = kernel.value();
        assert!(
            vx.shape.len() == 4 && vk.shape.len() == 4 && vx.shape[1] == vk.shape[1],
            "conv2d: shape mismatch {:?} vs {:?}",
            vx.shape,
            vk.shape
        );
        let (b, c_in, h, w) = (vx.shape[0], vx.shape[1], vx.shape[2], vx.shape[3]);
        let (c_out, kh, kw) = (vk.shape[0], vk.shape[2], vk.shape[3]);
        assert!(
            h + 2 * pad >= kh && w + 2 * pad >= kw,
            "conv2d: kernel {:?} larger than padded input {:?}",
            vk.shape,
            vx.shape
        );
        let ho = (h + 2 * pad - kh) / stride + 1;
        let wo = (w + 2 * pad - kw) / stride + 1;
        let d = ConvDims {
            b,
            c_in,
            h,
            w,
            c_out,
            kh,
            kw,
            stride,
            pad,
            ho,
            wo,
        };
        let out = conv_forward(&vx.data, &vk.data, d);
        let (px, pk) = (self.idx(), kernel.idx());
        let backward = Box::new(
            move |values: &[TensorData], grad: &TensorData, sink: &mut dyn FnMut(usize, Vec<f32>)| {
                let (dk, dx) = conv_backward(&values[px].data, &values[pk].data, &grad.data, d);
                sink(px, dx);
                sink(pk, dk);
            },
        );
        self.tape().push(
            "conv2d",
            TensorData::new(vec![b, c_out, ho, wo], out),
            vec![px, pk],
            Some(backward),
            None,
        )
    }

    /// 2x2 max pooling with stride 2 over the last two axes of an N-d
    /// tensor (N >= 3). Spatial extents must be even so that the pooling
    /// grid commutes with exact quarter-turn rotations.
    pub fn maxpool2d(&self) -> Tensor {
        let v = self.value();
        let rank = v.shape.len();
        assert!(rank >= 3, "maxpool2d: need at least 3 axes, got {:?}", v.shape);
        let h = v.shape[rank - 2];
        let w = v.shape[rank - 1];
        assert!(
            h % 2 == 0 && w % 2 == 0,
            "maxpool2d: spatial extents must be even, got {:?}",
            v.shape
        );
        let lead: usize = v.shape[..rank - 2].iter().product();
        let (ho, wo) = (h / 2, w / 2);
        let mut out = vec![0.0; lead * ho * wo];
        let mut arg = vec![0usize; lead * ho * wo];
        for l in 0..lead {
            let plane = &v.data[l * h * w..(l + 1) * h * w];
            for oh in 0..ho {
                for ow in 0..wo {
                    let mut best = f32::NEG_INFINITY;
                    let mut best_i = 0;
                    for di in 0..2 {
                        for dj in 0..2 {
                            let i = (2 * oh + di) * w + 2 * ow + dj;
                            if plane[i] > best {
                                best = plane[i];
                                best_i = i;
                            }
                        }
                    }
                    out[(l * ho + oh) * wo + ow] = best;
                    arg[(l * ho + oh) * wo + ow] = l * h * w + best_i;
                }
            }
        }
        let mut out_shape = v.shape.clone();
        out_shape[rank - 2] = ho;
        out_shape[rank - 1] = wo;
        let p = self.idx();
        let backward = Box::new(
            move |values: &[TensorData], grad: &TensorData, sink: &mut dyn FnMut(usize, Vec<f32>)| {
                let mut g = vec![0.0; values[p].numel()];
                for (o, &src) in arg.iter().enumerate() {
                    g[src] += grad.data[o];
                }
                sink(p, g);
            },
        );
        self.tape().push(
            "maxpool2d",
            TensorData::new(out_shape, out),
            vec![p],
            Some(backward),
            None,
        )
    }
}
