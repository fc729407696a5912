//! Batch normalization over the channel axis (axis 1).
//!
//! Statistics pool over every other axis, so for lifted feature maps of
//! shape `(B, C, n_fiber, H, W)` the fiber axis is normalized together with
//! batch and space and the layer commutes with fiber permutations.

use super::{Param, Tensor, TensorData};

pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Param,
    pub running_var: Param,
    pub momentum: f32,
    pub eps: f32,
}

impl BatchNorm {
    pub fn new(name: &str, channels: usize) -> Self {
        BatchNorm {
            gamma: Param::new(
                format!("{name}.gamma"),
                TensorData::new(vec![channels], vec![1.0; channels]),
            ),
            beta: Param::new(
                format!("{name}.beta"),
                TensorData::new(vec![channels], vec![0.0; channels]),
            ),
            running_mean: Param::buffer(
                format!("{name}.running_mean"),
                TensorData::new(vec![channels], vec![0.0; channels]),
            ),
            running_var: Param::buffer(
                format!("{name}.running_var"),
                TensorData::new(vec![channels], vec![1.0; channels]),
            ),
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn params(&self) -> Vec<Param> {
        vec![
            self.gamma.clone(),
            self.beta.clone(),
            self.running_mean.clone(),
            self.running_var.clone(),
        ]
    }

    pub fn forward(&self, x: &Tensor, training: bool) -> Tensor {
        let tape = x.tape().clone();
        let gamma = tape.load(&self.gamma);
        let beta = tape.load(&self.beta);
        let v = x.value();
        assert!(
            v.shape.len() >= 2,
            "batchnorm: need at least 2 axes, got {:?}",
            v.shape
        );
        let c = v.shape[1];
        assert_eq!(
            c,
            self.gamma.shape()[0],
            "batchnorm: channel mismatch {:?} vs {:?}",
            v.shape,
            self.gamma.shape()
        );
        let b = v.shape[0];
        let inner: usize = v.shape[2..].iter().product();
        let per_channel = b * inner;

        let (mean, invstd) = if training {
            let mut mean = vec![0.0f64; c];
            let mut var = vec![0.0f64; c];
            for bi in 0..b {
                for ci in 0..c {
                    let off = (bi * c + ci) * inner;
                    for t in 0..inner {
                        mean[ci] += v.data[off + t] as f64;
                    }
                }
            }
            for m in mean.iter_mut() {
                *m /= per_channel as f64;
            }
            for bi in 0..b {
                for ci in 0..c {
                    let off = (bi * c + ci) * inner;
                    for t in 0..inner {
                        let d = v.data[off + t] as f64 - mean[ci];
                        var[ci] += d * d;
                    }
                }
            }
            for vv in var.iter_mut() {
                *vv /= per_channel as f64;
            }
            // running stats use the unbiased variance, matching the usual
            // convention; normalization uses the biased one
            let unbias = per_channel as f64 / (per_channel as f64 - 1.0).max(1.0);
            let mom = self.momentum as f64;
            self.running_mean.update(|rm| {
                for (r, &m) in rm.iter_mut().zip(&mean) {
                    *r = ((1.0 - mom) * *r as f64 + mom * m) as f32;
                }
            });
            self.running_var.update(|rv| {
                for (r, &va) in rv.iter_mut().zip(&var) {
                    *r = ((1.0 - mom) * *r as f64 + mom * va * unbias) as f32;
                }
            });
            let invstd: Vec<f32> = var
                .iter()
                .map(|&va| (1.0 / (va + self.eps as f64).sqrt()) as f32)
                .collect();
            (mean.iter().map(|&m| m as f32).collect::<Vec<f32>>(), invstd)
        } else {
            let mean = self.running_mean.value().data;
            let invstd: Vec<f32> = self
                .running_var
                .value()
                .data
                .iter()
                .map(|&va| 1.0 / (va + self.eps).sqrt())
                .collect();
            (mean, invstd)
        };

        let gv = gamma.value().data;
        let bv = beta.value().data;
        let mut out = vec![0.0; v.numel()];
        for bi in 0..b {
            for ci in 0..c {
                let off = (bi * c + ci) * inner;
                let (m, is, g, be) = (mean[ci], invstd[ci], gv[ci], bv[ci]);
                for t in 0..inner {
                    out[off + t] = (v.data[off + t] - m) * is * g + be;
                }
            }
        }

        let (px, pg, pb) = (x.idx(), gamma.idx(), beta.idx());
        let mean_b = mean;
        let invstd_b = invstd;
        let backward = Box::new(
            move |values: &[TensorData],
                  grad: &TensorData,
                  sink: &mut dyn FnMut(usize, Vec<f32>)| {
                let xv = &values[px];
                let gv = &values[pg].data;
                let n = per_channel as f64;
                let mut dgamma = vec![0.0f64; c];
                let mut dbeta = vec![0.0f64; c];
                for bi in 0..b {
                    for ci in 0..c {
                        let off = (bi * c + ci) * inner;
                        let (m, is) = (mean_b[ci], invstd_b[ci]);
                        for t in 0..inner {
                            let xhat = ((xv.data[off + t] - m) * is) as f64;
                            let gy = grad.data[off + t] as f64;
                            dgamma[ci] += gy * xhat;
                            dbeta[ci] += gy;
                        }
                    }
                }
                let mut dx = vec![0.0; xv.numel()];
                if training {
                    for bi in 0..b {
                        for ci in 0..c {
                            let off = (bi * c + ci) * inner;
                            let (m, is, g) = (mean_b[ci], invstd_b[ci], gv[ci] as f64);
                            let scale = g * is as f64 / n;
                            for t in 0..inner {
                                let xhat = ((xv.data[off + t] - m) * is) as f64;
                                let gy = grad.data[off + t] as f64;
                                dx[off + t] =
                                    (scale * (n * gy - dbeta[ci] - xhat * dgamma[ci])) as f32;
                            }
                        }
                    }
                } else {
                    for bi in 0..b {
                        for ci in 0..c {
                            let off = (bi * c + ci) * inner;
                            let k = gv[ci] * invstd_b[ci];
                            for t in 0..inner {
                                dx[off + t] = grad.data[off + t] * k;
                            }
                        }
                    }
                }
                sink(px, dx);
                sink(pg, dgamma.iter().map(|&x| x as f32).collect());
                sink(pb, dbeta.iter().map(|&x| x as f32).collect());
            },
        );
        tape.push(
            "batchnorm",
            TensorData::new(v.shape.clone(), out),
            vec![px, pg, pb],
            Some(backward),
            None,
        )
    }
}
