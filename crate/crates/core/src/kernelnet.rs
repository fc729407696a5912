//! Implicit neural representations of convolution kernels.
//!
//! A [`KernelNet`] maps a relative group coordinate — normalized spatial
//! offset, fiber angle embedded as `(cos θ, sin θ)` to avoid the chart seam
//! at ±π, and a relative mirror sign where the group has one — to a
//! `C_out x C_in` block of kernel values. Rotated kernels are exact
//! re-evaluations of the network at transformed coordinates, never
//! interpolations of a sampled grid.
//!
//! Variants: a SIREN (first layer `sin(ω₀·)` with `ω₀ = 30`, later layers
//! `sin(·)`) and plain MLPs with ReLU / LeakyReLU / Swish activations, all
//! sharing the same input/output contract so the comparison is a config
//! switch.

use crate::group::{act_on_plane, compose, inverse, FiberElement};
use crate::rng::Rng;
use crate::tensor::{stack_last, Param, Tape, Tensor, TensorData};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelVariant {
    Siren,
    Relu,
    LeakyRelu,
    Swish,
}

impl KernelVariant {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "siren" => Some(KernelVariant::Siren),
            "relu" => Some(KernelVariant::Relu),
            "leakyrelu" => Some(KernelVariant::LeakyRelu),
            "swish" => Some(KernelVariant::Swish),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelVariant::Siren => "siren",
            KernelVariant::Relu => "relu",
            KernelVariant::LeakyRelu => "leakyrelu",
            KernelVariant::Swish => "swish",
        }
    }
}

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("materialize_spatial_kernel: kernel size must be odd, got {0}")]
    EvenKernel(usize),
}

/// A relative coordinate fed to the kernel network.
#[derive(Debug, Clone, Copy)]
pub struct RelativeCoordinate {
    /// Normalized spatial offset in `[-1, 1]^2` (half-width of the kernel
    /// extent maps to 1).
    pub spatial: [f32; 2],
    /// `(cos θ_rel, sin θ_rel)`; unit norm.
    pub fiber_embed: [f32; 2],
    /// Relative mirror sign; only fed to nets over groups with a mirror.
    pub mirror_rel: f32,
}

/// The coordinate for the pair `(g_out, g_in)` at a normalized offset:
/// spatial part `act(g_in^{-1}, x)`, fiber part `g_in^{-1} ∘ g_out`.
pub fn relative_coordinate(
    g_out: FiberElement,
    g_in: FiberElement,
    offset: [f32; 2],
) -> RelativeCoordinate {
    let gi = inverse(g_in);
    let spatial = act_on_plane(gi, offset);
    let rel = compose(gi, g_out);
    RelativeCoordinate {
        spatial,
        fiber_embed: [rel.theta.cos(), rel.theta.sin()],
        mirror_rel: rel.mirror,
    }
}

/// Three-layer implicit kernel network.
pub struct KernelNet {
    pub variant: KernelVariant,
    pub in_dim: usize,
    pub hidden: usize,
    pub c_out: usize,
    pub c_in: usize,
    pub omega0: f32,
    /// Kernel values outside the unit disk are masked to zero, keeping the
    /// support rotation-invariant. Configurable; square support breaks
    /// exact equivariance at the corners under continuous rotations.
    pub disk_mask: bool,
    weights: Vec<Param>,
    biases: Vec<Param>,
}

impl KernelNet {
    pub fn new(
        name: &str,
        variant: KernelVariant,
        in_dim: usize,
        hidden: usize,
        c_out: usize,
        c_in: usize,
        rng: &mut Rng,
    ) -> Self {
        let omega0 = 30.0;
        let dims = [(in_dim, hidden), (hidden, hidden), (hidden, c_out * c_in)];
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (li, &(fan_in, fan_out)) in dims.iter().enumerate() {
            let bound = match variant {
                KernelVariant::Siren => {
                    if li == 0 {
                        1.0 / fan_in as f32
                    } else {
                        (6.0 / fan_in as f32).sqrt()
                    }
                }
                _ => (6.0 / fan_in as f32).sqrt(),
            };
            let w: Vec<f32> = (0..fan_in * fan_out)
                .map(|_| rng.uniform_in(-bound, bound))
                .collect();
            weights.push(Param::new(
                format!("{name}.w{li}"),
                TensorData::new(vec![fan_in, fan_out], w),
            ));
            let b_bound = 1.0 / (fan_in as f32).sqrt();
            let b: Vec<f32> = (0..fan_out)
                .map(|_| rng.uniform_in(-b_bound, b_bound))
                .collect();
            biases.push(Param::new(
                format!("{name}.b{li}"),
                TensorData::new(vec![fan_out], b),
            ));
        }
        KernelNet {
            variant,
            in_dim,
            hidden,
            c_out,
            c_in,
            omega0,
            disk_mask: true,
            weights,
            biases,
        }
    }

    pub fn params(&self) -> Vec<Param> {
        self.weights
            .iter()
            .chain(self.biases.iter())
            .cloned()
            .collect()
    }

    /// Evaluates the network on a `(batch, in_dim)` coordinate tensor,
    /// returning `(batch, c_out * c_in)` kernel values.
    pub fn eval(&self, tape: &Tape, coords: &Tensor) -> Tensor {
        let shape = coords.shape();
        assert!(
            shape.len() == 2 && shape[1] == self.in_dim,
            "eval_kernel: coords {:?} vs input dim {}",
            shape,
            self.in_dim
        );
        assert!(shape[0] > 0, "eval_kernel: empty coordinate batch");
        let mut h = coords.clone();
        for li in 0..self.weights.len() {
            let w = tape.load(&self.weights[li]);
            let b = tape.load(&self.biases[li]);
            h = h.matmul(&w).add(&b);
            if li + 1 == self.weights.len() {
                break; // linear output layer
            }
            h = match self.variant {
                KernelVariant::Siren => {
                    if li == 0 {
                        h.mul_scalar(self.omega0).sin()
                    } else {
                        h.sin()
                    }
                }
                KernelVariant::Relu => h.relu(),
                KernelVariant::LeakyRelu => h.leaky_relu(0.01),
                KernelVariant::Swish => h.swish(),
            };
        }
        h
    }

    /// Evaluates everything at once for a batch of `RelativeCoordinate`s.
    pub fn eval_coords(&self, tape: &Tape, coords: &[RelativeCoordinate]) -> Tensor {
        assert!(!coords.is_empty(), "eval_kernel: empty coordinate batch");
        let mut flat = Vec::with_capacity(coords.len() * self.in_dim);
        for c in coords {
            flat.push(c.spatial[0]);
            flat.push(c.spatial[1]);
            if self.in_dim >= 4 {
                flat.push(c.fiber_embed[0]);
                flat.push(c.fiber_embed[1]);
            }
            if self.in_dim >= 5 {
                flat.push(c.mirror_rel);
            }
        }
        let t = tape.constant_vec(vec![coords.len(), self.in_dim], flat);
        self.eval(tape, &t)
    }
}

/// Normalized grid offsets for a `k×k` kernel, row-major, as
/// `(row offsets, col offsets)`; the half-width maps to 1.
pub fn normalized_grid(k: usize) -> (Vec<f32>, Vec<f32>) {
    let c = (k as f32 - 1.0) / 2.0;
    let scale = if k > 1 { 1.0 / c } else { 0.0 };
    let mut gx = Vec::with_capacity(k * k);
    let mut gy = Vec::with_capacity(k * k);
    for r in 0..k {
        for col in 0..k {
            gx.push((r as f32 - c) * scale);
            gy.push((col as f32 - c) * scale);
        }
    }
    (gx, gy)
}

fn disk_mask_values(k: usize, enabled: bool) -> Vec<f32> {
    let (gx, gy) = normalized_grid(k);
    gx.iter()
        .zip(&gy)
        .map(|(&x, &y)| {
            if !enabled || x * x + y * y <= 1.0 + 1e-6 {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// Materializes the spatial kernel for one `(g_out, g_in)` pair: entry at
/// normalized offset `x` is the net at spatial `act(g_in^{-1}, x)` and fiber
/// `g_in^{-1} ∘ g_out`. Returns `(C_out, C_in, k, k)`.
pub fn materialize_spatial_kernel(
    net: &KernelNet,
    tape: &Tape,
    g_out: FiberElement,
    g_in: FiberElement,
    k: usize,
) -> Result<Tensor, KernelError> {
    if k % 2 == 0 {
        return Err(KernelError::EvenKernel(k));
    }
    let (gx, gy) = normalized_grid(k);
    let coords: Vec<RelativeCoordinate> = gx
        .iter()
        .zip(&gy)
        .map(|(&x, &y)| relative_coordinate(g_out, g_in, [x, y]))
        .collect();
    let vals = net.eval_coords(tape, &coords); // (k*k, c_out*c_in)
    let kernel = vals
        .reshape(vec![k, k, net.c_out, net.c_in])
        .permute(&[2, 3, 0, 1]);
    let mask = tape.constant_vec(vec![1, 1, k, k], disk_mask_values(k, net.disk_mask));
    Ok(kernel.mul(&mask))
}

/// Materializes the full bank of kernels between two sampled coordinate
/// sets, on-tape so gradients reach both the net weights and (through the
/// angle tensors) the distribution parameters.
///
/// Returns `(n_out * C_out, n_in * C_in, k, k)`, ordered fiber-major on
/// both sides.
pub fn materialize_kernel_bank(
    net: &KernelNet,
    tape: &Tape,
    out_angles: &Tensor,
    out_mirrors: &[f32],
    in_angles: &Tensor,
    in_mirrors: &[f32],
    k: usize,
) -> Result<Tensor, KernelError> {
    if k % 2 == 0 {
        return Err(KernelError::EvenKernel(k));
    }
    let n_out = out_mirrors.len();
    let n_in = in_mirrors.len();
    assert_eq!(out_angles.shape(), vec![n_out], "materialize: out coord count");
    assert_eq!(in_angles.shape(), vec![n_in], "materialize: in coord count");
    let kk = k * k;

    // θ_rel[i, j] = m_in[j] * (θ_out[i] - θ_in[j])
    let out_col = out_angles.reshape(vec![n_out, 1]).broadcast_to(vec![n_out, n_in]);
    let in_row = in_angles.reshape(vec![1, n_in]).broadcast_to(vec![n_out, n_in]);
    let m_in_row = tape.constant_vec(vec![1, n_in], in_mirrors.to_vec());
    let theta_rel = out_col.sub(&in_row).mul(&m_in_row);
    let cos_rel = theta_rel.cos();
    let sin_rel = theta_rel.sin();

    // spatial grid rotated by act(g_in^{-1}, ·): angle φ_j = -m_j θ_j
    let m_in_col = tape.constant_vec(vec![n_in, 1], in_mirrors.to_vec());
    let phi = in_angles.reshape(vec![n_in, 1]).mul(&m_in_col).neg();
    let cos_phi = phi.cos();
    let sin_phi = phi.sin();
    let (gx, gy) = normalized_grid(k);
    let gx_row = tape.constant_vec(vec![1, kk], gx);
    // column offsets pre-multiplied with the mirror sign of g_in
    let mg: Vec<f32> = in_mirrors
        .iter()
        .flat_map(|&m| gy.iter().map(move |&y| m * y))
        .collect();
    let mg_t = tape.constant_vec(vec![n_in, kk], mg);
    let cg = cos_phi.broadcast_to(vec![n_in, kk]);
    let sg = sin_phi.broadcast_to(vec![n_in, kk]);
    let sx = cg.mul(&gx_row.broadcast_to(vec![n_in, kk])).sub(&sg.mul(&mg_t));
    let sy = sg.mul(&gx_row.broadcast_to(vec![n_in, kk])).add(&cg.mul(&mg_t));

    // assemble (n_out, n_in, k*k, D)
    let full = vec![n_out, n_in, kk];
    let sx_b = sx.reshape(vec![1, n_in, kk]).broadcast_to(full.clone());
    let sy_b = sy.reshape(vec![1, n_in, kk]).broadcast_to(full.clone());
    let cos_b = cos_rel.reshape(vec![n_out, n_in, 1]).broadcast_to(full.clone());
    let sin_b = sin_rel.reshape(vec![n_out, n_in, 1]).broadcast_to(full.clone());
    let mut parts = vec![sx_b, sy_b, cos_b, sin_b];
    if net.in_dim >= 5 {
        let m_rel: Vec<f32> = out_mirrors
            .iter()
            .flat_map(|&mo| in_mirrors.iter().map(move |&mi| mo * mi))
            .collect();
        let m_rel_t = tape
            .constant_vec(vec![n_out, n_in, 1], m_rel)
            .broadcast_to(full.clone());
        parts.push(m_rel_t);
    }
    assert_eq!(parts.len(), net.in_dim, "materialize: coordinate layout");
    let coords = stack_last(&parts).reshape(vec![n_out * n_in * kk, net.in_dim]);

    let vals = net.eval(tape, &coords); // (n_out*n_in*kk, c_out*c_in)
    let kernel = vals
        .reshape(vec![n_out, n_in, k, k, net.c_out, net.c_in])
        .permute(&[0, 4, 1, 5, 2, 3])
        .reshape(vec![n_out * net.c_out, n_in * net.c_in, k, k]);
    let mask = tape.constant_vec(vec![1, 1, k, k], disk_mask_values(k, net.disk_mask));
    Ok(kernel.mul(&mask))
}

/// Lifting kernels are functions on the plane only: at output coordinate
/// `u` the canonical kernel is evaluated on the grid transformed by
/// `act(u^{-1}, ·)`, with no fiber input. This is what makes the lifting
/// convolution exactly equivariant. Returns `(n_out * C_out, C_in, k, k)`.
pub fn materialize_lifting_bank(
    net: &KernelNet,
    tape: &Tape,
    out_angles: &Tensor,
    out_mirrors: &[f32],
    k: usize,
) -> Result<Tensor, KernelError> {
    if k % 2 == 0 {
        return Err(KernelError::EvenKernel(k));
    }
    assert_eq!(net.in_dim, 2, "lifting kernel nets take spatial inputs only");
    let n_out = out_mirrors.len();
    assert_eq!(out_angles.shape(), vec![n_out], "materialize: out coord count");
    let kk = k * k;

    let m_col = tape.constant_vec(vec![n_out, 1], out_mirrors.to_vec());
    let phi = out_angles.reshape(vec![n_out, 1]).mul(&m_col).neg();
    let cos_phi = phi.cos().broadcast_to(vec![n_out, kk]);
    let sin_phi = phi.sin().broadcast_to(vec![n_out, kk]);
    let (gx, gy) = normalized_grid(k);
    let gx_row = tape
        .constant_vec(vec![1, kk], gx)
        .broadcast_to(vec![n_out, kk]);
    let mg: Vec<f32> = out_mirrors
        .iter()
        .flat_map(|&m| gy.iter().map(move |&y| m * y))
        .collect();
    let mg_t = tape.constant_vec(vec![n_out, kk], mg);
    let sx = cos_phi.mul(&gx_row).sub(&sin_phi.mul(&mg_t));
    let sy = sin_phi.mul(&gx_row).add(&cos_phi.mul(&mg_t));
    let coords = stack_last(&[sx, sy]).reshape(vec![n_out * kk, 2]);

    let vals = net.eval(tape, &coords);
    let kernel = vals
        .reshape(vec![n_out, k, k, net.c_out, net.c_in])
        .permute(&[0, 3, 4, 1, 2])
        .reshape(vec![n_out * net.c_out, net.c_in, k, k]);
    let mask = tape.constant_vec(vec![1, 1, k, k], disk_mask_values(k, net.disk_mask));
    Ok(kernel.mul(&mask))
}
