//! Lifting, group and partial group convolution layers, and the reference
//! residual network built from them.
//!
//! A planar signal is lifted onto the group by convolving with
//! group-transformed kernels, then flows through feature maps carrying an
//! explicit fiber axis and the coordinates it was sampled at. Group
//! convolutions are Monte Carlo sums over the input fiber samples with a
//! constant Haar weight `1/n_in`; a partial layer draws its output
//! coordinates from a learnable distribution instead of a fixed grid.
//!
//! Sampling policy: a partial layer draws one fresh coordinate set per
//! forward pass in training (shared across the batch) and an equispaced
//! grid over its learned support in evaluation. A non-partial layer is
//! frozen at full support and always uses the grid, which at `θ = π` is
//! exactly the cyclic group — the classical G-CNN discretization.

use crate::dist::{SampleSet, SubsetDistribution};
use crate::group::{nearest_element, FiberElement, GroupKind, GroupSpec};
use crate::kernelnet::{
    materialize_kernel_bank, materialize_lifting_bank, KernelNet, KernelVariant,
};
use crate::rng::Rng;
use crate::tensor::{BatchNorm, Param, Tape, Tensor, TensorData};
use thiserror::Error;

/// Feature tensor on the group: values of shape
/// `(batch, channels, n_fiber, H, W)` plus the fiber coordinates they were
/// computed at. The coordinates travel with the tensor through every layer.
pub struct LiftedFeatureMap {
    pub values: Tensor,
    pub coords: Vec<FiberElement>,
    /// The same coordinates' rotation angles on the tape; the gradient path
    /// from kernel evaluations back to distribution parameters.
    pub angles: Tensor,
}

impl LiftedFeatureMap {
    pub fn n_fiber(&self) -> usize {
        self.coords.len()
    }
}

fn apply_fiber_weights(values: Tensor, set: &SampleSet) -> Tensor {
    match &set.weights {
        None => values,
        Some(w) => {
            let n = set.len();
            let w5 = w.reshape(vec![1, 1, n, 1, 1]);
            values.mul(&w5)
        }
    }
}

/// Lifting convolution: one channel-mixing 2-D convolution per output fiber
/// coordinate, with the canonical kernel spatially transformed by that
/// coordinate. Exactly equivariant because the kernel is a function on the
/// plane.
pub struct LiftingConv {
    pub net: KernelNet,
    pub k: usize,
}

impl LiftingConv {
    pub fn new(
        name: &str,
        variant: KernelVariant,
        in_channels: usize,
        out_channels: usize,
        k: usize,
        hidden: usize,
        rng: &mut Rng,
    ) -> Self {
        LiftingConv {
            net: KernelNet::new(name, variant, 2, hidden, out_channels, in_channels, rng),
            k,
        }
    }

    pub fn forward(&self, tape: &Tape, image: &Tensor, out: &SampleSet) -> LiftedFeatureMap {
        assert!(!out.is_empty(), "lifting_conv: empty output coordinate set");
        let mirrors: Vec<f32> = out.elements.iter().map(|e| e.mirror).collect();
        let bank = materialize_lifting_bank(&self.net, tape, &out.angles, &mirrors, self.k)
            .expect("kernel size validated at construction");
        let shape = image.shape();
        assert!(
            shape.len() == 4,
            "lifting_conv: image must be (B, C, H, W), got {shape:?}"
        );
        let (b, h, w) = (shape[0], shape[2], shape[3]);
        let n = out.len();
        let c_out = self.net.c_out;
        let pad = (self.k - 1) / 2;
        let conv = image.conv2d(&bank, 1, pad);
        let values = conv
            .reshape(vec![b, n, c_out, h, w])
            .permute(&[0, 2, 1, 3, 4]);
        LiftedFeatureMap {
            values: apply_fiber_weights(values, out),
            coords: out.elements.clone(),
            angles: out.angles.clone(),
        }
    }
}

/// Monte Carlo group convolution between sampled fiber coordinate sets,
/// with Haar weight `1/n_in`.
pub struct GroupConv {
    pub net: KernelNet,
    pub k: usize,
}

impl GroupConv {
    pub fn new(
        name: &str,
        variant: KernelVariant,
        group: GroupSpec,
        channels_in: usize,
        channels_out: usize,
        k: usize,
        hidden: usize,
        rng: &mut Rng,
    ) -> Self {
        let in_dim = if group.kind.has_mirror() { 5 } else { 4 };
        GroupConv {
            net: KernelNet::new(name, variant, in_dim, hidden, channels_out, channels_in, rng),
            k,
        }
    }

    pub fn forward(
        &self,
        tape: &Tape,
        input: &LiftedFeatureMap,
        out: &SampleSet,
    ) -> LiftedFeatureMap {
        assert!(!input.coords.is_empty(), "group_conv: empty input fiber");
        assert!(!out.is_empty(), "group_conv: empty output coordinate set");
        let out_mirrors: Vec<f32> = out.elements.iter().map(|e| e.mirror).collect();
        let in_mirrors: Vec<f32> = input.coords.iter().map(|e| e.mirror).collect();
        let n_in = input.coords.len();
        let n_out = out.len();
        let bank = materialize_kernel_bank(
            &self.net,
            tape,
            &out.angles,
            &out_mirrors,
            &input.angles,
            &in_mirrors,
            self.k,
        )
        .expect("kernel size validated at construction")
        .mul_scalar(1.0 / n_in as f32);

        let shape = input.values.shape();
        let (b, c_in, h, w) = (shape[0], shape[1], shape[3], shape[4]);
        let c_out = self.net.c_out;
        let pad = (self.k - 1) / 2;
        let stacked = input
            .values
            .permute(&[0, 2, 1, 3, 4])
            .reshape(vec![b, n_in * c_in, h, w]);
        let conv = stacked.conv2d(&bank, 1, pad);
        let values = conv
            .reshape(vec![b, n_out, c_out, h, w])
            .permute(&[0, 2, 1, 3, 4]);
        LiftedFeatureMap {
            values: apply_fiber_weights(values, out),
            coords: out.elements.clone(),
            angles: out.angles.clone(),
        }
    }
}

/// How a layer picks its output coordinates for one forward pass.
pub enum Sampling<'a> {
    /// Stochastic draw from the layer's distribution (training).
    Stochastic(&'a mut Rng),
    /// Equispaced grid over the learned support (evaluation, frozen layers).
    Grid,
}

/// A group convolution with its learnable output distribution: the partial
/// group convolution. Drawing `{u_i} ~ p(u)` and convolving onto those
/// coordinates realizes the subset restriction; anything outside the input
/// subset is absent from the sum (reads as zero).
pub struct PartialGConv {
    pub conv: GroupConv,
    pub dist: SubsetDistribution,
    pub n_max: usize,
    /// Frozen layers keep full support and deterministic grids.
    pub partial: bool,
}

impl PartialGConv {
    pub fn sample_out(&self, tape: &Tape, sampling: &mut Sampling) -> SampleSet {
        match sampling {
            Sampling::Stochastic(rng) if self.partial => self.dist.sample(self.n_max, tape, rng),
            _ => self.dist.grid(self.n_max, tape),
        }
    }

    pub fn forward(
        &self,
        tape: &Tape,
        input: &LiftedFeatureMap,
        sampling: &mut Sampling,
    ) -> LiftedFeatureMap {
        let out = self.sample_out(tape, sampling);
        self.conv.forward(tape, input, &out)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("pooling plan names {given} blocks, network has {blocks}")]
    PoolingMismatch { given: usize, blocks: usize },
    #[error("network needs at least one residual block")]
    NoBlocks,
    #[error("fiber budget must be at least 1")]
    ZeroFiberBudget,
    #[error("O(2) networks need an even fiber budget, got {0}")]
    OddProductBudget(usize),
}

/// Where 2x2 max-pooling is applied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolingPlan {
    pub after_lifting: bool,
    /// Per block: pooling after the first / second group convolution,
    /// inside the residual branch (the skip path pools to match).
    pub inside_block: Vec<[bool; 2]>,
    /// Per block: pooling after the residual addition.
    pub after_block: Vec<bool>,
}

impl PoolingPlan {
    /// No pooling anywhere (analysis-scale networks).
    pub fn none(blocks: usize) -> Self {
        PoolingPlan {
            after_lifting: false,
            inside_block: vec![[false, false]; blocks],
            after_block: vec![false; blocks],
        }
    }

    /// Pooling after each residual block.
    pub fn after_blocks(blocks: usize) -> Self {
        PoolingPlan {
            after_lifting: false,
            inside_block: vec![[false, false]; blocks],
            after_block: vec![true; blocks],
        }
    }

    /// Pooling after the lifting convolution and the first group
    /// convolution.
    pub fn lifting_and_first_conv(blocks: usize) -> Self {
        let mut inside = vec![[false, false]; blocks];
        if !inside.is_empty() {
            inside[0][0] = true;
        }
        PoolingPlan {
            after_lifting: true,
            inside_block: inside,
            after_block: vec![false; blocks],
        }
    }
}

pub struct NetworkConfig {
    pub group: GroupSpec,
    /// Max fiber samples per layer at full support.
    pub n_max: usize,
    pub channels: usize,
    pub blocks: usize,
    pub lift_kernel: usize,
    pub conv_kernel: usize,
    pub kernel_hidden: usize,
    pub variant: KernelVariant,
    pub partial: bool,
    pub pooling: PoolingPlan,
    pub in_channels: usize,
    pub classes: usize,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.blocks == 0 {
            return Err(ConfigError::NoBlocks);
        }
        if self.n_max == 0 {
            return Err(ConfigError::ZeroFiberBudget);
        }
        if self.group.kind == GroupKind::O2 && self.n_max % 2 != 0 {
            return Err(ConfigError::OddProductBudget(self.n_max));
        }
        if self.pooling.inside_block.len() != self.blocks
            || self.pooling.after_block.len() != self.blocks
        {
            return Err(ConfigError::PoolingMismatch {
                given: self.pooling.inside_block.len().min(self.pooling.after_block.len()),
                blocks: self.blocks,
            });
        }
        Ok(())
    }
}

/// Pre-activation residual block: `x + conv2(bn2 relu conv1(bn1 relu x))`,
/// with the skip projected onto the output fiber coordinates by nearest
/// coordinate and pooled to match any interior pooling.
pub struct ResBlock {
    pub bn1: BatchNorm,
    pub conv1: PartialGConv,
    pub bn2: BatchNorm,
    pub conv2: PartialGConv,
    pub pool_inside: [bool; 2],
}

impl ResBlock {
    pub fn forward(
        &self,
        tape: &Tape,
        input: &LiftedFeatureMap,
        training: bool,
        sampling: &mut Sampling,
    ) -> LiftedFeatureMap {
        let h1 = self.bn1.forward(&input.values, training).relu();
        let h1_map = LiftedFeatureMap {
            values: h1,
            coords: input.coords.clone(),
            angles: input.angles.clone(),
        };
        let mut f1 = self.conv1.forward(tape, &h1_map, sampling);
        if self.pool_inside[0] {
            f1.values = f1.values.maxpool2d();
        }
        let h2 = self.bn2.forward(&f1.values, training).relu();
        let h2_map = LiftedFeatureMap {
            values: h2,
            coords: f1.coords.clone(),
            angles: f1.angles.clone(),
        };
        let mut f2 = self.conv2.forward(tape, &h2_map, sampling);
        if self.pool_inside[1] {
            f2.values = f2.values.maxpool2d();
        }

        let mut skip = input.values.clone();
        if self.pool_inside[0] {
            skip = skip.maxpool2d();
        }
        if self.pool_inside[1] {
            skip = skip.maxpool2d();
        }
        let indices: Vec<usize> = f2
            .coords
            .iter()
            .map(|&u| nearest_element(&input.coords, u))
            .collect();
        let identity_projection = indices.iter().enumerate().all(|(i, &j)| i == j)
            && f2.coords.len() == input.coords.len();
        let skip_proj = if identity_projection {
            skip
        } else {
            skip.index_select(2, &indices)
        };
        LiftedFeatureMap {
            values: f2.values.add(&skip_proj),
            coords: f2.coords,
            angles: f2.angles,
        }
    }
}

/// The reference architecture: lifting convolution, residual blocks of two
/// group convolutions each, a final norm/nonlinearity, global max pooling
/// over fiber and space (the invariant map), and a linear classifier.
pub struct Network {
    pub group: GroupSpec,
    pub n_max: usize,
    pub partial: bool,
    pub pooling: PoolingPlan,
    pub lifting: LiftingConv,
    pub lifting_dist: SubsetDistribution,
    pub blocks: Vec<ResBlock>,
    pub head_bn: BatchNorm,
    pub classifier_w: Param,
    pub classifier_b: Param,
}

pub fn build_network(cfg: &NetworkConfig, rng: &mut Rng) -> Result<Network, ConfigError> {
    cfg.validate()?;
    let c = cfg.channels;
    let lifting = LiftingConv::new(
        "lifting",
        cfg.variant,
        cfg.in_channels,
        c,
        cfg.lift_kernel,
        cfg.kernel_hidden,
        rng,
    );
    let lifting_dist = SubsetDistribution::full_support("dist.lifting", cfg.group);
    let mut blocks = Vec::new();
    for b in 0..cfg.blocks {
        let mk_conv = |tag: &str, rng: &mut Rng| {
            PartialGConv {
                conv: GroupConv::new(
                    &format!("block{b}.{tag}"),
                    cfg.variant,
                    cfg.group,
                    c,
                    c,
                    cfg.conv_kernel,
                    cfg.kernel_hidden,
                    rng,
                ),
                dist: SubsetDistribution::full_support(&format!("dist.block{b}.{tag}"), cfg.group),
                n_max: cfg.n_max,
                partial: cfg.partial,
            }
        };
        blocks.push(ResBlock {
            bn1: BatchNorm::new(&format!("block{b}.bn1"), c),
            conv1: mk_conv("conv1", rng),
            bn2: BatchNorm::new(&format!("block{b}.bn2"), c),
            conv2: mk_conv("conv2", rng),
            pool_inside: cfg.pooling.inside_block[b],
        });
    }
    let bound = 1.0 / (c as f32).sqrt();
    let w: Vec<f32> = (0..c * cfg.classes)
        .map(|_| rng.uniform_in(-bound, bound))
        .collect();
    Ok(Network {
        group: cfg.group,
        n_max: cfg.n_max,
        partial: cfg.partial,
        pooling: cfg.pooling.clone(),
        lifting,
        lifting_dist,
        blocks,
        head_bn: BatchNorm::new("head.bn", c),
        classifier_w: Param::new("head.w", TensorData::new(vec![c, cfg.classes], w)),
        classifier_b: Param::new(
            "head.b",
            TensorData::new(vec![cfg.classes], vec![0.0; cfg.classes]),
        ),
    })
}

impl Network {
    /// Forward pass to class logits `(B, classes)`.
    pub fn forward(
        &self,
        tape: &Tape,
        images: &Tensor,
        training: bool,
        sampling: &mut Sampling,
    ) -> Tensor {
        self.forward_features(tape, images, training, sampling).0
    }

    /// Forward pass returning logits and the final lifted feature map.
    pub fn forward_features(
        &self,
        tape: &Tape,
        images: &Tensor,
        training: bool,
        sampling: &mut Sampling,
    ) -> (Tensor, LiftedFeatureMap) {
        let lift_set = match sampling {
            Sampling::Stochastic(rng) if self.partial => {
                self.lifting_dist.sample(self.n_max, tape, rng)
            }
            _ => self.lifting_dist.grid(self.n_max, tape),
        };
        let mut fmap = self.lifting.forward(tape, images, &lift_set);
        if self.pooling.after_lifting {
            fmap.values = fmap.values.maxpool2d();
        }
        for (b, block) in self.blocks.iter().enumerate() {
            fmap = block.forward(tape, &fmap, training, sampling);
            if self.pooling.after_block[b] {
                fmap.values = fmap.values.maxpool2d();
            }
        }
        let h = self.head_bn.forward(&fmap.values, training).relu();
        let pooled = h.max_reduce(&[2, 3, 4]);
        let logits = pooled
            .matmul(&tape.load(&self.classifier_w))
            .add(&tape.load(&self.classifier_b));
        (logits, fmap)
    }

    /// Trainable weights outside the distributions (the "main" group).
    pub fn main_params(&self) -> Vec<Param> {
        let mut out = self.lifting.net.params();
        for b in &self.blocks {
            out.extend(b.bn1.params().into_iter().filter(|p| p.trainable()));
            out.extend(b.conv1.conv.net.params());
            out.extend(b.bn2.params().into_iter().filter(|p| p.trainable()));
            out.extend(b.conv2.conv.net.params());
        }
        out.extend(self.head_bn.params().into_iter().filter(|p| p.trainable()));
        out.push(self.classifier_w.clone());
        out.push(self.classifier_b.clone());
        out
    }

    /// Distribution parameters (their own learning-rate group).
    pub fn dist_params(&self) -> Vec<Param> {
        let mut out = self.lifting_dist.params();
        for b in &self.blocks {
            out.extend(b.conv1.dist.params());
            out.extend(b.conv2.dist.params());
        }
        out
    }

    /// Every persistent buffer, for checkpointing: main params, dist
    /// params, and batchnorm running statistics, in a fixed order.
    pub fn all_named(&self) -> Vec<Param> {
        let mut out = self.main_params();
        out.extend(self.dist_params());
        for b in &self.blocks {
            out.extend(b.bn1.params().into_iter().filter(|p| !p.trainable()));
            out.extend(b.bn2.params().into_iter().filter(|p| !p.trainable()));
        }
        out.extend(self.head_bn.params().into_iter().filter(|p| !p.trainable()));
        out
    }

    /// Per-layer distributions with stable names, lifting first.
    pub fn distributions(&self) -> Vec<(String, &SubsetDistribution)> {
        let mut out = vec![("lifting".to_string(), &self.lifting_dist)];
        for (b, block) in self.blocks.iter().enumerate() {
            out.push((format!("block{b}.conv1"), &block.conv1.dist));
            out.push((format!("block{b}.conv2"), &block.conv2.dist));
        }
        out
    }

    /// Clamps all continuous distribution supports (call after each step).
    pub fn clamp_distributions(&self) {
        self.lifting_dist.clamp();
        for b in &self.blocks {
            b.conv1.dist.clamp();
            b.conv2.dist.clamp();
        }
    }
}
