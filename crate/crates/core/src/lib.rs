//! Partial group equivariant convolutional networks.
//!
//! Building blocks: point groups on the plane ([`group`]), a reverse-mode
//! f32 tensor tape ([`tensor`]), learnable sampling distributions over group
//! elements ([`dist`]), implicit neural kernel representations
//! ([`kernelnet`]), lifting / group / partial group convolutions and the
//! reference network ([`layers`]), equivariance-error analyzers
//! ([`analysis`]), and dataset tooling ([`data`]).

pub mod analysis;
pub mod data;
pub mod dist;
pub mod group;
pub mod kernelnet;
pub mod layers;
pub mod rng;
pub mod tensor;

pub use group::{FiberElement, GroupKind, GroupSpec};
pub use rng::Rng;
pub use tensor::{Param, Tape, Tensor, TensorData};
