//! Particle blob method for one-dimensional aggregation-diffusion equations
//! `ρ_t = ν Δρ^m + ∇·(ρ ∇(W * ρ))`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod density;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod integrator;
pub mod kernels;
pub mod mollifier;
pub mod quadrature;
pub mod special;

pub use error::{Error, Result};
pub use kernels::KernelSpec;
pub use mollifier::Mollifier;
