//! Diffusion-based neural speech codecs at desk scale.
//!
//! The crate covers the full conditioning/output design space
//! (`mel`/`lat` conditioning, `wav`/`mel`/`lat` output): signal analysis,
//! a small reverse-mode neural kernel, scalar and residual quantizers,
//! DDPM training and ancestral sampling, the six codec pipelines, a
//! bit-exact stream format and an objective evaluation harness.

pub mod bitstream;
pub mod cli;
pub mod codec;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod nn;
pub mod quantizer;
pub mod signal;

pub use error::{Error, Result};
