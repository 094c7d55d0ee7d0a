//! The coding pipeline: configurations, corpora, learned codecs and the
//! conditional diffusion decoder.

pub mod config;
pub mod corpus;
pub mod denoiser;
pub mod latent;
pub mod pipeline;
pub mod train;
pub mod postnet;

pub use config::{enumerate_configs, CodecConfig, ConfigKind, Domain, HOP, LATENT_DIM, SAMPLE_RATE};
pub use corpus::Corpus;
pub use latent::{LatentCodec, LatentSequence};
