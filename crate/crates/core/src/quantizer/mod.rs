//! Discrete bottlenecks: scalar quantization with learnable projections,
//! a residual VQ baseline, and bitrate planning.

pub mod bitrate;
pub mod rvq;
pub mod sq;

pub use bitrate::{plan_bitrate, plan_for, AllocationStrategy, BitrateSpec, SqPlan};
pub use rvq::Rvq;
pub use sq::{level_value, nearest_level, ScalarQuantizer};
