//! Bitrate bookkeeping: target bits per second to scalar-quantizer geometry.

use serde::{Deserialize, Serialize};

use super::sq::bits_for_levels;
use crate::error::{bail, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitrateSpec {
    pub target_bps: u32,
    pub sample_rate: u32,
    pub hop: usize,
}

impl BitrateSpec {
    /// Rejects rates whose bits per frame are not a positive integer.
    pub fn new(target_bps: u32, sample_rate: u32, hop: usize) -> Result<Self> {
        if sample_rate == 0 || hop == 0 {
            bail!(Config, "sample rate and hop must be positive");
        }
        let num = target_bps as u64 * hop as u64;
        if target_bps == 0 || num % sample_rate as u64 != 0 {
            bail!(
                Config,
                "{target_bps} bps at {} frames/s is not a whole number of bits per frame",
                sample_rate as f64 / hop as f64
            );
        }
        Ok(Self { target_bps, sample_rate, hop })
    }

    pub fn frame_rate(&self) -> f64 {
        self.sample_rate as f64 / self.hop as f64
    }

    pub fn bits_per_frame(&self) -> usize {
        (self.target_bps as u64 * self.hop as u64 / self.sample_rate as u64) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AllocationStrategy {
    /// 8 levels (3 bits) per dimension when the budget divides by 3,
    /// otherwise 4 levels (2 bits).
    #[default]
    PreferThreeBits,
    /// A fixed level count; the budget must divide by its bit width.
    FixedLevels(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SqPlan {
    pub code_dim: usize,
    pub levels: usize,
}

impl SqPlan {
    pub fn bits_per_dim(&self) -> usize {
        bits_for_levels(self.levels)
    }

    pub fn bits_per_frame(&self) -> usize {
        self.code_dim * self.bits_per_dim()
    }
}

/// Chooses `(code_dim, levels)` spending exactly the per-frame bit budget.
pub fn plan_bitrate(target_bps: u32, frame_rate: f64, strategy: AllocationStrategy) -> Result<SqPlan> {
    if !(frame_rate.is_finite() && frame_rate > 0.0) {
        bail!(Config, "frame rate must be positive, got {frame_rate}");
    }
    let exact = target_bps as f64 / frame_rate;
    let bits = exact.round();
    if bits < 1.0 || (exact - bits).abs() > 1e-9 {
        bail!(Config, "{target_bps} bps at {frame_rate} frames/s is not a whole number of bits per frame");
    }
    plan_bits(bits as usize, strategy)
}

pub fn plan_for(spec: &BitrateSpec, strategy: AllocationStrategy) -> Result<SqPlan> {
    plan_bits(spec.bits_per_frame(), strategy)
}

fn plan_bits(bits: usize, strategy: AllocationStrategy) -> Result<SqPlan> {
    let candidates: &[usize] = match strategy {
        AllocationStrategy::PreferThreeBits => &[8, 4],
        AllocationStrategy::FixedLevels(ref l) => std::slice::from_ref(l),
    };
    for &levels in candidates {
        if levels < 2 {
            bail!(Config, "a quantizer needs at least 2 levels");
        }
        let b = bits_for_levels(levels);
        if bits % b == 0 {
            return Ok(SqPlan { code_dim: bits / b, levels });
        }
    }
    bail!(Config, "no (code_dim, levels) pair spends exactly {bits} bits per frame")
}
