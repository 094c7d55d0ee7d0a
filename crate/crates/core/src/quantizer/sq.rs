//! Scalar quantization with learnable projections.
//!
//! Codes are `clamp(down_proj(x), -1, 1)` and are rounded to `L` uniformly
//! spaced levels on `[-1, 1]`. During training the rounding is replaced by
//! additive uniform noise of one quantization step (NoiseSQ); hard rounding
//! is used only at inference.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{bail, Result};
use crate::nn::{Graph, Linear, Params, Tensor, Var};

#[derive(Debug, Clone, Copy)]
pub struct ScalarQuantizer {
    pub input_dim: usize,
    pub code_dim: usize,
    pub levels: usize,
    pub down: Linear,
    pub up: Linear,
}

/// Level index nearest to `code` on the `levels`-point grid; exact ties go
/// to the lower index.
pub fn nearest_level(code: f64, levels: usize) -> u32 {
    let top = (levels - 1) as f64;
    let c = code.clamp(-1.0, 1.0);
    let mut i = (((c + 1.0) * top / 2.0) - 0.5).ceil().clamp(0.0, top) as usize;
    let dist = |k: usize| (c - level_value(k, levels)).abs();
    if i > 0 && dist(i - 1) <= dist(i) {
        i -= 1;
    } else if i + 1 < levels && dist(i + 1) < dist(i) {
        i += 1;
    }
    i as u32
}

/// Value of level `k`, `(2k - (L-1)) / (L-1)`; endpoints are exactly +-1.
pub fn level_value(k: usize, levels: usize) -> f64 {
    let top = (levels - 1) as f64;
    (2.0 * k as f64 - top) / top
}

pub fn bits_for_levels(levels: usize) -> usize {
    (usize::BITS - (levels - 1).leading_zeros()) as usize
}

impl ScalarQuantizer {
    fn check_levels(levels: usize) -> Result<()> {
        if levels < 2 {
            bail!(Config, "scalar quantizer needs at least 2 levels, got {levels}");
        }
        Ok(())
    }

    /// Projections initialized so typical unit-scale inputs land inside the
    /// clamp range.
    pub fn new(
        params: &mut Params,
        prefix: &str,
        input_dim: usize,
        code_dim: usize,
        levels: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Self::check_levels(levels)?;
        let bound_down = (1.0 / input_dim as f64).sqrt();
        let bound_up = (3.0 / code_dim as f64).sqrt();
        let down = Linear::with_weights(
            params,
            &format!("{prefix}.down"),
            crate::nn::params::scaled_uniform(&[code_dim, input_dim], bound_down, rng),
            Tensor::zeros(&[code_dim]),
        )?;
        let up = Linear::with_weights(
            params,
            &format!("{prefix}.up"),
            crate::nn::params::scaled_uniform(&[input_dim, code_dim], bound_up, rng),
            Tensor::zeros(&[input_dim]),
        )?;
        Ok(Self { input_dim, code_dim, levels, down, up })
    }

    /// Both projections are the identity (`input_dim == code_dim`).
    pub fn identity(params: &mut Params, prefix: &str, dim: usize, levels: usize) -> Result<Self> {
        Self::check_levels(levels)?;
        let mut eye = vec![0.0; dim * dim];
        for i in 0..dim {
            eye[i * dim + i] = 1.0;
        }
        let down = Linear::with_weights(params, &format!("{prefix}.down"), Tensor::matrix(dim, dim, eye.clone())?, Tensor::zeros(&[dim]))?;
        let up = Linear::with_weights(params, &format!("{prefix}.up"), Tensor::matrix(dim, dim, eye)?, Tensor::zeros(&[dim]))?;
        Ok(Self { input_dim: dim, code_dim: dim, levels, down, up })
    }

    /// Rebinds to projections already present in `params`.
    pub fn from_params(params: &Params, prefix: &str, levels: usize) -> Result<Self> {
        Self::check_levels(levels)?;
        let (Some(down), Some(up)) =
            (Linear::from_names(params, &format!("{prefix}.down")), Linear::from_names(params, &format!("{prefix}.up")))
        else {
            bail!(Config, "checkpoint lacks {prefix} projections");
        };
        let ds = params.value(down.w).shape();
        let us = params.value(up.w).shape();
        if ds.len() != 2 || us.len() != 2 || ds[0] != us[1] || ds[1] != us[0] {
            bail!(Shape, "{prefix}: inconsistent projection shapes {:?} / {:?}", ds, us);
        }
        Ok(Self { input_dim: ds[1], code_dim: ds[0], levels, down, up })
    }

    pub fn step(&self) -> f64 {
        2.0 / (self.levels - 1) as f64
    }

    pub fn bits_per_dim(&self) -> usize {
        bits_for_levels(self.levels)
    }

    pub fn bits_per_frame(&self) -> usize {
        self.code_dim * self.bits_per_dim()
    }

    fn apply(params: &Params, layer: &Linear, x: &[f64]) -> Vec<f64> {
        let w = params.value(layer.w);
        let b = params.value(layer.b).data();
        let d_in = w.shape()[1];
        w.data().chunks(d_in).zip(b).map(|(row, bb)| row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + bb).collect()
    }

    /// `clamp(down_proj(x), -1, 1)`.
    pub fn project(&self, params: &Params, frame: &[f64]) -> Result<Vec<f64>> {
        if frame.len() != self.input_dim {
            bail!(Shape, "frame has {} values, quantizer expects {}", frame.len(), self.input_dim);
        }
        if frame.iter().any(|v| !v.is_finite()) {
            bail!(Data, "non-finite value in frame");
        }
        Ok(Self::apply(params, &self.down, frame).into_iter().map(|c| c.clamp(-1.0, 1.0)).collect())
    }

    pub fn quantize(&self, params: &Params, frame: &[f64]) -> Result<Vec<u32>> {
        Ok(self.project(params, frame)?.into_iter().map(|c| nearest_level(c, self.levels)).collect())
    }

    /// Level values for an index vector, before the up-projection.
    pub fn codes(&self, indices: &[u32]) -> Result<Vec<f64>> {
        if indices.len() != self.code_dim {
            bail!(Shape, "index vector has {} entries, expected {}", indices.len(), self.code_dim);
        }
        indices
            .iter()
            .map(|&i| {
                if (i as usize) < self.levels {
                    Ok(level_value(i as usize, self.levels))
                } else {
                    bail!(Data, "index {i} out of range for {} levels", self.levels)
                }
            })
            .collect()
    }

    pub fn dequantize(&self, params: &Params, indices: &[u32]) -> Result<Vec<f64>> {
        Ok(Self::apply(params, &self.up, &self.codes(indices)?))
    }

    /// Training-mode forward without a graph: project, clamp, add
    /// `U(-step/2, step/2)` noise, up-project.
    pub fn noise_sq_train(&self, params: &Params, frame: &[f64], rng: &mut impl Rng) -> Result<Vec<f64>> {
        let codes = self.project(params, frame)?;
        let noisy = self.add_noise(&codes, rng);
        Ok(Self::apply(params, &self.up, &noisy))
    }

    pub fn add_noise(&self, codes: &[f64], rng: &mut impl Rng) -> Vec<f64> {
        let half = self.step() / 2.0;
        let dist = Uniform::new(-half, half).expect("step is positive");
        codes.iter().map(|c| c + dist.sample(rng)).collect()
    }

    /// Frames of a `[input_dim, frames]` sequence to index vectors.
    pub fn quantize_sequence(&self, params: &Params, x: &Tensor) -> Result<Vec<Vec<u32>>> {
        let (c, t) = (x.rows(), x.cols());
        if c != self.input_dim {
            bail!(Shape, "sequence has {c} channels, quantizer expects {}", self.input_dim);
        }
        let d = x.data();
        (0..t)
            .map(|f| {
                let frame: Vec<f64> = (0..c).map(|ch| d[ch * t + f]).collect();
                self.quantize(params, &frame)
            })
            .collect()
    }

    /// Index vectors back to a `[input_dim, frames]` sequence.
    pub fn dequantize_sequence(&self, params: &Params, indices: &[Vec<u32>]) -> Result<Tensor> {
        let t = indices.len();
        let mut out = vec![0.0; self.input_dim * t];
        for (f, idx) in indices.iter().enumerate() {
            for (ch, v) in self.dequantize(params, idx)?.into_iter().enumerate() {
                out[ch * t + f] = v;
            }
        }
        Tensor::matrix(self.input_dim, t, out)
    }

    /// Differentiable training path on a `[input_dim, frames]` variable.
    /// The noise is a constant of the graph; gradients reach both
    /// projections.
    pub fn forward_noisy(&self, g: &mut Graph, params: &Params, x: Var, rng: &mut impl Rng) -> Result<Var> {
        let codes = self.down.forward(g, params, x)?;
        let codes = g.clamp(codes, -1.0, 1.0)?;
        let shape = g.value(codes).shape().to_vec();
        let half = self.step() / 2.0;
        let dist = Uniform::new(-half, half).expect("step is positive");
        let noise: Vec<f64> = (0..g.value(codes).len()).map(|_| dist.sample(rng)).collect();
        let noise = g.input(Tensor::new(shape, noise)?)?;
        let noisy = g.add(codes, noise)?;
        self.up.forward(g, params, noisy)
    }

    /// `up_proj(clamp(down_proj(x)))`: the zero-width-noise limit.
    pub fn forward_continuous(&self, g: &mut Graph, params: &Params, x: Var) -> Result<Var> {
        let codes = self.down.forward(g, params, x)?;
        let codes = g.clamp(codes, -1.0, 1.0)?;
        self.up.forward(g, params, codes)
    }
}
