//! Conditional denoiser: a dilated residual conv stack over
//! `concat(x_t, upsample(z))` with a per-block time embedding.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diffusion::{Denoiser, NoiseSchedule};
use crate::error::{bail, Result};
use crate::nn::{Activation, Conv1d, ConvGeometry, Graph, Linear, Params, Tensor, TimeEmbedding, Var};

pub const HIDDEN: usize = 64;
pub const TIME_DIM: usize = 32;
pub const DILATIONS: [usize; 4] = [1, 2, 4, 8];
/// Waveform outputs are folded into this many channels so that one network
/// column covers 16 samples.
pub const WAV_FOLD: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenoiserSpec {
    pub out_channels: usize,
    pub cond_channels: usize,
    /// Output columns per conditioning frame.
    pub upsample: usize,
}

#[derive(Debug, Clone, Copy)]
struct Block {
    conv: Conv1d,
    time: Linear,
    mix: Conv1d,
}

#[derive(Debug, Clone)]
pub struct DenoiserNet {
    pub spec: DenoiserSpec,
    embed: TimeEmbedding,
    conv_in: Conv1d,
    time1: Linear,
    time2: Linear,
    blocks: Vec<Block>,
    conv_out: Conv1d,
    /// Linear path from `x_t` to the output, so the width of the hidden
    /// stack does not cap the rank of the map.
    skip: Conv1d,
}

impl DenoiserNet {
    pub fn new(params: &mut Params, spec: DenoiserSpec, seed: u64) -> Result<Self> {
        if spec.upsample == 0 || spec.out_channels == 0 || spec.cond_channels == 0 {
            bail!(Config, "degenerate denoiser spec {spec:?}");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c_in = spec.out_channels + spec.cond_channels;
        let conv_in = Conv1d::new(params, "den.in", c_in, HIDDEN, 3, ConvGeometry::same(3, 1), &mut rng)?;
        let time1 = Linear::new(params, "den.time1", TIME_DIM, HIDDEN, &mut rng)?;
        let time2 = Linear::new(params, "den.time2", HIDDEN, HIDDEN, &mut rng)?;
        let mut blocks = Vec::new();
        for (i, &d) in DILATIONS.iter().enumerate() {
            blocks.push(Block {
                conv: Conv1d::new(params, &format!("den.block{i}.conv"), HIDDEN, HIDDEN, 3, ConvGeometry::same(3, d), &mut rng)?,
                time: Linear::new(params, &format!("den.block{i}.time"), HIDDEN, HIDDEN, &mut rng)?,
                mix: Conv1d::new(params, &format!("den.block{i}.mix"), HIDDEN, HIDDEN, 1, ConvGeometry::same(1, 1), &mut rng)?,
            });
        }
        let conv_out = Conv1d::new(params, "den.out", HIDDEN, spec.out_channels, 1, ConvGeometry::same(1, 1), &mut rng)?;
        let skip = Conv1d::new(params, "den.skip", spec.out_channels, spec.out_channels, 1, ConvGeometry::same(1, 1), &mut rng)?;
        // an untrained network predicts zeros
        params.value_mut(conv_out.w).fill(0.0);
        params.value_mut(skip.w).fill(0.0);
        Ok(Self { spec, embed: TimeEmbedding::new(TIME_DIM)?, conv_in, time1, time2, blocks, conv_out, skip })
    }

    pub fn from_params(params: &Params, spec: DenoiserSpec) -> Result<Self> {
        let missing = |n: &str| crate::Error::Config(format!("denoiser checkpoint lacks {n}"));
        let conv = |n: &str, geo| Conv1d::from_names(params, n, geo).ok_or_else(|| missing(n));
        let lin = |n: &str| Linear::from_names(params, n).ok_or_else(|| missing(n));
        let conv_in = conv("den.in", ConvGeometry::same(3, 1))?;
        let c_in = params.value(conv_in.w).shape()[1];
        if c_in != spec.out_channels + spec.cond_channels {
            bail!(Config, "denoiser checkpoint takes {c_in} input channels, config needs {}", spec.out_channels + spec.cond_channels);
        }
        let mut blocks = Vec::new();
        for (i, &d) in DILATIONS.iter().enumerate() {
            blocks.push(Block {
                conv: conv(&format!("den.block{i}.conv"), ConvGeometry::same(3, d))?,
                time: lin(&format!("den.block{i}.time"))?,
                mix: conv(&format!("den.block{i}.mix"), ConvGeometry::same(1, 1))?,
            });
        }
        Ok(Self {
            spec,
            embed: TimeEmbedding::new(TIME_DIM)?,
            conv_in,
            time1: lin("den.time1")?,
            time2: lin("den.time2")?,
            blocks,
            conv_out: conv("den.out", ConvGeometry::same(1, 1))?,
            skip: conv("den.skip", ConvGeometry::same(1, 1))?,
        })
    }

    /// `x_t [out, L]`, `z [cond, L / upsample]`, `t_norm` in `[0, 1]`.
    pub fn forward(&self, g: &mut Graph, params: &Params, x_t: Var, z: Var, t_norm: f64) -> Result<Var> {
        let (cx, len) = dims(g, x_t)?;
        let (cz, frames) = dims(g, z)?;
        if cx != self.spec.out_channels || cz != self.spec.cond_channels {
            bail!(Shape, "denoiser expects {}+{} channels, got {cx}+{cz}", self.spec.out_channels, self.spec.cond_channels);
        }
        if frames * self.spec.upsample != len {
            bail!(Shape, "{frames} conditioning frames x {} != {len} output columns", self.spec.upsample);
        }
        let z_up = if self.spec.upsample > 1 { g.repeat_cols(z, self.spec.upsample)? } else { z };
        let input = g.concat_rows(x_t, z_up)?;
        let mut h = self.conv_in.forward(g, params, input)?;

        let e = g.input(Tensor::matrix(TIME_DIM, 1, self.embed.embed(t_norm)?)?)?;
        let e = self.time1.forward(g, params, e)?;
        let e = g.activation(e, Activation::Silu)?;
        let temb = self.time2.forward(g, params, e)?;

        for b in &self.blocks {
            let te = b.time.forward(g, params, temb)?;
            let te = g.repeat_cols(te, len)?;
            let u = g.activation(h, Activation::Silu)?;
            let u = b.conv.forward(g, params, u)?;
            let u = g.add(u, te)?;
            let u = g.activation(u, Activation::Silu)?;
            let u = b.mix.forward(g, params, u)?;
            let sum = g.add(h, u)?;
            h = g.scale(sum, std::f64::consts::FRAC_1_SQRT_2)?;
        }
        let h = g.activation(h, Activation::Silu)?;
        let y = self.conv_out.forward(g, params, h)?;
        let direct = self.skip.forward(g, params, x_t)?;
        g.add(y, direct)
    }
}

fn dims(g: &Graph, v: Var) -> Result<(usize, usize)> {
    match g.value(v).shape() {
        &[c, t] => Ok((c, t)),
        s => bail!(Shape, "expected a [channels, frames] tensor, got {s:?}"),
    }
}

/// Binds a network to its parameters for the sampler.
pub struct BoundDenoiser<'a> {
    pub net: &'a DenoiserNet,
    pub params: &'a Params,
}

impl Denoiser for BoundDenoiser<'_> {
    fn predict(&self, x_t: &Tensor, z: &Tensor, t: usize, schedule: &NoiseSchedule) -> Result<Tensor> {
        let mut g = Graph::new();
        let x = g.input(x_t.clone())?;
        let zv = g.input(z.clone())?;
        let y = self.net.forward(&mut g, self.params, x, zv, schedule.time_input(t))?;
        Ok(g.value(y).clone())
    }
}

/// Per-channel affine normalization, stored alongside model weights as
/// `{prefix}.mean` and `{prefix}.std`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    pub const MIN_STD: f64 = 1e-4;

    /// Statistics over the columns of every `[C, *]` tensor.
    pub fn fit(tensors: &[&Tensor]) -> Result<Self> {
        let Some(first) = tensors.first() else {
            bail!(Data, "no data to fit channel statistics");
        };
        let c = first.rows();
        let mut sum = vec![0.0; c];
        let mut sq = vec![0.0; c];
        let mut n = 0usize;
        for t in tensors {
            if t.rows() != c {
                bail!(Shape, "channel count varies: {c} vs {}", t.rows());
            }
            let cols = t.cols();
            for (r, row) in t.data().chunks(cols).enumerate() {
                sum[r] += row.iter().sum::<f64>();
                sq[r] += row.iter().map(|v| v * v).sum::<f64>();
            }
            n += cols;
        }
        let n = n.max(1) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq.iter().zip(&mean).map(|(s, m)| (s / n - m * m).max(0.0).sqrt().max(Self::MIN_STD)).collect();
        Ok(Self { mean, std })
    }

    pub fn store(&self, params: &mut Params, prefix: &str) -> Result<()> {
        let c = self.mean.len();
        params.add(format!("{prefix}.mean"), Tensor::new(vec![c], self.mean.clone())?)?;
        params.add(format!("{prefix}.std"), Tensor::new(vec![c], self.std.clone())?)?;
        Ok(())
    }

    pub fn load(params: &Params, prefix: &str) -> Result<Self> {
        let get = |n: String| {
            params.id(&n).map(|id| params.value(id).data().to_vec()).ok_or_else(|| crate::Error::Config(format!("checkpoint lacks {n}")))
        };
        let s = Self { mean: get(format!("{prefix}.mean"))?, std: get(format!("{prefix}.std"))? };
        if s.mean.len() != s.std.len() || s.std.iter().any(|v| !(*v > 0.0)) {
            bail!(Config, "invalid {prefix} statistics");
        }
        Ok(s)
    }

    fn map(&self, t: &Tensor, f: impl Fn(f64, f64, f64) -> f64) -> Result<Tensor> {
        if t.rows() != self.mean.len() {
            bail!(Shape, "{} channels, statistics cover {}", t.rows(), self.mean.len());
        }
        let cols = t.cols();
        let mut out = t.clone();
        for (r, row) in out.data_mut().chunks_mut(cols).enumerate() {
            row.iter_mut().for_each(|v| *v = f(*v, self.mean[r], self.std[r]));
        }
        Ok(out)
    }

    pub fn normalize(&self, t: &Tensor) -> Result<Tensor> {
        self.map(t, |v, m, s| (v - m) / s)
    }

    pub fn denormalize(&self, t: &Tensor) -> Result<Tensor> {
        self.map(t, |v, m, s| v * s + m)
    }
}

/// `[fold, n / fold]` with column `j` holding samples `j*fold..(j+1)*fold`.
pub fn fold_samples(samples: &[f64], fold: usize) -> Result<Tensor> {
    if fold == 0 || samples.len() % fold != 0 {
        bail!(Shape, "{} samples do not fold by {fold}", samples.len());
    }
    let cols = samples.len() / fold;
    let mut data = vec![0.0; samples.len()];
    for (j, chunk) in samples.chunks(fold).enumerate() {
        for (r, &v) in chunk.iter().enumerate() {
            data[r * cols + j] = v;
        }
    }
    Tensor::matrix(fold, cols, data)
}

pub fn unfold_samples(t: &Tensor) -> Vec<f64> {
    let (rows, cols) = (t.rows(), t.cols());
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for j in 0..cols {
            out[j * rows + r] = t.data()[r * cols + j];
        }
    }
    out
}
