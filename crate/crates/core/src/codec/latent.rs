//! Convolutional waveform autoencoder with a scalar-quantized bottleneck.
//!
//! The encoder downsamples by 8, 4, 4 and 2 (one latent frame per 256
//! samples) through channels 32, 64, 128, 128 and a final 80-channel
//! projection; the decoder mirrors it with transposed convolutions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{HOP, LATENT_DIM, SAMPLE_RATE};
use crate::error::{bail, Result};
use crate::nn::{Activation, Adam, Conv1d, ConvGeometry, ConvTranspose1d, Graph, Params, Tensor, Var};
use crate::quantizer::{plan_for, AllocationStrategy, BitrateSpec, ScalarQuantizer};
use crate::signal::AudioClip;

/// `(kernel, stride, padding)` per strided encoder stage; each maps `T`
/// samples to `T / stride`.
const DOWN: [(usize, usize, usize); 4] = [(16, 8, 4), (8, 4, 2), (8, 4, 2), (4, 2, 1)];
const CHANNELS: [usize; 4] = [32, 64, 128, 128];

/// Encoder output before quantization, `[80, frames]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSequence {
    pub values: Tensor,
    /// Bitrate of the codec that produced the sequence.
    pub source_bps: u32,
}

impl LatentSequence {
    pub fn n_frames(&self) -> usize {
        self.values.cols()
    }
}

#[derive(Debug, Clone)]
pub struct LatentCodec {
    pub params: Params,
    pub bitrate: BitrateSpec,
    pub sq: ScalarQuantizer,
    enc: Vec<Conv1d>,
    enc_out: Conv1d,
    dec_in: Conv1d,
    dec: Vec<ConvTranspose1d>,
}

/// Frames for a clip of `n` samples (`ceil(n / hop)`).
pub fn frames_for(n: usize) -> usize {
    n.div_ceil(HOP)
}

/// Zero-pads to a whole number of frames.
pub fn pad_to_frames(samples: &[f64]) -> Vec<f64> {
    let mut v = samples.to_vec();
    v.resize(frames_for(samples.len()) * HOP, 0.0);
    v
}

impl LatentCodec {
    pub fn new(bitrate: BitrateSpec, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::new();
        let mut enc = Vec::new();
        let mut c_in = 1;
        for (i, (&(k, s, p), &c)) in DOWN.iter().zip(&CHANNELS).enumerate() {
            enc.push(Conv1d::new(&mut params, &format!("enc.{i}"), c_in, c, k, ConvGeometry::strided(s, p), &mut rng)?);
            c_in = c;
        }
        let enc_out = Conv1d::new(&mut params, "enc.out", c_in, LATENT_DIM, 3, ConvGeometry::same(3, 1), &mut rng)?;
        let plan = plan_for(&bitrate, AllocationStrategy::PreferThreeBits)?;
        let sq = ScalarQuantizer::new(&mut params, "sq", LATENT_DIM, plan.code_dim, plan.levels, &mut rng)?;
        let dec_in = Conv1d::new(&mut params, "dec.in", LATENT_DIM, c_in, 3, ConvGeometry::same(3, 1), &mut rng)?;
        let mut dec = Vec::new();
        for i in (0..DOWN.len()).rev() {
            let (k, s, p) = DOWN[i];
            let c_out = if i == 0 { 1 } else { CHANNELS[i - 1] };
            dec.push(ConvTranspose1d::new(&mut params, &format!("dec.{i}"), CHANNELS[i], c_out, k, s, p, &mut rng)?);
        }
        Ok(Self { params, bitrate, sq, enc, enc_out, dec_in, dec })
    }

    /// Rebinds layer handles to a loaded parameter set.
    pub fn from_params(params: Params, bitrate: BitrateSpec) -> Result<Self> {
        let missing = |n: &str| crate::Error::Config(format!("latent codec checkpoint lacks {n}"));
        let mut enc = Vec::new();
        for (i, &(_, s, p)) in DOWN.iter().enumerate() {
            let name = format!("enc.{i}");
            enc.push(Conv1d::from_names(&params, &name, ConvGeometry::strided(s, p)).ok_or_else(|| missing(&name))?);
        }
        let enc_out = Conv1d::from_names(&params, "enc.out", ConvGeometry::same(3, 1)).ok_or_else(|| missing("enc.out"))?;
        let dec_in = Conv1d::from_names(&params, "dec.in", ConvGeometry::same(3, 1)).ok_or_else(|| missing("dec.in"))?;
        let mut dec = Vec::new();
        for i in (0..DOWN.len()).rev() {
            let (_, s, p) = DOWN[i];
            let name = format!("dec.{i}");
            dec.push(ConvTranspose1d::from_names(&params, &name, s, p).ok_or_else(|| missing(&name))?);
        }
        let plan = plan_for(&bitrate, AllocationStrategy::PreferThreeBits)?;
        let sq = ScalarQuantizer::from_params(&params, "sq", plan.levels)?;
        if sq.code_dim != plan.code_dim || sq.input_dim != LATENT_DIM {
            bail!(Config, "checkpoint quantizer is {}->{}, bitrate {} needs {}->{}", sq.input_dim, sq.code_dim, bitrate.target_bps, LATENT_DIM, plan.code_dim);
        }
        Ok(Self { params, bitrate, sq, enc, enc_out, dec_in, dec })
    }

    pub fn load(path: impl AsRef<std::path::Path>, bitrate: BitrateSpec) -> Result<Self> {
        Self::from_params(Params::load(path)?, bitrate)
    }

    pub fn encoder_graph(&self, g: &mut Graph, params: &Params, x: Var) -> Result<Var> {
        let mut h = x;
        for layer in &self.enc {
            h = layer.forward(g, params, h)?;
            h = g.activation(h, Activation::Elu)?;
        }
        self.enc_out.forward(g, params, h)
    }

    pub fn decoder_graph(&self, g: &mut Graph, params: &Params, z: Var) -> Result<Var> {
        let mut h = self.dec_in.forward(g, params, z)?;
        for layer in &self.dec {
            h = g.activation(h, Activation::Elu)?;
            h = layer.forward(g, params, h)?;
        }
        Ok(h)
    }

    /// Decoder reached through the continuous bottleneck
    /// `up(clamp(down(latent)))`.
    pub fn latent_decoder_graph(&self, g: &mut Graph, params: &Params, lat: Var) -> Result<Var> {
        let z = self.sq.forward_continuous(g, params, lat)?;
        self.decoder_graph(g, params, z)
    }

    pub fn encode_latents(&self, clip: &AudioClip) -> Result<LatentSequence> {
        if clip.sample_rate != SAMPLE_RATE {
            bail!(Config, "latent codec expects {SAMPLE_RATE} Hz, got {}", clip.sample_rate);
        }
        if clip.is_empty() {
            bail!(Data, "cannot encode an empty clip");
        }
        let x = pad_to_frames(&clip.samples);
        let n = x.len();
        let mut g = Graph::new();
        let xv = g.input(Tensor::matrix(1, n, x)?)?;
        let lat = self.encoder_graph(&mut g, &self.params, xv)?;
        Ok(LatentSequence { values: g.value(lat).clone(), source_bps: self.bitrate.target_bps })
    }

    pub fn quantize(&self, lat: &LatentSequence) -> Result<Vec<Vec<u32>>> {
        self.sq.quantize_sequence(&self.params, &lat.values)
    }

    /// Up-projected codes `[80, frames]`.
    pub fn dequantize(&self, indices: &[Vec<u32>]) -> Result<Tensor> {
        self.sq.dequantize_sequence(&self.params, indices)
    }

    /// Waveform from decoder-side features (`[80, frames]`, already past
    /// the bottleneck).
    pub fn decode_features(&self, z: &Tensor) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let zv = g.input(z.clone())?;
        let y = self.decoder_graph(&mut g, &self.params, zv)?;
        Ok(g.value(y).data().to_vec())
    }

    /// Waveform from unquantized latents.
    pub fn decode_latents(&self, lat: &Tensor) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let lv = g.input(lat.clone())?;
        let y = self.latent_decoder_graph(&mut g, &self.params, lv)?;
        Ok(g.value(y).data().to_vec())
    }

    /// Hard-quantized round trip through the codec.
    pub fn reconstruct(&self, clip: &AudioClip) -> Result<AudioClip> {
        let lat = self.encode_latents(clip)?;
        let z = self.dequantize(&self.quantize(&lat)?)?;
        AudioClip::new(self.decode_features(&z)?, SAMPLE_RATE)
    }

    /// One training loss on `x`: `noisy` selects NoiseSQ, otherwise the
    /// continuous bottleneck is used.
    pub fn loss_graph(&self, g: &mut Graph, params: &Params, x: &[f64], noisy: bool, rng: &mut impl Rng) -> Result<Var> {
        let xv = g.input(Tensor::matrix(1, x.len(), x.to_vec())?)?;
        let lat = self.encoder_graph(g, params, xv)?;
        let z = if noisy { self.sq.forward_noisy(g, params, lat, rng)? } else { self.sq.forward_continuous(g, params, lat)? };
        let y = self.decoder_graph(g, params, z)?;
        g.l1_l2(y, xv)
    }

    pub fn checksum(&self) -> String {
        self.params.checksum()
    }
}

/// Per-step training record.
#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub losses: Vec<f64>,
}

impl TrainLog {
    /// Mean of the first and last `k` losses.
    pub fn head_tail(&self, k: usize) -> (f64, f64) {
        let k = k.min(self.losses.len()).max(1);
        let m = |s: &[f64]| s.iter().sum::<f64>() / s.len().max(1) as f64;
        (m(&self.losses[..k.min(self.losses.len())]), m(&self.losses[self.losses.len().saturating_sub(k)..]))
    }
}

pub const GRAD_CLIP: f64 = 1.0;

/// Clips the gradient norm, then applies Adam.
pub fn clipped_step(opt: &mut Adam, params: &mut Params) -> Result<()> {
    let n = params.grad_norm();
    if !n.is_finite() {
        bail!(Training, "non-finite gradient norm");
    }
    if n > GRAD_CLIP {
        params.scale_grads(GRAD_CLIP / n);
    }
    opt.step(params)
}

/// Trains a codec by waveform reconstruction (L1 + L2) with NoiseSQ in the
/// bottleneck. `noisy = false` trains the continuous (unquantized) path.
pub fn train_codec_with(
    clips: &[AudioClip],
    bitrate: BitrateSpec,
    steps: usize,
    seed: u64,
    lr: f64,
    noisy: bool,
) -> Result<(LatentCodec, TrainLog)> {
    train_codec_observed(clips, bitrate, steps, seed, lr, noisy, &mut |_, _| {})
}

/// [`train_codec_with`], reporting `(step, loss)` after every update.
pub fn train_codec_observed(
    clips: &[AudioClip],
    bitrate: BitrateSpec,
    steps: usize,
    seed: u64,
    lr: f64,
    noisy: bool,
    observe: &mut dyn FnMut(usize, f64),
) -> Result<(LatentCodec, TrainLog)> {
    if clips.is_empty() {
        bail!(Data, "codec training needs at least one clip");
    }
    let mut codec = LatentCodec::new(bitrate, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c0de);
    let mut opt = Adam::new(lr);
    let padded: Vec<Vec<f64>> = clips.iter().map(|c| pad_to_frames(&c.samples)).collect();
    let mut log = TrainLog::default();
    for step in 0..steps {
        let x = &padded[rng.random_range(0..padded.len())];
        let mut g = Graph::new();
        let loss = codec.loss_graph(&mut g, &codec.params, x, noisy, &mut rng)?;
        let l = g.value(loss).item();
        if !l.is_finite() {
            bail!(Training, "codec loss diverged at step {step}");
        }
        log.losses.push(l);
        codec.params.zero_grad();
        g.backward(loss, &mut codec.params)?;
        clipped_step(&mut opt, &mut codec.params)?;
        observe(step + 1, l);
    }
    Ok((codec, log))
}

pub fn train_latent_codec(clips: &[AudioClip], bitrate: BitrateSpec, steps: usize, seed: u64) -> Result<LatentCodec> {
    Ok(train_codec_with(clips, bitrate, steps, seed, 1e-3, true)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(bps: u32) -> BitrateSpec {
        BitrateSpec::new(bps, SAMPLE_RATE, HOP).unwrap()
    }

    #[test]
    fn shapes_follow_the_hop() {
        let codec = LatentCodec::new(spec(3000), 0).unwrap();
        let clip = AudioClip::new(vec![0.1; 16000], SAMPLE_RATE).unwrap();
        let lat = codec.encode_latents(&clip).unwrap();
        assert_eq!(lat.values.shape(), &[80, 63]);
        let idx = codec.quantize(&lat).unwrap();
        assert_eq!((idx.len(), idx[0].len()), (63, 16));
        assert_eq!(codec.reconstruct(&clip).unwrap().len(), 63 * 256);
        assert_eq!(codec.decode_latents(&lat.values).unwrap().len(), 16128);
    }

    #[test]
    fn encode_is_deterministic_and_round_trips_through_params() {
        let codec = LatentCodec::new(spec(8000), 4).unwrap();
        assert_eq!(codec.sq.code_dim, 64);
        let clip = AudioClip::new((0..3000).map(|i| (i as f64 * 0.05).sin() * 0.3).collect(), SAMPLE_RATE).unwrap();
        let a = codec.encode_latents(&clip).unwrap();
        assert_eq!(a, codec.encode_latents(&clip).unwrap());
        let again = LatentCodec::from_params(Params::from_bytes(&codec.params.to_bytes()).unwrap(), spec(8000)).unwrap();
        assert_eq!(again.encode_latents(&clip).unwrap(), a);
        assert!(LatentCodec::from_params(codec.params.clone(), spec(3000)).is_err());
    }

    #[test]
    fn short_training_reduces_loss() {
        let clip = crate::codec::corpus::Corpus::builtin(1, 3).clips;
        let (_, log) = train_codec_with(&clip, spec(3000), 60, 1, 2e-3, true).unwrap();
        let (head, tail) = log.head_tail(10);
        assert!(tail < head, "{head} -> {tail}");
    }
}
