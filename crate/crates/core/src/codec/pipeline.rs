//! Encode/decode pipelines for the six (conditioning, output) cells and
//! their run-directory checkpoints.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{CodecConfig, Domain, HOP, LATENT_DIM, SAMPLE_RATE, TARGET_CODEC_BPS};
use super::denoiser::{fold_samples, unfold_samples, BoundDenoiser, ChannelStats, DenoiserNet, DenoiserSpec, WAV_FOLD};
use super::latent::{pad_to_frames, LatentCodec};
use super::postnet::PostNet;
use crate::bitstream::{Bitstream, BitstreamHeader};
use crate::diffusion::{make_schedule, sample, NoiseSchedule, DEFAULT_BETA_MAX, DEFAULT_BETA_MIN};
use crate::error::{bail, Result};
use crate::nn::{Params, Tensor};
use crate::quantizer::{plan_for, AllocationStrategy, BitrateSpec, ScalarQuantizer};
use crate::signal::{AudioClip, GriffinLim, MelAnalyzer, MelConfig, MelSpectrogram};

pub const CONFIG_FILE: &str = "config.txt";
pub const SCHEDULE_FILE: &str = "schedule.txt";
pub const DENOISER_FILE: &str = "denoiser.dnsm";
pub const COND_CODEC_FILE: &str = "latent_codec.dnsm";
pub const TARGET_CODEC_FILE: &str = "target_codec.dnsm";
pub const DECODER_FILE: &str = "decoder.dnsm";

pub fn target_bitrate() -> BitrateSpec {
    BitrateSpec::new(TARGET_CODEC_BPS, SAMPLE_RATE, HOP).expect("target bitrate is valid")
}

pub fn training_schedule(cfg: &CodecConfig) -> Result<NoiseSchedule> {
    make_schedule(cfg.t_train, DEFAULT_BETA_MIN, DEFAULT_BETA_MAX)
}

pub fn denoiser_spec(cfg: &CodecConfig) -> DenoiserSpec {
    match cfg.kind.out {
        Domain::Wav => DenoiserSpec { out_channels: WAV_FOLD, cond_channels: LATENT_DIM, upsample: HOP / WAV_FOLD },
        _ => DenoiserSpec { out_channels: LATENT_DIM, cond_channels: LATENT_DIM, upsample: 1 },
    }
}

/// Denoiser weights together with target/conditioning normalization and,
/// for mel conditioning, the jointly trained scalar quantizer.
#[derive(Debug, Clone)]
pub struct DiffusionModel {
    pub params: Params,
    pub net: DenoiserNet,
    pub x_stats: ChannelStats,
    pub c_stats: ChannelStats,
    pub sq: Option<ScalarQuantizer>,
}

impl DiffusionModel {
    pub fn new(cfg: &CodecConfig, x_stats: ChannelStats, c_stats: ChannelStats, seed: u64) -> Result<Self> {
        let mut params = Params::new();
        let net = DenoiserNet::new(&mut params, denoiser_spec(cfg), seed)?;
        let sq = if cfg.kind.trains_sq() {
            let plan = plan_for(&cfg.bitrate, AllocationStrategy::PreferThreeBits)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51);
            Some(ScalarQuantizer::new(&mut params, "sq", LATENT_DIM, plan.code_dim, plan.levels, &mut rng)?)
        } else {
            None
        };
        x_stats.store(&mut params, "stats.x")?;
        c_stats.store(&mut params, "stats.c")?;
        Ok(Self { params, net, x_stats, c_stats, sq })
    }

    pub fn from_params(cfg: &CodecConfig, params: Params) -> Result<Self> {
        let net = DenoiserNet::from_params(&params, denoiser_spec(cfg))?;
        let sq = if cfg.kind.trains_sq() {
            let plan = plan_for(&cfg.bitrate, AllocationStrategy::PreferThreeBits)?;
            let sq = ScalarQuantizer::from_params(&params, "sq", plan.levels)?;
            if sq.code_dim != plan.code_dim {
                bail!(Config, "denoiser checkpoint quantizer has {} dims, bitrate needs {}", sq.code_dim, plan.code_dim);
            }
            Some(sq)
        } else {
            None
        };
        let x_stats = ChannelStats::load(&params, "stats.x")?;
        let c_stats = ChannelStats::load(&params, "stats.c")?;
        Ok(Self { params, net, x_stats, c_stats, sq })
    }
}

/// Stage that turns generated features into a waveform.
#[derive(Debug, Clone)]
pub enum DecoderStage {
    /// Post-net on normalized mels, then Griffin-Lim.
    PostNet { net: PostNet, params: Params },
    /// Decoder of the high-bitrate latent codec.
    Latent(LatentCodec),
}

impl DecoderStage {
    pub fn params(&self) -> &Params {
        match self {
            Self::PostNet { params, .. } => params,
            Self::Latent(c) => &c.params,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    pub config: CodecConfig,
    pub schedule: NoiseSchedule,
    pub analyzer: MelAnalyzer,
    pub vocoder: GriffinLim,
    pub cond_codec: Option<LatentCodec>,
    pub target_codec: Option<LatentCodec>,
    pub dm: DiffusionModel,
    pub decoder: Option<DecoderStage>,
}

impl Pipeline {
    pub fn build(
        config: CodecConfig,
        cond_codec: Option<LatentCodec>,
        target_codec: Option<LatentCodec>,
        dm: DiffusionModel,
        decoder: Option<DecoderStage>,
    ) -> Result<Self> {
        config.validate()?;
        let kind = config.kind;
        if kind.needs_cond_codec() != cond_codec.is_some() {
            bail!(Config, "{kind} {} a conditioning codec", if kind.needs_cond_codec() { "needs" } else { "takes no" });
        }
        if kind.needs_target_codec() != target_codec.is_some() {
            bail!(Config, "{kind} {} a target codec", if kind.needs_target_codec() { "needs" } else { "takes no" });
        }
        if kind.has_decoder() != decoder.is_some() {
            bail!(Config, "{kind} {} a decoder stage", if kind.has_decoder() { "needs" } else { "takes no" });
        }
        if let Some(c) = &cond_codec {
            if c.bitrate != config.bitrate {
                bail!(Config, "conditioning codec runs at {} bps, config wants {}", c.bitrate.target_bps, config.bitrate.target_bps);
            }
        }
        if kind.trains_sq() != dm.sq.is_some() {
            bail!(Config, "denoiser checkpoint quantizer does not match {kind}");
        }
        let schedule = training_schedule(&config)?;
        let analyzer = MelAnalyzer::new(MelConfig::default())?;
        let vocoder = GriffinLim::new(MelConfig::default(), GriffinLim::DEFAULT_ITERATIONS)?;
        Ok(Self { config, schedule, analyzer, vocoder, cond_codec, target_codec, dm, decoder })
    }

    /// Decoder stage before matched fine-tuning.
    pub fn base_decoder(&self) -> Result<Option<DecoderStage>> {
        base_decoder(&self.config, self.target_codec.as_ref())
    }

    fn quantizer_plan(&self) -> Result<(usize, usize)> {
        let sq = match (&self.dm.sq, &self.cond_codec) {
            (Some(sq), _) => sq,
            (None, Some(c)) => &c.sq,
            _ => bail!(Config, "pipeline has no conditioning quantizer"),
        };
        Ok((sq.code_dim, sq.bits_per_dim()))
    }

    /// Channel-major log-mel `[80, frames]`.
    pub fn log_mel(&self, clip: &AudioClip) -> Result<Tensor> {
        log_mel(&self.analyzer, clip)
    }

    /// Diffusion target in its raw (unnormalized) domain.
    pub fn target(&self, clip: &AudioClip) -> Result<Tensor> {
        target_features(self.config.kind.out, &self.analyzer, self.target_codec.as_ref(), clip)
    }

    pub fn encode_indices(&self, clip: &AudioClip) -> Result<Vec<Vec<u32>>> {
        check_clip(clip)?;
        match self.config.kind.cond {
            Domain::Mel => {
                let c = self.dm.c_stats.normalize(&self.log_mel(clip)?)?;
                self.dm.sq.as_ref().expect("checked at build").quantize_sequence(&self.dm.params, &c)
            }
            _ => {
                let codec = self.cond_codec.as_ref().expect("checked at build");
                codec.quantize(&codec.encode_latents(clip)?)
            }
        }
    }

    /// Normalized conditioning `z [80, frames]` seen by the denoiser.
    pub fn conditioning(&self, indices: &[Vec<u32>]) -> Result<Tensor> {
        match self.config.kind.cond {
            Domain::Mel => self.dm.sq.as_ref().expect("checked at build").dequantize_sequence(&self.dm.params, indices),
            _ => {
                let codec = self.cond_codec.as_ref().expect("checked at build");
                self.dm.c_stats.normalize(&codec.dequantize(indices)?)
            }
        }
    }

    pub fn header_for(&self, n_frames: usize) -> Result<BitstreamHeader> {
        let (code_dim, bits) = self.quantizer_plan()?;
        Ok(BitstreamHeader {
            config_id: self.config.kind.id(),
            sample_rate: SAMPLE_RATE,
            hop: HOP as u16,
            n_frames: u32::try_from(n_frames).map_err(|_| crate::Error::Data("clip too long".into()))?,
            code_dim: u8::try_from(code_dim).map_err(|_| crate::Error::Config(format!("{code_dim} code dims exceed the header")))?,
            bits_per_dim: bits as u8,
            target_bps: self.config.bitrate.target_bps,
        })
    }

    pub fn encode(&self, clip: &AudioClip) -> Result<Bitstream> {
        let indices = self.encode_indices(clip)?;
        Bitstream::new(self.header_for(indices.len())?, &indices)
    }

    /// Rejects streams produced by a different configuration.
    pub fn check_header(&self, h: &BitstreamHeader) -> Result<()> {
        let want = self.header_for(h.n_frames as usize)?;
        if h.config_id != want.config_id {
            bail!(Format, "stream is config {}, run directory is {} ({})", h.config_id, want.config_id, self.config.kind);
        }
        if (h.sample_rate, h.hop) != (want.sample_rate, want.hop) {
            bail!(Format, "stream framing {} Hz / hop {} does not match {} / {}", h.sample_rate, h.hop, want.sample_rate, want.hop);
        }
        if (h.code_dim, h.bits_per_dim, h.target_bps) != (want.code_dim, want.bits_per_dim, want.target_bps) {
            bail!(
                Format,
                "stream codes {}x{} bits at {} bps, pipeline expects {}x{} at {}",
                h.code_dim,
                h.bits_per_dim,
                h.target_bps,
                want.code_dim,
                want.bits_per_dim,
                want.target_bps
            );
        }
        if h.n_frames == 0 {
            bail!(Format, "stream has no frames");
        }
        Ok(())
    }

    /// Sampling schedule with `steps` reverse steps.
    pub fn sampling_schedule(&self, steps: usize) -> Result<NoiseSchedule> {
        if steps == self.schedule.steps() {
            Ok(self.schedule.clone())
        } else {
            self.schedule.subsample(steps)
        }
    }

    /// Generated output features in the raw domain.
    pub fn generate(&self, z: &Tensor, seed: u64, steps: usize) -> Result<Tensor> {
        let s = self.sampling_schedule(steps)?;
        let spec = self.dm.net.spec;
        let shape = [spec.out_channels, z.cols() * spec.upsample];
        let d = BoundDenoiser { net: &self.dm.net, params: &self.dm.params };
        let x = sample(&d, z, &s, &shape, seed, self.config.parameterization)?;
        self.dm.x_stats.denormalize(&x)
    }

    /// Waveform from raw output features through `decoder`.
    pub fn render_with(&self, decoder: Option<&DecoderStage>, x: &Tensor, seed: u64) -> Result<AudioClip> {
        match (self.config.kind.out, decoder) {
            (Domain::Wav, _) => AudioClip::new(unfold_samples(x), SAMPLE_RATE),
            (Domain::Mel, Some(DecoderStage::PostNet { net, params })) => {
                let y = self.dm.x_stats.denormalize(&net.apply(params, &self.dm.x_stats.normalize(x)?)?)?;
                self.vocode(&y, seed)
            }
            (Domain::Lat, Some(DecoderStage::Latent(codec))) => AudioClip::new(codec.decode_latents(x)?, SAMPLE_RATE),
            (out, _) => bail!(Config, "no decoder stage for {} output", out.as_str()),
        }
    }

    /// Griffin-Lim on a channel-major log-mel.
    pub fn vocode(&self, mel: &Tensor, seed: u64) -> Result<AudioClip> {
        let m = MelSpectrogram::from_channel_major(mel.data(), mel.rows(), HOP, SAMPLE_RATE)?;
        self.vocoder.reconstruct(&m, seed)
    }

    pub fn decode(&self, stream: &Bitstream, seed: u64) -> Result<AudioClip> {
        self.decode_with_steps(stream, seed, self.config.t_sample)
    }

    pub fn decode_with_steps(&self, stream: &Bitstream, seed: u64, steps: usize) -> Result<AudioClip> {
        self.check_header(&stream.header)?;
        let z = self.conditioning(&stream.indices()?)?;
        let x = self.generate(&z, seed, steps)?;
        self.render_with(self.decoder.as_ref(), &x, seed)
    }

    /// Quantized passthrough: the conditioning decoded by its own
    /// decoder (Griffin-Lim for mel, the conditioning codec for latents),
    /// skipping the diffusion model.
    pub fn passthrough(&self, stream: &Bitstream, seed: u64) -> Result<AudioClip> {
        self.check_header(&stream.header)?;
        let indices = stream.indices()?;
        match self.config.kind.cond {
            Domain::Mel => self.vocode(&self.dequantized_mel(&indices)?, seed),
            _ => {
                let codec = self.cond_codec.as_ref().expect("checked at build");
                AudioClip::new(codec.decode_features(&codec.dequantize(&indices)?)?, SAMPLE_RATE)
            }
        }
    }

    /// Dequantized conditioning mel in the raw log domain (mel conditioning).
    pub fn dequantized_mel(&self, indices: &[Vec<u32>]) -> Result<Tensor> {
        if self.config.kind.cond != Domain::Mel {
            bail!(Config, "{} is not mel-conditioned", self.config.kind);
        }
        self.dm.c_stats.denormalize(&self.conditioning(indices)?)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(CONFIG_FILE), self.config.to_text())?;
        self.schedule.write_dump(dir.join(SCHEDULE_FILE))?;
        self.dm.params.save(dir.join(DENOISER_FILE))?;
        if let Some(c) = &self.cond_codec {
            c.params.save(dir.join(COND_CODEC_FILE))?;
        }
        if let Some(c) = &self.target_codec {
            c.params.save(dir.join(TARGET_CODEC_FILE))?;
        }
        if let Some(d) = &self.decoder {
            d.params().save(dir.join(DECODER_FILE))?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let need = |name: &str| {
            let p = dir.join(name);
            if p.is_file() {
                Ok(p)
            } else {
                Err(crate::Error::Config(format!("run directory {} lacks {name}", dir.display())))
            }
        };
        let config = CodecConfig::load(need(CONFIG_FILE)?)?;
        let schedule = training_schedule(&config)?;
        let dumped = std::fs::read_to_string(need(SCHEDULE_FILE)?)?;
        if dumped != schedule.dump() {
            bail!(Config, "{SCHEDULE_FILE} does not match the configured schedule");
        }
        let kind = config.kind;
        let cond_codec =
            if kind.needs_cond_codec() { Some(LatentCodec::load(need(COND_CODEC_FILE)?, config.bitrate)?) } else { None };
        let target_codec =
            if kind.needs_target_codec() { Some(LatentCodec::load(need(TARGET_CODEC_FILE)?, target_bitrate())?) } else { None };
        let dm = DiffusionModel::from_params(&config, Params::load(need(DENOISER_FILE)?)?)?;
        let decoder = match kind.out {
            Domain::Wav => None,
            Domain::Mel => {
                let params = Params::load(need(DECODER_FILE)?)?;
                Some(DecoderStage::PostNet { net: PostNet::from_params(&params)?, params })
            }
            Domain::Lat => Some(DecoderStage::Latent(LatentCodec::load(need(DECODER_FILE)?, target_bitrate())?)),
        };
        Self::build(config, cond_codec, target_codec, dm, decoder)
    }
}

/// Decoder stage before matched fine-tuning: the identity post-net for mel
/// output, the pretrained target codec for latent output.
pub fn base_decoder(cfg: &CodecConfig, target_codec: Option<&LatentCodec>) -> Result<Option<DecoderStage>> {
    Ok(match cfg.kind.out {
        Domain::Wav => None,
        Domain::Mel => {
            let mut params = Params::new();
            let net = PostNet::new(&mut params, LATENT_DIM, cfg.seed)?;
            Some(DecoderStage::PostNet { net, params })
        }
        Domain::Lat => match target_codec {
            Some(c) => Some(DecoderStage::Latent(c.clone())),
            None => bail!(Config, "latent output needs the target codec"),
        },
    })
}

pub fn log_mel(analyzer: &MelAnalyzer, clip: &AudioClip) -> Result<Tensor> {
    let m = analyzer.analyze(clip)?;
    Tensor::matrix(m.n_mels, m.n_frames, m.to_channel_major())
}

/// Raw diffusion target: folded waveform, log-mel or target-codec latents.
pub fn target_features(out: Domain, analyzer: &MelAnalyzer, target_codec: Option<&LatentCodec>, clip: &AudioClip) -> Result<Tensor> {
    match out {
        Domain::Wav => fold_samples(&pad_to_frames(&clip.samples), WAV_FOLD),
        Domain::Mel => log_mel(analyzer, clip),
        Domain::Lat => match target_codec {
            Some(c) => Ok(c.encode_latents(clip)?.values),
            None => bail!(Config, "latent output needs the target codec"),
        },
    }
}

/// Raw conditioning features before normalization: the clean log-mel (the
/// quantizer is trained jointly) or the frozen codec's dequantized latents.
pub fn cond_features(cond: Domain, analyzer: &MelAnalyzer, cond_codec: Option<&LatentCodec>, clip: &AudioClip) -> Result<Tensor> {
    match (cond, cond_codec) {
        (Domain::Mel, _) => log_mel(analyzer, clip),
        (Domain::Lat, Some(c)) => c.dequantize(&c.quantize(&c.encode_latents(clip)?)?),
        _ => bail!(Config, "{} conditioning needs a conditioning codec", cond.as_str()),
    }
}

fn check_clip(clip: &AudioClip) -> Result<()> {
    if clip.sample_rate != SAMPLE_RATE {
        bail!(Config, "input is {} Hz; only {SAMPLE_RATE} Hz is supported", clip.sample_rate);
    }
    if clip.is_empty() {
        bail!(Data, "cannot encode an empty clip");
    }
    Ok(())
}
