//! Staged training: latent codecs, the diffusion model (with the
//! conditioning quantizer for mel conditioning) and matched decoder
//! fine-tuning.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{CodecConfig, Domain};
use super::corpus::Corpus;
use super::denoiser::ChannelStats;
use super::latent::{clipped_step, pad_to_frames, train_codec_observed, train_codec_with, LatentCodec, TrainLog};
use super::pipeline::{
    base_decoder, COND_CODEC_FILE, CONFIG_FILE, DENOISER_FILE, TARGET_CODEC_FILE, cond_features, target_bitrate, target_features, DecoderStage, DiffusionModel,
    Pipeline,
};
use crate::diffusion::{forward_sample, standard_normal, NoiseSchedule};
use crate::error::{bail, Result};
use crate::nn::{Adam, Graph, Params, Tensor};
use crate::quantizer::BitrateSpec;
use crate::signal::{AudioClip, MelAnalyzer, MelConfig};

/// Utterances per diffusion training step.
pub const DM_BATCH: usize = 4;
/// Waveform-output models train on random crops of this many frames.
pub const WAV_CROP_FRAMES: usize = 16;

/// Receives `(stage, step, total, loss)` after every optimizer step.
pub type Progress<'a> = &'a mut dyn FnMut(&str, usize, usize, f64);

fn quiet() -> impl FnMut(&str, usize, usize, f64) {
    |_, _, _, _| {}
}

/// Trains the 8 kbps codec whose latents are the targets of `lat` output.
pub fn train_high_bitrate_target(clips: &[AudioClip], steps: usize, seed: u64, lr: f64) -> Result<(LatentCodec, TrainLog)> {
    train_codec_with(clips, target_bitrate(), steps, seed, lr, true)
}

/// Columns `[from, to)` of a `[C, T]` tensor.
fn slice_cols(t: &Tensor, from: usize, to: usize) -> Result<Tensor> {
    let cols = t.cols();
    let data = t.data().chunks(cols).flat_map(|row| row[from..to].iter().copied()).collect();
    Tensor::matrix(t.rows(), to - from, data)
}

/// Normalized `(target, conditioning)` pairs plus their statistics.
struct DmData {
    x: Vec<Tensor>,
    c: Vec<Tensor>,
    x_stats: ChannelStats,
    c_stats: ChannelStats,
}

fn prepare(cfg: &CodecConfig, clips: &[AudioClip], cond: Option<&LatentCodec>, target: Option<&LatentCodec>) -> Result<DmData> {
    let analyzer = MelAnalyzer::new(MelConfig::default())?;
    let mut x = Vec::with_capacity(clips.len());
    let mut c = Vec::with_capacity(clips.len());
    for clip in clips {
        x.push(target_features(cfg.kind.out, &analyzer, target, clip)?);
        c.push(cond_features(cfg.kind.cond, &analyzer, cond, clip)?);
    }
    let x_stats = ChannelStats::fit(&x.iter().collect::<Vec<_>>())?;
    let c_stats = ChannelStats::fit(&c.iter().collect::<Vec<_>>())?;
    let x = x.iter().map(|t| x_stats.normalize(t)).collect::<Result<_>>()?;
    let c = c.iter().map(|t| c_stats.normalize(t)).collect::<Result<_>>()?;
    Ok(DmData { x, c, x_stats, c_stats })
}

/// One diffusion training loss on a (normalized) pair. For mel
/// conditioning the quantizer runs in NoiseSQ mode inside the graph and its
/// reconstruction error is added with weight `lambda`.
#[allow(clippy::too_many_arguments)]
pub fn dm_loss(
    g: &mut Graph,
    dm: &DiffusionModel,
    params: &Params,
    cfg: &CodecConfig,
    schedule: &NoiseSchedule,
    x0: &Tensor,
    c: &Tensor,
    rng: &mut impl Rng,
) -> Result<crate::nn::Var> {
    let t = rng.random_range(1..=schedule.steps());
    let eps = standard_normal(x0.shape(), rng);
    let x_t = forward_sample(x0, t, &eps, schedule)?;
    let xv = g.input(x_t)?;
    let cv = g.input(c.clone())?;
    let z = match &dm.sq {
        Some(sq) => sq.forward_noisy(g, params, cv, rng)?,
        None => cv,
    };
    let pred = dm.net.forward(g, params, xv, z, schedule.time_input(t))?;
    let target = g.input(cfg.parameterization.target(x0, &eps).clone())?;
    let loss = g.mse(pred, target)?;
    if dm.sq.is_some() && cfg.lambda > 0.0 {
        let rec = g.l1_l2(z, cv)?;
        let rec = g.scale(rec, cfg.lambda)?;
        g.add(loss, rec)
    } else {
        Ok(loss)
    }
}

/// Trains the denoiser (and, for mel conditioning, the quantizer) for
/// `steps` optimizer steps. Conditioning codecs are only read.
pub fn train_dm_for_config(
    cfg: &CodecConfig,
    clips: &[AudioClip],
    cond: Option<&LatentCodec>,
    target: Option<&LatentCodec>,
    steps: usize,
    seed: u64,
    progress: Progress<'_>,
) -> Result<(DiffusionModel, TrainLog)> {
    if clips.is_empty() {
        bail!(Data, "diffusion training needs at least one clip");
    }
    let data = prepare(cfg, clips, cond, target)?;
    let schedule = super::pipeline::training_schedule(cfg)?;
    let mut dm = DiffusionModel::new(cfg, data.x_stats.clone(), data.c_stats.clone(), seed)?;
    let upsample = dm.net.spec.upsample;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd1ff);
    let mut opt = Adam::new(cfg.lr);
    let mut params = std::mem::take(&mut dm.params);
    let mut log = TrainLog::default();
    for step in 0..steps {
        params.zero_grad();
        let mut total = 0.0;
        for _ in 0..DM_BATCH {
            let i = rng.random_range(0..clips.len());
            let (mut x0, mut c) = (data.x[i].clone(), data.c[i].clone());
            if cfg.kind.out == Domain::Wav && c.cols() > WAV_CROP_FRAMES {
                let f0 = rng.random_range(0..=c.cols() - WAV_CROP_FRAMES);
                c = slice_cols(&c, f0, f0 + WAV_CROP_FRAMES)?;
                x0 = slice_cols(&x0, f0 * upsample, (f0 + WAV_CROP_FRAMES) * upsample)?;
            }
            let mut g = Graph::new();
            let loss = dm_loss(&mut g, &dm, &params, cfg, &schedule, &x0, &c, &mut rng)?;
            let loss = g.scale(loss, 1.0 / DM_BATCH as f64)?;
            let l = g.value(loss).item();
            if !l.is_finite() {
                bail!(Training, "diffusion loss diverged at step {step}");
            }
            total += l;
            g.backward(loss, &mut params)?;
        }
        clipped_step(&mut opt, &mut params)?;
        log.losses.push(total);
        progress("diffusion", step + 1, steps, total);
    }
    dm.params = params;
    Ok((dm, log))
}

/// Retrains the decoder stage on (diffusion output, clean) pairs from the
/// training corpus. The pipeline's current decoder is the starting point.
pub fn finetune_decoder(pipeline: &Pipeline, clips: &[AudioClip], steps: usize, seed: u64, progress: Progress<'_>) -> Result<(DecoderStage, TrainLog)> {
    let cfg = &pipeline.config;
    if cfg.kind.out == Domain::Wav {
        bail!(Config, "{} has no decoder stage to fine-tune", cfg.kind);
    }
    if clips.is_empty() {
        bail!(Data, "fine-tuning needs at least one clip");
    }
    let mut pairs = Vec::with_capacity(clips.len());
    for (i, clip) in clips.iter().enumerate() {
        let z = pipeline.conditioning(&pipeline.encode_indices(clip)?)?;
        let generated = pipeline.generate(&z, finetune_sample_seed(seed, i), cfg.t_sample)?;
        let clean = match cfg.kind.out {
            Domain::Mel => pipeline.dm.x_stats.normalize(&pipeline.log_mel(clip)?)?,
            _ => Tensor::matrix(1, pad_to_frames(&clip.samples).len(), pad_to_frames(&clip.samples))?,
        };
        let input = match cfg.kind.out {
            Domain::Mel => pipeline.dm.x_stats.normalize(&generated)?,
            _ => generated,
        };
        pairs.push((input, clean));
    }
    let mut stage = pipeline.decoder.clone().or(base_decoder(cfg, pipeline.target_codec.as_ref())?).expect("has decoder");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xf17e);
    let mut opt = Adam::new(cfg.lr);
    let mut log = TrainLog::default();
    for step in 0..steps {
        let (input, clean) = &pairs[rng.random_range(0..pairs.len())];
        let mut g = Graph::new();
        let l = match &mut stage {
            DecoderStage::PostNet { net, params } => {
                let x = g.input(input.clone())?;
                let y = g.input(clean.clone())?;
                let out = net.forward(&mut g, params, x)?;
                let loss = g.l1_l2(out, y)?;
                params.zero_grad();
                g.backward(loss, params)?;
                clipped_step(&mut opt, params)?;
                g.value(loss).item()
            }
            DecoderStage::Latent(codec) => {
                let x = g.input(input.clone())?;
                let y = g.input(clean.clone())?;
                let mut params = std::mem::take(&mut codec.params);
                let out = codec.latent_decoder_graph(&mut g, &params, x)?;
                let loss = g.l1_l2(out, y)?;
                params.zero_grad();
                g.backward(loss, &mut params)?;
                clipped_step(&mut opt, &mut params)?;
                codec.params = params;
                g.value(loss).item()
            }
        };
        if !l.is_finite() {
            bail!(Training, "decoder fine-tuning diverged at step {step}");
        }
        log.losses.push(l);
        progress("finetune", step + 1, steps, l);
    }
    Ok((stage, log))
}

/// Seed of the diffusion sample drawn for utterance `i` during fine-tuning.
pub fn finetune_sample_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(i as u64)
}

/// Per-stage losses of a full training run.
#[derive(Debug, Clone, Default)]
pub struct TrainSummary {
    pub cond_codec: Option<TrainLog>,
    pub target_codec: Option<TrainLog>,
    pub diffusion: TrainLog,
    pub finetune: Option<TrainLog>,
}

/// Runs the staged recipe for the config's cell: codecs as needed, the
/// diffusion model, then decoder fine-tuning when the cell has a decoder.
pub fn train_pipeline(cfg: &CodecConfig, corpus: &Corpus, progress: Option<Progress<'_>>) -> Result<(Pipeline, TrainSummary)> {
    train_pipeline_into(cfg, corpus, None, progress)
}

/// Like [`train_pipeline`], but writes each component into `dir` as soon as
/// its stage finishes, so a failed run keeps the completed stages.
pub fn train_pipeline_into(
    cfg: &CodecConfig,
    corpus: &Corpus,
    dir: Option<&Path>,
    progress: Option<Progress<'_>>,
) -> Result<(Pipeline, TrainSummary)> {
    cfg.validate()?;
    if let Some(d) = dir {
        std::fs::create_dir_all(d)?;
        std::fs::write(d.join(CONFIG_FILE), cfg.to_text())?;
    }
    let keep = |name: &str, params: &Params| -> Result<()> {
        match dir {
            Some(d) => params.save(d.join(name)),
            None => Ok(()),
        }
    };
    let mut sink = quiet();
    let progress: Progress<'_> = match progress {
        Some(p) => p,
        None => &mut sink,
    };
    let clips = &corpus.clips;
    let mut summary = TrainSummary::default();
    let seed = cfg.seed;
    let cond = if cfg.kind.needs_cond_codec() {
        let (c, log) = train_codec_logged(clips, cfg.bitrate, cfg.codec_steps, seed.wrapping_add(1), cfg.codec_lr, "cond-codec", progress)?;
        summary.cond_codec = Some(log);
        keep(COND_CODEC_FILE, &c.params)?;
        Some(c)
    } else {
        None
    };
    let target = if cfg.kind.needs_target_codec() {
        let (c, log) = train_codec_logged(clips, target_bitrate(), cfg.codec_steps, seed.wrapping_add(2), cfg.codec_lr, "target-codec", progress)?;
        summary.target_codec = Some(log);
        keep(TARGET_CODEC_FILE, &c.params)?;
        Some(c)
    } else {
        None
    };
    let (dm, log) = train_dm_for_config(cfg, clips, cond.as_ref(), target.as_ref(), cfg.steps, seed.wrapping_add(3), progress)?;
    summary.diffusion = log;
    keep(DENOISER_FILE, &dm.params)?;
    let decoder = base_decoder(cfg, target.as_ref())?;
    let mut pipeline = Pipeline::build(cfg.clone(), cond, target, dm, decoder)?;
    if cfg.kind.has_decoder() && cfg.finetune_steps > 0 {
        let (stage, log) = finetune_decoder(&pipeline, clips, cfg.finetune_steps, seed.wrapping_add(4), progress)?;
        pipeline.decoder = Some(stage);
        summary.finetune = Some(log);
    }
    if let Some(d) = dir {
        pipeline.save(d)?;
    }
    Ok((pipeline, summary))
}

fn train_codec_logged(
    clips: &[AudioClip],
    bitrate: BitrateSpec,
    steps: usize,
    seed: u64,
    lr: f64,
    stage: &str,
    progress: Progress<'_>,
) -> Result<(LatentCodec, TrainLog)> {
    train_codec_observed(clips, bitrate, steps, seed, lr, true, &mut |i, l| progress(stage, i, steps, l))
}
