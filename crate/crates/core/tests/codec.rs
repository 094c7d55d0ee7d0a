//! Pipeline assembly, staged training and the coding contract across the
//! six configurations.

use dnsc::bitstream::Bitstream;
use dnsc::codec::denoiser::ChannelStats;
use dnsc::codec::latent::{train_codec_with, LatentCodec};
use dnsc::codec::pipeline::{base_decoder, target_bitrate, DiffusionModel, Pipeline};
use dnsc::codec::train::{finetune_decoder, train_high_bitrate_target, train_pipeline};
use dnsc::codec::{enumerate_configs, CodecConfig, ConfigKind, Corpus, Domain, HOP, SAMPLE_RATE};
use dnsc::eval::metrics::si_sdr;
use dnsc::nn::Tensor;
use dnsc::quantizer::BitrateSpec;
use dnsc::Error;

fn kind(cond: Domain, out: Domain) -> ConfigKind {
    ConfigKind::new(cond, out).unwrap()
}

fn small(kind: ConfigKind, steps: usize) -> CodecConfig {
    let mut cfg = CodecConfig::new(kind);
    cfg.steps = steps;
    cfg.codec_steps = steps;
    cfg.finetune_steps = steps;
    cfg.t_sample = 8;
    cfg
}

fn mean_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

#[test]
fn overfitting_one_clip_cuts_the_loss_tenfold() {
    let clips = Corpus::builtin(1, 0).clips;
    let (_, log) = train_codec_with(&clips, BitrateSpec::new(3000, SAMPLE_RATE, HOP).unwrap(), 5000, 1, 1e-3, true).unwrap();
    let (head, tail) = log.head_tail(50);
    assert!(tail <= 0.1 * head, "loss {head} -> {tail}");
}

#[test]
fn unquantized_path_fits_at_least_as_well() {
    let clips = Corpus::builtin(2, 0).clips;
    let spec = BitrateSpec::new(3000, SAMPLE_RATE, HOP).unwrap();
    let (_, plain) = train_codec_with(&clips, spec, 1500, 2, 1e-3, false).unwrap();
    let (_, noisy) = train_codec_with(&clips, spec, 1500, 2, 1e-3, true).unwrap();
    let (plain_tail, noisy_tail) = (plain.head_tail(200).1, noisy.head_tail(200).1);
    assert!(plain_tail <= noisy_tail, "continuous {plain_tail} vs quantized {noisy_tail}");
}

#[test]
fn high_bitrate_target_decodes_clean_latents_best() {
    let clips = Corpus::builtin(2, 0).clips;
    let (codec, _) = train_high_bitrate_target(&clips, 800, 3, 1e-3).unwrap();
    assert_eq!(target_bitrate().bits_per_frame(), 128);
    assert_eq!(codec.sq.bits_per_frame(), 128);
    for clip in &clips {
        let lat = codec.encode_latents(clip).unwrap();
        let mut clean = codec.decode_latents(&lat.values).unwrap();
        let mut coded = codec.decode_features(&codec.dequantize(&codec.quantize(&lat).unwrap()).unwrap()).unwrap();
        clean.truncate(clip.len());
        coded.truncate(clip.len());
        let (a, b) = (si_sdr(&clip.samples, &clean).unwrap(), si_sdr(&clip.samples, &coded).unwrap());
        assert!(a >= b, "clean latents {a} dB vs quantized {b} dB");
    }
}

#[test]
fn build_rejects_missing_or_extra_components() {
    let cfg = CodecConfig::new(kind(Domain::Lat, Domain::Mel));
    let stats = ChannelStats { mean: vec![0.0; 80], std: vec![1.0; 80] };
    let dm = DiffusionModel::new(&cfg, stats.clone(), stats.clone(), 0).unwrap();
    let decoder = base_decoder(&cfg, None).unwrap();
    assert!(matches!(Pipeline::build(cfg.clone(), None, None, dm.clone(), decoder.clone()), Err(Error::Config(_))));
    let codec = LatentCodec::new(cfg.bitrate, 0).unwrap();
    assert!(Pipeline::build(cfg.clone(), Some(codec.clone()), None, dm.clone(), decoder.clone()).is_ok());
    assert!(matches!(Pipeline::build(cfg.clone(), Some(codec.clone()), None, dm.clone(), None), Err(Error::Config(_))));
    // a codec at another bitrate is not this config's conditioning codec
    let wrong = LatentCodec::new(BitrateSpec::new(6000, SAMPLE_RATE, HOP).unwrap(), 0).unwrap();
    assert!(matches!(Pipeline::build(cfg.clone(), Some(wrong), None, dm, decoder), Err(Error::Config(_))));
    // mel conditioning carries its quantizer inside the denoiser checkpoint
    let mel = CodecConfig::new(kind(Domain::Mel, Domain::Mel));
    let no_sq = DiffusionModel::new(&cfg, stats.clone(), stats, 0).unwrap();
    assert!(Pipeline::build(mel.clone(), None, None, no_sq, base_decoder(&mel, None).unwrap()).is_err());
}

#[test]
fn six_configs_share_the_coding_contract() {
    let corpus = Corpus::builtin(2, 0);
    let clip = Corpus::builtin(1, 5).clips.remove(0);
    let mut streams = Vec::new();
    for k in enumerate_configs() {
        let cfg = small(k, 30);
        let (p, _) = train_pipeline(&cfg, &corpus, None).unwrap();
        let indices = p.encode_indices(&clip).unwrap();
        let stream = p.encode(&clip).unwrap();
        assert_eq!(indices.len(), 63, "{k}");
        assert_eq!(stream.header.n_frames, 63, "{k}");
        assert_eq!(stream.indices().unwrap(), indices, "{k}");
        // payload bits per second equal the configured rate exactly
        assert_eq!(stream.payload_bits() as u64 * SAMPLE_RATE as u64, 3000 * 63 * HOP as u64, "{k}");
        let a = p.decode(&stream, 11).unwrap();
        let b = p.decode(&stream, 11).unwrap();
        assert_eq!(a, b, "{k}");
        assert_eq!(a.len(), 63 * HOP, "{k}");
        assert_eq!(p.passthrough(&stream, 0).unwrap().len(), 63 * HOP, "{k}");
        streams.push((k, p, stream));
    }
    // a stream only decodes with the pipeline that wrote it
    let (_, p0, _) = &streams[0];
    for (k, _, stream) in &streams[1..] {
        assert!(matches!(p0.decode(stream, 0), Err(Error::Format(_))), "{k}");
    }
    let (_, p, stream) = &streams[2];
    let mut h = stream.header;
    h.target_bps = 6000;
    let forged = Bitstream::new(h, &stream.indices().unwrap());
    assert!(forged.is_err() || matches!(p.decode(&forged.unwrap(), 0), Err(Error::Format(_))));
}

#[test]
fn frozen_conditioning_codec_is_untouched_by_later_stages() {
    let corpus = Corpus::builtin(2, 0);
    let cfg = small(kind(Domain::Lat, Domain::Lat), 20);
    let (reference, _) = train_codec_with(&corpus.clips, cfg.bitrate, cfg.codec_steps, cfg.seed.wrapping_add(1), cfg.codec_lr, true).unwrap();
    let (p, _) = train_pipeline(&cfg, &corpus, None).unwrap();
    assert_eq!(p.cond_codec.as_ref().unwrap().checksum(), reference.checksum());
}

#[test]
fn finetuning_changes_the_decoder_and_needs_one() {
    let corpus = Corpus::builtin(2, 0);
    let mut cfg = small(kind(Domain::Mel, Domain::Mel), 40);
    cfg.finetune_steps = 0;
    let (p, _) = train_pipeline(&cfg, &corpus, None).unwrap();
    let before = p.decoder.as_ref().unwrap().params().checksum();
    let (stage, log) = finetune_decoder(&p, &corpus.clips, 20, 1, &mut |_, _, _, _| {}).unwrap();
    assert_eq!(log.losses.len(), 20);
    assert_ne!(stage.params().checksum(), before);

    let wav = small(kind(Domain::Mel, Domain::Wav), 5);
    let (pw, _) = train_pipeline(&wav, &corpus, None).unwrap();
    assert!(pw.decoder.is_none());
    assert!(matches!(finetune_decoder(&pw, &corpus.clips, 5, 1, &mut |_, _, _, _| {}), Err(Error::Config(_))));
}

#[test]
fn trained_denoiser_follows_its_conditioning() {
    let corpus = Corpus::builtin(4, 0);
    let mut cfg = small(kind(Domain::Mel, Domain::Mel), 1500);
    cfg.finetune_steps = 0;
    cfg.t_sample = 20;
    let (p, _) = train_pipeline(&cfg, &corpus, None).unwrap();
    let za = p.conditioning(&p.encode_indices(&corpus.clips[0]).unwrap()).unwrap();
    let zb = p.conditioning(&p.encode_indices(&corpus.clips[1]).unwrap()).unwrap();
    let a1 = p.generate(&za, 1, cfg.t_sample).unwrap();
    let a2 = p.generate(&za, 2, cfg.t_sample).unwrap();
    let b1 = p.generate(&zb, 1, cfg.t_sample).unwrap();
    let (swap, resample) = (mean_abs_diff(&a1, &b1), mean_abs_diff(&a1, &a2));
    assert!(swap > 10.0 * resample, "swap {swap} vs resample {resample}");
}
