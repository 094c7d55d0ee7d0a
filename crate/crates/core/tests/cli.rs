//! End-to-end runs of the `dnsc` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dnsc::cli::{RunManifest, MANIFEST_FILE};
use dnsc::codec::{enumerate_configs, Corpus};
use dnsc::signal::save_wav;

fn dnsc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dnsc")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, name: &str, cond: &str, out: &str, extra: &str) -> PathBuf {
    let path = dir.join(name);
    let text = format!(
        "cond_domain = {cond}\nout_domain = {out}\nsteps = 20\ncodec_steps = 10\nfinetune_steps = 5\nT_sample = 10\ncorpus_glob = builtin:2\n{extra}"
    );
    std::fs::write(&path, text).unwrap();
    path
}

fn train(dir: &Path, cfg: &Path, run: &str) -> PathBuf {
    let out = dir.join(run);
    let r = dnsc(&["train", "--config", s(cfg), "--out", s(&out), "--seed", "5"]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    out
}

fn input_wav(dir: &Path) -> PathBuf {
    let path = dir.join("in.wav");
    save_wav(&Corpus::builtin(1, 9).clips[0], &path).unwrap();
    path
}

#[test]
fn mel_run_trains_codes_and_verifies() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = write_config(dir, "mel.txt", "mel", "mel", "");
    let run = train(dir, &cfg, "run");
    for f in ["config.txt", "schedule.txt", "denoiser.dnsm", "decoder.dnsm", MANIFEST_FILE] {
        assert!(run.join(f).is_file(), "{f}");
    }
    assert!(!run.join("latent_codec.dnsm").exists());
    let m = RunManifest::load(&run).unwrap();
    assert_eq!(m.status, "complete");
    assert_eq!(m.seed, 5);
    assert!(m.config.contains("seed = 5"));

    // reruns reproduce every artifact
    let again = train(dir, &cfg, "again");
    assert_eq!(RunManifest::load(&again).unwrap().artifacts, m.artifacts);
    assert_eq!(RunManifest::load(&again).unwrap().input_hash, m.input_hash);

    let wav = input_wav(dir);
    let stream = dir.join("a.dnsc");
    assert_eq!(code(&dnsc(&["encode", s(&run), s(&wav), "--out", s(&stream)])), 0);
    assert_eq!(std::fs::metadata(&stream).unwrap().len(), 404);

    let (a, b) = (dir.join("a.wav"), dir.join("b.wav"));
    for out in [&a, &b] {
        assert_eq!(code(&dnsc(&["decode", s(&run), s(&stream), "--out", s(out), "--seed", "7"])), 0);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(dnsc::signal::load_wav(&a).unwrap().len(), 63 * 256);

    let v = dnsc(&["verify", s(&run)]);
    let report = String::from_utf8_lossy(&v.stdout);
    assert_eq!(code(&v), 0, "{report}");
    assert!(!report.contains("FAIL"));
    for check in ["manifest", "load", "schedule", "gradcheck.denoiser", "gradcheck.decoder", "quantizer", "bitstream"] {
        assert!(report.contains(&format!("PASS {check}")), "{check}: {report}");
    }

    let mut bytes = std::fs::read(run.join("denoiser.dnsm")).unwrap();
    let n = bytes.len();
    bytes[n - 9] ^= 0x10;
    std::fs::write(run.join("denoiser.dnsm"), bytes).unwrap();
    let v = dnsc(&["verify", s(&run)]);
    assert_ne!(code(&v), 0);
    assert!(String::from_utf8_lossy(&v.stdout).contains("FAIL manifest"));
}

#[test]
fn user_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mel = train(dir, &write_config(dir, "mel.txt", "mel", "mel", ""), "mel");
    let wav_run = train(dir, &write_config(dir, "wav.txt", "mel", "wav", ""), "wav");
    let stream = dir.join("a.dnsc");
    assert_eq!(code(&dnsc(&["encode", s(&mel), s(&input_wav(dir)), "--out", s(&stream)])), 0);

    let out = dir.join("x.wav");
    assert_eq!(code(&dnsc(&["decode", s(&wav_run), s(&stream), "--out", s(&out)])), 2);
    assert!(!out.exists());
    assert_eq!(code(&dnsc(&["decode", s(&dir.join("missing")), s(&stream), "--out", s(&out)])), 2);
    assert!(!out.exists());

    let bad = dir.join("bad.txt");
    std::fs::write(&bad, "cond_domain = mel\nout_domain = mel\nwidth = 3\n").unwrap();
    let r = dnsc(&["train", "--config", s(&bad), "--out", s(&dir.join("bad"))]);
    assert_eq!(code(&r), 2);
    assert!(String::from_utf8_lossy(&r.stderr).contains("width"));

    let wav_cond = dir.join("wc.txt");
    std::fs::write(&wav_cond, "cond_domain = wav\nout_domain = mel\n").unwrap();
    assert_eq!(code(&dnsc(&["train", "--config", s(&wav_cond), "--out", s(&dir.join("wc"))])), 2);
    assert_eq!(code(&dnsc(&["frobnicate"])), 2);
}

#[test]
fn latent_run_keeps_both_codecs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let run = train(dir, &write_config(dir, "lat.txt", "lat", "lat", ""), "lat");
    for f in ["latent_codec.dnsm", "target_codec.dnsm", "denoiser.dnsm", "decoder.dnsm"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let v = dnsc(&["verify", s(&run)]);
    assert_eq!(code(&v), 0, "{}", String::from_utf8_lossy(&v.stdout));
}

#[test]
fn matrix_over_all_six_configs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    for kind in enumerate_configs() {
        let name = format!("{}-{}", kind.cond.as_str(), kind.out.as_str());
        let cfg = write_config(dir, &format!("{name}.txt"), kind.cond.as_str(), kind.out.as_str(), "");
        train(dir, &cfg, &format!("runs/{name}"));
    }
    let csv = dir.join("m.csv");
    let glob = format!("{}/runs/*", dir.display());
    let r = dnsc(&["matrix", &glob, "builtin:2", "--out", s(&csv)]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut labels: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(text.lines().count(), 1 + 6 * 2 * 2);
    labels.dedup();
    labels.sort();
    labels.dedup();
    assert_eq!(labels.len(), 6);
    assert!(dir.join("m.summary.txt").is_file());
}
