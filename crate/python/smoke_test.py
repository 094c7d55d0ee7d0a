"""Smoke test for the pydnsc bindings: trains a tiny codec and round-trips a clip."""

import math
import tempfile
from pathlib import Path

import pydnsc

TINY = """\
cond_domain = mel
out_domain = mel
steps = 20
codec_steps = 10
finetune_steps = 5
T_sample = 8
"""


def main():
    clips = pydnsc.builtin_corpus(2, seed=0)
    clip = clips[0]
    assert clip.sample_rate == pydnsc.SAMPLE_RATE == 16000
    assert len(clip) == 16000

    mel = pydnsc.mel_spectrogram(clip)
    assert len(mel) == 63 and all(len(f) == 80 for f in mel)

    sched = pydnsc.NoiseSchedule(100)
    assert sched.steps == 100
    assert sched.a[-1] <= 1e-2
    assert sched.subsample(10).steps == 10

    assert pydnsc.plan_for_bitrate(3000) == (16, 8, 48)

    cfg = pydnsc.CodecConfig.parse(TINY)
    assert cfg.label == "mel->mel"
    assert cfg.bitrate_bps == 3000
    try:
        pydnsc.CodecConfig.parse("cond_domain = mel\nout_domain = mel\nwidth = 3\n")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown config key accepted")

    pipe = pydnsc.Pipeline.train(cfg, "builtin:2")
    stream = pipe.encode(clip)
    data = stream.to_bytes()
    assert len(data) == 404
    assert stream.n_frames == 63
    assert stream.payload_bits * 16000 == 3000 * 63 * 256

    again = pydnsc.Bitstream.from_bytes(data)
    assert again.indices() == stream.indices()
    try:
        pydnsc.Bitstream.from_bytes(data[:-3])
    except ValueError:
        pass
    else:
        raise AssertionError("truncated stream accepted")

    a = pipe.decode(again, seed=3)
    b = pipe.decode(again, seed=3)
    assert a.samples == b.samples
    assert len(a) == 63 * 256

    ref = pydnsc.AudioClip(clip.samples[: len(a)], 16000)
    for value in (pydnsc.lsd(ref, a), pydnsc.si_sdr(ref, a)):
        assert math.isfinite(value)
    assert pydnsc.si_sdr(ref, ref) == 100.0

    with tempfile.TemporaryDirectory() as tmp:
        pipe.save(tmp)
        loaded = pydnsc.Pipeline.load(tmp)
        assert loaded.decode(again, seed=3).samples == a.samples
        wav = Path(tmp) / "out.wav"
        pydnsc.save_wav(a, str(wav))
        assert len(pydnsc.load_wav(str(wav))) == len(a)

    print("pydnsc smoke test passed")


if __name__ == "__main__":
    main()
