import math

import numpy as np
import pytest

import v2m


def test_schedule_on_unit_circle():
    for t in np.linspace(0.0, 1.0, 101):
        a, s = v2m.schedule(float(t))
        assert a * a + s * s == pytest.approx(1.0, abs=1e-12)
    a0, s0 = v2m.schedule(0.0)
    a1, s1 = v2m.schedule(1.0)
    assert a0 == pytest.approx(1.0) and s0 == pytest.approx(0.0, abs=1e-12)
    assert a1 == pytest.approx(0.0, abs=1e-12) and s1 == pytest.approx(1.0)


def test_conditioning_ramp():
    assert v2m.p_pred(5) == 0.0
    assert v2m.p_pred(20) == 0.5
    assert v2m.p_pred(40) == 1.0
    vals = [v2m.p_pred(e) for e in range(1, 51)]
    assert vals == sorted(vals)
    assert v2m.p_pred(4, e1=2, e2=6) == 0.5


def test_cfg_combine():
    cond = np.array([[1.0, 2.0], [3.0, 4.0]])
    uncond = np.array([[0.0, 1.0], [1.0, 1.0]])
    out = v2m.cfg_combine(cond, uncond, 3.0)
    assert np.allclose(out, uncond + 3.0 * (cond - uncond))
    assert np.allclose(v2m.cfg_combine(cond, uncond, 1.0), cond)


def test_latent_codec_round_trip():
    rng = np.random.default_rng(7)
    audio = rng.uniform(-0.5, 0.5, size=3 * v2m.SAMPLE_RATE)
    clip = v2m.latent_encode(audio)
    z = clip["z"]
    assert z.shape == (3 * v2m.LATENT_FPS, v2m.LATENT_WIDTH)
    assert abs(float(z.mean())) < 1e-9
    assert float(z.std()) == pytest.approx(1.0, abs=1e-6)
    back = v2m.latent_decode(z, clip["seconds"], clip["orig_len"],
                             clip["mean"], clip["stdev"])
    assert back.shape == audio.shape
    assert np.max(np.abs(back - audio)) < 1e-9


def test_synthetic_pair_onsets_line_up(tmp_path):
    pair = v2m.synthetic_pair(seconds=8, n_events=3, seed=21)
    frames = pair["frames"]
    audio = pair["audio"]
    events = pair["events"]
    assert frames.shape == (8, 24, 24, 3) and frames.dtype == np.uint8
    assert audio.shape == (8 * v2m.SAMPLE_RATE,)
    assert np.max(np.abs(audio)) <= 1.0
    assert len(events) == 3 and all(1 <= e <= 7 for e in events)

    cuts = v2m.scene_transitions(frames)
    assert [i for i, c in enumerate(cuts) if c] == events

    odf = v2m.rhythm_repr(audio, "odf", 8)
    assert odf.shape == (8, 1)
    assert [i for i in range(8) if odf[i, 0] > 0] == events
    assert v2m.alignment_score(audio, odf, "odf") == pytest.approx(1.0, abs=1e-9)

    wav = tmp_path / "clip.wav"
    v2m.write_wav(str(wav), audio)
    back = v2m.read_wav(str(wav))
    assert back.shape == audio.shape
    assert np.max(np.abs(back - audio)) < 2.0 / 32767.0


def test_rhythm_repr_widths():
    pair = v2m.synthetic_pair(seconds=10, n_events=3, seed=3)
    audio = pair["audio"]
    assert v2m.rhythm_repr(audio, "mel", 10).shape == (10, 16)
    assert v2m.rhythm_repr(audio, "tempogram", 10).shape == (10, 16)
    with pytest.raises(RuntimeError):
        v2m.rhythm_repr(audio, "spectral", 10)


def test_video_features_shapes():
    pair = v2m.synthetic_pair(seconds=5, n_events=2, seed=11)
    feats = v2m.video_features(pair["frames"], semantic_dim=32, seed=9)
    assert feats["semantic"].shape == (5, 32)
    assert feats["emotional"].shape == (5, 24)
    assert feats["scene"].shape == (5,)
    assert feats["beats"].shape == (5,)
    norms = np.linalg.norm(feats["semantic"], axis=1)
    assert np.allclose(norms, 1.0, atol=1e-9)
    again = v2m.video_features(pair["frames"], semantic_dim=32, seed=9)
    assert np.array_equal(feats["semantic"], again["semantic"])


def test_onset_envelope_and_mel():
    t = np.arange(2 * v2m.SAMPLE_RATE) / v2m.SAMPLE_RATE
    tone = 0.5 * np.sin(2 * math.pi * 440.0 * t)
    env, frame_rate = v2m.onset_envelope(tone)
    assert frame_rate == pytest.approx(v2m.SAMPLE_RATE / 512.0)
    assert np.all(env >= 0.0)
    bands = v2m.mel(tone)
    assert bands.shape[1] == 64
    spec = v2m.stft(tone)
    assert spec.shape == (bands.shape[0], 1025)


def test_train_and_generate_smoke(tmp_path):
    data = tmp_path / "data"
    for i in range(2):
        v2m.write_synthetic_clip(str(data / f"clip_{i:03d}"), 6, 3, 100 + i)

    cfg = {
        "seed": 5,
        "epochs": 4,
        "d_model": 16,
        "n_blocks": 1,
        "n_heads": 2,
        "ffn_mult": 2,
        "pred_d_model": 16,
        "pred_layers": 1,
        "pred_heads": 2,
        "lr": 0.001,
        "e1": 1,
        "e2": 3,
        "sample_steps": 4,
    }
    ckpt = tmp_path / "model.ckpt"
    csv = tmp_path / "log.csv"
    rows = v2m.train(cfg, str(data), str(ckpt), str(csv))
    assert [r["epoch"] for r in rows] == [0, 1, 2, 3]
    assert all(math.isfinite(r["ldm_loss"]) for r in rows)
    assert [r["p_pred"] for r in rows] == [0.0, 0.0, 0.5, 1.0]
    assert ckpt.exists() and csv.exists()

    out_wav = tmp_path / "gen.wav"
    rep = v2m.generate(str(ckpt), str(data / "clip_000" / "frames"),
                       str(out_wav), steps=4, guidance_scale=3.0, seed=2)
    assert rep["seconds"] == 6
    assert rep["latent_frames"] == 6 * v2m.LATENT_FPS
    audio = v2m.read_wav(str(out_wav))
    assert audio.shape == (6 * v2m.SAMPLE_RATE,)
    assert np.max(np.abs(audio)) <= 1.0
    assert math.isfinite(rep["align_score"])

    out_wav2 = tmp_path / "gen2.wav"
    v2m.generate(str(ckpt), str(data / "clip_000" / "frames"),
                 str(out_wav2), steps=4, guidance_scale=3.0, seed=2)
    assert out_wav.read_bytes() == out_wav2.read_bytes()


def test_extract_features_round_trip(tmp_path):
    clip = tmp_path / "clip"
    v2m.write_synthetic_clip(str(clip), 5, 2, 42)
    out = tmp_path / "features.v2mf"
    feats = v2m.extract_features(str(clip / "frames"), str(clip / "audio.wav"),
                                 repr="odf", out_path=str(out))
    assert out.exists()
    assert feats["semantic"].shape == (5, 64)
    assert feats["emotional"].shape == (5, 24)
    assert feats["rhythm_gt"].shape == (5, 1)
    assert feats["scene"].shape == (5,)
    assert feats["beats"].shape == (5,)


def test_error_messages_surface():
    with pytest.raises(RuntimeError, match="synthetic pair"):
        v2m.synthetic_pair(seconds=2, n_events=1, seed=1)
    with pytest.raises(RuntimeError, match="expected a 1-d sample array"):
        v2m.onset_envelope(np.zeros((4, 4)))


def test_self_test_passes():
    res = v2m.self_test()
    assert res["ok"] is True
    assert res["checks"] >= 5
