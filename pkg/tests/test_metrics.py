import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mvdrkit.metrics import (CLAMP_DB, MetricError, aggregate, evaluate_set, format_table, sdr_proj, si_snr,
                             snr)
from mvdrkit.signal import MultiWave, write_wav


def orthogonal_noise(ref, rng, ratio):
    n = rng.standard_normal(ref.size)
    n -= n.mean()
    r = ref - ref.mean()
    n -= (n @ r) / (r @ r) * r
    n -= n.mean()
    n -= (n @ r) / (r @ r) * r
    return n * np.sqrt((r @ r) / ratio / (n @ n))


def test_si_snr_examples(rng):
    ref = rng.standard_normal(4000)
    assert si_snr(ref, ref) == CLAMP_DB
    assert si_snr(2 * ref, ref) == CLAMP_DB
    est = ref + orthogonal_noise(ref, rng, 10.0)
    assert abs(si_snr(est, ref) - 10.0) < 1e-6


def test_si_snr_errors(rng):
    with pytest.raises(MetricError):
        si_snr(np.ones(5), np.zeros(5))
    with pytest.raises(MetricError):
        si_snr(np.ones(5), np.ones(4))
    with pytest.raises(MetricError):
        si_snr(np.ones(5), np.full(5, 3.0))  # constant is zero after mean removal


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-3, 1e3) | st.floats(-1e3, -1e-3), st.integers(0, 2 ** 31))
def test_scale_invariance(alpha, seed):
    rng = np.random.default_rng(seed)
    ref, est = rng.standard_normal((2, 256))
    est = est + ref
    assert si_snr(alpha * est, ref) == pytest.approx(si_snr(est, ref), abs=1e-9)


def test_si_snr_scale_invariance_exact_for_powers_of_two(rng):
    ref, est = rng.standard_normal((2, 1000))
    assert si_snr(4.0 * est, ref) == si_snr(est, ref)


def test_snr_is_not_scale_invariant(rng):
    ref = rng.standard_normal(500)
    assert snr(ref, ref) == CLAMP_DB
    assert snr(2 * ref, ref) == pytest.approx(0.0, abs=1e-12)


def test_sdr_proj_examples(rng):
    ref, noise = rng.standard_normal((2, 3000))
    est = ref + 0.5 * noise
    assert abs(sdr_proj(est, ref, filter_len=1) - si_snr(est, ref)) < 1e-9
    delayed = np.concatenate([np.zeros(10), ref[:-10]])
    assert sdr_proj(delayed, ref, 512) >= 50.0
    assert si_snr(delayed, ref) < 5.0
    assert sdr_proj(ref, ref) == CLAMP_DB


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 64), st.integers(0, 2 ** 31))
def test_projection_never_hurts(filter_len, seed):
    rng = np.random.default_rng(seed)
    ref, noise = rng.standard_normal((2, 800))
    est = np.convolve(ref, rng.standard_normal(3), mode="same") + noise
    assert si_snr(est, ref) <= sdr_proj(est, ref, filter_len) + 1e-9


def test_sdr_proj_singular_normal_equations():
    ref = np.zeros(300)
    ref[::2] = 1.0  # Nyquist tone plus DC; a long filter makes the Toeplitz system rank deficient
    est = ref + 0.01 * np.random.default_rng(0).standard_normal(300)
    assert np.isfinite(sdr_proj(est, ref, 64))


def _utt(i, s, bin_, spk, mix=0.0):
    return {"id": f"u{i}", "angle_bin": bin_, "n_speakers": spk, "si_snr": s, "sdr_proj": s + 1,
            "mixture_si_snr": mix, "si_snr_gain": s - mix}


def test_aggregate_manual_mean():
    utts = [_utt(0, 3.5, "0-15", 2), _utt(1, 7.25, "0-15", 3), _utt(2, -1.0, "none", 1)]
    rep = aggregate(utts)
    assert rep.overall["si_snr"] == pytest.approx((3.5 + 7.25 - 1.0) / 3, abs=1e-9)
    assert rep.by_angle["0-15"]["si_snr"] == pytest.approx((3.5 + 7.25) / 2, abs=1e-9)
    assert rep.by_angle["none"]["count"] == 1
    assert set(rep.by_speakers) == {"1spk", "2spk", "3spk"}
    assert rep.by_speakers["1spk"]["si_snr"] == -1.0  # singleton aggregate is the score itself
    d = rep.to_dict()
    assert d["pesq"] is None and d["wer"] is None


def test_aggregate_order_invariant():
    rng = np.random.default_rng(2)
    bins = ["0-15", "15-45", "45-90", "90-180"]
    utts = [_utt(i, float(rng.normal()), bins[i % 4], 1 + i % 3) for i in range(12)]
    a, b = aggregate(utts), aggregate(list(reversed(utts)))
    for key in ("overall", "by_angle", "by_speakers"):
        da, db = getattr(a, key), getattr(b, key)
        flat_a = da if key == "overall" else {f"{k}.{s}": v for k, blk in da.items() for s, v in blk.items()}
        flat_b = db if key == "overall" else {f"{k}.{s}": v for k, blk in db.items() for s, v in blk.items()}
        assert flat_a.keys() == flat_b.keys()
        for k in flat_a:
            assert flat_a[k] == pytest.approx(flat_b[k], abs=1e-12)


def _tiny_set(tmp_path, rng, n=3):
    rows = []
    for i in range(n):
        ref = rng.standard_normal((2, 1600)) * 0.1
        mix = ref + 0.1 * rng.standard_normal((2, 1600))
        write_wav(tmp_path / f"r{i}.wav", MultiWave(ref))
        write_wav(tmp_path / f"m{i}.wav", MultiWave(mix))
        rows.append({"version": 1, "id": f"s{i}", "mixture": f"m{i}.wav", "reference": f"r{i}.wav",
                     "angle_bin": ["0-15", "45-90", "none"][i], "n_speakers": [2, 3, 1][i], "ref_channel": 0})
    (tmp_path / "manifest.jsonl").write_text("".join(json.dumps(r) + "\n" for r in rows))
    return tmp_path / "manifest.jsonl"


def test_evaluate_set_identical_and_missing(tmp_path, rng):
    manifest = _tiny_set(tmp_path, rng)
    out = tmp_path / "enh"
    out.mkdir()
    from mvdrkit.signal import read_wav
    for i in range(2):
        write_wav(out / f"s{i}.wav", MultiWave(read_wav(tmp_path / f"r{i}.wav").samples[:1]))
    rep = evaluate_set(manifest, out)
    assert rep.skipped == ["s2"]
    assert rep.overall["count"] == 2
    assert rep.overall["si_snr"] == CLAMP_DB
    assert set(rep.by_angle) == {"0-15", "45-90"}
    table = format_table(rep)
    assert "0-15" in table and "PESQ" in table and "skipped: 1" in table
    json.loads(rep.to_json())
