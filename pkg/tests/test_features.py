import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mvdrkit.features import (LPS_FLOOR, FeatureLayout, compute_features, directional_feature, ipd, lps,
                              target_phase_difference)
from mvdrkit.geometry import SPEED_OF_SOUND, ArrayGeometry, bin_frequencies, default_pairs
from mvdrkit.signal import StftConfig, stft
from mvdrkit.simulate import render_source, synth_speech
from conftest import crandn

CFG = StftConfig()


def test_lps_examples(rng):
    y = np.exp(1j * rng.uniform(-np.pi, np.pi, (2, 4, 5)))
    np.testing.assert_allclose(lps(y), 0.0, atol=1e-11)
    np.testing.assert_allclose(lps(np.zeros((1, 3, 4))), np.log(LPS_FLOOR))
    assert np.log(LPS_FLOOR) == pytest.approx(-27.631, abs=1e-3)
    with pytest.raises(IndexError):
        lps(y, ref_channel=2)


def test_lps_peaks_at_sinusoid_bin():
    k = 37
    x = np.sin(2 * np.pi * k / 512 * np.arange(8000))
    feat = lps(stft(x, CFG))
    assert np.all(np.argmax(feat[2:-2], axis=-1) == k)


def test_ipd_examples(rng):
    y = crandn(rng, 1, 6, 9)
    np.testing.assert_array_equal(ipd(np.concatenate([y, y]), [(0, 1)]), 0.0)
    shifted = np.concatenate([y, y * np.exp(-1j * np.pi / 4)])
    np.testing.assert_allclose(ipd(shifted, [(0, 1)]), np.pi / 4, atol=1e-12)
    with pytest.raises(ValueError):
        ipd(shifted, [(0, 0)])
    with pytest.raises(ValueError):
        ipd(shifted, [(0, 2)])


def test_ipd_is_wrapped_and_antisymmetric(rng):
    y = crandn(rng, 3, 10, 17)
    a, b = ipd(y, [(0, 2)]), ipd(y, [(2, 0)])
    assert np.all(a > -np.pi) and np.all(a <= np.pi)
    diff = np.angle(np.exp(1j * (a + b)))
    np.testing.assert_allclose(diff, 0.0, atol=1e-12)


def test_ipd_cossin_encoding(rng):
    y = crandn(rng, 2, 4, 5)
    enc = ipd(y, [(0, 1)], encoding="cossin")
    ang = ipd(y, [(0, 1)])
    np.testing.assert_allclose(enc, np.concatenate([np.cos(ang), np.sin(ang)], -1))
    with pytest.raises(ValueError):
        ipd(y, [(0, 1)], encoding="polar")


def test_ipd_matches_plane_wave_delay():
    rng = np.random.default_rng(3)
    geo = ArrayGeometry.ula(2, 0.04)
    doa = np.deg2rad(60)
    wave = render_source(rng.standard_normal(16000), doa, geo)
    phase = ipd(stft(wave, CFG), [(0, 1)])[5:-5]
    f_hz = bin_frequencies(512, 16000)
    # mic 1 sits d further along +x, so the wave reaches it d cos(doa) / c earlier
    expected = np.angle(np.exp(-2j * np.pi * f_hz * 0.04 * np.cos(doa) / SPEED_OF_SOUND))
    err = np.angle(np.exp(1j * (phase - expected[None])))
    assert np.median(np.abs(err[:, 2:-2])) < 0.02


def test_df_examples(rng):
    geo = ArrayGeometry.ula(4, 0.04)
    y = np.abs(crandn(rng, 1, 5, 33)).repeat(4, axis=0).astype(complex)
    np.testing.assert_allclose(directional_feature(y, np.pi / 2, geo), 1.0, atol=1e-12)


def _df_mean(doa_src, doa_look):
    geo = ArrayGeometry.ula(6, 0.04)
    rng = np.random.default_rng(7)
    spec = stft(render_source(synth_speech(16000, rng), doa_src, geo), CFG)
    df = directional_feature(spec, doa_look, geo)
    p = np.abs(spec.data[0]) ** 2
    active = p > 1e-3 * p.max()
    return df[active].mean()


def test_df_matched_source_scores_high():
    assert _df_mean(np.deg2rad(40), np.deg2rad(40)) > 0.9


def test_df_lower_when_looking_away():
    matched = _df_mean(np.deg2rad(20), np.deg2rad(20))
    # on a linear array doa + 180 deg mirrors to the same cone only at broadside; 20 deg vs 200 deg differs
    assert _df_mean(np.deg2rad(20), np.deg2rad(200)) < matched - 0.3


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 2 * np.pi - 1e-6), st.integers(0, 2 ** 31))
def test_df_bounded(doa, seed):
    y = crandn(np.random.default_rng(seed), 3, 4, 9)
    df = directional_feature(y, doa, ArrayGeometry.ula(3), fft_size=16)
    assert np.all(df >= -1 - 1e-12) and np.all(df <= 1 + 1e-12)


def test_scaling_shifts_only_lps(rng):
    x = rng.standard_normal((4, 4000))
    geo = ArrayGeometry.ula(4)
    a, layout = compute_features(stft(x, CFG), 1.0, geo)
    b, _ = compute_features(stft(3.0 * x, CFG), 1.0, geo)
    f = CFG.n_bins
    np.testing.assert_allclose(b[:, :f] - a[:, :f], 2 * np.log(3.0), atol=1e-6)
    ipd_a, ipd_b = a[:, f:-f], b[:, f:-f]
    # angles near +-pi may land on either side of the cut
    np.testing.assert_allclose(np.angle(np.exp(1j * (ipd_b - ipd_a))), 0.0, atol=1e-9)
    np.testing.assert_allclose(b[:, -f:], a[:, -f:], atol=1e-9)


def test_feature_layout_dims():
    geo = ArrayGeometry.ula(6)
    feats, layout = compute_features(stft(np.ones((6, 2000)) * 0.1, CFG), 0.3, geo)
    pairs = default_pairs(6)
    assert len(pairs) == 6
    assert layout.dim == feats.shape[1] == 257 + len(pairs) * 257 + 257
    assert [n for n, _ in layout.blocks] == ["lps", "ipd", "df"]
    assert FeatureLayout.from_dict(layout.to_dict()) == layout
    _, no_df = compute_features(stft(np.ones((6, 2000)), CFG), None, geo, use_df=False)
    assert no_df.dim == 257 * 7


def test_tpd_broadside_is_zero():
    tpd = target_phase_difference(np.pi / 2, ArrayGeometry.ula(3), [(0, 1), (1, 2)], 512)
    np.testing.assert_allclose(tpd, 0.0, atol=1e-12)
