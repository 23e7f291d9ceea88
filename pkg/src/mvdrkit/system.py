"""Separation systems: filter estimator + (NN | MVDR | multi-tap MVDR | ADL-MVDR) back ends.

All variants share the front end (features -> speech/noise complex ratio
filters) and differ in how the enhanced reference-channel spectrogram is
formed:

* ``nn_crm`` / ``nn_crf``: filter the reference channel directly;
* ``mvdr_crm`` / ``mvdr_crf``: utterance covariances, principal-eigenvector
  steering vector, MVDR solve;
* ``multitap_mvdr``: the same on a channel axis expanded with delayed frames;
* ``adl_mvdr``: frame-wise covariances fed to two GRU-Nets whose outputs
  replace the steering vector and the inverse noise covariance.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from . import beamformer as bf
from . import masking as mk
from .features import FeatureLayout, compute_features
from .geometry import ArrayGeometry, default_pairs
from .linalg import EPS_REL
from .neural.estimator import ARCHS, EstimatorConfig, build_estimator
from .neural.gru import GruNet, GruNetConfig
from .signal import MultiWave, StftConfig, stft

VARIANTS = ("nn_crm", "nn_crf", "mvdr_crm", "mvdr_crf", "multitap_mvdr", "adl_mvdr")

__all__ = ["VARIANTS", "SystemConfig", "Separator", "prepare_input", "oracle_mask_mvdr"]


class ConfigError(ValueError):
    pass


@dataclass
class SystemConfig:
    variant: str = "adl_mvdr"
    n_mics: int = 6
    spacing: float = 0.04
    stft: StftConfig = field(default_factory=StftConfig)
    L: int = 1
    K: int = 1
    taps: int = 2
    estimator_arch: str = "tf"
    freq_dilation: bool = True
    channels: int = 32
    kernel: int = 3
    dilations: list = field(default_factory=lambda: [1, 2, 4, 8])
    repeats: int = 2
    grunet_v_hidden: list = field(default_factory=lambda: [128, 64])
    grunet_nn_hidden: list = field(default_factory=lambda: [128, 128])
    grunet_input_norm: str = "bin_trace"
    grunet_head_init: str = "identity"
    per_frame_norm: bool = False
    eps_rel: float = EPS_REL
    ref_channel: int = 0
    ipd_encoding: str = "angle"
    use_df: bool = True
    dtype: str = "float64"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if isinstance(self.stft, dict):
            self.stft = StftConfig.from_dict(self.stft)
        if self.variant.endswith("_crm"):
            self.L = self.K = 0
        if self.variant != "multitap_mvdr":
            self.taps = 1
        elif self.taps < 2:
            raise ConfigError("multitap_mvdr needs taps >= 2")
        if self.estimator_arch not in ARCHS:
            raise ConfigError(f"unknown estimator_arch {self.estimator_arch!r}; choose from {ARCHS}")
        if self.grunet_head_init not in ("identity", "uniform"):
            raise ConfigError(f"grunet_head_init must be identity or uniform, got {self.grunet_head_init!r}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")
        if not 0 <= self.ref_channel < self.n_mics:
            raise ConfigError("ref_channel out of range")

    @property
    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry.ula(self.n_mics, self.spacing)

    @property
    def pairs(self):
        return default_pairs(self.n_mics)

    @property
    def torch_dtype(self):
        return torch.float32 if self.dtype == "float32" else torch.float64

    @property
    def complex_dtype(self):
        return torch.complex64 if self.dtype == "float32" else torch.complex128

    def feature_layout(self) -> FeatureLayout:
        f = self.stft.n_bins
        ipd_dim = len(self.pairs) * f * (2 if self.ipd_encoding == "cossin" else 1)
        blocks = [("lps", f), ("ipd", ipd_dim)] + ([("df", f)] if self.use_df else [])
        return FeatureLayout(tuple(blocks))

    def estimator_config(self) -> EstimatorConfig:
        return EstimatorConfig(feature_dim=self.feature_layout().dim, n_bins=self.stft.n_bins,
                               channels=self.channels, kernel=self.kernel, dilations=list(self.dilations),
                               repeats=self.repeats, L=self.L, K=self.K, arch=self.estimator_arch,
                               freq_dilation=self.freq_dilation)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["stft"] = self.stft.to_dict()
        d["dilations"] = list(self.dilations)
        d["grunet_v_hidden"] = list(self.grunet_v_hidden)
        d["grunet_nn_hidden"] = list(self.grunet_nn_hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SystemConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown system keys: {sorted(unknown)}")
        return cls(**d)


def prepare_input(mixture: MultiWave, doa: float, config: SystemConfig):
    """STFT and estimator features for one mixture -> (Y [M, T, F], feats [T, D])."""
    if mixture.n_channels != config.n_mics:
        raise ConfigError(f"mixture has {mixture.n_channels} channels, model expects {config.n_mics}")
    if config.use_df and doa is None:
        raise ConfigError("this model uses the directional feature; a target DOA is required")
    spec = stft(mixture, config.stft)
    feats, layout = compute_features(spec, doa if doa is not None else 0.0, config.geometry, config.pairs,
                                     config.ref_channel, config.ipd_encoding, config.use_df)
    if layout != config.feature_layout():
        raise ConfigError(f"feature layout {layout} does not match model layout {config.feature_layout()}")
    return spec.data, feats


class Separator(nn.Module):
    def __init__(self, config: SystemConfig, seed: int = 0):
        super().__init__()
        self.config = config
        gen = torch.Generator().manual_seed(seed)
        self.estimator = build_estimator(config.estimator_config(), gen)
        if config.variant == "adl_mvdr":
            self.grunet_v = GruNet(GruNetConfig.steering(config.n_mics, config.grunet_v_hidden,
                                                         input_norm=config.grunet_input_norm), gen)
            self.grunet_nn = GruNet(GruNetConfig.inverse(config.n_mics, config.grunet_nn_hidden,
                                                         input_norm=config.grunet_input_norm), gen)
            if config.grunet_head_init == "identity":
                # start from h = e_ref: the untrained system passes the reference channel through
                eye = torch.eye(config.n_mics, dtype=torch.complex128)
                self.grunet_v.init_head(eye[config.ref_channel])
                self.grunet_nn.init_head(eye)
        self.to(config.torch_dtype)

    def param_groups(self):
        groups = {"estimator": list(self.estimator.parameters())}
        if self.config.variant == "adl_mvdr":
            groups["grunet_v"] = list(self.grunet_v.parameters())
            groups["grunet_nn"] = list(self.grunet_nn.parameters())
        return groups

    def forward(self, spec, feats, stats=None):
        """spec [B, M, T, F] complex, feats [B, T, D] -> enhanced [B, T, F] complex."""
        c = self.config
        spec = spec.to(c.complex_dtype)
        f_s, f_n = self.estimator(feats.to(c.torch_dtype))
        return self.beamform(spec, f_s, f_n, stats)

    def beamform(self, spec, f_s, f_n, stats=None):
        c = self.config
        ref = c.ref_channel
        if c.variant.startswith("nn_"):
            return mk.apply_crf(f_s, spec[:, ref:ref + 1], c.L, c.K)[:, 0]
        s_hat = mk.apply_crf(f_s, spec, c.L, c.K)
        n_hat = mk.apply_crf(f_n, spec, c.L, c.K)
        m_s, m_n = mk.center_mask(f_s, c.L, c.K), mk.center_mask(f_n, c.L, c.K)
        if c.variant == "adl_mvdr":
            phi_ss = mk.framewise_cov(s_hat, m_s, c.per_frame_norm, stats)
            phi_nn = mk.framewise_cov(n_hat, m_n, c.per_frame_norm, stats)
            v = self.grunet_v(phi_ss)
            phi_inv = self.grunet_nn(phi_nn)
            h = bf.adl_weights(phi_inv, v, stats, check_finite=False)
            return bf.apply_weights(h, spec)[:, 0]
        phi_ss = mk.utterance_cov(s_hat, m_s, stats)
        v = bf.steering_from_cov(phi_ss, ref_channel=ref)
        if c.variant == "multitap_mvdr":
            phi_nn = mk.utterance_cov(bf.multitap_expand(n_hat, c.taps), m_n, stats)
            h = bf.mvdr_weights(phi_nn, bf.multitap_steering(v, c.taps), c.eps_rel, stats)
            return bf.apply_weights(h, bf.multitap_expand(spec, c.taps))[:, 0]
        phi_nn = mk.utterance_cov(n_hat, m_n, stats)
        h = bf.mvdr_weights(phi_nn, v, c.eps_rel, stats)
        return bf.apply_weights(h, spec)[:, 0]


def oracle_mask_mvdr(mixture: MultiWave, target: MultiWave, config: StftConfig = StftConfig(),
                     ref_channel: int = 0, eps_rel: float = EPS_REL) -> np.ndarray:
    """Conventional MVDR with masks computed from the true target/residual split.

    The speech mask is the reference-channel Wiener gain |S|^2 / (|S|^2 + |N|^2)
    and the noise mask its complement.  Returns the enhanced spectrogram [T, F].
    """
    y = stft(mixture, config).data
    s = stft(target, config).data
    n = y - s
    ps, pn = np.abs(s[ref_channel]) ** 2, np.abs(n[ref_channel]) ** 2
    m_s = (ps / np.maximum(ps + pn, 1e-20)).astype(np.complex128)
    m_n = 1.0 - m_s
    phi_ss = mk.utterance_cov(mk.apply_crm(m_s, y), m_s)
    phi_nn = mk.utterance_cov(mk.apply_crm(m_n, y), m_n)
    v = bf.steering_from_cov(phi_ss, ref_channel=ref_channel)
    h = bf.mvdr_weights(phi_nn, v, eps_rel)
    return bf.apply_weights(h, y)[0]
