"""Objective scores (Si-SNR, SNR, projection SDR) and per-condition reports."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.signal

from .signal import read_wav
from .simulate import ANGLE_BINS, NO_INTERFERER_BIN, read_manifest

CLAMP_DB = 60.0
REPORT_VERSION = 1

__all__ = ["CLAMP_DB", "MetricError", "si_snr", "snr", "sdr_proj", "EvalReport",
           "aggregate", "evaluate_set", "format_table"]


class MetricError(ValueError):
    pass


def _prep(est, ref):
    est = np.asarray(est, dtype=np.float64).ravel()
    ref = np.asarray(ref, dtype=np.float64).ravel()
    if est.shape != ref.shape:
        raise MetricError(f"length mismatch: {est.size} vs {ref.size}")
    est = est - est.mean()
    ref = ref - ref.mean()
    if not np.any(ref):
        raise MetricError("reference is zero")
    return est, ref


def _ratio_db(num, den):
    if den <= 0:
        return CLAMP_DB
    if num <= 0:
        return -CLAMP_DB
    return float(np.clip(10 * np.log10(num / den), -CLAMP_DB, CLAMP_DB))


def si_snr(est, ref) -> float:
    """Scale-invariant SNR in dB, clamped to +-60."""
    est, ref = _prep(est, ref)
    target = (est @ ref) / (ref @ ref) * ref
    err = est - target
    return _ratio_db(target @ target, err @ err)


def snr(est, ref) -> float:
    est, ref = _prep(est, ref)
    err = est - ref
    return _ratio_db(ref @ ref, err @ err)


def _fir_gram(ref, filter_len):
    """Exact Gram matrix of the delayed copies ref[n - k], k < filter_len, over n < N.

    Toeplitz in the full autocorrelation, minus the samples that a delay of
    i pushes past the end: R[i, j] = R[i-1, j-1] - ref[N-i] ref[N-j].
    """
    n = ref.size
    r = scipy.signal.correlate(ref, ref, method="fft")[n - 1: n - 1 + filter_len]
    R = np.empty((filter_len, filter_len))
    R[0] = r
    tail = ref[::-1][:filter_len]  # ref[N-1], ref[N-2], ...
    for i in range(1, filter_len):
        R[i, i:] = R[i - 1, i - 1:-1] - tail[i - 1] * tail[i - 1:-1]
    return np.triu(R) + np.triu(R, 1).T


def sdr_proj(est, ref, filter_len: int = 512) -> float:
    """Si-SNR against the reference passed through the least-squares FIR fit to ``est``."""
    est, ref = _prep(est, ref)
    n = ref.size
    filter_len = min(filter_len, n)
    R = _fir_gram(ref, filter_len)
    c = scipy.signal.correlate(est, ref, method="fft")[n - 1: n - 1 + filter_len]
    try:
        g = scipy.linalg.solve(R, c, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        g = scipy.linalg.solve(R + 1e-10 * R[0, 0] * np.eye(filter_len), c)
    proj = scipy.signal.lfilter(g, [1.0], ref)
    return si_snr(est, proj)


@dataclass
class EvalReport:
    utterances: list = field(default_factory=list)
    by_angle: dict = field(default_factory=dict)
    by_speakers: dict = field(default_factory=dict)
    overall: dict = field(default_factory=dict)
    skipped: list = field(default_factory=list)
    system: str = ""

    def to_dict(self) -> dict:
        return {"version": REPORT_VERSION, "system": self.system, "overall": self.overall,
                "by_angle": self.by_angle, "by_speakers": self.by_speakers,
                "utterances": self.utterances, "skipped": self.skipped,
                "pesq": None, "wer": None}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


_SCORES = ("si_snr", "sdr_proj", "mixture_si_snr", "si_snr_gain")


def _mean_block(rows):
    out = {"count": len(rows)}
    for key in _SCORES:
        vals = [r[key] for r in rows if r.get(key) is not None]
        out[key] = float(np.mean(vals)) if vals else None
    return out


def aggregate(utterances, system: str = "") -> EvalReport:
    """Group per-utterance scores by angle bin and speaker count."""
    by_angle = {}
    for _, _, name in ANGLE_BINS + ((None, None, NO_INTERFERER_BIN),):
        rows = [u for u in utterances if u["angle_bin"] == name]
        if rows:
            by_angle[name] = _mean_block(rows)
    by_spk = {}
    for k in sorted({u["n_speakers"] for u in utterances}):
        by_spk[f"{k}spk"] = _mean_block([u for u in utterances if u["n_speakers"] == k])
    return EvalReport(utterances=list(utterances), by_angle=by_angle, by_speakers=by_spk,
                      overall=_mean_block(utterances), system=system)


def evaluate_set(manifest, enhanced_dir, filter_len: int = 512, system: str = "") -> EvalReport:
    """Score ``<enhanced_dir>/<id>.wav`` against each manifest reference."""
    manifest = Path(manifest)
    root = manifest.parent
    enhanced_dir = Path(enhanced_dir)
    utts, skipped = [], []
    for row in read_manifest(manifest):
        path = enhanced_dir / f"{row['id']}.wav"
        if not path.exists():
            skipped.append(row["id"])
            continue
        ref = read_wav(root / row["reference"]).samples[row.get("ref_channel", 0)]
        mix = read_wav(root / row["mixture"]).samples[row.get("ref_channel", 0)]
        est = read_wav(path).samples[0]
        n = min(len(est), len(ref))
        s = si_snr(est[:n], ref[:n])
        m = si_snr(mix[:n], ref[:n])
        utts.append({"id": row["id"], "angle_bin": row["angle_bin"], "n_speakers": row["n_speakers"],
                     "si_snr": s, "sdr_proj": sdr_proj(est[:n], ref[:n], filter_len),
                     "mixture_si_snr": m, "si_snr_gain": s - m})
    report = aggregate(utts, system)
    report.skipped = skipped
    return report


def _fmt(v, width=8):
    return f"{'-':>{width}}" if v is None else f"{v:>{width}.2f}"


def format_table(report: EvalReport) -> str:
    """Text table: Si-SNR per angle bin and speaker count, then averages."""
    cols = [name for _, _, name in ANGLE_BINS] + ["1spk", "2spk", "3spk"]
    head = f"{'System':<16}|" + "".join(f"{c:>8}" for c in cols) + "|" + "".join(
        f"{c:>12}" for c in ("Si-SNR avg", "SDR(proj)", "PESQ", "WER"))
    lines = ["Si-SNR (dB) by condition; PESQ and WER are not computed", head, "-" * len(head)]
    cells = []
    for c in cols:
        block = report.by_angle.get(c) or report.by_speakers.get(c)
        cells.append(_fmt(block["si_snr"] if block else None))
    tail = _fmt(report.overall.get("si_snr"), 12) + _fmt(report.overall.get("sdr_proj"), 12) + f"{'n/a':>12}" * 2
    lines.append(f"{(report.system or 'enhanced')[:16]:<16}|" + "".join(cells) + "|" + tail)
    mix_cells = []
    for c in cols:
        block = report.by_angle.get(c) or report.by_speakers.get(c)
        mix_cells.append(_fmt(block["mixture_si_snr"] if block else None))
    lines.append(f"{'mixture':<16}|" + "".join(mix_cells) + "|" + _fmt(report.overall.get("mixture_si_snr"), 12)
                 + f"{'-':>12}" + f"{'n/a':>12}" * 2)
    lines.append(f"utterances: {report.overall.get('count', 0)}  skipped: {len(report.skipped)}")
    return "\n".join(lines)
