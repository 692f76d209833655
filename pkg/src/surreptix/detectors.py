"""Defender-side pipeline controls.

Every detector maps an input to a :class:`DetectionReport` whose verdict is
``"flagged"`` exactly when the score strictly exceeds the threshold.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .dsp.core import Spectrogram, Waveform, band_power, griffin_lim, low_pass, stft

HERMITIAN_TOL = 1e-6
# defaults below are the 99th benign percentiles measured on the synthetic corpus
NYQUIST_THRESHOLD = 3.73e-6
RECONSTRUCTION_THRESHOLD = 0.103
SATURATION_THRESHOLD = 0.168

ENVELOPE_WINDOW = 160  # 10 ms box smoothing of the rectified signal
SATURATION_BAND_HZ = 4000.0
MID_BAND_HZ = (300.0, 4000.0)
EMPTY_POWER = 1e-4  # STFT cell power that benign speech at corpus loudness rarely drops below


@dataclass(frozen=True)
class DetectionReport:
    detector: str
    score: float
    threshold: float
    stage: str

    @property
    def verdict(self) -> str:
        return "flagged" if self.score > self.threshold else "clean"

    @property
    def flagged(self) -> bool:
        return self.verdict == "flagged"

    def row(self, sample_id: str = "") -> dict:
        return {"detector": self.detector, "score": repr(float(self.score)),
                "threshold": repr(float(self.threshold)), "verdict": self.verdict, "sample_id": sample_id}


# ---------------------------------------------------------------------------
# Hermitian symmetry

def hermitian_score(values: np.ndarray, n_fft: int | None = None) -> float:
    v = np.asarray(values, dtype=np.float64)
    n = v.shape[-1] if n_fft is None else n_fft
    if v.shape[-1] != n:
        raise ValueError(f"the symmetry check needs all {n} bins, got {v.shape[-1]} (half spectrum?)")
    k = np.arange(1, n)
    a, b = v[..., k], v[..., n - k]
    return float(np.max(np.abs(a - b) / (np.abs(a) + np.abs(b) + 1e-12))) if v.size else 0.0


def hermitian_check(s: Spectrogram, tol: float = HERMITIAN_TOL) -> DetectionReport:
    """Relative mismatch between mirrored bins ``k`` and ``n_fft - k``."""
    return DetectionReport("hermitian", hermitian_score(s.values, s.n_fft), tol, "stage1")


# ---------------------------------------------------------------------------
# Nyquist band

def nyquist_score(s: Spectrogram, practical_cutoff_hz: float) -> float:
    nyq = s.sample_rate / 2
    if not 0 < practical_cutoff_hz < nyq:
        raise ValueError(f"cutoff must lie in (0, {nyq}) Hz")
    total = band_power(s, 0.0, nyq)
    return band_power(s, practical_cutoff_hz, nyq) / total if total > 0 else 0.0


def nyquist_monitor(s: Spectrogram, practical_cutoff_hz: float = 7000.0,
                    threshold: float = NYQUIST_THRESHOLD) -> DetectionReport:
    """Share of the spectrogram's power between the cutoff and fs/2."""
    return DetectionReport("nyquist", nyquist_score(s, practical_cutoff_hz), threshold, "stage1")


def enforce_lowpass(w: Waveform, cutoff_hz: float = 7000.0) -> Waveform:
    return low_pass(w, cutoff_hz)


# ---------------------------------------------------------------------------
# waveform reconstruction

def envelope(x: np.ndarray, width: int = ENVELOPE_WINDOW) -> np.ndarray:
    """Rectified signal smoothed by a centred moving average."""
    return np.convolve(np.abs(x), np.ones(width) / width, mode="same")


def max_lag_ncc(a: np.ndarray, b: np.ndarray, max_lag: int) -> float:
    """Largest normalized cross-correlation over shifts of up to ``max_lag`` samples."""
    n = min(len(a), len(b))
    a, b = a[:n] - a[:n].mean(), b[:n] - b[:n].mean()
    best = -1.0
    for lag in range(-max_lag, max_lag + 1):
        u, v = (a[lag:], b[:n - lag]) if lag >= 0 else (a[:n + lag], b[-lag:])
        den = np.sqrt(np.dot(u, u) * np.dot(v, v))
        if den > 0:
            best = max(best, float(np.dot(u, v) / den))
    return float(np.clip(best, -1.0, 1.0))


def reconstruction_score(s: Spectrogram, reference: Waveform, iterations: int = 50, seed: int = 0) -> float:
    rebuilt = griffin_lim(s, iterations, seed).samples
    ref = reference.samples
    if abs(len(rebuilt) - len(ref)) > s.hop:
        raise ValueError(f"reference has {len(ref)} samples but the spectrogram spans {len(rebuilt)}")
    return 1.0 - max_lag_ncc(envelope(rebuilt), envelope(ref), s.hop)


def reconstruction_detector(s: Spectrogram, reference: Waveform, iterations: int = 50,
                            threshold: float = RECONSTRUCTION_THRESHOLD, seed: int = 0) -> DetectionReport:
    """Invert ``s`` with Griffin-Lim and compare loudness envelopes with ``reference``.

    The score is ``1 - ncc`` with ``ncc`` the best envelope correlation
    within one hop of lag, so it lies in [0, 2].
    """
    return DetectionReport("reconstruction", reconstruction_score(s, reference, iterations, seed),
                           threshold, "stage1")


# ---------------------------------------------------------------------------
# spectral thresholding artifacts

def saturation_score(s: Spectrogram) -> float:
    """Flat saturated high-band frames plus empty mid-band cells, as fractions."""
    v = np.asarray(s.values, dtype=np.float64)
    f = s.bin_frequencies
    half = f <= s.sample_rate / 2
    if v.size == 0 or not np.any(v):
        return 2.0
    high = v[:, half & (f >= SATURATION_BAND_HZ)]
    frame_median = np.median(v[:, half], axis=1)
    flat = (high.var(axis=1) < 1e-8) & (high.mean(axis=1) > frame_median)
    mid = v[:, half & (f >= MID_BAND_HZ[0]) & (f < MID_BAND_HZ[1])]
    return float(flat.mean() + np.mean(mid < EMPTY_POWER))


def saturation_heuristic(s: Spectrogram, threshold: float = SATURATION_THRESHOLD) -> DetectionReport:
    return DetectionReport("saturation", saturation_score(s), threshold, "stage1")


# ---------------------------------------------------------------------------
# calibration and aggregation

def calibrate(scores: Iterable[float], percentile: float = 99.0) -> float:
    """Threshold at the given percentile of benign scores."""
    scores = np.asarray(list(scores), dtype=np.float64)
    if scores.size == 0:
        raise ValueError("need at least one benign score")
    return float(np.percentile(scores, percentile))


CONTROLS = ("hermitian", "nyquist", "saturation", "reconstruction")


def run_all(controls: Iterable[str | Callable], sample, context: dict | None = None):
    """Run each control on ``sample``; returns ``(reports, overall)``.

    ``sample`` is a Waveform (its own STFT is examined) or a Spectrogram.
    ``context`` may carry ``reference`` (the waveform claimed to produce
    the spectrogram, needed for ``reconstruction``), ``thresholds`` (per
    detector name) and ``cutoff_hz``. Power-domain controls are skipped
    for spectrograms on another scale. ``overall`` is
    ``"surreptitious-capable"`` when nothing fired, else ``"detected"``.
    """
    ctx = context or {}
    th = ctx.get("thresholds", {})
    s = stft(sample) if isinstance(sample, Waveform) else sample
    reports = []
    for c in controls:
        if callable(c):
            reports.append(c(s))
            continue
        if c == "hermitian":
            reports.append(hermitian_check(s, th.get(c, HERMITIAN_TOL)))
        elif s.scale != "power":
            continue
        elif c == "nyquist":
            reports.append(nyquist_monitor(s, ctx.get("cutoff_hz", 7000.0), th.get(c, NYQUIST_THRESHOLD)))
        elif c == "saturation":
            reports.append(saturation_heuristic(s, th.get(c, SATURATION_THRESHOLD)))
        elif c == "reconstruction":
            ref = ctx.get("reference", sample if isinstance(sample, Waveform) else None)
            if ref is None:
                raise ValueError("the reconstruction control needs a reference waveform")
            reports.append(reconstruction_detector(s, ref, threshold=th.get(c, RECONSTRUCTION_THRESHOLD)))
        else:
            raise ValueError(f"unknown control {c!r}; known: {CONTROLS}")
    overall = "detected" if any(r.flagged for r in reports) else "surreptitious-capable"
    return reports, overall


def write_reports_csv(path: str | Path, rows: Iterable[tuple[str, DetectionReport]]) -> Path:
    """Write ``(sample_id, report)`` pairs as detector,score,threshold,verdict,sample_id."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["detector", "score", "threshold", "verdict", "sample_id"],
                           lineterminator="\n")
        w.writeheader()
        for sid, rep in rows:
            w.writerow(rep.row(sid))
    return path
