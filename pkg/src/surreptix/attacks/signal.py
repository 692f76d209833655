"""Overt signal-processing attacks that need no model access."""

from __future__ import annotations

import numpy as np

from ..dsp.core import SAMPLE_RATE, Waveform


def _as_waveform(x, sample_rate: int) -> Waveform:
    return x if isinstance(x, Waveform) else Waveform(np.asarray(x, dtype=np.float64), sample_rate)


def sine_insertion(x, freqs_hz, amplitude: float, sample_rate: int = SAMPLE_RATE) -> Waveform:
    """Add ``amplitude * sin(2 pi f t)`` for every ``f`` and clip to [-1, 1]."""
    w = _as_waveform(x, sample_rate)
    fs = w.sample_rate
    freqs = np.atleast_1d(np.asarray(freqs_hz, dtype=np.float64))
    if np.any(freqs <= 0) or np.any(freqs >= fs / 2):
        raise ValueError(f"sine frequencies must lie in (0, {fs / 2}) Hz")
    t = np.arange(w.samples.size) / fs
    tones = np.sin(2 * np.pi * freqs[:, None] * t[None, :]).sum(axis=0)
    return w.with_samples(np.clip(w.samples + amplitude * tones, -1.0, 1.0))


def fft_threshold(x, keep_fraction: float, sample_rate: int = SAMPLE_RATE) -> Waveform:
    """Drop the weakest whole-signal DFT coefficients.

    Coefficients are kept from the strongest down until they hold at least
    ``keep_fraction`` of the total power; everything weaker is zeroed.
    """
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError("keep_fraction must lie in (0, 1]")
    w = _as_waveform(x, sample_rate)
    spec = np.fft.fft(w.samples)
    if keep_fraction == 1.0:
        return w.with_samples(np.real(np.fft.ifft(spec)))
    power = np.abs(spec) ** 2
    order = np.argsort(power, kind="stable")[::-1]
    cum = np.cumsum(power[order])
    total = cum[-1]
    if total == 0:
        return w.with_samples(np.zeros_like(w.samples))
    n_keep = int(np.searchsorted(cum, keep_fraction * total)) + 1
    threshold = power[order[min(n_keep, len(order)) - 1]]
    # keep ties at the threshold together so conjugate pairs survive as pairs
    spec[power < threshold] = 0
    return w.with_samples(np.real(np.fft.ifft(spec)))
