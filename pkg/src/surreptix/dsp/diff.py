"""Tape-recorded versions of the preprocessing and spectral routines.

Inputs are batched waveforms of shape ``(B, T)``; outputs keep the batch axis.
"""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor, ops
from ..autodiff.tensor import record
from . import core


def dc_remove(x: Tensor) -> Tensor:
    mu = x.data.mean(axis=-1, keepdims=True)
    out = x.data - mu

    def vjp(g):
        return (g - g.mean(axis=-1, keepdims=True),)

    return record("dc_remove", out, (x,), vjp)


def add_constant(x: Tensor, c: np.ndarray) -> Tensor:
    """``x + c`` for a constant ``c`` broadcastable to ``x``."""
    out = x.data + c
    return record("add_constant", out, (x,), lambda g: (g,))


def pre_emphasis(x: Tensor, alpha: float = 0.97) -> Tensor:
    d = x.data
    y = d.copy()
    y[..., 1:] -= alpha * d[..., :-1]

    def vjp(g):
        gx = g.copy()
        gx[..., :-1] -= alpha * g[..., 1:]
        return (gx,)

    return record("pre_emphasis", y, (x,), vjp)


def stft_power(x: Tensor, win: int = 400, hop: int = 160, n_fft: int = core.N_FFT) -> Tensor:
    """``(B, T)`` waveform to ``(B, frames, n_fft)`` power."""
    frames = ops.frame_split(x, win, hop)
    return ops.dft_power(ops.window_apply(frames, core.hamming(win)), n_fft)


def log_mel(power: Tensor, fbank: np.ndarray) -> Tensor:
    return ops.log(ops.mel_project(power, fbank), floor=core.LOG_FLOOR)


def mfcc(power: Tensor, fbank: np.ndarray, n_mfcc: int) -> Tensor:
    return ops.dct2(log_mel(power, fbank), n_mfcc)


def preprocess(x: Tensor, dither_seed: int = 0, alpha: float = 0.97,
               dither_amplitude: float = core.LSB16) -> Tensor:
    """DC removal, fixed dither and pre-emphasis on a ``(B, T)`` batch.

    The dither sequence depends only on the seed and length, so every row of
    the batch (and every call) sees the same noise.
    """
    y = dc_remove(x)
    if dither_amplitude > 0:
        y = add_constant(y, core.dither_noise(x.shape[-1], dither_amplitude, dither_seed))
    return pre_emphasis(y, alpha)
