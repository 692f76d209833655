"""Context-window decomposition and ensemble voting for the end-to-end pipeline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor
from .pipelines import DBP_WINDOW, SR, PipelineModel


@dataclass(frozen=True)
class WindowResult:
    starts: np.ndarray
    logits: np.ndarray  # (windows, labels)

    @property
    def log_probs(self) -> np.ndarray:
        z = self.logits - self.logits.max(axis=1, keepdims=True)
        return z - np.log(np.exp(z).sum(axis=1, keepdims=True))

    @property
    def ensemble_logprob(self) -> np.ndarray:
        return self.log_probs.sum(axis=0)

    @property
    def prediction(self) -> int:
        return int(np.argmax(self.ensemble_logprob))

    @property
    def window_votes(self) -> np.ndarray:
        return np.argmax(self.logits, axis=1)


def window_starts(n_samples: int, shift_ms: float, window: int = DBP_WINDOW, fs: int = SR) -> np.ndarray:
    """Window offsets; shift 0 means adjacent, non-overlapping windows.

    A final window flush with the end is added if the regular grid leaves a tail.
    """
    if shift_ms < 0:
        raise ValueError("shift must be >= 0")
    if n_samples < window:
        raise ValueError(f"waveform of {n_samples} samples is shorter than one {window}-sample window")
    hop = window if shift_ms == 0 else max(1, int(round(shift_ms * fs / 1000.0)))
    starts = np.arange(0, n_samples - window + 1, hop)
    if starts[-1] + window < n_samples:
        starts = np.append(starts, n_samples - window)
    return starts


def split_windows(x: np.ndarray, shift_ms: float) -> tuple[np.ndarray, np.ndarray]:
    starts = window_starts(x.shape[-1], shift_ms)
    return starts, np.stack([x[s:s + DBP_WINDOW] for s in starts])


def forward_windows(model: PipelineModel, w, shift_ms: float = 0.0, batch: int = 128) -> WindowResult:
    if model.kind != "DBP":
        raise ValueError("forward_windows applies to the end-to-end (DBP) pipeline")
    x = np.asarray(getattr(w, "samples", w), dtype=np.float64)
    starts, wins = split_windows(x, shift_ms)
    logits = np.concatenate([model.forward(Tensor(wins[i:i + batch])).data for i in range(0, len(wins), batch)])
    return WindowResult(starts, logits)
