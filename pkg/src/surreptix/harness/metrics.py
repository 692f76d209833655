"""Stage-wise distortion measurements."""

from __future__ import annotations

import numpy as np

from ..models.pipelines import PipelineModel


def _rows(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    return a.reshape(len(a), -1)


def linf(clean: np.ndarray, adv: np.ndarray) -> np.ndarray:
    """Per-sample infinity norm of ``adv - clean`` over all trailing axes."""
    clean, adv = np.asarray(clean), np.asarray(adv)
    if clean.shape != adv.shape:
        raise ValueError(f"shape mismatch: {clean.shape} vs {adv.shape}")
    if clean.ndim == 1:
        return np.array([np.max(np.abs(adv - clean))])
    return np.max(np.abs(_rows(adv) - _rows(clean)), axis=1)


def distortion(clean: np.ndarray, adv: np.ndarray, stage: str, pipeline: PipelineModel | None = None) -> np.ndarray:
    """Infinity-norm distortion at ``stage3`` (audio) or ``stage1`` (pipeline features).

    Stage-1 distortion pushes both waveforms through the pipeline's own
    front end (normalized spectrogram for SBP, normalized MFCC for ABP).
    Inputs may be a single waveform or a batch; a batch of norms is returned.
    """
    clean = np.asarray(clean, dtype=np.float64)
    adv = np.asarray(adv, dtype=np.float64)
    if clean.shape != adv.shape:
        raise ValueError(f"shape mismatch: {clean.shape} vs {adv.shape}")
    if stage == "stage3":
        return linf(clean, adv)
    if stage != "stage1":
        raise ValueError(f"stage must be 'stage3' or 'stage1', got {stage!r}")
    if pipeline is None or not pipeline.has_spectral_stage:
        raise ValueError("stage-1 distortion needs a pipeline with a spectral stage")
    clean2, adv2 = np.atleast_2d(clean), np.atleast_2d(adv)
    return linf(pipeline.stage1(clean2), pipeline.stage1(adv2))


def l2_rows(a: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(_rows(a) ** 2, axis=1))
