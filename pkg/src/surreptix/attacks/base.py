"""Attack configuration, results and shared gradient plumbing."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..autodiff import Tape, Tensor, backward, ops
from ..harness.metrics import distortion, linf
from ..models.pipelines import PipelineModel


@dataclass(frozen=True)
class AttackConfig:
    epsilon: float
    iterations: int = 1
    step_size: float | None = None
    target: int | None = None
    lam: float = 1.0
    tap: str | None = None
    seed: int = 0
    stage: str = "stage3"
    # genetic search
    population: int = 20
    elite: int = 2
    mutation_prob: float = 0.5
    band: tuple[float, float] = (7000.0, 8000.0)

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.step_size is not None and self.iterations > 1 and self.step_size <= 0:
            raise ValueError("step_size must be positive when iterating")
        if self.stage not in ("stage3", "stage1"):
            raise ValueError(f"stage must be 'stage3' or 'stage1', got {self.stage!r}")
        if self.elite >= self.population:
            raise ValueError("elite count must be smaller than the population")

    @property
    def step(self) -> float:
        """Per-iteration step; defaults to 2.5 * epsilon / iterations."""
        if self.step_size is not None:
            return self.step_size
        return 2.5 * self.epsilon / max(self.iterations, 1)


@dataclass
class AttackResult:
    adversarial: np.ndarray
    success: np.ndarray
    distortion_stage3: np.ndarray
    distortion_stage1: np.ndarray
    predictions: np.ndarray
    labels: np.ndarray
    extra: dict = field(default_factory=dict)

    @property
    def accuracy(self) -> float:
        return float(np.mean(self.predictions == self.labels))

    @property
    def success_rate(self) -> float:
        return float(np.mean(self.success))

    def __len__(self) -> int:
        return len(self.success)


def as_batch(x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(getattr(x, "samples", x), dtype=np.float64)
    return arr, arr.ndim in (1,)


def labels_array(y, n: int) -> np.ndarray:
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    if y.size == 1 and n > 1:
        y = np.full(n, int(y[0]))
    if y.size != n:
        raise ValueError(f"{n} inputs but {y.size} labels")
    return y


def loss_and_grad(objective, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample objective values and the gradient of their sum w.r.t. ``x``."""
    xt = Tensor(x, requires_grad=True)
    with Tape() as tape:
        per = objective(xt)
        total = ops.sum(per)
    g = backward(tape, total).get(xt)
    return per.data.copy(), (np.zeros_like(x) if g is None else g)


def ce_objective(model: PipelineModel, labels: np.ndarray, start: str):
    def f(xt):
        return ops.cross_entropy_softmax(model.forward(xt, start=start), labels)
    return f


def outcome(model: PipelineModel, adv: np.ndarray, labels: np.ndarray, target, start: str):
    preds = model.predict(adv, start=start)
    if target is None:
        success = preds != labels
    else:
        success = np.isin(preds, np.atleast_1d(target)) if np.ndim(target) else preds == target
    return preds, success


def finish(model: PipelineModel, x: np.ndarray, adv: np.ndarray, labels: np.ndarray, cfg: AttackConfig,
           extra: dict | None = None, zero_grad: np.ndarray | None = None) -> AttackResult:
    """Evaluate ``adv`` on ``model`` and measure distortion at both stages."""
    start = cfg.stage
    preds, success = outcome(model, adv, labels, cfg.target, start)
    if zero_grad is not None:
        success = success & ~zero_grad
    if start == "stage1":
        d1 = linf(x, adv)
        d3 = np.full(len(x), np.nan)
    else:
        d3 = linf(x, adv)
        d1 = distortion(x, adv, "stage1", model) if model.has_spectral_stage else np.full(len(x), np.nan)
    return AttackResult(adv, success, d3, d1, preds, labels, extra or {})


def clip_valid(adv: np.ndarray, stage: str) -> np.ndarray:
    return np.clip(adv, -1.0, 1.0) if stage == "stage3" else adv
