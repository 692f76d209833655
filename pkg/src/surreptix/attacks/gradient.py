"""White-box gradient attacks: FGSM, PGD, feature matching, the joint
surreptitious objective and the symmetry-preserving spectrogram attack."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from ..autodiff import Tensor, ops
from ..models.pipelines import PipelineModel
from .base import (AttackConfig, AttackResult, ce_objective, clip_valid, finish, labels_array, loss_and_grad)


def _targeted_sign(cfg: AttackConfig) -> float:
    # untargeted attacks climb the true-label loss, targeted ones descend the target loss
    return 1.0 if cfg.target is None else -1.0


def _goal_labels(cfg: AttackConfig, labels: np.ndarray) -> np.ndarray:
    return labels if cfg.target is None else np.full(len(labels), int(cfg.target))


def _prepare(x, y, stage: str = "stage3"):
    x = np.asarray(getattr(x, "samples", x), dtype=np.float64)
    single = x.ndim == (1 if stage == "stage3" else 2)
    x = x[None] if single else x
    return x, labels_array(y, len(x))


def fgsm(model: PipelineModel, x, y, cfg: AttackConfig) -> AttackResult:
    """One signed-gradient step of size epsilon at ``cfg.stage``."""
    x, labels = _prepare(x, y, cfg.stage)
    _, g = loss_and_grad(ce_objective(model, _goal_labels(cfg, labels), cfg.stage), x)
    zero = ~np.any(g.reshape(len(x), -1), axis=1)
    adv = clip_valid(x + _targeted_sign(cfg) * cfg.epsilon * np.sign(g), cfg.stage)
    return finish(model, x, adv, labels, cfg, zero_grad=zero)


def _pgd_loop(x: np.ndarray, objective, cfg: AttackConfig, direction: float,
              project=None, history: list | None = None) -> np.ndarray:
    """Signed-gradient iterations with projection onto the epsilon ball."""
    lo, hi = x - cfg.epsilon, x + cfg.epsilon
    adv = x.copy()
    step = cfg.step
    for _ in range(cfg.iterations):
        vals, g = loss_and_grad(objective, adv)
        if history is not None:
            history.append(vals)
        adv = adv + direction * step * np.sign(g)
        if project is not None:
            adv = project(adv)
        adv = clip_valid(np.clip(adv, lo, hi), cfg.stage)
    return adv


def pgd(model: PipelineModel, x, y, cfg: AttackConfig) -> AttackResult:
    """Projected signed-gradient ascent, no random start."""
    x, labels = _prepare(x, y, cfg.stage)
    objective = ce_objective(model, _goal_labels(cfg, labels), cfg.stage)
    hist: list = []
    adv = _pgd_loop(x, objective, cfg, _targeted_sign(cfg), history=hist)
    return finish(model, x, adv, labels, cfg, {"loss_history": np.array(hist)})


# ---------------------------------------------------------------------------
# feature matching

def select_guide(x: np.ndarray, label: int, pool_x: list | np.ndarray, pool_y: np.ndarray,
                 rng: np.random.Generator) -> np.ndarray:
    """A guide from another class with the same length as ``x``.

    With no exact-length candidate, the shortest longer one is truncated.
    """
    n = len(x)
    others = [i for i in range(len(pool_y)) if pool_y[i] != label]
    if not others:
        raise ValueError("guide pool has no sample from another class")
    exact = [i for i in others if len(pool_x[i]) == n]
    if exact:
        return np.asarray(pool_x[exact[rng.integers(len(exact))]], dtype=np.float64)
    longer = [i for i in others if len(pool_x[i]) > n]
    if not longer:
        raise ValueError(f"no guide at least {n} samples long")
    best = min(len(pool_x[i]) for i in longer)
    cands = [i for i in longer if len(pool_x[i]) == best]
    return np.asarray(pool_x[cands[rng.integers(len(cands))]], dtype=np.float64)[:n]


def feature_match(model: PipelineModel, x, guide, y, cfg: AttackConfig) -> AttackResult:
    """Pull the features at ``cfg.tap`` towards the guide's under an infinity-norm budget.

    The 2-norm feature distance is minimized by projected signed-gradient
    descent; the iterate with the lowest distance seen is returned.
    """
    if cfg.tap is None or cfg.tap not in model.taps:
        raise ValueError(f"{model.kind} has no tap {cfg.tap!r}; available: {model.taps}")
    x, labels = _prepare(x, y)
    guide = np.atleast_2d(np.asarray(guide, dtype=np.float64))
    if guide.shape != x.shape:
        raise ValueError(f"guide shape {guide.shape} does not match input {x.shape}")
    guide_feat = model.tap(cfg.tap, guide).data

    def objective(xt):
        taps: dict = {}
        model.forward(xt, taps=taps)
        diff = ops.sub(taps[cfg.tap], Tensor(guide_feat))
        return ops.l2_norm(ops.reshape(diff, (len(x), -1)), batch=True)

    lo, hi = x - cfg.epsilon, x + cfg.epsilon
    adv = x.copy()
    best = x.copy()
    best_loss = np.full(len(x), np.inf)
    history = []
    for _ in range(cfg.iterations + 1):
        vals, g = loss_and_grad(objective, adv)
        history.append(vals)
        better = vals < best_loss
        best[better], best_loss[better] = adv[better], vals[better]
        if len(history) > cfg.iterations:
            break
        adv = clip_valid(np.clip(adv - cfg.step * np.sign(g), lo, hi), "stage3")
    return finish(model, x, best, labels, cfg,
                  {"loss_history": np.array(history), "best_loss": best_loss})


# ---------------------------------------------------------------------------
# joint surreptitious objective

def joint_objective(model: PipelineModel, x: np.ndarray, labels: np.ndarray, lam: float):
    """Per-sample ``lam * CE - (1 - lam) * ||stage1(x) - stage1(x + delta)||_2``."""
    clean_s1 = model.stage1(x)

    def objective(xt):
        taps: dict = {}
        logits = model.forward(xt, taps=taps)
        ce = ops.cross_entropy_softmax(logits, labels)
        if lam == 1.0:
            return ce
        gap = ops.reshape(ops.sub(taps["stage1"], Tensor(clean_s1)), (len(x), -1))
        return ops.sub(ops.scale(ce, lam), ops.scale(ops.l2_norm(gap, batch=True), 1.0 - lam))

    return objective


def joint_surreptitious(model: PipelineModel, x, y, cfg: AttackConfig) -> AttackResult:
    """PGD on the audio maximizing the joint objective with weight ``cfg.lam``.

    ``lam = 1`` is plain PGD; ``lam = 0`` is pure stealth, whose optimum
    is the unperturbed input.
    """
    if cfg.stage != "stage3":
        raise ValueError("the joint objective inserts at stage 3 (audio)")
    if not model.has_spectral_stage:
        raise ValueError("the joint objective needs a pipeline with a spectral stage")
    x, labels = _prepare(x, y)
    hist: list = []
    adv = _pgd_loop(x, joint_objective(model, x, labels, cfg.lam), cfg, 1.0, history=hist)
    return finish(model, x, adv, labels, cfg, {"loss_history": np.array(hist)})


# ---------------------------------------------------------------------------
# symmetry-preserving spectrogram attack

def symmetrize(s: np.ndarray) -> np.ndarray:
    """Set every mirrored bin pair ``k, n - k`` to the pair mean (last axis)."""
    n = s.shape[-1]
    mirror = (-np.arange(n)) % n
    return 0.5 * (s + s[..., mirror])


def equate_attack(model: PipelineModel, s, y, cfg: AttackConfig) -> AttackResult:
    """Stage-1 FGSM (one iteration) or PGD with symmetrization after every step.

    ``s`` is a batch of stage-1 spectrograms from a Hermitian-symmetric front end.
    """
    cfg_s1 = replace(cfg, stage="stage1")
    x, labels = _prepare(getattr(s, "values", s), y, "stage1")
    objective = ce_objective(model, _goal_labels(cfg_s1, labels), "stage1")
    if cfg_s1.iterations <= 1:
        _, g = loss_and_grad(objective, x)
        adv = symmetrize(x + _targeted_sign(cfg_s1) * cfg_s1.epsilon * np.sign(g))
    else:
        adv = _pgd_loop(x, objective, cfg_s1, _targeted_sign(cfg_s1), project=symmetrize)
        adv = symmetrize(adv)
    return finish(model, x, adv, labels, cfg_s1)
