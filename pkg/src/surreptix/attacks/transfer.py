"""Transfer attacks crafted on end-to-end surrogates and replayed on a target.

Perturbations are computed independently for each adjacent 200 ms context
window of the surrogate, stitched back together, written through the
16-bit WAV path and finally scored on the target pipeline.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from ..autodiff import Adam, Tensor, ops
from ..dsp.core import LSB16
from ..models.pipelines import DBP_WINDOW, PipelineModel
from ..models.windows import forward_windows, window_starts
from .base import AttackConfig, AttackResult, finish, loss_and_grad, outcome
from .gradient import _prepare, _targeted_sign

SURROGATE_TAPS = ("sinc", "conv1", "conv2", "cnn")


def _check_surrogate(surrogate: PipelineModel, target: PipelineModel) -> None:
    if surrogate.kind != "DBP":
        raise ValueError("surrogates must be end-to-end (DBP) pipelines")
    if surrogate.label_count != target.label_count:
        raise ValueError(f"label spaces differ: surrogate {surrogate.label_count}, target {target.label_count}")


def _to_windows(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Stack every utterance's shift-0 windows; returns (windows, owner row)."""
    starts = window_starts(x.shape[1], 0.0)
    wins = np.stack([row[s:s + DBP_WINDOW] for row in x for s in starts])
    owner = np.repeat(np.arange(len(x)), len(starts))
    return wins, owner


def _from_windows(x: np.ndarray, wins: np.ndarray) -> np.ndarray:
    """Concatenate attacked windows back into utterances (a tail window overwrites its overlap)."""
    starts = window_starts(x.shape[1], 0.0)
    out = x.copy()
    k = 0
    for row in out:
        for s in starts:
            row[s:s + DBP_WINDOW] = wins[k]
            k += 1
    return out


def quantize_within_budget(x: np.ndarray, adv: np.ndarray) -> np.ndarray:
    """16-bit round trip that never pushes an on-grid input past the budget.

    The perturbation is rounded toward zero in whole LSB steps, so for
    inputs already on the 16-bit grid the written file is within the
    original infinity-norm budget. Off-grid inputs are snapped first.
    """
    full = 1.0 / LSB16
    base = np.clip(np.round(x * full), -full, full - 1)
    steps = np.trunc(np.round((adv * full - base) * 1e6) / 1e6)
    return np.clip(base + steps, -full, full - 1) / full


def _window_attack(wins: np.ndarray, objective, cfg: AttackConfig, direction: float,
                   history: list | None = None) -> np.ndarray:
    if cfg.iterations <= 1:
        vals, g = loss_and_grad(objective, wins)
        if history is not None:
            history.append(vals)
        return np.clip(wins + direction * cfg.epsilon * np.sign(g), -1.0, 1.0)
    lo, hi = wins - cfg.epsilon, wins + cfg.epsilon
    adv = wins.copy()
    for _ in range(cfg.iterations):
        vals, g = loss_and_grad(objective, adv)
        if history is not None:
            history.append(vals)
        adv = np.clip(np.clip(adv + direction * cfg.step * np.sign(g), lo, hi), -1.0, 1.0)
    return adv


def _tap_objective(surrogate: PipelineModel, wins: np.ndarray, labels: np.ndarray,
                   lam: float, tap: str | None, direction: float):
    clean = None if lam == 1.0 else surrogate.tap(tap, wins).data

    def objective(xt):
        taps: dict = {}
        ce = ops.cross_entropy_softmax(surrogate.forward(xt, taps=taps), labels)
        if lam == 1.0:
            return ce
        gap = ops.reshape(ops.sub(taps[tap], Tensor(clean)), (len(wins), -1))
        # the stealth term is always a penalty, whichever way the CE term is pushed
        return ops.sub(ops.scale(ce, lam), ops.scale(ops.l2_norm(gap, batch=True), direction * (1.0 - lam)))

    return objective


def _replay(surrogate, target, x, wins_adv, labels, cfg, round_trip, history, tap=None) -> AttackResult:
    adv = _from_windows(x, wins_adv)
    if round_trip:
        adv = quantize_within_budget(x, adv)
    extra = {"loss_history": np.array(history)}
    if tap is not None:
        wins_clean, owner = _to_windows(x)
        wins_final, _ = _to_windows(adv)
        diff = (surrogate.tap(tap, wins_final).data - surrogate.tap(tap, wins_clean).data).reshape(len(owner), -1)
        extra["tap_distortion"] = np.sqrt(np.bincount(owner, weights=np.sum(diff ** 2, axis=1)))
    return finish(target, x, adv, labels, cfg, extra)


def snes(surrogate: PipelineModel, target: PipelineModel, x, y, cfg: AttackConfig,
         round_trip: bool = True) -> AttackResult:
    """FGSM (``iterations <= 1``) or PGD on each surrogate window, scored on ``target``."""
    return snes_joint(surrogate, target, x, y, replace(cfg, lam=1.0, tap=None), round_trip)


def snes_joint(surrogate: PipelineModel, target: PipelineModel, x, y, cfg: AttackConfig,
               round_trip: bool = True) -> AttackResult:
    """Window attack on ``lam * CE - (1 - lam) * ||tap(x) - tap(x + delta)||_2``.

    ``cfg.tap`` names a surrogate layer (``sinc``, ``conv1``, ``conv2`` or
    ``cnn``); the per-utterance 2-norm of the final tap change is reported
    as ``extra["tap_distortion"]``.
    """
    _check_surrogate(surrogate, target)
    tap = cfg.tap
    if cfg.lam != 1.0 or tap is not None:
        if tap not in SURROGATE_TAPS:
            raise ValueError(f"surrogate tap must be one of {SURROGATE_TAPS}, got {tap!r}")
    x, labels = _prepare(x, y)
    wins, owner = _to_windows(x)
    goal = labels if cfg.target is None else np.full(len(x), int(cfg.target))
    direction = _targeted_sign(cfg)
    history: list = []
    objective = _tap_objective(surrogate, wins, goal[owner], cfg.lam, tap, direction)
    wins_adv = _window_attack(wins, objective, cfg, direction, history)
    return _replay(surrogate, target, x, wins_adv, labels, cfg, round_trip, history, tap)


# ---------------------------------------------------------------------------
# targeted transfer with a surrogate ensemble

def ensemble_log_probs(ensemble: list[PipelineModel], x: np.ndarray) -> np.ndarray:
    """Summed utterance-level window log-probabilities over the ensemble."""
    x = np.atleast_2d(x)
    return sum(np.stack([forward_windows(m, row).ensemble_logprob for row in x]) for m in ensemble)


def ensemble_targets(ensemble: list[PipelineModel], x, y, k: int = 5) -> np.ndarray:
    """The ``k`` most likely incorrect classes per utterance, best first."""
    x, labels = _prepare(x, y)
    lp = ensemble_log_probs(ensemble, x)
    lp[np.arange(len(x)), labels] = -np.inf
    return np.argsort(-lp, axis=1, kind="stable")[:, :k]


def targeted_snes(ensemble: list[PipelineModel], target: PipelineModel, x, y, targets,
                  cfg: AttackConfig, round_trip: bool = True, top_k: int = 5) -> AttackResult:
    """Adam descent on the summed ensemble loss toward ``targets``.

    ``targets`` is one label per utterance, or a ``(N, k)`` array of target
    sets. Success means the target's prediction lands in the target (set);
    ``extra["topk_hit"]`` records whether any target appears among the
    target's ``top_k`` classes. The Adam step is ``cfg.step_size`` or
    ``epsilon / 10``; ``cfg.iterations`` rounds are run.
    """
    if not ensemble:
        raise ValueError("the surrogate ensemble is empty")
    for m in ensemble:
        _check_surrogate(m, target)
    x, labels = _prepare(x, y)
    tset = np.asarray(targets, dtype=np.int64).reshape(len(x), -1)
    if np.any(tset == labels[:, None]):
        raise ValueError("a target coincides with the true label")
    mask = np.zeros((len(x), target.label_count), dtype=bool)
    np.put_along_axis(mask, tset, True, axis=1)

    wins, owner = _to_windows(x)
    wmask = mask[owner]

    def objective(xt):
        total = None
        for m in ensemble:
            loss = ops.target_set_loss(m.forward(xt), wmask)
            total = loss if total is None else ops.add(total, loss)
        return total

    lr = cfg.step_size if cfg.step_size is not None else cfg.epsilon / 10.0
    lo, hi = wins - cfg.epsilon, wins + cfg.epsilon
    adv = wins.copy()
    history = []
    if cfg.epsilon > 0 and cfg.iterations > 0:
        opt = Adam(lr=lr)
        for _ in range(cfg.iterations):
            vals, g = loss_and_grad(objective, adv)
            history.append(vals)
            adv = np.clip(np.clip(adv - opt.direction({"delta": g})["delta"], lo, hi), -1.0, 1.0)

    final = _from_windows(x, adv)
    if round_trip:
        final = quantize_within_budget(x, final)
    preds, _ = outcome(target, final, labels, None, "stage3")
    hit = mask[np.arange(len(x)), preds]
    ranked = np.argsort(-target.logits(final), axis=1, kind="stable")[:, :top_k]
    topk = np.array([mask[i, ranked[i]].any() for i in range(len(x))])
    res = finish(target, x, final, labels, cfg, {"loss_history": np.array(history), "topk_hit": topk,
                                                 "targets": tset})
    res.success = hit
    return res
