"""Black-box genetic search for perturbations confined to a frequency band."""

from __future__ import annotations

import numpy as np

from ..dsp.core import SAMPLE_RATE, band_project
from ..models.pipelines import PipelineModel
from .base import AttackConfig, AttackResult, finish
from .gradient import _prepare

MUTATION_SCALE = 0.5  # mutation noise peak, relative to epsilon


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def misclassification_score(logits: np.ndarray, labels: np.ndarray, target: int | None = None) -> np.ndarray:
    """Log-probability margin; positive exactly when the attack has succeeded.

    Untargeted: best wrong class minus the true class. Targeted: the target
    minus the best other class. Only output probabilities are used.
    """
    lp = _log_softmax(logits)
    goal = labels if target is None else np.full(len(labels), int(target))
    rows = np.arange(len(lp))
    own = lp[rows, goal]
    others = lp.copy()
    others[rows, goal] = -np.inf
    best_other = others.max(axis=1)
    return best_other - own if target is None else own - best_other


def _band_noise(rng: np.random.Generator, shape: tuple, band: tuple[float, float], fs: int) -> np.ndarray:
    """Unit-peak random-phase noise per row, spectrum confined to ``band``."""
    n = shape[-1]
    freqs = np.fft.rfftfreq(n, 1.0 / fs)
    sel = (freqs >= band[0]) & (freqs <= band[1])
    spec = np.zeros(shape[:-1] + (freqs.size,), dtype=np.complex128)
    spec[..., sel] = np.exp(1j * rng.uniform(-np.pi, np.pi, size=shape[:-1] + (int(sel.sum()),)))
    out = np.fft.irfft(spec, n, axis=-1)
    peak = np.abs(out).max(axis=-1, keepdims=True)
    return out / np.where(peak > 0, peak, 1.0)


def _rescale(delta: np.ndarray, eps: float) -> np.ndarray:
    # scaling keeps the spectrum inside the band, unlike clipping
    peak = np.abs(delta).max(axis=-1, keepdims=True)
    return delta * np.where(peak > 0, eps / np.where(peak > 0, peak, 1.0), 0.0)


def genetic_band_attack(model: PipelineModel, x, y, cfg: AttackConfig,
                        band: tuple[float, float] | None = None, fs: int = SAMPLE_RATE) -> AttackResult:
    """Evolve band-limited perturbations with peak ``cfg.epsilon`` using model scores only.

    Each generation keeps ``cfg.elite`` survivors and breeds the rest:
    parents are drawn with softmax weights on their scores, children mix
    parents sample by sample, are projected back into the band, mutated
    with probability ``cfg.mutation_prob`` by added band noise, and
    rescaled to the budget. A sample stops evolving once any candidate
    fools the model.
    """
    lo, hi = cfg.band if band is None else band
    if not 0.0 <= lo < hi <= fs / 2:
        raise ValueError(f"band ({lo}, {hi}) must lie within [0, {fs / 2}] Hz")
    band = (lo, hi)
    x, labels = _prepare(x, y)
    n, length = x.shape
    P = cfg.population
    rng = np.random.default_rng(cfg.seed)

    pop = _rescale(_band_noise(rng, (n, P, length), band, fs), cfg.epsilon)
    best = np.zeros_like(x)
    best_score = np.full(n, -np.inf)
    done = np.zeros(n, dtype=bool)
    used = np.zeros(n, dtype=np.int64)
    history = []
    known = np.full((n, P), np.nan)  # scores carried over with the elite

    if cfg.iterations == 0 or cfg.epsilon == 0:
        return finish(model, x, x.copy(), labels, cfg, {"iterations_used": used, "best_score": best_score})

    for it in range(cfg.iterations):
        act = np.flatnonzero(~done)
        if act.size == 0:
            break
        scores = known[act].copy()
        ai, ci = np.nonzero(np.isnan(scores))
        cand = np.clip(x[act[ai]] + pop[act[ai], ci], -1.0, 1.0)
        scores[ai, ci] = misclassification_score(model.logits(cand), labels[act[ai]], cfg.target)
        used[act] = it + 1
        top = np.argmax(scores, axis=1)
        improved = scores[np.arange(act.size), top] > best_score[act]
        for i in np.flatnonzero(improved):
            best[act[i]] = pop[act[i], top[i]]
            best_score[act[i]] = scores[i, top[i]]
        history.append(best_score.copy())
        done[act[scores.max(axis=1) > 0]] = True
        if it == cfg.iterations - 1:
            break
        for i, j in enumerate(act):
            if done[j]:
                continue
            pop[j], known[j] = _next_generation(pop[j], scores[i], cfg, band, fs, rng)

    adv = np.clip(x + best, -1.0, 1.0)
    return finish(model, x, adv, labels, cfg,
                  {"iterations_used": used, "best_score": best_score, "score_history": np.array(history)})


def _next_generation(pop: np.ndarray, scores: np.ndarray, cfg: AttackConfig,
                     band: tuple[float, float], fs: int, rng: np.random.Generator):
    P, length = pop.shape
    order = np.argsort(-scores, kind="stable")
    elite = pop[order[:cfg.elite]]
    w = np.exp(scores - scores.max())
    w /= w.sum()
    n_child = P - cfg.elite
    pa = rng.choice(P, size=n_child, p=w)
    pb = rng.choice(P, size=n_child, p=w)
    mask = rng.random((n_child, length)) < 0.5
    children = band_project(np.where(mask, pop[pa], pop[pb]), band[0], band[1], fs)
    mutate = rng.random(n_child) < cfg.mutation_prob
    if mutate.any():
        noise = _band_noise(rng, (int(mutate.sum()), length), band, fs)
        children[mutate] += MUTATION_SCALE * cfg.epsilon * noise
    known = np.concatenate([scores[order[:cfg.elite]], np.full(n_child, np.nan)])
    return np.concatenate([elite, _rescale(children, cfg.epsilon)]), known
