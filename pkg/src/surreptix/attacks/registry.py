"""Name-based dispatch shared by the sweep runner and the command line."""

from __future__ import annotations

import numpy as np

from ..models.pipelines import PipelineModel
from .base import AttackConfig, AttackResult
from .genetic import genetic_band_attack
from .gradient import equate_attack, feature_match, fgsm, joint_surreptitious, pgd, select_guide
from .transfer import ensemble_targets, snes, snes_joint, targeted_snes

BUDGETED = ("fgsm", "pgd", "feature", "joint", "genetic", "equate", "snes", "snes-joint", "targeted-snes")
TRANSFER = ("snes", "snes-joint", "targeted-snes")


def run_attack(name: str, model: PipelineModel, x: np.ndarray, y: np.ndarray, cfg: AttackConfig,
               surrogates: list[PipelineModel] | None = None,
               guide_pool: tuple[np.ndarray, np.ndarray] | None = None) -> AttackResult:
    """Run the budgeted attack ``name`` against ``model``.

    Transfer attacks craft on ``surrogates`` (first one for the
    untargeted variants) and score on ``model``. ``feature`` draws guides
    from ``guide_pool``; ``equate`` attacks the stage-1 features of ``x``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    if name in TRANSFER and not surrogates:
        raise ValueError(f"attack {name!r} needs a surrogate model")
    if name == "fgsm":
        return fgsm(model, x, y, cfg)
    if name == "pgd":
        return pgd(model, x, y, cfg)
    if name == "joint":
        return joint_surreptitious(model, x, y, cfg)
    if name == "genetic":
        return genetic_band_attack(model, x, y, cfg)
    if name == "equate":
        return equate_attack(model, model.stage1(x), y, cfg)
    if name == "feature":
        if guide_pool is None:
            raise ValueError("feature matching needs a guide pool")
        rng = np.random.default_rng(cfg.seed)
        guides = np.stack([select_guide(row, lab, guide_pool[0], guide_pool[1], rng) for row, lab in zip(x, y)])
        return feature_match(model, x, guides, y, cfg)
    if name == "snes":
        return snes(surrogates[0], model, x, y, cfg)
    if name == "snes-joint":
        return snes_joint(surrogates[0], model, x, y, cfg)
    if name == "targeted-snes":
        targets = ensemble_targets(surrogates, x, y, k=1)[:, 0] if cfg.target is None else np.full(len(x), cfg.target)
        return targeted_snes(surrogates, model, x, y, targets, cfg)
    raise ValueError(f"unknown attack {name!r}; budgeted attacks: {', '.join(BUDGETED)}")
