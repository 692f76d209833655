"""Deterministic attack sweeps over budget, lambda and iteration grids."""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .. import detectors
from ..attacks.base import AttackConfig
from ..attacks.registry import BUDGETED, TRANSFER, run_attack
from ..dsp.core import Spectrogram, Waveform, stft
from ..models.serialize import load_model
from .corpus import Corpus, generate_corpus, load_corpus

COLUMNS = ("row_type", "pipeline", "attack", "epsilon", "lambda", "iterations", "sample_id",
           "label", "prediction", "success", "accuracy", "distortion_stage3", "distortion_stage1",
           "hermitian", "nyquist", "saturation")
SWEEP_CONTROLS = ("hermitian", "nyquist", "saturation")
_KEYS = {"attack", "pipelines", "eps_grid", "lambda_grid", "iterations", "samples", "seed",
         "models", "surrogates", "corpus", "tap"}


@dataclass(frozen=True)
class SweepSpec:
    attack: str
    pipelines: tuple[str, ...]
    eps_grid: tuple[float, ...]
    lambda_grid: tuple[float, ...] = (1.0,)
    iterations: tuple[int, ...] = (1,)
    samples: int = 10
    seed: int = 0
    models: dict = field(default_factory=dict)      # pipeline kind -> model file
    surrogates: tuple[str, ...] = ()                # model files for transfer attacks
    corpus: dict = field(default_factory=dict)      # {"dir": ...} or generate_corpus kwargs
    tap: str | None = None

    def __post_init__(self):
        if self.attack not in BUDGETED:
            raise ValueError(f"unknown attack {self.attack!r}; choose from {', '.join(BUDGETED)}")
        if not self.pipelines:
            raise ValueError("pipelines must not be empty")
        for name in ("eps_grid", "lambda_grid", "iterations"):
            if len(getattr(self, name)) == 0:
                raise ValueError(f"{name} must not be empty")
        if any(e < 0 for e in self.eps_grid):
            raise ValueError("eps_grid values must be >= 0")
        if any(not 0 <= lam <= 1 for lam in self.lambda_grid):
            raise ValueError("lambda_grid values must lie in [0, 1]")
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        missing = [k for k in self.pipelines if k not in self.models]
        if missing:
            raise ValueError(f"no model file given for pipeline(s) {missing}")
        if self.attack in TRANSFER and not self.surrogates:
            raise ValueError(f"attack {self.attack!r} needs at least one surrogate model file")

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        unknown = set(d) - _KEYS
        if unknown:
            raise ValueError(f"unknown sweep spec key(s): {sorted(unknown)}")
        for req in ("attack", "pipelines", "eps_grid", "models"):
            if req not in d:
                raise ValueError(f"sweep spec is missing {req!r}")
        return cls(attack=str(d["attack"]),
                   pipelines=tuple(str(p).upper() for p in d["pipelines"]),
                   eps_grid=tuple(float(e) for e in d["eps_grid"]),
                   lambda_grid=tuple(float(v) for v in d.get("lambda_grid", [1.0])),
                   iterations=tuple(int(k) for k in d.get("iterations", [1])),
                   samples=int(d.get("samples", 10)),
                   seed=int(d.get("seed", 0)),
                   models={str(k).upper(): str(v) for k, v in d["models"].items()},
                   surrogates=tuple(str(s) for s in d.get("surrogates", [])),
                   corpus=dict(d.get("corpus", {})),
                   tap=d.get("tap"))

    @classmethod
    def from_json(cls, path: str | Path) -> "SweepSpec":
        path = Path(path)
        spec = cls.from_dict(json.loads(path.read_text()))
        return spec.resolve(path.parent)

    def resolve(self, base: str | Path) -> "SweepSpec":
        """Make relative model and corpus paths relative to ``base``."""
        base = Path(base)

        def fix(p: str) -> str:
            return str(p if Path(p).is_absolute() else base / p)

        corpus = dict(self.corpus)
        if "dir" in corpus:
            corpus["dir"] = fix(corpus["dir"])
        return replace(self, models={k: fix(v) for k, v in self.models.items()},
                       surrogates=tuple(fix(s) for s in self.surrogates), corpus=corpus)


def default_spec_dict() -> dict:
    return json.loads(resources.files("surreptix").joinpath("data/default_sweep.json").read_text())


def _load(path: str):
    if not Path(path).exists():
        raise FileNotFoundError(f"model file not found: {path}")
    return load_model(path)


def _corpus(spec: SweepSpec) -> Corpus:
    if "dir" in spec.corpus:
        return load_corpus(spec.corpus["dir"])
    kwargs = {k: spec.corpus[k] for k in ("n_speakers", "n_utts", "duration_s", "seed") if k in spec.corpus}
    return generate_corpus(**kwargs)


def _subset(corpus: Corpus, n: int, seed: int):
    x, y = corpus.test
    ids = np.array(corpus.test_ids)
    pick = np.sort(np.random.default_rng(seed).choice(len(x), size=min(n, len(x)), replace=False))
    return x[pick], y[pick], ids[pick]


def _verdicts(adv, stage: str) -> dict:
    if stage == "stage1":
        s = Spectrogram(adv, scale="normalized")
        return {"hermitian": detectors.hermitian_check(s).verdict, "nyquist": "", "saturation": ""}
    s = stft(Waveform(adv))
    return {"hermitian": detectors.hermitian_check(s).verdict,
            "nyquist": detectors.nyquist_monitor(s).verdict,
            "saturation": detectors.saturation_heuristic(s).verdict}


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return "" if np.isnan(v) else repr(float(v))
    return str(v)


def run_sweep(spec: SweepSpec, threads: int | None = None) -> list[dict]:
    """Per-sample rows plus one aggregate row per cell, in a fixed order.

    Cells run on a thread pool capped by ``threads`` or the
    ``SURREPTIX_THREADS`` environment variable; the result does not
    depend on the pool size.
    """
    corpus = _corpus(spec)
    x, y, ids = _subset(corpus, spec.samples, spec.seed)
    pool = corpus.train
    targets = {k: _load(spec.models[k]) for k in spec.pipelines}
    surrogates = [_load(p) for p in spec.surrogates]
    cells = [(kind, eps, lam, iters) for kind in spec.pipelines for eps in spec.eps_grid
             for lam in spec.lambda_grid for iters in spec.iterations]

    def run_cell(cell):
        kind, eps, lam, iters = cell
        cfg = AttackConfig(epsilon=eps, iterations=iters, lam=lam, tap=spec.tap, seed=spec.seed,
                           stage="stage1" if spec.attack == "equate" else "stage3")
        res = run_attack(spec.attack, targets[kind], x, y, cfg, surrogates, pool)
        rows = []
        for i in range(len(x)):
            rows.append({"row_type": "sample", "pipeline": kind, "attack": spec.attack, "epsilon": eps,
                         "lambda": lam, "iterations": iters, "sample_id": ids[i], "label": int(y[i]),
                         "prediction": int(res.predictions[i]), "success": bool(res.success[i]),
                         "accuracy": float("nan"), "distortion_stage3": float(res.distortion_stage3[i]),
                         "distortion_stage1": float(res.distortion_stage1[i]),
                         **_verdicts(res.adversarial[i], cfg.stage)})
        rows.append({"row_type": "aggregate", "pipeline": kind, "attack": spec.attack, "epsilon": eps,
                     "lambda": lam, "iterations": iters, "sample_id": "*", "label": "", "prediction": "",
                     "success": "", "accuracy": 1.0 - float(np.mean(res.success)),
                     "distortion_stage3": float(np.median(res.distortion_stage3)),
                     "distortion_stage1": float(np.median(res.distortion_stage1)),
                     "hermitian": "", "nyquist": "", "saturation": ""})
        return rows

    n_threads = threads or int(os.environ.get("SURREPTIX_THREADS", os.cpu_count() or 1))
    with ThreadPoolExecutor(max_workers=max(1, n_threads)) as ex:
        results = list(ex.map(run_cell, cells))
    rows = [r for cell_rows in results for r in cell_rows]
    order = {"sample": 0, "aggregate": 1}
    rows.sort(key=lambda r: (r["pipeline"], r["epsilon"], r["lambda"], r["iterations"],
                             order[r["row_type"]], r["sample_id"]))
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in COLUMNS])
    return buf.getvalue()


def write_sweep_csv(rows: list[dict], path: str | Path) -> Path:
    path = Path(path)
    path.write_text(rows_to_csv(rows))
    return path
