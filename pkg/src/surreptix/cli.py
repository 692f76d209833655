"""Command-line entry point: ``surreptix <command> [flags]``.

Exit codes: 0 on success, 1 on usage errors (bad or missing flags,
invalid config keys), 2 on runtime errors (missing files, bad formats).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import detectors
from .attacks.base import AttackConfig
from .attacks.registry import BUDGETED, run_attack
from .attacks.signal import fft_threshold, sine_insertion
from .dsp.core import Spectrogram, Waveform, griffin_lim, stft
from .dsp.io import read_spectrogram, read_wav, write_spectrogram, write_wav
from .harness.corpus import generate_corpus, load_corpus, save_corpus
from .harness.sweep import SweepSpec, default_spec_dict, run_sweep, write_sweep_csv
from .models import DistillConfig, TrainConfig, build, default_config, distill, load_model, save_model, train

ATTACKS = BUDGETED + ("sine", "fftthresh")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# every command: flag defaults applied after the JSON config is merged
DEFAULTS = {
    "gen-data": {"speakers": 10, "utts": 100, "duration": 1.0},
    "train": {"epochs": None, "lr": None, "batch_size": 32},
    "attack": {"stage": "stage3", "lam": 1.0, "iters": 1, "surrogate": [], "freqs": [440.0], "keep": 0.5},
    "detect": {"controls": "all"},
    "sweep": {"threads": None},
    "invert": {"iters": 50},
    "distill": {"student_arch": "dbp", "temp": 2.0, "weight": 0.5, "epochs": None, "lr": None},
}
_ALIASES = {"in": "in_path", "lambda": "lam"}
REQUIRED = {
    "gen-data": ("out",),
    "train": ("pipeline", "data", "out"),
    "attack": ("attack", "model", "in_path", "out", "eps"),
    "detect": ("in_path", "report"),
    "sweep": ("spec", "out"),
    "invert": ("spec_in", "out"),
    "distill": ("teacher", "data", "out"),
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="surreptix", description="Audio pipeline attacks and detectors.")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    def command(name, help_text):
        c = sub.add_parser(name, help=help_text, description=help_text)
        c.add_argument("--seed", type=int, required=True, help="random seed (mandatory)")
        c.add_argument("--config", help="JSON file whose keys override this command's defaults")
        return c

    c = command("gen-data", "synthesize the speaker corpus as WAV files plus a manifest")
    c.add_argument("--speakers", type=int, help="number of speakers (default 10)")
    c.add_argument("--utts", type=int, help="utterances per speaker (default 100)")
    c.add_argument("--duration", type=float, help="utterance length in seconds (default 1.0)")
    c.add_argument("--out", help="output directory")

    c = command("train", "train a pipeline on a corpus directory")
    c.add_argument("--pipeline", choices=["sbp", "abp", "dbp"], type=str.lower, help="pipeline kind")
    c.add_argument("--data", help="corpus directory written by gen-data")
    c.add_argument("--out", help="output model file")
    c.add_argument("--epochs", type=int, help="training epochs (default: per-pipeline setting)")
    c.add_argument("--lr", type=float, help="Adam learning rate (default: per-pipeline setting)")
    c.add_argument("--batch-size", type=int, help="minibatch size (default 32)")

    c = command("attack", "attack one WAV file")
    c.add_argument("--attack", choices=ATTACKS, help="attack name")
    c.add_argument("--model", help="target model file")
    c.add_argument("--surrogate", action="append", help="surrogate DBP model file (repeat for an ensemble)")
    c.add_argument("--eps", type=float, help="budget; sine amplitude for 'sine', unused by 'fftthresh'")
    c.add_argument("--lambda", dest="lam", type=float, help="surreptitious factor in [0, 1] (default 1)")
    c.add_argument("--iters", type=int, help="iterations or generations (default 1)")
    c.add_argument("--tap", help="feature tap for 'feature' and 'snes-joint'")
    c.add_argument("--target", type=int, help="target label for targeted attacks")
    c.add_argument("--label", type=int, help="true label (default: the model's clean prediction)")
    c.add_argument("--guide", help="guide WAV for 'feature'")
    c.add_argument("--freqs", type=float, nargs="+", help="sine frequencies in Hz (default 440)")
    c.add_argument("--keep", type=float, help="power fraction kept by 'fftthresh' (default 0.5)")
    c.add_argument("--stage", choices=["stage3", "stage1"],
                   help="insertion stage for fgsm/pgd (default stage3); equate is always stage1")
    c.add_argument("--in", dest="in_path", help="input WAV")
    c.add_argument("--out", help="output WAV, or SPG1 spectrogram for stage-1 attacks")
    c.add_argument("--report", help="optional CSV report")

    c = command("detect", "run pipeline controls on a WAV or SPG1 file")
    c.add_argument("--controls", help="'all' or a comma list of " + ",".join(detectors.CONTROLS))
    c.add_argument("--in", dest="in_path", help="input WAV or SPG1 spectrogram")
    c.add_argument("--model", help="SBP model: check its stage-1 features of a WAV input for symmetry")
    c.add_argument("--reference", help="reference WAV for the reconstruction control")
    c.add_argument("--report", help="output CSV")

    c = command("sweep", "run an attack sweep described by a JSON spec")
    c.add_argument("--spec", help="sweep spec JSON, or 'default' for the shipped spec (paths relative to cwd)")
    c.add_argument("--out", help="output CSV")
    c.add_argument("--threads", type=int, help="worker threads (default: SURREPTIX_THREADS or core count)")

    c = command("invert", "Griffin-Lim inversion of an SPG1 power spectrogram")
    c.add_argument("--spec-in", help="input SPG1 file")
    c.add_argument("--iters", type=int, help="Griffin-Lim iterations (default 50)")
    c.add_argument("--out", help="output WAV")

    c = command("distill", "distill a teacher into a new student pipeline")
    c.add_argument("--teacher", help="teacher model file")
    c.add_argument("--student-arch", choices=["sbp", "abp", "dbp"], type=str.lower, help="student kind (default dbp)")
    c.add_argument("--temp", type=float, help="distillation temperature (default 2)")
    c.add_argument("--weight", type=float, help="soft-loss weight in [0, 1] (default 0.5)")
    c.add_argument("--data", help="corpus directory")
    c.add_argument("--out", help="output model file")
    c.add_argument("--epochs", type=int, help="training epochs (default: per-pipeline setting)")
    c.add_argument("--lr", type=float, help="learning rate (default: per-pipeline setting)")
    return p


def _merge(args: argparse.Namespace, parser: argparse.ArgumentParser) -> argparse.Namespace:
    cmd = args.command
    cfg = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise FileNotFoundError(f"--config file not found: {path}")
        cfg = json.loads(path.read_text())
        if not isinstance(cfg, dict):
            raise UsageError("--config must hold a JSON object")
    allowed = {k for k in vars(args) if k not in ("command", "config", "seed")}
    cfg = {_ALIASES.get(k, k.replace("-", "_")): v for k, v in cfg.items()}
    bad = sorted(set(cfg) - allowed)
    if bad:
        raise UsageError(f"--config: unknown key(s) for {cmd}: {bad}")
    for k, v in cfg.items():
        if getattr(args, k) is None:
            setattr(args, k, v)
    for k, v in DEFAULTS[cmd].items():
        if getattr(args, k) is None:
            setattr(args, k, v)
    for k in REQUIRED[cmd]:
        if getattr(args, k) is None:
            flag = {v: k for k, v in _ALIASES.items()}.get(k, k).replace("_", "-")
            raise UsageError(f"{cmd}: missing required flag --{flag}")
    return args


# ---------------------------------------------------------------------------
# commands

def _need(path: str, flag: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"--{flag}: file not found: {p}")
    return p


def cmd_gen_data(a) -> int:
    corpus = generate_corpus(a.speakers, a.utts, a.duration, a.seed)
    manifest = save_corpus(corpus, a.out)
    print(f"wrote {len(corpus.labels)} utterances to {manifest.parent}")
    return 0


def cmd_train(a) -> int:
    corpus = load_corpus(_need(a.data, "data"))
    base = default_config(a.pipeline, a.seed)
    cfg = TrainConfig(lr=a.lr or base.lr, epochs=base.epochs if a.epochs is None else a.epochs,
                      batch_size=a.batch_size, seed=a.seed)
    model = build(a.pipeline, label_count=int(corpus.labels.max()) + 1, seed=a.seed)
    (xtr, ytr), (xte, yte) = corpus.train, corpus.test
    rep = train(model, xtr, ytr, cfg, xte if len(xte) else None, yte if len(yte) else None)
    save_model(model, a.out)
    print(f"{model.kind}: train accuracy {rep.train_accuracy:.3f}"
          + ("" if rep.test_accuracy is None else f", test accuracy {rep.test_accuracy:.3f}"))
    return 0


def _write_rows(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_attack(a) -> int:
    src = read_wav(_need(a.in_path, "in"))
    model = load_model(_need(a.model, "model"))
    x = src.samples
    label = int(model.predict(x)) if a.label is None else a.label
    if a.attack in ("sine", "fftthresh"):
        out = sine_insertion(src, a.freqs, a.eps) if a.attack == "sine" else fft_threshold(src, a.keep)
        write_wav(a.out, out)
        pred = int(model.predict(read_wav(a.out).samples))
        d3 = float(np.max(np.abs(read_wav(a.out).samples - x)))
        row = [a.attack, a.eps, a.lam, a.iters, label, pred, pred != label, d3, ""]
    else:
        surrogates = [load_model(_need(s, "surrogate")) for s in a.surrogate]
        pool = None
        if a.attack == "feature":
            if a.guide is None:
                raise UsageError("attack feature: missing required flag --guide")
            g = read_wav(_need(a.guide, "guide")).samples
            pool = (g[None], np.array([-1]))
        stage = "stage1" if a.attack == "equate" else a.stage
        if stage == "stage1" and a.attack not in ("fgsm", "pgd", "equate"):
            raise UsageError(f"--stage: {a.attack} inserts at stage3 only")
        cfg = AttackConfig(epsilon=a.eps, iterations=a.iters, lam=a.lam, tap=a.tap, target=a.target,
                           seed=a.seed, stage=stage)
        inputs = model.stage1(x[None]) if stage == "stage1" and a.attack != "equate" else x
        res = run_attack(a.attack, model, inputs, np.array([label]), cfg, surrogates, pool)
        adv = res.adversarial[0]
        if stage == "stage1":
            write_spectrogram(a.out, Spectrogram(adv, scale="normalized"))
        elif a.eps == 0 or np.array_equal(adv, x):
            write_wav(a.out, src)
        else:
            write_wav(a.out, Waveform(adv, src.sample_rate))
        row = [a.attack, a.eps, a.lam, a.iters, label, int(res.predictions[0]), bool(res.success[0]),
               float(res.distortion_stage3[0]), float(res.distortion_stage1[0])]
    if a.report:
        _write_rows(a.report, ["attack", "epsilon", "lambda", "iterations", "label", "prediction", "success",
                               "distortion_stage3", "distortion_stage1"],
                    [["" if isinstance(v, float) and np.isnan(v) else
                      ("true" if v is True else "false" if v is False else v) for v in row]])
    print(f"{a.attack}: label {row[4]} -> prediction {row[5]} (success={str(row[6]).lower()})")
    return 0


def _read_any(path: Path):
    head = path.read_bytes()[:4]
    if head == b"SPG1":
        return read_spectrogram(path)
    return read_wav(path)


def cmd_detect(a) -> int:
    path = _need(a.in_path, "in")
    sample = _read_any(path)
    controls = detectors.CONTROLS if a.controls == "all" else [c.strip() for c in a.controls.split(",") if c.strip()]
    unknown = [c for c in controls if c not in detectors.CONTROLS]
    if unknown:
        raise UsageError(f"--controls: unknown control(s) {unknown}; known: {','.join(detectors.CONTROLS)}")
    ctx = {}
    if a.reference:
        ctx["reference"] = read_wav(_need(a.reference, "reference"))
    if "reconstruction" in controls and isinstance(sample, Spectrogram) and "reference" not in ctx:
        if a.controls == "all":
            controls = [c for c in controls if c != "reconstruction"]
        else:
            raise UsageError("--controls reconstruction on a spectrogram needs --reference")
    reports, overall = detectors.run_all(controls, sample, ctx)
    if a.model and isinstance(sample, Waveform) and "hermitian" in controls:
        model = load_model(_need(a.model, "model"))
        if model.kind != "SBP":
            raise ValueError("--model: only SBP stage-1 features keep every FFT bin")
        feats = Spectrogram(model.stage1(sample.samples)[0], scale="normalized")
        reports.append(detectors.hermitian_check(feats))
        overall = "detected" if any(r.flagged for r in reports) else overall
    detectors.write_reports_csv(a.report, [(path.stem, r) for r in reports]) if a.report else None
    for r in reports:
        print(f"{r.detector}: score {r.score:.6g} threshold {r.threshold:.6g} -> {r.verdict}")
    print(f"overall: {overall}")
    return 0


def cmd_sweep(a) -> int:
    if a.spec == "default":
        spec = SweepSpec.from_dict(default_spec_dict()).resolve(Path.cwd())
    else:
        spec = SweepSpec.from_json(_need(a.spec, "spec"))
    spec = replace(spec, seed=a.seed)
    rows = run_sweep(spec, a.threads)
    write_sweep_csv(rows, a.out)
    print(f"wrote {len(rows)} rows to {a.out}")
    return 0


def cmd_invert(a) -> int:
    s = read_spectrogram(_need(a.spec_in, "spec-in"))
    if s.scale not in ("power", "magnitude"):
        raise ValueError(f"--spec-in: cannot invert a {s.scale!r} spectrogram")
    write_wav(a.out, griffin_lim(s, a.iters, a.seed))
    print(f"wrote {a.out}")
    return 0


def cmd_distill(a) -> int:
    teacher = load_model(_need(a.teacher, "teacher"))
    corpus = load_corpus(_need(a.data, "data"))
    base = default_config(a.student_arch, a.seed)
    tcfg = TrainConfig(lr=a.lr or base.lr, epochs=base.epochs if a.epochs is None else a.epochs, seed=a.seed)
    student = build(a.student_arch, label_count=teacher.label_count, seed=a.seed)
    (xtr, ytr), (xte, yte) = corpus.train, corpus.test
    rep = distill(teacher, student, xtr, ytr, DistillConfig(a.temp, a.weight, tcfg),
                  xte if len(xte) else None, yte if len(yte) else None)
    save_model(student, a.out)
    print(f"student {student.kind}: train accuracy {rep.train_accuracy:.3f}"
          + ("" if rep.test_accuracy is None else f", test accuracy {rep.test_accuracy:.3f}"))
    return 0


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "attack": cmd_attack, "detect": cmd_detect,
            "sweep": cmd_sweep, "invert": cmd_invert, "distill": cmd_distill}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("surreptix: a command is required (" + ", ".join(COMMANDS) + ")")
        args = _merge(args, parser)
        for key in ("out", "report"):
            target = getattr(args, key, None)
            if target and args.command != "gen-data":
                Path(target).parent.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (FileNotFoundError, ValueError, OSError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
