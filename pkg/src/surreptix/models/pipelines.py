"""The three toy pipelines as differentiable stage chains with named taps.

Stage numbering follows the usual audio-pipeline picture: stage 3 is the
digital waveform, stage 2 the preprocessed waveform, stage 1 the model
input (a normalized spectral representation), stage 0 the logits.

SBP  waveform -> preprocess -> STFT power -> log -> per-bin normalize -> 2-D CNN
ABP  waveform -> preprocess -> STFT power -> MFCC -> per-coefficient normalize -> 1-D CNN
DBP  200 ms window -> learnable sinc band-pass bank -> 1-D CNN (end to end)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..autodiff import Tensor, ops
from ..dsp import core
from ..dsp import diff as dsp_diff

KINDS = ("SBP", "ABP", "DBP")
KIND_CODES = {"SBP": 0, "ABP": 1, "DBP": 2}

SR = core.SAMPLE_RATE
WIN, HOP = 400, 160
DBP_WINDOW = 3200  # 200 ms
SINC_TAPS = 251
N_MELS, N_MFCC = 40, 20
SBP_CONV1_STRIDE = (2, 4)

TAPS = {
    "SBP": ("stage3", "stage2", "power", "stage1", "conv1", "conv2", "conv3", "fc1", "logits"),
    "ABP": ("stage3", "stage2", "power", "stage1", "conv1", "conv2", "pooled", "logits"),
    "DBP": ("stage3", "sinc", "conv1", "conv2", "cnn", "logits"),
}


def _param_shapes(kind: str, labels: int) -> dict[str, tuple[int, ...]]:
    if kind == "SBP":
        return {
            "conv1_w": (8, 1, 5, 5), "conv1_b": (8,),
            "conv2_w": (16, 8, 3, 3), "conv2_b": (16,),
            "fc1_w": (16 * 10 * 30, 64), "fc1_b": (64,),
            "out_w": (64, labels), "out_b": (labels,),
        }
    if kind == "ABP":
        return {
            "conv1_w": (32, N_MFCC, 5), "conv1_b": (32,),
            "conv2_w": (32, 32, 3), "conv2_b": (32,),
            "out_w": (32, labels), "out_b": (labels,),
        }
    if kind == "DBP":
        return {
            "sinc_low": (16,), "sinc_high": (16,),  # kHz
            "conv1_w": (32, 16, 5), "conv1_b": (32,),
            "conv2_w": (32, 32, 3), "conv2_b": (32,),
            "out_w": (32, labels), "out_b": (labels,),
        }
    raise ValueError(f"unknown pipeline kind {kind!r}; expected one of {KINDS}")


def _buffer_shapes(kind: str) -> dict[str, tuple[int, ...]]:
    if kind == "SBP":
        return {"norm_mean": (core.N_FFT,), "norm_scale": (core.N_FFT,)}
    if kind == "ABP":
        return {"norm_mean": (N_MFCC,), "norm_scale": (N_MFCC,)}
    return {}


def mel_init_cutoffs(n: int, fs: int = SR) -> tuple[np.ndarray, np.ndarray]:
    """Adjacent Mel-spaced bands between 50 Hz and just under fs/2, in kHz."""
    edges = core.mel_to_hz(np.linspace(core.hz_to_mel(50.0), core.hz_to_mel(fs / 2 - 200.0), n + 1))
    return edges[:-1] / 1000.0, edges[1:] / 1000.0


def project_cutoffs(low_khz: np.ndarray, high_khz: np.ndarray, fs: int = SR,
                    min_low: float = 0.02, min_band: float = 0.05) -> tuple[np.ndarray, np.ndarray]:
    """Clamp cutoffs so that ``0 < low < high < fs/2``."""
    nyq = fs / 2000.0
    low = np.clip(low_khz, min_low, nyq - min_band - 0.02)
    high = np.clip(high_khz, low + min_band, nyq - 0.02)
    return low, high


@dataclass
class PipelineModel:
    kind: str
    label_count: int
    params: dict[str, np.ndarray]
    buffers: dict[str, np.ndarray] = field(default_factory=dict)
    dither_seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown pipeline kind {self.kind!r}")
        want = _param_shapes(self.kind, self.label_count)
        if list(self.params) != list(want):
            raise ValueError(f"{self.kind} expects parameters {list(want)}, got {list(self.params)}")
        for k, shape in want.items():
            if self.params[k].shape != shape:
                raise ValueError(f"parameter {k}: shape {self.params[k].shape}, expected {shape}")
        for k, shape in _buffer_shapes(self.kind).items():
            self.buffers.setdefault(k, np.zeros(shape) if k == "norm_mean" else np.ones(shape))

    # -- structure --------------------------------------------------------

    @property
    def input_length(self) -> int:
        """Samples per classifier input (DBP classifies 200 ms windows)."""
        return DBP_WINDOW if self.kind == "DBP" else SR

    @property
    def taps(self) -> tuple[str, ...]:
        return TAPS[self.kind]

    @property
    def has_spectral_stage(self) -> bool:
        return self.kind != "DBP"

    def copy(self) -> "PipelineModel":
        return PipelineModel(self.kind, self.label_count, {k: v.copy() for k, v in self.params.items()},
                             {k: v.copy() for k, v in self.buffers.items()}, self.dither_seed)

    def param_tensors(self, requires_grad: bool = False) -> dict[str, Tensor]:
        return {k: Tensor(v, requires_grad=requires_grad) for k, v in self.params.items()}

    # -- forward ----------------------------------------------------------

    def front_end(self, x: Tensor, taps: dict | None = None) -> Tensor:
        """Stages 3 -> 1. ``x`` is ``(B, T)``; returns the stage-1 tensor."""
        if self.kind == "DBP":
            raise ValueError("DBP is end to end and has no spectral stage 1")
        taps = {} if taps is None else taps
        taps["stage3"] = x
        y = dsp_diff.preprocess(x, dither_seed=self.dither_seed)
        taps["stage2"] = y
        power = dsp_diff.stft_power(y, WIN, HOP, core.N_FFT)
        taps["power"] = power
        if self.kind == "SBP":
            feats = ops.log(power, floor=core.LOG_FLOOR)
        else:
            feats = dsp_diff.mfcc(power, _fbank(), N_MFCC)
        s1 = ops.affine(feats, self.buffers["norm_scale"],
                        -self.buffers["norm_mean"] * self.buffers["norm_scale"])
        taps["stage1"] = s1
        return s1

    def classifier(self, s: Tensor, p: dict[str, Tensor] | None = None, taps: dict | None = None) -> Tensor:
        """Stage 1 (or the raw window, for DBP) -> logits."""
        p = self.param_tensors() if p is None else p
        taps = {} if taps is None else taps
        if self.kind == "SBP":
            B = s.shape[0]
            h = ops.reshape(s, (B, 1) + s.shape[1:])
            h = ops.relu(ops.bias_add(ops.conv2d(h, p["conv1_w"], SBP_CONV1_STRIDE), p["conv1_b"], axis=1))
            taps["conv1"] = h
            h = ops.max_pool(h, (2, 2))
            h = ops.relu(ops.bias_add(ops.conv2d(h, p["conv2_w"]), p["conv2_b"], axis=1))
            taps["conv2"] = taps["conv3"] = h
            h = ops.max_pool(h, (2, 2))
            h = ops.reshape(h, (B, -1))
            h = ops.bias_add(ops.matmul(h, p["fc1_w"]), p["fc1_b"])
            taps["fc1"] = h
            out = ops.bias_add(ops.matmul(ops.relu(h), p["out_w"]), p["out_b"])
        elif self.kind == "ABP":
            h = ops.transpose(s, (0, 2, 1))
            h = ops.relu(ops.bias_add(ops.conv1d(h, p["conv1_w"]), p["conv1_b"], axis=1))
            taps["conv1"] = h
            h = ops.relu(ops.bias_add(ops.conv1d(h, p["conv2_w"]), p["conv2_b"], axis=1))
            taps["conv2"] = h
            h = ops.mean(h, axis=2)
            taps["pooled"] = h
            out = ops.bias_add(ops.matmul(h, p["out_w"]), p["out_b"])
        else:
            B = s.shape[0]
            taps["stage3"] = s
            bank = ops.sinc_bank(ops.scale(p["sinc_low"], 1000.0), ops.scale(p["sinc_high"], 1000.0),
                                 SINC_TAPS, float(SR))
            h = ops.conv1d(ops.reshape(s, (B, 1, s.shape[1])), ops.reshape(bank, (16, 1, SINC_TAPS)))
            h = ops.max_pool(h, 16)
            h = ops.relu(h)
            taps["sinc"] = h
            h = ops.relu(ops.bias_add(ops.conv1d(h, p["conv1_w"]), p["conv1_b"], axis=1))
            h = ops.max_pool(h, 4)
            taps["conv1"] = h
            h = ops.relu(ops.bias_add(ops.conv1d(h, p["conv2_w"]), p["conv2_b"], axis=1))
            taps["conv2"] = h
            h = ops.mean(h, axis=2)
            taps["cnn"] = h
            out = ops.bias_add(ops.matmul(h, p["out_w"]), p["out_b"])
        taps["logits"] = out
        return out

    def forward(self, x, p: dict[str, Tensor] | None = None, taps: dict | None = None,
                start: str = "stage3") -> Tensor:
        """Logits for a batch. ``start="stage1"`` feeds ``x`` in as the stage-1 tensor."""
        x = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))
        if start == "stage1":
            if not self.has_spectral_stage:
                raise ValueError("DBP has no stage 1 to start from")
            if taps is not None:
                taps["stage1"] = x
            return self.classifier(x, p, taps)
        if start != "stage3":
            raise ValueError(f"start must be 'stage3' or 'stage1', got {start!r}")
        if x.ndim != 2:
            raise ValueError(f"expected a (batch, samples) waveform batch, got shape {x.shape}")
        if self.kind == "DBP":
            if x.shape[1] != DBP_WINDOW:
                raise ValueError(f"DBP classifies {DBP_WINDOW}-sample windows, got {x.shape[1]}; "
                                 "use forward_windows for longer audio")
            return self.classifier(x, p, taps)
        return self.classifier(self.front_end(x, taps), p, taps)

    # -- numpy conveniences (no tape) -------------------------------------

    def stage1(self, x: np.ndarray, batch: int = 64) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.concatenate([self.front_end(Tensor(x[i:i + batch])).data for i in range(0, len(x), batch)])

    def logits(self, x: np.ndarray, batch: int = 64, start: str = "stage3") -> np.ndarray:
        """Utterance-level logits. DBP sums window log-probabilities (shift 0)."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == (1 if start == "stage3" else 2)
        x = x[None] if single else x
        if self.kind == "DBP" and start == "stage3":
            from .windows import forward_windows
            out = np.stack([forward_windows(self, row, 0.0).ensemble_logprob for row in x])
        else:
            out = np.concatenate([self.forward(x[i:i + batch], start=start).data for i in range(0, len(x), batch)])
        return out[0] if single else out

    def predict(self, x: np.ndarray, start: str = "stage3") -> np.ndarray:
        return np.argmax(self.logits(x, start=start), axis=-1)

    def accuracy(self, x: np.ndarray, y: np.ndarray, start: str = "stage3") -> float:
        return float(np.mean(self.predict(x, start=start) == np.asarray(y)))

    def tap(self, name: str, x, start: str = "stage3") -> Tensor:
        if name not in self.taps:
            raise KeyError(f"{self.kind} has no tap {name!r}; available: {self.taps}")
        taps: dict = {}
        self.forward(x, taps=taps, start=start)
        return taps[name]

    def fit_normalization(self, x_train: np.ndarray, batch: int = 50) -> None:
        """Freeze per-bin (SBP) or per-coefficient (ABP) statistics from training audio.

        SBP statistics are averaged over mirrored bin pairs so that a
        Hermitian-symmetric spectrogram stays exactly symmetric after
        normalization.
        """
        if not self.has_spectral_stage:
            return
        self.buffers["norm_mean"] = np.zeros_like(self.buffers["norm_mean"])
        self.buffers["norm_scale"] = np.ones_like(self.buffers["norm_scale"])
        total = 0
        s1 = np.zeros(self.buffers["norm_mean"].shape)
        s2 = np.zeros_like(s1)
        for i in range(0, len(x_train), batch):
            f = self.front_end(Tensor(np.atleast_2d(x_train[i:i + batch]))).data
            f = f.reshape(-1, f.shape[-1])
            s1 += f.sum(axis=0)
            s2 += (f * f).sum(axis=0)
            total += f.shape[0]
        mean = s1 / total
        var = s2 / total - mean ** 2
        if self.kind == "SBP":
            mirror = (-np.arange(core.N_FFT)) % core.N_FFT
            mean = 0.5 * (mean + mean[mirror])
            var = 0.5 * (var + var[mirror])
        self.buffers["norm_mean"] = mean
        self.buffers["norm_scale"] = 1.0 / np.sqrt(np.maximum(var, 1e-8))


_FBANK = None


def _fbank() -> np.ndarray:
    global _FBANK
    if _FBANK is None:
        _FBANK = core.mel_filterbank(core.N_FFT, N_MELS, SR)
    return _FBANK


def build(kind: str, label_count: int = 10, seed: int = 0) -> PipelineModel:
    """Fresh, randomly initialized pipeline of the given kind."""
    kind = kind.upper()
    shapes = _param_shapes(kind, label_count)
    rng = np.random.default_rng([seed, KIND_CODES[kind]])
    params = {}
    for name, shape in shapes.items():
        if name.endswith("_b"):
            params[name] = np.zeros(shape)
        elif name.startswith("sinc_"):
            continue
        else:
            fan_in = int(np.prod(shape[1:])) if len(shape) > 2 else shape[0]
            params[name] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
    if kind == "DBP":
        low, high = mel_init_cutoffs(16)
        params = {"sinc_low": low, "sinc_high": high, **params}
        params = {k: params[k] for k in shapes}
    return PipelineModel(kind, label_count, params)
