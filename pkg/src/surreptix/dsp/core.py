"""Plain numpy signal processing for stages 4 -> 1 of an audio pipeline."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import filtfilt

SAMPLE_RATE = 16000
N_FFT = 512
WINDOW_MS = 25.0
HOP_MS = 10.0
LOG_FLOOR = 1e-10
LSB16 = 2.0 ** -15


class ClippingWarning(UserWarning):
    """Samples outside [-1, 1] were clipped during encoding."""

    def __init__(self, count: int):
        super().__init__(f"clipped {count} sample(s) outside [-1, 1]")
        self.count = count


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if arr.size == 0:
            raise ValueError("a waveform needs at least one sample")
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def with_samples(self, samples: np.ndarray) -> "Waveform":
        return Waveform(samples, self.sample_rate)


@dataclass(frozen=True)
class Spectrogram:
    """Time x frequency grid with all ``n_fft`` bins (redundant half included)."""

    values: np.ndarray
    n_fft: int = N_FFT
    win_length: int = 400
    hop: int = 160
    window: str = "hamming"
    sample_rate: int = SAMPLE_RATE
    scale: str = "power"

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def bins(self) -> int:
        return self.values.shape[1]

    @property
    def bin_frequencies(self) -> np.ndarray:
        return np.arange(self.bins) * self.sample_rate / self.n_fft

    def with_values(self, values: np.ndarray) -> "Spectrogram":
        return replace(self, values=np.asarray(values, dtype=np.float64))


@dataclass(frozen=True)
class MelFeatures:
    log_mel: np.ndarray
    mfcc: np.ndarray | None = None
    params: dict = field(default_factory=dict)


def ms_to_samples(ms: float, fs: int) -> int:
    return int(round(ms * fs / 1000.0))


# ---------------------------------------------------------------------------
# stage 4 -> 3: encoding

def _clip(x: np.ndarray) -> np.ndarray:
    n = int(np.count_nonzero((x < -1.0) | (x > 1.0)))
    if n:
        warnings.warn(ClippingWarning(n), stacklevel=3)
        x = np.clip(x, -1.0, 1.0)
    return x


def lpcm_quantize(w: Waveform, bits: int = 16) -> Waveform:
    """Round to the linear ``bits``-bit integer grid, scaled back to [-1, 1)."""
    if bits not in (8, 16):
        raise ValueError(f"bits must be 8 or 16, got {bits}")
    full = 2 ** (bits - 1)
    x = _clip(w.samples)
    codes = np.clip(np.round(x * full), -full, full - 1)
    return w.with_samples(codes / full)


def lpcm_codes(w: Waveform, bits: int = 16) -> np.ndarray:
    full = 2 ** (bits - 1)
    x = _clip(w.samples)
    return np.clip(np.round(x * full), -full, full - 1).astype(np.int64)


def mu_law_encode(w: Waveform, mu: int = 255, bits: int = 8) -> Waveform:
    """Compand with the mu-law curve and quantize to ``2**bits`` codewords.

    The result holds codeword values mapped onto [-1, 1].
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    x = _clip(w.samples)
    y = np.sign(x) * np.log1p(mu * np.abs(x)) / np.log1p(mu)
    levels = 2 ** bits - 1
    codes = np.round((y + 1.0) / 2.0 * levels)
    return w.with_samples(codes / levels * 2.0 - 1.0)


def mu_law_decode(w: Waveform, mu: int = 255) -> Waveform:
    if mu <= 0:
        raise ValueError("mu must be positive")
    y = _clip(w.samples)
    return w.with_samples(np.sign(y) * np.expm1(np.abs(y) * np.log1p(mu)) / mu)


# ---------------------------------------------------------------------------
# stage 3 -> 2: digital preprocessing

def dc_filter(w: Waveform) -> Waveform:
    return w.with_samples(w.samples - w.samples.mean())


def dither_noise(n: int, amplitude: float, seed: int) -> np.ndarray:
    if amplitude < 0:
        raise ValueError("dither amplitude must be >= 0")
    if amplitude == 0:
        return np.zeros(n)
    return np.random.default_rng(seed).uniform(-amplitude, amplitude, size=n)


def dither(w: Waveform, amplitude: float = LSB16, seed: int = 0) -> Waveform:
    return w.with_samples(w.samples + dither_noise(len(w), amplitude, seed))


def pre_emphasis(w: Waveform, alpha: float = 0.97) -> Waveform:
    if not 0 <= alpha < 1:
        raise ValueError(f"alpha must be in [0, 1), got {alpha}")
    x = w.samples
    y = x.copy()
    y[1:] = x[1:] - alpha * x[:-1]
    return w.with_samples(y)


# ---------------------------------------------------------------------------
# stage 2 -> 1: spectral analysis

def hamming(n: int) -> np.ndarray:
    if n == 1:
        return np.ones(1)
    k = np.arange(n)
    return 0.54 - 0.46 * np.cos(2 * np.pi * k / (n - 1))


def frame_signal(x: np.ndarray, win: int, hop: int) -> np.ndarray:
    if x.shape[-1] < win:
        raise ValueError(f"signal of {x.shape[-1]} samples is shorter than one {win}-sample window")
    n = (x.shape[-1] - win) // hop + 1
    idx = np.arange(win)[None, :] + hop * np.arange(n)[:, None]
    return x[..., idx]


def mirror_half(half: np.ndarray, n_fft: int) -> np.ndarray:
    """Rebuild the full ``n_fft``-bin spectrum from its ``n_fft//2+1`` half."""
    nh = half.shape[-1]
    return np.concatenate([half, half[..., 1:n_fft - nh + 1][..., ::-1]], axis=-1)


def stft_complex(x: np.ndarray, win: int, hop: int, n_fft: int) -> np.ndarray:
    """Non-redundant complex STFT, shape ``(frames, n_fft//2+1)``."""
    frames = frame_signal(x, win, hop) * hamming(win)
    return np.fft.rfft(frames, n_fft, axis=-1)


def stft(w: Waveform, window_ms: float = WINDOW_MS, hop_ms: float = HOP_MS,
         n_fft: int = N_FFT, window: str = "hamming") -> Spectrogram:
    """Power spectrogram keeping every one of the ``n_fft`` bins."""
    if window != "hamming":
        raise ValueError(f"unsupported window {window!r}")
    fs = w.sample_rate
    win = ms_to_samples(window_ms, fs)
    hop = ms_to_samples(hop_ms, fs)
    if win > n_fft:
        raise ValueError(f"window of {win} samples exceeds n_fft={n_fft}")
    if hop > win:
        raise ValueError(f"hop {hop} exceeds window {win}")
    X = stft_complex(w.samples, win, hop, n_fft)
    power = mirror_half(X.real ** 2 + X.imag ** 2, n_fft)
    return Spectrogram(power, n_fft=n_fft, win_length=win, hop=hop, window=window, sample_rate=fs)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_fft: int = N_FFT, n_mels: int = 40, fs: int = SAMPLE_RATE,
                   fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    """Triangular Mel filters over the ``n_fft//2+1`` non-redundant bins."""
    if n_mels < 2:
        raise ValueError("n_mels must be >= 2")
    fmax = fs / 2.0 if fmax is None else fmax
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * fs / n_fft
    lo, mid, hi = edges[:-2], edges[1:-1], edges[2:]
    f = freqs[:, None]
    rising = (f - lo) / (mid - lo)
    falling = (hi - f) / (hi - mid)
    fb = np.where((f > lo) & (f <= mid), rising, 0.0)
    fb = np.where((f > mid) & (f < hi), falling, fb)
    return fb


def log_floor(x: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(x, LOG_FLOOR))


def mfcc(s: Spectrogram, n_mels: int = 40, n_mfcc: int | None = 20) -> MelFeatures:
    from ..autodiff.ops import dct_matrix

    if n_mfcc is not None and n_mfcc > n_mels:
        raise ValueError("n_mfcc cannot exceed n_mels")
    fb = mel_filterbank(s.n_fft, n_mels, s.sample_rate)
    log_mel = log_floor(s.values[:, : fb.shape[0]] @ fb)
    coeffs = None if n_mfcc is None else log_mel @ dct_matrix(n_mels, n_mfcc).T
    return MelFeatures(log_mel, coeffs, {"n_mels": n_mels, "n_mfcc": n_mfcc})


# ---------------------------------------------------------------------------
# stage 1 -> 3: inversion

def istft(X: np.ndarray, win: int, hop: int, n_fft: int, length: int | None = None) -> np.ndarray:
    """Least-squares inverse of :func:`stft_complex` (window-square normalized overlap-add)."""
    frames = np.fft.irfft(X, n_fft, axis=-1)[:, :win]
    w = hamming(win)
    n = (X.shape[0] - 1) * hop + win
    out = np.zeros(n)
    norm = np.zeros(n)
    for i, fr in enumerate(frames):
        out[i * hop:i * hop + win] += w * fr
        norm[i * hop:i * hop + win] += w * w
    out = out / np.maximum(norm, 1e-12)
    if length is not None:
        out = np.pad(out, (0, max(0, length - n)))[:length]
    return out


def spectral_convergence(target_mag: np.ndarray, x: np.ndarray, win: int, hop: int, n_fft: int) -> float:
    mag = np.abs(stft_complex(x, win, hop, n_fft))
    return float(np.linalg.norm(mag - target_mag) / max(np.linalg.norm(target_mag), 1e-300))


def griffin_lim(s: Spectrogram, iterations: int = 50, seed: int = 0,
                return_history: bool = False):
    """Recover a waveform from spectrogram magnitudes by alternating projections.

    Phases start uniform in [-pi, pi) from ``seed``. With ``return_history``
    the spectral convergence after the initial guess and after every
    iteration is returned as well.
    """
    if s.frames == 0:
        raise ValueError("cannot invert a spectrogram with zero frames")
    nh = s.n_fft // 2 + 1
    vals = s.values[:, :nh]
    if s.scale == "power":
        mag = np.sqrt(np.maximum(vals, 0.0))
    elif s.scale == "magnitude":
        mag = np.abs(vals)
    else:
        raise ValueError(f"cannot invert a {s.scale!r} spectrogram")
    rng = np.random.default_rng(seed)
    phase = rng.uniform(-np.pi, np.pi, size=mag.shape)
    args = (s.win_length, s.hop, s.n_fft)
    x = istft(mag * np.exp(1j * phase), *args)
    history = [spectral_convergence(mag, x, *args)]
    for _ in range(iterations):
        X = stft_complex(x, *args)
        x = istft(mag * np.exp(1j * np.angle(X)), *args)
        if return_history:
            history.append(spectral_convergence(mag, x, *args))
    w = Waveform(x, s.sample_rate)
    return (w, history) if return_history else w


# ---------------------------------------------------------------------------
# band limiting

def fir_lowpass(cutoff_hz: float, fs: int, taps: int = 101) -> np.ndarray:
    """Hamming-windowed sinc low-pass with unit DC gain."""
    if not 0 < cutoff_hz < fs / 2:
        raise ValueError(f"cutoff must lie in (0, {fs / 2}), got {cutoff_hz}")
    fc = cutoff_hz / fs
    n = np.arange(taps) - (taps - 1) / 2.0
    h = 2 * fc * np.sinc(2 * fc * n) * hamming(taps)
    return h / h.sum()


def low_pass(w: Waveform, cutoff_hz: float, taps: int = 101) -> Waveform:
    """Zero-phase (forward-backward) FIR low-pass."""
    h = fir_lowpass(cutoff_hz, w.sample_rate, taps)
    x = w.samples
    padlen = min(3 * taps, x.size - 1)
    return w.with_samples(filtfilt(h, [1.0], x, padtype="odd", padlen=padlen))


def band_power(s: Spectrogram, lo_hz: float, hi_hz: float) -> float:
    """Total power (all frames) in bins whose centre frequency lies in [lo, hi)."""
    if not 0 <= lo_hz < hi_hz <= s.sample_rate / 2:
        raise ValueError(f"need 0 <= lo < hi <= fs/2, got [{lo_hz}, {hi_hz})")
    f = s.bin_frequencies
    sel = (f >= lo_hz) & (f < hi_hz)
    return float(s.values[:, sel].sum())


def band_limited_noise(n: int, lo_hz: float, hi_hz: float, fs: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-peak noise whose whole-signal spectrum is confined to [lo, hi]."""
    freqs = np.fft.rfftfreq(n, 1.0 / fs)
    sel = (freqs >= lo_hz) & (freqs <= hi_hz)
    spec = np.zeros(freqs.size, dtype=np.complex128)
    spec[sel] = np.exp(1j * rng.uniform(-np.pi, np.pi, size=int(sel.sum())))
    x = np.fft.irfft(spec, n)
    peak = np.max(np.abs(x))
    return x / peak if peak > 0 else x


def band_project(x: np.ndarray, lo_hz: float, hi_hz: float, fs: int) -> np.ndarray:
    """Zero every whole-signal DFT coefficient outside [lo, hi]."""
    n = x.shape[-1]
    freqs = np.fft.rfftfreq(n, 1.0 / fs)
    keep = (freqs >= lo_hz) & (freqs <= hi_hz)
    X = np.fft.rfft(x, axis=-1)
    X[..., ~keep] = 0
    return np.fft.irfft(X, n, axis=-1)
