"""Deterministic synthetic speaker corpus.

Each speaker is a source-filter voice: a harmonic stack at a jittered
fundamental, shaped by three formant resonators and a spectral rolloff,
mixed with a low noise floor and gated by syllable-rate envelopes. Voiced
content sits below ``CONTENT_CUTOFF_HZ``; on top of it a faint white
recording-noise floor (``RECORDING_NOISE`` rms) covers the whole band, so
no spectrogram bin is left at the bare dither level.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from ..dsp.core import SAMPLE_RATE, Waveform, band_project, lpcm_quantize
from ..dsp.io import read_wav, write_wav

CONTENT_CUTOFF_HZ = 5000.0
TRAIN_FRACTION = 0.8
RECORDING_NOISE = 1e-4


@dataclass(frozen=True)
class SpeakerProfile:
    f0: float
    formants: tuple[float, float, float]
    bandwidths: tuple[float, float, float]
    rolloff: float
    noise_level: float
    seed: int

    def __post_init__(self):
        if not 80.0 <= self.f0 <= 300.0:
            raise ValueError(f"f0 {self.f0} outside [80, 300] Hz")
        if any(not 0 < f < 4000.0 for f in self.formants):
            raise ValueError(f"formants {self.formants} must lie below 4 kHz")


@dataclass(frozen=True)
class Corpus:
    waveforms: np.ndarray  # (N, T), 16-bit grid values
    labels: np.ndarray
    is_train: np.ndarray
    sample_ids: tuple[str, ...]
    profiles: tuple[SpeakerProfile, ...]
    sample_rate: int = SAMPLE_RATE

    @property
    def n_speakers(self) -> int:
        return len(self.profiles)

    @property
    def train(self) -> tuple[np.ndarray, np.ndarray]:
        return self.waveforms[self.is_train], self.labels[self.is_train]

    @property
    def test(self) -> tuple[np.ndarray, np.ndarray]:
        return self.waveforms[~self.is_train], self.labels[~self.is_train]

    @property
    def test_ids(self) -> tuple[str, ...]:
        return tuple(s for s, t in zip(self.sample_ids, self.is_train) if not t)


def make_profiles(n_speakers: int, seed: int) -> tuple[SpeakerProfile, ...]:
    rng = np.random.default_rng([seed, 0xC0])
    # stratify f0 so every pair of speakers is distinguishable at least a little
    f0s = np.geomspace(90.0, 270.0, n_speakers) * rng.uniform(0.97, 1.03, n_speakers)
    rng.shuffle(f0s)
    out = []
    for i in range(n_speakers):
        f1 = rng.uniform(300, 850)
        f2 = rng.uniform(max(f1 + 300, 900), 2400)
        f3 = rng.uniform(max(f2 + 300, 2200), 3800)
        out.append(SpeakerProfile(
            f0=float(np.clip(f0s[i], 80, 300)),
            formants=(float(f1), float(f2), float(f3)),
            bandwidths=tuple(float(b) for b in rng.uniform(70, 220, 3)),
            rolloff=float(rng.uniform(0.7, 1.6)),
            noise_level=float(10 ** rng.uniform(-3.3, -2.6)),
            seed=int(rng.integers(2**31)),
        ))
    return tuple(out)


def _resonator(freq: float, bw: float, fs: int) -> tuple[np.ndarray, np.ndarray]:
    r = np.exp(-np.pi * bw / fs)
    theta = 2 * np.pi * freq / fs
    a = np.array([1.0, -2 * r * np.cos(theta), r * r])
    # unit gain at the centre frequency
    z = np.exp(1j * theta)
    gain = abs(a[0] + a[1] / z + a[2] / z ** 2)
    return np.array([gain]), a


def _syllable_envelope(n: int, fs: int, rng: np.random.Generator) -> np.ndarray:
    t = np.arange(n) / fs
    env = np.zeros(n)
    pos = rng.uniform(0.0, 0.08)
    while pos < t[-1]:
        length = rng.uniform(0.12, 0.28)
        centre = pos + length / 2
        env += np.exp(-0.5 * ((t - centre) / (length / 3.2)) ** 2) * rng.uniform(0.6, 1.0)
        pos += length + rng.uniform(0.02, 0.1)
    return 0.15 + env / max(env.max(), 1e-9)


def synthesize(profile: SpeakerProfile, utterance: int, duration_s: float,
               fs: int = SAMPLE_RATE) -> np.ndarray:
    """One utterance of ``profile``; deterministic in (profile.seed, utterance)."""
    rng = np.random.default_rng([profile.seed, utterance])
    n = int(round(duration_s * fs))
    t = np.arange(n) / fs
    f0 = profile.f0 * rng.uniform(0.95, 1.05)
    vib = 1.0 + 0.03 * np.sin(2 * np.pi * rng.uniform(3, 6) * t + rng.uniform(0, 2 * np.pi))
    drift = 1.0 + rng.uniform(-0.04, 0.04) * (t / max(t[-1], 1e-9) - 0.5)
    inst = f0 * vib * drift
    phase = 2 * np.pi * np.cumsum(inst) / fs
    top = CONTENT_CUTOFF_HZ * 0.95 / inst.max()
    src = np.zeros(n)
    for k in range(1, int(top) + 1):
        src += k ** -profile.rolloff * np.sin(k * phase + rng.uniform(0, 2 * np.pi))
    src += profile.noise_level * 30 * rng.normal(size=n)
    y = src
    for f, bw in zip(profile.formants, profile.bandwidths):
        b, a = _resonator(f * rng.uniform(0.96, 1.04), bw, fs)
        y = lfilter(b, a, y)
    y = y * _syllable_envelope(n, fs, rng)
    y = y / np.abs(y).max() * rng.uniform(0.3, 0.5)
    y = y + profile.noise_level * rng.normal(size=n)
    y = band_project(y, 0.0, CONTENT_CUTOFF_HZ, fs)
    y = y - y.mean()
    y = y / max(np.abs(y).max() / 0.6, 1.0)
    y = y + RECORDING_NOISE * rng.normal(size=n)
    return lpcm_quantize(Waveform(y, fs), 16).samples


def generate_corpus(n_speakers: int = 10, n_utts: int = 100, duration_s: float = 1.0,
                    seed: int = 0) -> Corpus:
    if n_speakers < 2:
        raise ValueError("n_speakers must be >= 2")
    if n_utts < 1:
        raise ValueError("n_utts must be >= 1")
    profiles = make_profiles(n_speakers, seed)
    n_train = int(round(TRAIN_FRACTION * n_utts))
    waves, labels, is_train, ids = [], [], [], []
    for spk, prof in enumerate(profiles):
        for u in range(n_utts):
            waves.append(synthesize(prof, u, duration_s))
            labels.append(spk)
            is_train.append(u < n_train)
            ids.append(f"s{spk:02d}u{u:03d}")
    return Corpus(np.stack(waves), np.array(labels), np.array(is_train), tuple(ids), profiles)


def save_corpus(corpus: Corpus, directory: str | Path) -> Path:
    """Write every utterance as WAV plus ``manifest.txt`` (sample_id speaker split)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    lines = []
    for x, y, tr, sid in zip(corpus.waveforms, corpus.labels, corpus.is_train, corpus.sample_ids):
        write_wav(d / f"{sid}.wav", Waveform(x, corpus.sample_rate))
        lines.append(f"{sid}\t{int(y)}\t{'train' if tr else 'test'}")
    manifest = d / "manifest.txt"
    manifest.write_text("sample_id\tspeaker\tsplit\n" + "\n".join(lines) + "\n")
    return manifest


def load_corpus(directory: str | Path) -> Corpus:
    d = Path(directory)
    rows = (d / "manifest.txt").read_text().splitlines()[1:]
    waves, labels, is_train, ids = [], [], [], []
    for row in rows:
        sid, spk, split = row.split("\t")
        waves.append(read_wav(d / f"{sid}.wav").samples)
        labels.append(int(spk))
        is_train.append(split == "train")
        ids.append(sid)
    if not rows:
        raise ValueError(f"{d}: empty manifest")
    return Corpus(np.stack(waves), np.array(labels), np.array(is_train), tuple(ids), ())
