"""WAV (16-bit PCM mono 16 kHz) and SPG1 spectrogram files."""

from __future__ import annotations

import struct
import wave
from pathlib import Path

import numpy as np

from .core import SAMPLE_RATE, Spectrogram, Waveform, lpcm_codes


class AudioFormatError(ValueError):
    pass


def write_wav(path: str | Path, w: Waveform) -> None:
    if w.sample_rate != SAMPLE_RATE:
        raise AudioFormatError(f"only {SAMPLE_RATE} Hz audio is written, got {w.sample_rate} Hz")
    codes = lpcm_codes(w, 16).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(SAMPLE_RATE)
        fh.writeframes(codes.tobytes())


def read_wav(path: str | Path) -> Waveform:
    try:
        with wave.open(str(path), "rb") as fh:
            channels, width, rate = fh.getnchannels(), fh.getsampwidth(), fh.getframerate()
            raw = fh.readframes(fh.getnframes())
    except (wave.Error, EOFError) as exc:
        raise AudioFormatError(f"{path}: not a PCM RIFF/WAVE file ({exc})") from exc
    if channels != 1:
        raise AudioFormatError(f"{path}: expected mono, found {channels} channels")
    if width != 2:
        raise AudioFormatError(f"{path}: expected 16-bit samples, found {8 * width}-bit")
    if rate != SAMPLE_RATE:
        raise AudioFormatError(f"{path}: expected {SAMPLE_RATE} Hz, found {rate} Hz")
    codes = np.frombuffer(raw, dtype="<i2")
    if codes.size == 0:
        raise AudioFormatError(f"{path}: no audio frames")
    return Waveform(codes.astype(np.float64) / 32768.0, rate)


def wav_round_trip(w: Waveform) -> Waveform:
    """What reading back :func:`write_wav` output would give, without touching disk."""
    return Waveform(lpcm_codes(w, 16) / 32768.0, w.sample_rate)


_SPG_MAGIC = b"SPG1"
_WINDOWS = {"hamming": 0}
_SCALES = {"power": 0, "magnitude": 1, "log": 2, "normalized": 3}


def write_spectrogram(path: str | Path, s: Spectrogram) -> None:
    vals = np.ascontiguousarray(s.values, dtype="<f8")
    if vals.ndim != 2:
        raise ValueError("spectrogram values must be 2-D")
    with open(path, "wb") as fh:
        fh.write(_SPG_MAGIC)
        fh.write(struct.pack("<II", *vals.shape))
        fh.write(vals.tobytes())
        fh.write(struct.pack("<IIIIBB", s.n_fft, s.win_length, s.hop, s.sample_rate,
                             _WINDOWS[s.window], _SCALES[s.scale]))


def read_spectrogram(path: str | Path) -> Spectrogram:
    data = Path(path).read_bytes()
    if data[:4] != _SPG_MAGIC:
        raise ValueError(f"{path}: bad magic {data[:4]!r}, expected {_SPG_MAGIC!r}")
    frames, bins = struct.unpack_from("<II", data, 4)
    off = 12 + 8 * frames * bins
    tail = struct.calcsize("<IIIIBB")
    if len(data) != off + tail:
        raise ValueError(f"{path}: truncated or oversized spectrogram file")
    vals = np.frombuffer(data, dtype="<f8", count=frames * bins, offset=12).reshape(frames, bins)
    n_fft, win, hop, sr, wcode, scode = struct.unpack_from("<IIIIBB", data, off)
    window = {v: k for k, v in _WINDOWS.items()}[wcode]
    scale = {v: k for k, v in _SCALES.items()}[scode]
    return Spectrogram(vals.astype(np.float64), n_fft=n_fft, win_length=win, hop=hop,
                       window=window, sample_rate=sr, scale=scale)
