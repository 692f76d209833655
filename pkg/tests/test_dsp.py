import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surreptix import dsp
from surreptix.autodiff import Tensor

from oracles import (best_lag_correlation, central_difference, direct_dft, hz_to_mel, max_rel_error,
                     tape_gradients, triangle_oracle)

FS = 16000


def tone(freq, seconds=1.0, amp=0.5):
    t = np.arange(int(FS * seconds)) / FS
    return dsp.Waveform(amp * np.sin(2 * np.pi * freq * t))


def asymmetry(values):
    n = values.shape[1]
    k = np.arange(1, n)
    a, b = values[:, k], values[:, n - k]
    return np.max(np.abs(a - b) / np.maximum(np.abs(a) + np.abs(b), 1e-300))


# -- encoding ---------------------------------------------------------------

def test_lpcm_zero_and_grid_bound():
    assert dsp.lpcm_quantize(dsp.Waveform([0.0]), 16).samples[0] == 0.0
    x = np.random.default_rng(0).uniform(-1, 1, 5000)
    q = dsp.lpcm_quantize(dsp.Waveform(x), 16).samples
    assert np.max(np.abs(q - x)) <= 2.0 ** -15
    assert np.array_equal(q * 32768, np.round(q * 32768))


def test_lpcm_rejects_odd_bit_depths():
    with pytest.raises(ValueError):
        dsp.lpcm_quantize(dsp.Waveform([0.1]), 12)


def test_clipping_warns_with_count():
    with pytest.warns(dsp.ClippingWarning) as rec:
        out = dsp.lpcm_quantize(dsp.Waveform([1.5, -2.0, 0.1]), 16)
    assert rec[0].message.count == 2
    assert np.all(np.abs(out.samples) <= 1.0)


def test_mu_law_round_trip_bounded_by_worst_codeword_gap():
    mu, bits = 255, 8
    levels = 2 ** bits - 1
    # every decodable value, enumerated; rounding in the companded domain can
    # land at most one full gap away from the input
    codewords = np.arange(levels + 1) / levels * 2 - 1
    decoded = np.sign(codewords) * ((1 + mu) ** np.abs(codewords) - 1) / mu
    worst_gap = np.max(np.diff(decoded))
    x = np.random.default_rng(1).uniform(-1, 1, 1000)
    rt = dsp.mu_law_decode(dsp.mu_law_encode(dsp.Waveform(x), mu, bits), mu).samples
    assert np.max(np.abs(rt - x)) < worst_gap
    order = np.argsort(x)
    assert np.all(np.diff(rt[order]) >= 0)
    assert np.all(np.abs(rt) <= 1.0)


def test_mu_law_rejects_nonpositive_mu():
    with pytest.raises(ValueError):
        dsp.mu_law_encode(dsp.Waveform([0.0]), mu=0)


# -- preprocessing ----------------------------------------------------------

def test_dc_filter_cases():
    assert np.all(dsp.dc_filter(dsp.Waveform(np.full(100, 0.5))).samples == 0.0)
    n = np.arange(1600)
    s = np.sin(2 * np.pi * n / 160)  # whole number of periods, mean exactly ~0
    out = dsp.dc_filter(dsp.Waveform(s + 0.1)).samples
    assert np.allclose(out, s - s.mean(), atol=1e-12)
    r = np.random.default_rng(2).normal(size=4321)
    assert abs(dsp.dc_filter(dsp.Waveform(r)).samples.mean()) <= 1e-12


def test_dither_identity_reproducible_and_centred():
    w = dsp.Waveform(np.random.default_rng(3).uniform(-0.5, 0.5, 100_000))
    assert np.array_equal(dsp.dither(w, 0.0, seed=1).samples, w.samples)
    a = dsp.dither(w, 2.0 ** -15, seed=9).samples
    b = dsp.dither(w, 2.0 ** -15, seed=9).samples
    assert a.tobytes() == b.tobytes()
    noise = a - w.samples
    amp = 2.0 ** -15
    assert np.all(np.abs(noise) <= amp)
    sigma = amp / np.sqrt(3) / np.sqrt(noise.size)
    assert abs(noise.mean()) < 3 * sigma
    with pytest.raises(ValueError):
        dsp.dither(w, -1.0)


def test_pre_emphasis_cases():
    r = np.random.default_rng(4).normal(size=300)
    assert np.array_equal(dsp.pre_emphasis(dsp.Waveform(r), 0.0).samples, r)
    c = dsp.pre_emphasis(dsp.Waveform(np.full(10, 0.4)), 0.97).samples
    assert c[0] == 0.4 and np.allclose(c[1:], 0.03 * 0.4, atol=1e-15)
    expected = [r[0]] + [r[i] - 0.97 * r[i - 1] for i in range(1, r.size)]
    assert np.array_equal(dsp.pre_emphasis(dsp.Waveform(r), 0.97).samples, expected)
    with pytest.raises(ValueError):
        dsp.pre_emphasis(dsp.Waveform(r), 1.0)


# -- stft -------------------------------------------------------------------

def test_stft_frame_count_and_full_bins():
    s = dsp.stft(tone(440))
    assert s.values.shape == ((16000 - 400) // 160 + 1, 512)
    assert (s.win_length, s.hop, s.n_fft) == (400, 160, 512)


def test_stft_sine_peaks_at_bin_and_mirror():
    s = dsp.stft(tone(1000))
    assert np.all(np.argmax(s.values[:, :257], axis=1) == 1000 * 512 // FS)
    assert np.all(np.argmax(s.values[:, 257:], axis=1) + 257 == 512 - 32)


def test_stft_zero_signal():
    assert not np.any(dsp.stft(dsp.Waveform(np.zeros(1600))).values)


def test_stft_errors():
    with pytest.raises(ValueError, match="shorter"):
        dsp.stft(dsp.Waveform(np.zeros(100)))
    with pytest.raises(ValueError):
        dsp.stft(tone(100), window_ms=40.0)  # 640 samples > n_fft
    with pytest.raises(ValueError):
        dsp.stft(tone(100), window="hann")


def test_stft_matches_direct_dft_oracle():
    w = dsp.Waveform(np.random.default_rng(5).normal(size=720))
    s = dsp.stft(w)
    frame = w.samples[160:560] * (0.54 - 0.46 * np.cos(2 * np.pi * np.arange(400) / 399))
    ref = np.abs(direct_dft(frame, 512)) ** 2
    assert max_rel_error(s.values[1], ref, floor=1e-9 * ref.max()) < 1e-9


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=400, max_value=3000), st.integers(min_value=0, max_value=2**31 - 1),
       st.floats(min_value=1e-6, max_value=1.0))
def test_stft_hermitian_for_real_input(n, seed, amp):
    x = amp * np.random.default_rng(seed).uniform(-1, 1, n)
    assert asymmetry(dsp.stft(dsp.Waveform(x)).values) <= 1e-9


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_parseval_per_frame(seed):
    x = np.random.default_rng(seed).normal(size=400)
    s = dsp.stft(dsp.Waveform(x))
    energy = np.sum((x * dsp.hamming(400)) ** 2)
    assert s.values[0].sum() == pytest.approx(energy * 512, rel=1e-6)


def test_hamming_definition():
    n = np.arange(400)
    assert np.allclose(dsp.hamming(400), 0.54 - 0.46 * np.cos(2 * np.pi * n / 399), atol=1e-15)


# -- mel / mfcc -------------------------------------------------------------

def test_mel_scale_values():
    assert dsp.hz_to_mel(0.0) == 0.0
    assert dsp.hz_to_mel(1000.0) == pytest.approx(2595 * np.log10(1 + 1000 / 700), abs=1e-12)
    assert dsp.hz_to_mel(1000.0) == pytest.approx(1000.1, abs=0.2)
    assert dsp.mel_to_hz(dsp.hz_to_mel(3210.0)) == pytest.approx(3210.0)


@pytest.mark.parametrize("n_mels", [2, 20, 40])
def test_mel_filterbank_matches_triangle_oracle(n_mels):
    fb = dsp.mel_filterbank(512, n_mels, FS)
    ref = triangle_oracle(512, n_mels, FS)
    assert np.max(np.abs(fb - ref)) < 1e-9
    assert np.allclose(fb.sum(axis=0), ref.sum(axis=0), atol=1e-9)


def test_mfcc_shapes_floor_and_errors():
    s = dsp.stft(dsp.Waveform(np.zeros(1600)))
    feats = dsp.mfcc(s, 40, 20)
    assert feats.log_mel.shape == (s.frames, 40) and feats.mfcc.shape == (s.frames, 20)
    assert np.all(np.isfinite(feats.log_mel)) and np.allclose(feats.log_mel, np.log(1e-10))
    with pytest.raises(ValueError):
        dsp.mfcc(s, 10, 12)
    with pytest.raises(ValueError):
        dsp.mel_filterbank(512, 1, FS)


# -- differentiable twins ---------------------------------------------------

def test_tape_stft_and_mfcc_match_plain_routines():
    x = np.random.default_rng(6).normal(size=(2, 2400)) * 0.3
    p = dsp.diff.stft_power(Tensor(x)).data
    fb = dsp.mel_filterbank(512, 40, FS)
    m = dsp.diff.mfcc(Tensor(p), fb, 20).data
    for i in range(2):
        s = dsp.stft(dsp.Waveform(x[i]))
        assert np.max(np.abs(p[i] - s.values)) <= 1e-9 * s.values.max()
        assert np.max(np.abs(m[i] - dsp.mfcc(s, 40, 20).mfcc)) <= 1e-9


def test_tape_preprocessing_matches_plain_chain():
    x = np.random.default_rng(7).normal(size=(1, 1600)) * 0.1
    w = dsp.pre_emphasis(dsp.dither(dsp.dc_filter(dsp.Waveform(x[0])), dsp.LSB16, seed=3), 0.97)
    got = dsp.diff.preprocess(Tensor(x), dither_seed=3).data[0]
    assert np.max(np.abs(got - w.samples)) <= 1e-15


@pytest.mark.parametrize("seed", range(20))
def test_tape_front_ends_match_finite_differences(seed):
    rng = np.random.default_rng(100 + seed)
    x = rng.normal(size=(1, 720)) * 0.2
    fb = dsp.mel_filterbank(512, 12, FS)
    proj = rng.normal(size=(1, 3, 8))
    coords = rng.choice(720, size=6, replace=False)

    def f(t):
        y = dsp.diff.preprocess(t, dither_seed=1)
        return (dsp.diff.mfcc(dsp.diff.stft_power(y), fb, 8) * Tensor(proj)).sum()

    (g,) = tape_gradients(f, x)
    num = central_difference(lambda v: f(Tensor(v)).item(), x, h=1e-5, coords=list(coords))
    assert max_rel_error(g.reshape(-1)[coords], num, floor=1e-4 * np.abs(g).max()) <= 1e-3


# -- griffin-lim ------------------------------------------------------------

def test_griffin_lim_short_tone_correlates_with_source():
    # a 3-frame tone; long stationary tones develop phase dislocations
    w = tone(440, seconds=0.05)
    s = dsp.stft(w)
    scores = []
    for seed in range(10):
        r = dsp.griffin_lim(s, 50, seed=seed).samples
        scores.append(abs(best_lag_correlation(r, w.samples[: r.size], 40)))
    assert np.median(scores) >= 0.99


def test_griffin_lim_zero_iterations_is_random_phase_init():
    s = dsp.stft(tone(440, 0.25))
    r, hist = dsp.griffin_lim(s, 0, seed=4, return_history=True)
    mag = np.sqrt(s.values[:, :257])
    phase = np.random.default_rng(4).uniform(-np.pi, np.pi, size=mag.shape)
    init = dsp.istft(mag * np.exp(1j * phase), 400, 160, 512)
    assert np.array_equal(r.samples, init)
    assert hist == [dsp.spectral_convergence(mag, init, 400, 160, 512)]


@pytest.mark.parametrize("seed", range(10))
def test_griffin_lim_convergence_is_monotone(seed):
    rng = np.random.default_rng(seed)
    n = 8000
    t = np.arange(n) / FS
    f0 = rng.uniform(90, 250)
    x = sum(np.sin(2 * np.pi * k * f0 * t + rng.uniform(0, 6)) / k for k in range(1, 12))
    x *= np.sin(np.pi * t * rng.uniform(3, 8)) ** 2
    x = dsp.band_project(x + 0.05 * rng.normal(size=n), 60, 4000, FS)
    _, hist = dsp.griffin_lim(dsp.stft(dsp.Waveform(0.3 * x / np.abs(x).max())), 30, seed=seed,
                              return_history=True)
    assert np.all(np.diff(hist) <= 1e-12)
    assert hist[-1] < hist[0]


def test_griffin_lim_rejects_empty():
    empty = dsp.Spectrogram(np.zeros((0, 512)))
    with pytest.raises(ValueError):
        dsp.griffin_lim(empty, 5)


# -- band limiting ----------------------------------------------------------

def rms_ratio(inp, out):
    core = slice(2000, -2000)
    return np.sqrt(np.mean(out[core] ** 2) / np.mean(inp[core] ** 2))


def test_low_pass_passband_stopband_and_dc():
    x = tone(1000)
    assert abs(1 - rms_ratio(x.samples, dsp.low_pass(x, 7000).samples)) <= 0.01
    x = tone(7500)
    assert 20 * np.log10(rms_ratio(x.samples, dsp.low_pass(x, 7000).samples)) <= -40
    d = dsp.Waveform(np.full(2000, 0.3))
    assert np.max(np.abs(dsp.low_pass(d, 7000).samples - 0.3)) <= 1e-6


@pytest.mark.parametrize("cutoff", [6500.0, 7000.0])
def test_low_pass_stopband_at_cutoff_plus_500(cutoff):
    x = tone(cutoff + 500)
    assert 20 * np.log10(rms_ratio(x.samples, dsp.low_pass(x, cutoff).samples)) <= -40


def test_low_pass_idempotent_on_band_limited_signal():
    x = dsp.band_project(np.random.default_rng(8).normal(size=16000), 0, 3000, FS) * 0.1
    once = dsp.low_pass(dsp.Waveform(x), 7000).samples
    twice = dsp.low_pass(dsp.Waveform(once), 7000).samples
    assert np.max(np.abs(twice - once)) <= 1e-6


def test_low_pass_reapplication_error_within_passband_ripple():
    from scipy.signal import freqz

    h = dsp.fir_lowpass(7000, FS)
    _, resp = freqz(h, worN=np.linspace(0, 3000, 301), fs=FS)
    ripple = np.max(np.abs(np.abs(resp) ** 2 - 1))
    x = dsp.band_project(np.random.default_rng(8).normal(size=16000), 0, 3000, FS) * 0.1
    once = dsp.low_pass(dsp.Waveform(x), 7000).samples
    twice = dsp.low_pass(dsp.Waveform(once), 7000).samples
    assert np.max(np.abs(twice - once)) <= ripple * np.sum(np.abs(np.fft.rfft(once))) * 2 / once.size


def test_low_pass_cutoff_validation():
    with pytest.raises(ValueError):
        dsp.low_pass(tone(100), 8000)
    with pytest.raises(ValueError):
        dsp.low_pass(tone(100), 0)


def test_band_power_cases():
    assert dsp.band_power(dsp.stft(dsp.Waveform(np.zeros(1600))), 0, 8000) == 0.0
    s = dsp.stft(tone(7500))
    total = dsp.band_power(s, 0, 8000)
    assert dsp.band_power(s, 7000, 8000) >= 0.95 * total
    with pytest.raises(ValueError):
        dsp.band_power(s, 5000, 4000)


# -- files ------------------------------------------------------------------

def test_wav_round_trip(tmp_path):
    x = np.random.default_rng(9).uniform(-1, 1, 1234)
    w = dsp.Waveform(x)
    path = tmp_path / "a.wav"
    dsp.write_wav(path, w)
    back = dsp.read_wav(path)
    assert np.max(np.abs(back.samples - x)) <= 2.0 ** -15
    assert np.array_equal(back.samples, dsp.wav_round_trip(w).samples)
    assert np.array_equal(back.samples, dsp.lpcm_quantize(w, 16).samples)


def test_wav_rejects_other_formats(tmp_path):
    import wave
    path = tmp_path / "stereo.wav"
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(2)
        fh.setsampwidth(2)
        fh.setframerate(16000)
        fh.writeframes(b"\x00" * 16)
    with pytest.raises(dsp.AudioFormatError, match="mono"):
        dsp.read_wav(path)
    path8k = tmp_path / "slow.wav"
    with wave.open(str(path8k), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(8000)
        fh.writeframes(b"\x00" * 16)
    with pytest.raises(dsp.AudioFormatError, match="16000 Hz"):
        dsp.read_wav(path8k)
    junk = tmp_path / "junk.wav"
    junk.write_bytes(b"not a wav file at all")
    with pytest.raises(dsp.AudioFormatError):
        dsp.read_wav(junk)


def test_spectrogram_container_round_trip(tmp_path):
    s = dsp.stft(tone(300, 0.2))
    path = tmp_path / "s.spg"
    dsp.write_spectrogram(path, s)
    back = dsp.read_spectrogram(path)
    assert np.array_equal(back.values, s.values)
    assert (back.n_fft, back.win_length, back.hop, back.sample_rate, back.window, back.scale) == \
        (512, 400, 160, 16000, "hamming", "power")
    raw = path.read_bytes()
    path.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ValueError, match="magic"):
        dsp.read_spectrogram(path)
    path.write_bytes(raw[:-3])
    with pytest.raises(ValueError):
        dsp.read_spectrogram(path)


def test_waveform_rejects_empty():
    with pytest.raises(ValueError):
        dsp.Waveform([])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        dsp.lpcm_quantize(dsp.Waveform([0.5]), 16)


def test_band_power_oracle_from_spectrum_definition():
    s = dsp.stft(tone(2500, 0.1))
    freqs = np.arange(512) * FS / 512
    sel = (freqs >= 2000) & (freqs < 3000)
    assert dsp.band_power(s, 2000, 3000) == pytest.approx(s.values[:, sel].sum(), rel=1e-15)
    assert hz_to_mel(0.0) == 0.0
