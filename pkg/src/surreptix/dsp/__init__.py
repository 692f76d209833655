from . import diff
from .core import (HOP_MS, LOG_FLOOR, LSB16, N_FFT, SAMPLE_RATE, WINDOW_MS, ClippingWarning, MelFeatures,
                   Spectrogram, Waveform, band_limited_noise, band_power, band_project, dc_filter, dither,
                   fir_lowpass, griffin_lim, hamming, hz_to_mel, istft, lpcm_quantize, low_pass, mel_filterbank,
                   mel_to_hz, mfcc, mu_law_decode, mu_law_encode, pre_emphasis, spectral_convergence, stft,
                   stft_complex)
from .io import AudioFormatError, read_spectrogram, read_wav, wav_round_trip, write_spectrogram, write_wav

__all__ = [
    "diff", "HOP_MS", "LOG_FLOOR", "LSB16", "N_FFT", "SAMPLE_RATE", "WINDOW_MS", "ClippingWarning", "MelFeatures",
    "Spectrogram", "Waveform", "band_limited_noise", "band_power", "band_project", "dc_filter", "dither",
    "fir_lowpass", "griffin_lim", "hamming", "hz_to_mel", "istft", "lpcm_quantize", "low_pass", "mel_filterbank",
    "mel_to_hz", "mfcc", "mu_law_decode", "mu_law_encode", "pre_emphasis", "spectral_convergence", "stft",
    "stft_complex", "AudioFormatError", "read_spectrogram", "read_wav", "wav_round_trip", "write_spectrogram",
    "write_wav",
]
