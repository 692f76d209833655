"""Attacks that skip pipeline stages leave traces a defender can check.

1. Perturbing the spectrogram directly breaks the mirror symmetry every
   real signal's spectrum has. Symmetrizing each step hides it but costs
   budget.
2. Hiding a perturbation in 7-8 kHz survives only until the defender
   low-passes at a practical cutoff.
3. Zeroing weak FFT bins leaves holes that a saturation count finds.
"""

import numpy as np

from _setup import first_per_speaker, small_lab
from surreptix import detectors as det
from surreptix.attacks import AttackConfig, equate_attack, fft_threshold, fgsm, genetic_band_attack
from surreptix.dsp.core import Spectrogram, Waveform, stft

corpus, trained = small_lab()
sbp = trained["SBP"]
x, y = first_per_speaker(corpus)
s = sbp.stage1(x)

raw = fgsm(sbp, s, y, AttackConfig(epsilon=0.05, stage="stage1"))
sym = equate_attack(sbp, s, y, AttackConfig(epsilon=0.05, iterations=10))
for name, res in (("spectrogram FGSM", raw), ("symmetrized PGD", sym)):
    flags = [det.hermitian_check(Spectrogram(a, scale="normalized")).flagged for a in res.adversarial]
    print(f"{name:17s} accuracy {res.accuracy:.2f}, hermitian flags {np.mean(flags):.0%}")

gen = genetic_band_attack(sbp, x, y, AttackConfig(epsilon=0.01, iterations=30))
filtered = np.stack([det.enforce_lowpass(Waveform(a), 7000.0).samples for a in gen.adversarial])
flags = [det.nyquist_monitor(stft(Waveform(a))).flagged for a in gen.adversarial]
print(f"\n7-8 kHz genetic attack: accuracy {gen.accuracy:.2f}, after 7 kHz low-pass "
      f"{sbp.accuracy(filtered, y):.2f}; band monitor flags {np.mean(flags):.0%}")

thr = [fft_threshold(a, 0.5) for a in x]
flags = [det.saturation_heuristic(stft(w)).flagged for w in thr]
kept = np.stack([w.samples for w in thr])
print(f"\nFFT thresholding (half the power kept): accuracy {sbp.accuracy(kept, y):.2f}, "
      f"saturation flags {np.mean(flags):.0%}")
