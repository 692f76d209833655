"""Black-box transfer from an end-to-end raw-waveform surrogate.

The adversary owns only a sinc-front-end CNN (DBP) trained on the same
speakers. Each one-second context window is attacked on the surrogate,
written to a 16-bit WAV and scored on the spectrogram pipeline.
"""

import numpy as np

from _setup import first_per_speaker, small_lab
from surreptix.attacks import AttackConfig, pgd, snes

corpus, trained = small_lab(("SBP", "DBP"))
sbp, dbp = trained["SBP"], trained["DBP"]
x, y = first_per_speaker(corpus)

print("\n  epsilon   SNES-FGSM   SNES-PGD10   white-box PGD10")
for eps in np.geomspace(1e-4, 1e-1, 7):
    a = snes(dbp, sbp, x, y, AttackConfig(epsilon=eps))
    b = snes(dbp, sbp, x, y, AttackConfig(epsilon=eps, iterations=10))
    c = pgd(sbp, x, y, AttackConfig(epsilon=eps, iterations=10))
    print(f"  {eps:8.1e}  {a.accuracy:9.2f}  {b.accuracy:11.2f}  {c.accuracy:15.2f}")
