"""White-box FGSM and PGD against the spectrogram pipeline.

The attack differentiates through the whole chain, from 16-bit samples
through DC filter, pre-emphasis and STFT to the CNN, so the perturbation
lives in the waveform. Watch how little amplitude it takes.
"""

import numpy as np

from _setup import first_per_speaker, small_lab
from surreptix.attacks import AttackConfig, fgsm, pgd

corpus, trained = small_lab()
sbp = trained["SBP"]
x, y = first_per_speaker(corpus)
print(f"clean accuracy on {len(x)} utterances: {sbp.accuracy(x, y):.2f}")

print("\n  epsilon    FGSM   PGD-20   median stage-1 change (PGD)")
for eps in np.geomspace(1e-7, 1e-4, 7):
    a = fgsm(sbp, x, y, AttackConfig(epsilon=eps))
    b = pgd(sbp, x, y, AttackConfig(epsilon=eps, iterations=20))
    print(f"  {eps:8.1e}  {a.accuracy:5.2f}  {b.accuracy:6.2f}   {np.median(b.distortion_stage1):.3f}")

# a 16-bit LSB is about 3e-5: the model falls well below that, but the
# normalized log spectrogram moves by whole units
