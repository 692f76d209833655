"""Trading attack strength for a quieter spectrogram.

``lam`` weights the classification loss; ``1 - lam`` rewards keeping the
normalized spectrogram close to the clean one. Compare the spectrogram
change each setting needs to reach the same accuracy.
"""

import numpy as np

from _setup import first_per_speaker, small_lab
from surreptix.attacks import AttackConfig, joint_surreptitious
from surreptix.harness.analysis import at_accuracy, extended_grid

corpus, trained = small_lab()
sbp = trained["SBP"]
x, y = first_per_speaker(corpus)
level = sbp.accuracy(x, y) - 0.2
grid = extended_grid(1e-7, 1e-3)

for lam in (1.0, 0.75, 0.25):
    acc, d1, d3 = [], [], []
    for eps in grid:
        r = joint_surreptitious(sbp, x, y, AttackConfig(epsilon=eps, iterations=10, lam=lam))
        acc.append(r.accuracy)
        d1.append(np.median(r.distortion_stage1))
        d3.append(np.median(r.distortion_stage3))
    e, s1 = at_accuracy(grid, acc, d1, level)
    _, s3 = at_accuracy(grid, acc, d3, level)
    print(f"lam={lam:.2f}: 20-point drop at eps {e:.2e}, stage-1 change {s1:.2f}, waveform change {s3:.2e}")
