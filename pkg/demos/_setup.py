"""Shared setup for the demos: a small corpus and one trained model per pipeline."""

import numpy as np

from surreptix import models
from surreptix.harness.corpus import generate_corpus


def small_lab(kinds=("SBP",), utterances: int = 40, seed: int = 0):
    """Return ``(corpus, {kind: model})`` trained on a 10-speaker corpus."""
    corpus = generate_corpus(10, utterances, 1.0, seed=seed)
    (x, y), (xt, yt) = corpus.train, corpus.test
    trained = {}
    for kind in kinds:
        m = models.build(kind, seed=seed)
        rep = models.train(m, x, y, models.default_config(kind, seed), xt, yt)
        print(f"{kind}: test accuracy {rep.test_accuracy:.3f} after {len(rep.epoch_losses)} epochs")
        trained[kind] = m
    return corpus, trained


def first_per_speaker(corpus, n: int = 2):
    x, y = corpus.test
    idx = np.concatenate([np.flatnonzero(y == s)[:n] for s in np.unique(y)])
    return x[idx], y[idx]
