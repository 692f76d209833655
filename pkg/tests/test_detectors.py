import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surreptix import detectors as det
from surreptix.attacks import (AttackConfig, equate_attack, fft_threshold, fgsm, genetic_band_attack,
                               joint_surreptitious, pgd)
from surreptix.dsp.core import Spectrogram, Waveform, stft


@pytest.fixture(scope="module")
def sbp(trained):
    return trained["SBP"][0]


@pytest.fixture(scope="module")
def benign(corpus):
    """Training and held-out benign waveforms."""
    return corpus.train[0], corpus.test[0]


def spec_of(x):
    return stft(Waveform(x))


# ---------------------------------------------------------------------------
# reports

@given(score=st.floats(-10, 10), threshold=st.floats(-10, 10))
def test_verdict_is_strict_threshold(score, threshold):
    r = det.DetectionReport("x", score, threshold, "stage1")
    assert (r.verdict == "flagged") == (score > threshold)
    assert r.flagged == (score > threshold)


def test_reports_csv_round_trip(tmp_path):
    reps = [("a", det.DetectionReport("hermitian", 0.0, 1e-6, "stage1")),
            ("b", det.DetectionReport("nyquist", 0.5, 0.01, "stage1"))]
    path = det.write_reports_csv(tmp_path / "r.csv", reps)
    rows = list(csv.DictReader(path.open()))
    assert list(rows[0]) == ["detector", "score", "threshold", "verdict", "sample_id"]
    assert [r["verdict"] for r in rows] == ["clean", "flagged"]
    assert float(rows[1]["score"]) == 0.5 and rows[1]["sample_id"] == "b"


# ---------------------------------------------------------------------------
# Hermitian symmetry

@settings(max_examples=40, deadline=None)
@given(n=st.integers(400, 4000), scale=st.sampled_from([1e-6, 1e-3, 0.3]), seed=st.integers(0, 2**31))
def test_no_false_positive_on_real_audio(n, scale, seed):
    x = np.clip(scale * np.random.default_rng(seed).normal(size=n), -1, 1)
    rep = det.hermitian_check(spec_of(x))
    assert rep.score <= 1e-9 and rep.verdict == "clean"


def test_half_spectrum_is_rejected(benign):
    s = spec_of(benign[0][0])
    half = Spectrogram(s.values[:, : s.n_fft // 2 + 1], s.sample_rate, s.n_fft)
    with pytest.raises(ValueError, match="half spectrum"):
        det.hermitian_check(half)


def test_spectrogram_fgsm_is_flagged_and_equate_is_not(sbp, corpus):
    x, y = corpus.test
    s = sbp.stage1(x[:5])
    adv = fgsm(sbp, s, y[:5], AttackConfig(epsilon=1e-3, stage="stage1")).adversarial
    eq = equate_attack(sbp, s, y[:5], AttackConfig(epsilon=1e-3)).adversarial
    for a, e in zip(adv, eq):
        assert det.hermitian_check(Spectrogram(a, scale="normalized")).flagged
        assert not det.hermitian_check(Spectrogram(e, scale="normalized")).flagged


# ---------------------------------------------------------------------------
# Nyquist band

def test_benign_nyquist_scores_are_small(benign):
    scores = [det.nyquist_score(spec_of(x), 7000.0) for x in benign[1]]
    assert max(scores) < 0.01
    assert np.mean([det.nyquist_monitor(spec_of(x)).flagged for x in benign[1]]) <= 0.01


def test_genetic_band_attack_is_flagged(sbp, corpus):
    x, y = corpus.test
    res = genetic_band_attack(sbp, x[:5], y[:5], AttackConfig(epsilon=0.01, iterations=3))
    assert all(det.nyquist_monitor(spec_of(a)).flagged for a in res.adversarial)


def test_nyquist_cutoff_validation(benign):
    with pytest.raises(ValueError):
        det.nyquist_monitor(spec_of(benign[0][0]), 8000.0)


def test_enforce_lowpass_removes_band_energy(sbp, corpus):
    x, y = corpus.test
    res = genetic_band_attack(sbp, x[:2], y[:2], AttackConfig(epsilon=0.01, iterations=1))
    for a in res.adversarial:
        before = det.nyquist_score(spec_of(a), 7000.0)
        after = det.nyquist_score(stft(det.enforce_lowpass(Waveform(a), 7000.0)), 7000.0)
        assert after < 0.1 * before


# ---------------------------------------------------------------------------
# reconstruction

def test_reconstruction_self_consistent(benign):
    for x in benign[1][:5]:
        w = Waveform(x)
        rep = det.reconstruction_detector(stft(w), w)
        assert rep.verdict == "clean"
        assert 0.0 <= rep.score <= 2.0


def test_reconstruction_flags_zero_db_noise(benign):
    rng = np.random.default_rng(0)
    for x in benign[1][:5]:
        noise = rng.normal(size=x.size) * np.sqrt(np.mean(x ** 2))
        s = stft(Waveform(x + noise))
        rep = det.reconstruction_detector(s, Waveform(x))
        assert rep.flagged
        assert 0.0 <= rep.score <= 2.0


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_reconstruction_score_bounds(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=3200) * 0.1, rng.normal(size=3200) * 0.1
    score = det.reconstruction_score(spec_of(a), Waveform(b), iterations=5)
    assert 0.0 <= score <= 2.0


def test_reconstruction_length_mismatch(benign):
    x = benign[1][0]
    with pytest.raises(ValueError):
        det.reconstruction_detector(spec_of(x), Waveform(x[:8000]))


def test_max_lag_ncc_finds_shift():
    a = np.random.default_rng(0).normal(size=500)
    assert det.max_lag_ncc(a, np.roll(a, 3), 5) > 0.95
    assert det.max_lag_ncc(a, a, 0) == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# saturation

def test_benign_mostly_clean_for_saturation(benign):
    flagged = [det.saturation_heuristic(spec_of(x)).flagged for x in benign[1]]
    assert np.mean(flagged) <= 0.01


def test_fft_threshold_output_is_flagged(benign):
    flagged = [det.saturation_heuristic(stft(fft_threshold(x, 0.5))).flagged for x in benign[1][:50]]
    assert np.mean(flagged) >= 0.8


def test_all_zero_spectrogram_is_flagged():
    s = Spectrogram(np.zeros((10, 512)))
    assert det.saturation_heuristic(s).flagged


# ---------------------------------------------------------------------------
# calibration, aggregation, idempotence

def test_calibration_contract(benign):
    train, held = benign
    for name, score in (("nyquist", lambda x: det.nyquist_score(spec_of(x), 7000.0)),
                        ("saturation", lambda x: det.saturation_score(spec_of(x)))):
        th = det.calibrate(score(x) for x in train)
        rate = np.mean([score(x) > th for x in held])
        assert rate <= 0.02, name
    ref = [det.reconstruction_score(spec_of(x), Waveform(x)) for x in train[::4]]
    th = det.calibrate(ref)
    rate = np.mean([det.reconstruction_score(spec_of(x), Waveform(x)) > th for x in held[::2]])
    assert rate <= 0.02


def test_calibrate_percentile():
    assert det.calibrate(np.arange(101.0)) == pytest.approx(99.0)
    with pytest.raises(ValueError):
        det.calibrate([])


def test_detectors_are_idempotent(benign):
    s = spec_of(benign[1][3])
    w = Waveform(benign[1][3])
    for f in (det.hermitian_check, det.nyquist_monitor, det.saturation_heuristic,
              lambda s: det.reconstruction_detector(s, w)):
        assert f(s) == f(s)


def test_run_all_benign_is_surreptitious_capable(benign):
    reps, overall = det.run_all(det.CONTROLS, Waveform(benign[1][0]))
    assert [r.detector for r in reps] == list(det.CONTROLS)
    assert all(r.verdict == "clean" for r in reps)
    assert overall == "surreptitious-capable"


def test_run_all_flags_spectrogram_pgd(sbp, corpus):
    x, y = corpus.test
    adv = pgd(sbp, sbp.stage1(x[:1]), y[:1], AttackConfig(epsilon=1e-3, iterations=3, stage="stage1"))
    reps, overall = det.run_all(det.CONTROLS, Spectrogram(adv.adversarial[0], scale="normalized"))
    assert [r.detector for r in reps] == ["hermitian"]
    assert reps[0].flagged and overall == "detected"


@pytest.mark.parametrize("eps", [1e-4, 1e-3])
def test_run_all_joint_attack_evades_symmetry_and_band(sbp, corpus, eps):
    x, y = corpus.test
    res = joint_surreptitious(sbp, x[:5], y[:5], AttackConfig(epsilon=eps, iterations=5, lam=0.25))
    for a in res.adversarial:
        reps, _ = det.run_all(["hermitian", "nyquist"], Waveform(a))
        assert [r.verdict for r in reps] == ["clean", "clean"]


def test_run_all_reconstruction_needs_reference(benign):
    with pytest.raises(ValueError):
        det.run_all(["reconstruction"], spec_of(benign[1][0]))
    with pytest.raises(ValueError):
        det.run_all(["bogus"], spec_of(benign[1][0]))


def test_run_all_custom_thresholds(benign):
    reps, overall = det.run_all(["saturation"], Waveform(benign[1][0]), {"thresholds": {"saturation": -1.0}})
    assert reps[0].threshold == -1.0 and overall == "detected"
