from .base import AttackConfig, AttackResult
from .genetic import genetic_band_attack, misclassification_score
from .gradient import equate_attack, feature_match, fgsm, joint_surreptitious, pgd, select_guide, symmetrize
from .registry import BUDGETED, TRANSFER, run_attack
from .signal import fft_threshold, sine_insertion
from .transfer import ensemble_targets, quantize_within_budget, snes, snes_joint, targeted_snes

__all__ = ["AttackConfig", "AttackResult", "BUDGETED", "TRANSFER", "ensemble_targets", "equate_attack",
           "feature_match", "fft_threshold", "fgsm", "genetic_band_attack", "joint_surreptitious",
           "misclassification_score", "pgd", "quantize_within_budget", "run_attack", "select_guide",
           "sine_insertion", "snes", "snes_joint", "symmetrize", "targeted_snes"]
