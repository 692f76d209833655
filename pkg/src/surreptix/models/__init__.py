from .pipelines import (DBP_WINDOW, KINDS, SINC_TAPS, TAPS, PipelineModel, build, mel_init_cutoffs,
                        project_cutoffs)
from .serialize import dumps, load_model, loads, save_model
from .train import DistillConfig, TrainConfig, TrainReport, default_config, distill, train
from .windows import WindowResult, forward_windows, split_windows, window_starts

__all__ = [
    "DBP_WINDOW", "KINDS", "SINC_TAPS", "TAPS", "PipelineModel", "build", "mel_init_cutoffs", "project_cutoffs",
    "dumps", "load_model", "loads", "save_model", "DistillConfig", "TrainConfig", "TrainReport", "default_config", "distill",
    "train", "WindowResult", "forward_windows", "split_windows", "window_starts",
]
