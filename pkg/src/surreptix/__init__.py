"""Audio ML pipelines, surreptitious attacks and pipeline-level detectors at desk scale."""

__version__ = "0.1.0"
