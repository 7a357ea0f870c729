"""Commit-message embedding exporter for the defect-prediction pipeline."""

from .exporter import (
    POOLING_MODES,
    EmbeddingRequest,
    ExportReport,
    ModelLoadError,
    TruncationWarning,
    export,
)

__all__ = [
    "POOLING_MODES",
    "EmbeddingRequest",
    "ExportReport",
    "ModelLoadError",
    "TruncationWarning",
    "export",
]
