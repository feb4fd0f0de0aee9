"""Res2Net-family spoofing countermeasures in numpy: layers, models, features, metrics."""

from .errors import ConfigurationError, DataError, NumericError, SampleRateError, WavFormatError
from .features import AudioClip, FeatureConfig, FeatureMatrix, cqt, extract, lfcc, log_power_spectrogram
from .metrics import compute_eer, compute_min_tdcf, fuse_scores, ScoreRecord, TdcfCosts
from .models import (
    ARCHITECTURES,
    CountermeasureNet,
    ModelConfig,
    build_model,
    count_parameters,
    forward,
    get_config,
    score_bonafide,
    tiny_clone,
)
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "ARCHITECTURES", "AudioClip", "ConfigurationError", "CountermeasureNet", "DataError",
    "FeatureConfig", "FeatureMatrix", "ModelConfig", "NumericError", "SampleRateError",
    "ScoreRecord", "TdcfCosts", "TrainConfig", "WavFormatError", "build_model", "compute_eer",
    "compute_min_tdcf", "count_parameters", "cqt", "extract", "forward", "fuse_scores",
    "get_config", "lfcc", "log_power_spectrogram", "score_bonafide", "tiny_clone", "train",
]
