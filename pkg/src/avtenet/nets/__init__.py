from .estimators import (
    ESTIMATORS,
    ANClassifier,
    AVNClassifier,
    AVNConcatClassifier,
    ClassifierOutput,
    NonFiniteLossError,
    VNClassifier,
    load_estimator,
)
from .layers import EncoderConfig, MSTCNConfig, encoder_forward, mstcn_forward
from .models import NETWORKS, AudioNet, AudioVisualNet, ConcatAVNet, VideoNet

__all__ = [
    "ANClassifier",
    "AVNClassifier",
    "AVNConcatClassifier",
    "AudioNet",
    "AudioVisualNet",
    "ClassifierOutput",
    "ConcatAVNet",
    "ESTIMATORS",
    "EncoderConfig",
    "MSTCNConfig",
    "NETWORKS",
    "NonFiniteLossError",
    "VNClassifier",
    "VideoNet",
    "encoder_forward",
    "load_estimator",
    "mstcn_forward",
]
