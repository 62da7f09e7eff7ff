"""Desk-scale trimodal (vision/language/speech) pretraining framework."""

from .encoders import EncoderConfig, LanguageInput, SpeechInput, VisionInput
from .fusion import FusionConfig, FusionNetwork
from .model import Model, ModelConfig
from .rng import Rng
from .tensor import Tensor, backward, finite_diff_check
from .trainer import TrainConfig, eval_retrieval, finetune, pretrain

__all__ = [
    "EncoderConfig",
    "FusionConfig",
    "FusionNetwork",
    "LanguageInput",
    "Model",
    "ModelConfig",
    "Rng",
    "SpeechInput",
    "Tensor",
    "TrainConfig",
    "VisionInput",
    "backward",
    "eval_retrieval",
    "finetune",
    "finite_diff_check",
    "pretrain",
]
