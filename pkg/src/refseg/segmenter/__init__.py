from .config import SegmenterConfig
from .losses import mask_loss, stage1_loss, text_loss
from .model import Segmenter, SegmenterOutputs
from .prompts import SpatialPrompt, rasterize_prompt
from .train import TrainingDiverged, predict, predict_logits, train_stage1

__all__ = [
    "Segmenter",
    "SegmenterConfig",
    "SegmenterOutputs",
    "SpatialPrompt",
    "TrainingDiverged",
    "mask_loss",
    "predict",
    "predict_logits",
    "rasterize_prompt",
    "stage1_loss",
    "text_loss",
    "train_stage1",
]
