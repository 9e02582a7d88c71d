"""Pseudo-label generation: EMA teacher, reference-guided assistant, and
teacher-to-assistant spatial prompts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ..bank import TemplateBank
from ..rng import child_seed
from ..segmenter.config import SegmenterConfig
from ..segmenter.model import Segmenter
from ..segmenter.prompts import SpatialPrompt
from ..segmenter.train import predict_logits
from .config import SSLConfig
from .model import StudentNet, teacher_predict


@dataclass
class TeacherPseudo:
    probs: torch.Tensor  # B,C+1,H,W softmax probabilities
    hard: torch.Tensor  # B,H,W argmax labels
    conf: torch.Tensor  # B,H,W bool, max prob >= threshold


@dataclass
class AssistantPseudo:
    probs: np.ndarray  # C+1,H,W probabilities (softmax over class logits)
    hard: np.ndarray  # H,W argmax labels


@dataclass
class PseudoLabelPair:
    teacher_probs: torch.Tensor
    teacher_hard: torch.Tensor
    assistant_probs: torch.Tensor | None
    assistant_hard: torch.Tensor | None
    conf: torch.Tensor


def teacher_pseudo_label(teacher: StudentNet, x_w: torch.Tensor, config: SSLConfig) -> TeacherPseudo:
    """Teacher probabilities on the weak views, hard argmax labels, and the
    per-pixel confidence mask max_c p >= conf_threshold."""
    probs = teacher_predict(teacher, x_w)
    max_probs, hard = probs.max(dim=1)
    conf = max_probs >= config.conf_threshold
    return TeacherPseudo(probs=probs, hard=hard, conf=conf)


def assistant_pseudo_label(
    model: Segmenter,
    seg_config: SegmenterConfig,
    bank: TemplateBank,
    image: np.ndarray,
    spatial: dict[int, SpatialPrompt] | SpatialPrompt | None,
    seed: int,
) -> AssistantPseudo:
    """Per-class retrieval + prediction on one unlabeled image, assembled
    into per-pixel class probabilities by softmax over the per-class
    foreground logits with a fixed background logit of 0."""
    num_classes = seg_config.num_classes
    h, w = image.shape
    logits = np.zeros((num_classes + 1, h, w), dtype=np.float64)
    for c in range(1, num_classes + 1):
        if spatial is None:
            prompt = SpatialPrompt.none()
        elif isinstance(spatial, SpatialPrompt):
            prompt = spatial
        else:
            prompt = spatial.get(c, SpatialPrompt.none())
        z, _ = predict_logits(
            model, seg_config, image, bank, c, prompt, seed=child_seed(seed, f"assistant.class.{c}")
        )
        logits[c] = z.astype(np.float64)
    shifted = logits - logits.max(axis=0, keepdims=True)
    expz = np.exp(shifted)
    probs = expz / expz.sum(axis=0, keepdims=True)
    hard = np.argmax(probs, axis=0)  # ties resolve to the lower class index
    return AssistantPseudo(probs=probs, hard=hard)


def feedback_prompt(prob_map: np.ndarray, kind: str) -> SpatialPrompt:
    """Convert a single-class teacher probability map into a spatial prompt.

    box: tight bounding box of the >0.5 region (none when empty);
    points: the five highest-probability pixels, ties broken row-major.
    """
    prob_map = np.asarray(prob_map, dtype=np.float64)
    if kind == "prob_map":
        return SpatialPrompt(kind="prob_map", payload=prob_map)
    if kind == "box":
        fg = prob_map > 0.5
        if not fg.any():
            return SpatialPrompt.none()
        rows = np.where(fg.any(axis=1))[0]
        cols = np.where(fg.any(axis=0))[0]
        return SpatialPrompt(kind="box", payload=(int(rows[0]), int(cols[0]), int(rows[-1]), int(cols[-1])))
    if kind == "points":
        flat = prob_map.ravel()
        order = np.argsort(-flat, kind="stable")[:5]
        points = [(int(i // prob_map.shape[1]), int(i % prob_map.shape[1]), 1) for i in order]
        return SpatialPrompt(kind="points", payload=points)
    raise ValueError(f"unknown feedback kind {kind!r}")
