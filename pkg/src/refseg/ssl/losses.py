"""Stage-2 losses: supervised CE + Dice, and the confidence-gated
unlabeled objectives (teacher-only and joint teacher/assistant)."""

from __future__ import annotations

import torch
import torch.nn.functional as F

from .config import SSLConfig
from .model import StudentNet
from .pseudo import PseudoLabelPair
from .schedule import ScheduleWeights

_LOG_FLOOR = 1e-12  # probability clamp inside hard cross-entropy


def segmentation_loss(logits: torch.Tensor, masks: torch.Tensor, config: SSLConfig) -> torch.Tensor:
    """lambda_ce * pixel cross-entropy + lambda_dice * (1 - soft Dice),
    Dice averaged over foreground classes per sample, then over the batch."""
    if logits.shape[0] != masks.shape[0] or logits.shape[2:] != masks.shape[1:]:
        raise ValueError(f"shape mismatch: logits {tuple(logits.shape)} vs masks {tuple(masks.shape)}")
    ce = F.cross_entropy(logits, masks)
    probs = torch.softmax(logits, dim=1)
    dices = []
    for c in range(1, config.num_classes + 1):
        p_c = probs[:, c]
        y_c = (masks == c).to(probs.dtype)
        inter = (p_c * y_c).sum(dim=(1, 2))
        dices.append(2.0 * inter / (p_c.sum(dim=(1, 2)) + y_c.sum(dim=(1, 2)) + config.eps))
    dice_loss = (1.0 - torch.stack(dices, dim=1).mean(dim=1)).mean()
    return config.lambda_ce * ce + config.lambda_dice * dice_loss


def supervised_loss(student: StudentNet, images: torch.Tensor, masks: torch.Tensor, config: SSLConfig) -> torch.Tensor:
    return segmentation_loss(student(images), masks, config)


def _hard_ce(probs: torch.Tensor, hard: torch.Tensor) -> torch.Tensor:
    """Per-pixel -log p[hard]; probabilities are clamped at 1e-12."""
    picked = probs.gather(1, hard[:, None]).squeeze(1)
    return -torch.log(picked.clamp_min(_LOG_FLOOR))


def _per_image_confident_mean(per_pixel: torch.Tensor, conf: torch.Tensor) -> torch.Tensor:
    """Mean of per_pixel over confident pixels for each image; images with
    no confident pixel contribute zero."""
    conff = conf.to(per_pixel.dtype)
    counts = conff.sum(dim=(1, 2))
    sums = (per_pixel * conff).sum(dim=(1, 2))
    return torch.where(counts > 0, sums / counts.clamp_min(1.0), torch.zeros_like(sums))


def eq5_unlabeled_loss(
    p_sf: torch.Tensor, p_si: torch.Tensor, hard_w: torch.Tensor, conf: torch.Tensor
) -> torch.Tensor:
    """Teacher-only dual-stream loss: both strong streams supervised by the
    weak pseudo-label under the confidence mask, normalized by 1/(2 B_u)
    and per-image by the confident-pixel count."""
    h = _hard_ce(p_sf, hard_w) + _hard_ce(p_si, hard_w)
    per_image = _per_image_confident_mean(h, conf)
    return per_image.sum() / (2.0 * p_sf.shape[0])


def joint_unlabeled_loss(
    p_sf: torch.Tensor,
    p_si: torch.Tensor,
    pair: PseudoLabelPair,
    weights: ScheduleWeights,
    config: SSLConfig,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Dual-source objective: alpha_t-weighted teacher terms plus
    alpha_v-weighted assistant terms, gated by the teacher-derived
    confidence mask. Returns (total, teacher part, assistant part)."""
    b = p_sf.shape[0]
    ht = _hard_ce(p_sf, pair.teacher_hard) + _hard_ce(p_si, pair.teacher_hard)
    teacher_part = weights.alpha_t * _per_image_confident_mean(ht, pair.conf).sum() / (2.0 * b)
    if pair.assistant_hard is None:
        assistant_part = torch.zeros_like(teacher_part)
    else:
        hv = _hard_ce(p_sf, pair.assistant_hard) + _hard_ce(p_si, pair.assistant_hard)
        assistant_part = weights.alpha_v * _per_image_confident_mean(hv, pair.conf).sum() / (2.0 * b)
    return teacher_part + assistant_part, teacher_part, assistant_part
