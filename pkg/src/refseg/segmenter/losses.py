"""Stage-1 losses: soft-Dice + BCE mask loss and the class-token
cross-entropy surrogate for the text channel."""

from __future__ import annotations

import torch
import torch.nn.functional as F

from .config import SegmenterConfig
from .model import SegmenterOutputs


def mask_loss(logits: torch.Tensor, target: torch.Tensor, config: SegmenterConfig) -> tuple[torch.Tensor, dict]:
    """lambda_dice * (1 - 2*sum(m*m_hat)/(sum(m)+sum(m_hat)+eps))
    + lambda_bce * mean-reduced BCE, with m_hat = sigmoid(logits).

    Note the degenerate case: an empty target scores a Dice term of 1
    even under a perfect (all-negative) prediction, because the soft
    intersection is exactly zero.
    """
    if not torch.isfinite(logits).all():
        raise ValueError("non-finite logits in mask_loss")
    if logits.shape != target.shape:
        raise ValueError(f"shape mismatch: logits {tuple(logits.shape)} vs target {tuple(target.shape)}")
    target = target.to(logits.dtype)
    m_hat = torch.sigmoid(logits)
    dice_term = 1.0 - 2.0 * (m_hat * target).sum() / (target.sum() + m_hat.sum() + config.eps)
    bce_term = F.binary_cross_entropy_with_logits(logits, target)
    total = config.lambda_dice * dice_term + config.lambda_bce * bce_term
    return total, {"mask_dice": float(dice_term.detach()), "mask_bce": float(bce_term.detach())}


def text_loss(class_logits: torch.Tensor, class_id: int) -> torch.Tensor:
    """Single-token cross-entropy of the pooled class head (text surrogate)."""
    if class_logits.ndim == 1:
        class_logits = class_logits[None, :]
    target = torch.full((class_logits.shape[0],), class_id, dtype=torch.long, device=class_logits.device)
    return F.cross_entropy(class_logits, target)


def stage1_loss(
    outputs: SegmenterOutputs, target: torch.Tensor, class_id: int, config: SegmenterConfig
) -> tuple[torch.Tensor, dict]:
    """lambda_txt * text_loss + lambda_mask * mask_loss, with a per-term
    breakdown for logging."""
    m_total, parts = mask_loss(outputs.logits, target, config)
    t_total = text_loss(outputs.class_logits, class_id)
    total = config.lambda_txt * t_total + config.lambda_mask * m_total
    breakdown = {"text": float(t_total.detach()), "mask": float(m_total.detach()), **parts}
    return total, breakdown
