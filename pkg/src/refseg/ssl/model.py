"""Student/teacher network and the complementary channel-dropout forward."""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn


def _norm(ch: int) -> nn.GroupNorm:
    return nn.GroupNorm(math.gcd(8, ch), ch)


def _standardize(x: torch.Tensor) -> torch.Tensor:
    mean = x.mean(dim=(2, 3), keepdim=True)
    std = x.std(dim=(2, 3), keepdim=True, unbiased=False)
    return (x - mean) / (std + 1e-6)


class StudentNet(nn.Module):
    """Small encoder/decoder segmentation net: stride-4 bottleneck features
    (where channel dropout is applied) decoded to C+1 class logits."""

    def __init__(self, num_classes: int, feat_channels: int = 64):
        super().__init__()
        self.num_classes = num_classes
        self.feat_channels = feat_channels
        mid = max(feat_channels // 2, 8)
        self.encoder = nn.Sequential(
            nn.Conv2d(1, mid, 3, stride=2, padding=1),
            _norm(mid),
            nn.ReLU(inplace=True),
            nn.Conv2d(mid, feat_channels, 3, stride=2, padding=1),
            _norm(feat_channels),
            nn.ReLU(inplace=True),
            nn.Conv2d(feat_channels, feat_channels, 3, padding=1),
            _norm(feat_channels),
            nn.ReLU(inplace=True),
        )
        half, quarter = max(feat_channels // 2, 8), max(feat_channels // 4, 8)
        self.dec1 = nn.Sequential(nn.Conv2d(feat_channels, half, 3, padding=1), _norm(half), nn.ReLU(inplace=True))
        self.dec2 = nn.Sequential(nn.Conv2d(half, quarter, 3, padding=1), _norm(quarter), nn.ReLU(inplace=True))
        self.head = nn.Conv2d(quarter, num_classes + 1, 1)

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        return self.encoder(_standardize(x))

    def decode(self, feats: torch.Tensor) -> torch.Tensor:
        h = F.interpolate(feats, scale_factor=2, mode="bilinear", align_corners=False)
        h = self.dec1(h)
        h = F.interpolate(h, scale_factor=2, mode="bilinear", align_corners=False)
        h = self.dec2(h)
        return self.head(h)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.decode(self.encode(x))


def student_forward_dual(
    student: StudentNet, x_s1: torch.Tensor, x_s2: torch.Tensor, seed: int, dropout_p: float = 0.5
) -> tuple[torch.Tensor, torch.Tensor, np.ndarray]:
    """One Bernoulli channel mask M per call; features of the two strong
    views are masked complementarily (M vs 1-M), scaled by 2, and decoded
    to per-class probability maps."""
    if x_s1.shape != x_s2.shape:
        raise ValueError("strong views must have the same shape")
    rng = np.random.Generator(np.random.PCG64(seed))
    mask = (rng.random(student.feat_channels) < dropout_p).astype(np.float32)
    m = torch.as_tensor(mask, dtype=x_s1.dtype, device=x_s1.device)[None, :, None, None]
    e_s1 = student.encode(x_s1) * m * 2
    e_s2 = student.encode(x_s2) * (1 - m) * 2
    p_sf = torch.softmax(student.decode(e_s1), dim=1)
    p_si = torch.softmax(student.decode(e_s2), dim=1)
    return p_sf, p_si, mask


def teacher_predict(teacher: StudentNet, x: torch.Tensor) -> torch.Tensor:
    """Teacher inference: plain forward (no channel dropout), softmax probs."""
    with torch.no_grad():
        return torch.softmax(teacher(x), dim=1)


def ema_update(teacher: StudentNet, student: StudentNet, decay: float) -> None:
    """theta_t <- decay * theta_t + (1 - decay) * theta_s, in place."""
    if not 0.0 <= decay <= 1.0:
        raise ValueError(f"ema decay must be in [0,1], got {decay}")
    with torch.no_grad():
        for pt, ps in zip(teacher.parameters(), student.parameters()):
            pt.mul_(decay).add_(ps, alpha=1.0 - decay)
        for bt, bs in zip(teacher.buffers(), student.buffers()):
            bt.copy_(bs)
