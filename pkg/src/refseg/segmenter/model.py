"""Reference-guided segmenter: vision encoder, class-token prompt path,
template memory path with cross-attention, and a mask decoder.

The decoder always receives a spatial-prompt channel (all zeros when no
prompt is given), so the architecture is identical with and without
teacher feedback.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .config import SegmenterConfig


def _norm(ch: int) -> nn.GroupNorm:
    return nn.GroupNorm(math.gcd(8, ch), ch)


def standardize(x: torch.Tensor) -> torch.Tensor:
    """Per-sample, per-channel zero-mean/unit-variance normalization; makes
    the network see relative contrast instead of absolute intensities."""
    mean = x.mean(dim=(2, 3), keepdim=True)
    std = x.std(dim=(2, 3), keepdim=True, unbiased=False)
    return (x - mean) / (std + 1e-6)


def coordinate_grid(b: int, h: int, w: int, dtype, device) -> torch.Tensor:
    """B×2×H×W grid of y/x coordinates in [-1, 1]; the convolutional
    stand-in for the positional embeddings of attention backbones."""
    ys = torch.linspace(-1.0, 1.0, h, dtype=dtype, device=device)
    xs = torch.linspace(-1.0, 1.0, w, dtype=dtype, device=device)
    grid = torch.stack(torch.meshgrid(ys, xs, indexing="ij"))
    return grid[None].expand(b, 2, h, w)


class _EncoderTrunk(nn.Module):
    """Three stride-2 conv blocks, then one upsample back to stride 4."""

    def __init__(self, in_ch: int, feat_ch: int):
        super().__init__()
        mid = max(feat_ch // 2, 8)
        self.down = nn.Sequential(
            nn.Conv2d(in_ch, mid, 3, stride=2, padding=1),
            _norm(mid),
            nn.ReLU(inplace=True),
            nn.Conv2d(mid, feat_ch, 3, stride=2, padding=1),
            _norm(feat_ch),
            nn.ReLU(inplace=True),
            nn.Conv2d(feat_ch, feat_ch, 3, stride=2, padding=1),
            _norm(feat_ch),
            nn.ReLU(inplace=True),
        )
        self.up = nn.Sequential(
            nn.Conv2d(feat_ch, feat_ch, 3, padding=1),
            _norm(feat_ch),
            nn.ReLU(inplace=True),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.down(x)
        h = F.interpolate(h, scale_factor=2, mode="bilinear", align_corners=False)
        return self.up(h)


class _CrossAttention(nn.Module):
    """Multi-head cross-attention with a residual connection; the output
    projection is zero-initialized so the module is the identity at init."""

    def __init__(self, ch: int, heads: int):
        super().__init__()
        self.heads = heads
        self.q = nn.Linear(ch, ch)
        self.k = nn.Linear(ch, ch)
        self.v = nn.Linear(ch, ch)
        self.out = nn.Linear(ch, ch)
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)

    def forward(self, feat: torch.Tensor, memory: torch.Tensor) -> torch.Tensor:
        b, c, h, w = feat.shape
        dh = c // self.heads

        def split(x: torch.Tensor) -> torch.Tensor:
            return x.view(b, -1, self.heads, dh).transpose(1, 2)  # B,heads,N,dh

        q = split(self.q(feat.flatten(2).transpose(1, 2)))
        k = split(self.k(memory.flatten(2).transpose(1, 2)))
        v = split(self.v(memory.flatten(2).transpose(1, 2)))
        attn = torch.softmax(q @ k.transpose(-1, -2) / math.sqrt(dh), dim=-1)
        mixed = (attn @ v).transpose(1, 2).reshape(b, h * w, c)
        delta = self.out(mixed).transpose(1, 2).view(b, c, h, w)
        return feat + delta


class _Decoder(nn.Module):
    """Two upsample-conv blocks from stride 4 to full resolution."""

    def __init__(self, in_ch: int, feat_ch: int):
        super().__init__()
        half, quarter = max(feat_ch // 2, 8), max(feat_ch // 4, 8)
        self.fuse = nn.Sequential(nn.Conv2d(in_ch, feat_ch, 3, padding=1), _norm(feat_ch), nn.ReLU(inplace=True))
        self.up1 = nn.Sequential(nn.Conv2d(feat_ch, half, 3, padding=1), _norm(half), nn.ReLU(inplace=True))
        self.up2 = nn.Sequential(nn.Conv2d(half, quarter, 3, padding=1), _norm(quarter), nn.ReLU(inplace=True))
        self.head = nn.Conv2d(quarter, 1, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.fuse(x)
        h = F.interpolate(h, scale_factor=2, mode="bilinear", align_corners=False)
        h = self.up1(h)
        h = F.interpolate(h, scale_factor=2, mode="bilinear", align_corners=False)
        h = self.up2(h)
        return self.head(h)


@dataclass
class SegmenterOutputs:
    f_img: torch.Tensor  # B,C_f,h,w vision features
    h_seg: torch.Tensor | None  # B,D_p projected class token
    p: torch.Tensor  # B,C_f,h,w prompt-encoded features
    f_memory: torch.Tensor | None  # B,C_f,h,w template memory features
    q: torch.Tensor  # B,C_f,h,w attended features
    logits: torch.Tensor  # B,H,W per-pixel foreground logit
    class_logits: torch.Tensor  # B,C+1 pooled class head


class Segmenter(nn.Module):
    def __init__(self, config: SegmenterConfig):
        super().__init__()
        if config.feat_stride != 4:
            raise ValueError("this architecture is fixed at feature stride 4")
        self.config = config
        cf = config.feat_channels
        self.vision = _EncoderTrunk(3, cf)  # image + 2 coordinate channels
        if config.use_prompt:
            # index 0 (background) exists but is never selected by forward
            self.prompt_tokens = nn.Embedding(config.num_classes + 1, config.prompt_dim)
            self.prompt_mlp = nn.Sequential(
                nn.Linear(config.prompt_dim, config.prompt_dim),
                nn.ReLU(inplace=True),
                nn.Linear(config.prompt_dim, config.prompt_dim),
            )
            self.prompt_proj = nn.Linear(config.prompt_dim, cf)
        if config.use_memory:
            self.memory_encoder = _EncoderTrunk(4, cf)  # template image + mask + coords
            self.cross_attn = _CrossAttention(cf, config.attn_heads)
        self.decoder = _Decoder(2 * cf + 1, cf)
        self.class_head = nn.Linear(cf, config.num_classes + 1)

    def forward(
        self,
        image: torch.Tensor,
        template: torch.Tensor | None = None,
        class_ids: torch.Tensor | int = 1,
        prompt_raster: torch.Tensor | None = None,
    ) -> SegmenterOutputs:
        """image: B×1×H×W; template: B×2×H×W stack of (template image,
        binary class mask), required when use_memory; class_ids: int or B
        longs in 1..num_classes; prompt_raster: B×1×H×W in [0,1] or None."""
        cfg = self.config
        b, _, h, w = image.shape
        if h % 8 or w % 8:
            raise ValueError(f"image sides must be divisible by 8, got {(h, w)}")
        f_img = self.vision(standardize(image))

        if cfg.use_prompt:
            if isinstance(class_ids, int):
                class_ids = torch.full((b,), class_ids, dtype=torch.long, device=image.device)
            if int(class_ids.min()) < 1 or int(class_ids.max()) > cfg.num_classes:
                raise ValueError(f"class ids must be in 1..{cfg.num_classes}")
            h_seg = self.prompt_mlp(self.prompt_tokens(class_ids))
            p = f_img + self.prompt_proj(h_seg)[:, :, None, None]
        else:
            h_seg = None
            p = f_img

        if cfg.use_memory:
            if template is None:
                raise ValueError("template required when use_memory is enabled")
            if template.shape != (b, 2, h, w):
                raise ValueError(f"template shape {tuple(template.shape)} != {(b, 2, h, w)}")
            t_img = standardize(template[:, :1])
            f_memory = self.memory_encoder(torch.cat([t_img, template[:, 1:]], dim=1))
            q = self.cross_attn(f_img, f_memory)
        else:
            f_memory = None
            q = f_img

        fh, fw = f_img.shape[2], f_img.shape[3]
        if prompt_raster is None:
            raster = torch.zeros(b, 1, fh, fw, dtype=image.dtype, device=image.device)
        else:
            raster = F.adaptive_avg_pool2d(prompt_raster, (fh, fw))
        logits = self.decoder(torch.cat([p, q, raster], dim=1)).squeeze(1)
        class_logits = self.class_head(q.mean(dim=(2, 3)))
        return SegmenterOutputs(
            f_img=f_img, h_seg=h_seg, p=p, f_memory=f_memory, q=q, logits=logits, class_logits=class_logits
        )
