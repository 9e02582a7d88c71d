"""Segmenter hyperparameters."""

from __future__ import annotations

from dataclasses import asdict, dataclass


@dataclass
class SegmenterConfig:
    num_classes: int  # foreground classes C; labels run 0..C, class ids 1..C
    feat_channels: int = 64
    feat_stride: int = 4
    prompt_dim: int = 64
    attn_heads: int = 4
    lambda_txt: float = 1.0
    lambda_mask: float = 1.0
    lambda_dice: float = 0.5
    lambda_bce: float = 0.5
    eps: float = 1e-6
    use_prompt: bool = True
    use_memory: bool = True

    def __post_init__(self):
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        if min(self.feat_channels, self.prompt_dim, self.attn_heads) < 1:
            raise ValueError("dimensions must be positive")
        if self.feat_channels % self.attn_heads != 0:
            raise ValueError("feat_channels must be divisible by attn_heads")
        if min(self.lambda_txt, self.lambda_mask, self.lambda_dice, self.lambda_bce) < 0:
            raise ValueError("loss weights must be >= 0")
        if self.eps <= 0:
            raise ValueError("eps must be > 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SegmenterConfig":
        return cls(**d)
