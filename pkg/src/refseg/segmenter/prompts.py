"""Spatial prompts for the mask decoder: probability maps, boxes, points."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("none", "prob_map", "box", "points")


@dataclass
class SpatialPrompt:
    """``payload`` by kind: prob_map → H×W array in [0,1]; box → (y0, x0,
    y1, x1) inclusive corners; points → list of (y, x, label)."""

    kind: str = "none"
    payload: object = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown prompt kind {self.kind!r}")

    @classmethod
    def none(cls) -> "SpatialPrompt":
        return cls(kind="none")


def rasterize_prompt(prompt: SpatialPrompt, shape: tuple[int, int]) -> np.ndarray:
    """Render a prompt as an H×W float map in [0,1]; ``none`` is all zeros.
    Points become Gaussian bumps (sigma 2 px) so they cover more than one
    feature cell after downsampling."""
    h, w = shape
    out = np.zeros((h, w), dtype=np.float64)
    if prompt.kind == "none":
        return out
    if prompt.kind == "prob_map":
        payload = np.asarray(prompt.payload, dtype=np.float64)
        if payload.shape != shape:
            raise ValueError(f"prob_map shape {payload.shape} != image shape {shape}")
        if payload.min() < 0.0 or payload.max() > 1.0:
            raise ValueError("prob_map values outside [0,1]")
        return payload
    if prompt.kind == "box":
        y0, x0, y1, x1 = prompt.payload
        if not (0 <= y0 <= y1 < h and 0 <= x0 <= x1 < w):
            raise ValueError(f"box {prompt.payload} outside image bounds {shape}")
        out[y0 : y1 + 1, x0 : x1 + 1] = 1.0
        return out
    # points
    yy, xx = np.mgrid[0:h, 0:w]
    for y, x, label in prompt.payload:
        if not (0 <= y < h and 0 <= x < w):
            raise ValueError(f"point ({y}, {x}) outside image bounds {shape}")
        bump = np.exp(-((yy - y) ** 2 + (xx - x) ** 2) / (2.0 * 2.0**2))
        out = np.maximum(out, bump if label else 0.0)
    return out
