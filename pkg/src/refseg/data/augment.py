"""Augmentation pipelines: weak, strong, and template-side.

Geometric operations are recorded as JSON-able dicts and replayed with
``apply_geometric`` on any raster, so a view's mask is by construction the
recorded transform of the original mask. Photometric operations touch the
image only and are recorded with their parameters. All pipelines are pure
functions of (input, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter

GEOMETRIC_OPS = {"hflip", "vflip", "rot90", "shift", "crop"}


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass
class AugmentedView:
    image: np.ndarray
    mask: np.ndarray | None
    record: list[dict] = field(default_factory=list)

    def geometric_record(self) -> list[dict]:
        return [op for op in self.record if op["op"] in GEOMETRIC_OPS]


def _resize(arr: np.ndarray, out_hw: tuple[int, int], *, is_mask: bool) -> np.ndarray:
    h, w = out_hw
    if is_mask:
        im = Image.fromarray(np.asarray(arr, dtype=np.int32), mode="I")
        out = im.resize((w, h), resample=Image.NEAREST)
        return np.asarray(out, dtype=np.int64)
    im = Image.fromarray(np.asarray(arr, dtype=np.float32), mode="F")
    out = im.resize((w, h), resample=Image.BILINEAR)
    return np.asarray(out, dtype=np.float64)


def _shift(arr: np.ndarray, dy: int, dx: int, fill) -> np.ndarray:
    out = np.full_like(arr, fill)
    h, w = arr.shape
    ys = slice(max(dy, 0), min(h + dy, h))
    xs = slice(max(dx, 0), min(w + dx, w))
    ys_src = slice(max(-dy, 0), min(h - dy, h))
    xs_src = slice(max(-dx, 0), min(w - dx, w))
    out[ys, xs] = arr[ys_src, xs_src]
    return out


def apply_geometric(record: list[dict], raster: np.ndarray, *, is_mask: bool, fill=None) -> np.ndarray:
    """Replay the geometric part of a record on a raster.

    ``fill`` is the out-of-bounds value for shifts (default 0 for masks,
    0.0 otherwise).
    """
    if fill is None:
        fill = 0 if is_mask else 0.0
    out = np.asarray(raster)
    for op in record:
        kind = op["op"]
        if kind not in GEOMETRIC_OPS:
            continue
        if kind == "hflip":
            out = out[:, ::-1]
        elif kind == "vflip":
            out = out[::-1, :]
        elif kind == "rot90":
            out = np.rot90(out, op["k"])
        elif kind == "shift":
            out = _shift(out, op["dy"], op["dx"], fill)
        elif kind == "crop":
            patch = out[op["y0"] : op["y0"] + op["h"], op["x0"] : op["x0"] + op["w"]]
            out = _resize(patch, (op["out_h"], op["out_w"]), is_mask=is_mask)
    return np.ascontiguousarray(out)


def invert_geometric(record: list[dict], raster: np.ndarray, *, is_mask: bool, fill=None) -> np.ndarray:
    """Invert flips and shifts (weak-augmentation records). Crops are lossy
    and not invertible."""
    if fill is None:
        fill = 0 if is_mask else 0.0
    out = np.asarray(raster)
    for op in reversed(record):
        kind = op["op"]
        if kind not in GEOMETRIC_OPS:
            continue
        if kind == "hflip":
            out = out[:, ::-1]
        elif kind == "vflip":
            out = out[::-1, :]
        elif kind == "rot90":
            out = np.rot90(out, -op["k"])
        elif kind == "shift":
            out = _shift(out, -op["dy"], -op["dx"], fill)
        else:
            raise ValueError(f"cannot invert geometric op {kind!r}")
    return np.ascontiguousarray(out)


def weak_augment(image: np.ndarray, seed: int, flip_prob: float = 0.5, max_shift_frac: float = 0.05) -> AugmentedView:
    """Mild geometric view: random horizontal flip plus a small translation."""
    rng = _rng(seed)
    record: list[dict] = []
    if rng.random() < flip_prob:
        record.append({"op": "hflip"})
    m = int(max_shift_frac * min(image.shape))
    dy = int(rng.integers(-m, m + 1))
    dx = int(rng.integers(-m, m + 1))
    if dy or dx:
        record.append({"op": "shift", "dy": dy, "dx": dx})
    return AugmentedView(image=apply_geometric(record, image, is_mask=False), mask=None, record=record)


def strong_augment(view: AugmentedView, seed: int) -> AugmentedView:
    """Photometric jitter + blur + cutout on the image only; the mask (the
    weak view's supervision target) is carried through untouched."""
    rng = _rng(seed)
    img = np.asarray(view.image, dtype=np.float64).copy()
    record = list(view.record)

    delta = rng.uniform(-0.15, 0.15)
    img += delta
    record.append({"op": "brightness", "delta": delta})

    factor = rng.uniform(0.75, 1.25)
    mean = img.mean()
    img = (img - mean) * factor + mean
    record.append({"op": "contrast", "factor": factor})

    if rng.random() < 0.5:
        gamma = rng.uniform(0.7, 1.4)
        img = np.clip(img, 0.0, 1.0) ** gamma
        record.append({"op": "gamma", "gamma": gamma})

    if rng.random() < 0.5:
        sigma = rng.uniform(0.3, 1.2)
        img = gaussian_filter(img, sigma=sigma)
        record.append({"op": "blur", "sigma": sigma})

    img = np.clip(img, 0.0, 1.0)

    if rng.random() < 0.8:
        h, w = img.shape
        for _ in range(int(rng.integers(1, 3))):
            bh = int(rng.uniform(0.10, 0.25) * h)
            bw = int(rng.uniform(0.10, 0.25) * w)
            y0 = int(rng.integers(0, h - bh + 1))
            x0 = int(rng.integers(0, w - bw + 1))
            fill = float(img.mean())
            img[y0 : y0 + bh, x0 : x0 + bw] = fill
            record.append({"op": "cutout", "y0": y0, "x0": x0, "h": bh, "w": bw, "fill": fill})

    mask = None if view.mask is None else view.mask.copy()
    return AugmentedView(image=img, mask=mask, record=record)


def template_augment(image: np.ndarray, mask: np.ndarray, seed: int) -> AugmentedView:
    """Template-side augmentation: flips/rotations and an area-scale crop
    in (0.7, 1.0) applied to image and mask, photometric noise/blur/sharpen
    on the image only."""
    rng = _rng(seed)
    record: list[dict] = []
    if rng.random() < 0.5:
        record.append({"op": "hflip"})
    if rng.random() < 0.5:
        record.append({"op": "vflip"})
    k = int(rng.integers(0, 4))
    if k:
        record.append({"op": "rot90", "k": k})

    geo_mask = apply_geometric(record, mask, is_mask=True)
    if rng.random() < 0.75:
        h, w = geo_mask.shape
        scale = rng.uniform(0.7, 1.0)
        ch = max(8, int(round(h * np.sqrt(scale))))
        cw = max(8, int(round(w * np.sqrt(scale))))
        present = set(np.unique(geo_mask)) - {0}
        y0 = (h - ch) // 2
        x0 = (w - cw) // 2
        for _ in range(10):
            ty = int(rng.integers(0, h - ch + 1))
            tx = int(rng.integers(0, w - cw + 1))
            patch = geo_mask[ty : ty + ch, tx : tx + cw]
            if present <= (set(np.unique(patch)) - {0}):
                y0, x0 = ty, tx
                break
        record.append(
            {"op": "crop", "y0": y0, "x0": x0, "h": ch, "w": cw, "out_h": h, "out_w": w, "scale": scale}
        )

    out_mask = apply_geometric(record, mask, is_mask=True)
    img = apply_geometric(record, np.asarray(image, dtype=np.float64), is_mask=False)

    if rng.random() < 0.4:
        sigma = rng.uniform(0.01, 0.04)
        img = img + rng.normal(0.0, sigma, size=img.shape)
        record.append({"op": "noise", "sigma": sigma})
    if rng.random() < 0.3:
        sigma = rng.uniform(0.3, 1.0)
        img = gaussian_filter(img, sigma=sigma)
        record.append({"op": "blur", "sigma": sigma})
    if rng.random() < 0.3:
        amount = rng.uniform(0.5, 1.5)
        img = img + amount * (img - gaussian_filter(img, sigma=1.0))
        record.append({"op": "sharpen", "amount": amount})

    img = np.clip(img, 0.0, 1.0)
    return AugmentedView(image=img, mask=out_mask, record=record)


def make_overlay(image: np.ndarray, mask: np.ndarray, class_id: int, alpha: float = 0.5) -> np.ndarray:
    """H×W×3 raster: grayscale replicated, class pixels alpha-blended with
    pure green. An absent class yields the plain grayscale replication."""
    img = np.asarray(image, dtype=np.float64)
    sel = np.asarray(mask) == class_id
    rgb = np.repeat(img[:, :, None], 3, axis=2)
    rgb[sel, 0] = (1.0 - alpha) * img[sel]
    rgb[sel, 1] = (1.0 - alpha) * img[sel] + alpha
    rgb[sel, 2] = (1.0 - alpha) * img[sel]
    return rgb
