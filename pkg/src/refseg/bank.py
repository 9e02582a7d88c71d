"""Template bank: descriptor extraction, cosine retrieval, and
temperature-softmax sampling over the top-3 candidates.

The descriptor is a deterministic hand-crafted 128-d surrogate for a
frozen foundation embedding: an 8×8 mean-pooled intensity grid, a 32-bin
intensity histogram, and a 32-bin gradient-orientation histogram,
L2-normalized. ``descriptor_fn`` is pluggable so a learned embedding can
be swapped in without touching retrieval.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .data.arrays import load_png_image, load_png_mask, save_png_image, save_png_mask, validate_image

logger = logging.getLogger("refseg.bank")

DESCRIPTOR_DIM = 128
_GRID = 8
_BINS = 32

DescriptorFn = Callable[[np.ndarray], np.ndarray]


def compute_descriptor(image: np.ndarray) -> np.ndarray:
    """Deterministic 128-d L2-normalized descriptor of a grayscale image."""
    img = np.asarray(validate_image(image), dtype=np.float64)
    h, w = img.shape

    ys = (np.arange(_GRID + 1) * h) // _GRID
    xs = (np.arange(_GRID + 1) * w) // _GRID
    grid = np.empty(_GRID * _GRID)
    for i in range(_GRID):
        for j in range(_GRID):
            grid[i * _GRID + j] = img[ys[i] : ys[i + 1], xs[j] : xs[j + 1]].mean()

    hist, _ = np.histogram(img, bins=_BINS, range=(0.0, 1.0))
    hist = hist / img.size

    gy, gx = np.gradient(img)
    mag = np.hypot(gy, gx)
    total = mag.sum()
    if total <= 1e-12:
        orient = np.full(_BINS, 1.0 / _BINS)
    else:
        angles = np.arctan2(gy, gx)
        orient, _ = np.histogram(angles, bins=_BINS, range=(-np.pi, np.pi), weights=mag)
        orient = orient / total

    vec = np.concatenate([grid, hist, orient])
    return vec / np.linalg.norm(vec)


def _image_hash(image: np.ndarray) -> str:
    arr = np.ascontiguousarray(np.asarray(image, dtype=np.float64))
    return hashlib.sha256(arr.tobytes() + str(arr.shape).encode()).hexdigest()


@dataclass
class TemplateEntry:
    image: np.ndarray
    mask: np.ndarray
    descriptor: np.ndarray
    patient_id: str
    class_set: frozenset[int]
    image_hash: str


@dataclass
class SampleDraw:
    chosen: int  # bank index of the drawn template
    candidates: list[int]  # bank indices, sorted by descending similarity
    similarities: list[float]
    probabilities: list[float]


@dataclass
class TemplateBank:
    temperature: float = 0.1
    entries: list[TemplateEntry] = field(default_factory=list)
    descriptor_fn: DescriptorFn = compute_descriptor

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")

    def __len__(self) -> int:
        return len(self.entries)

    def insert(self, image: np.ndarray, mask: np.ndarray, patient_id: str) -> "TemplateBank":
        image = validate_image(image)
        digest = _image_hash(image)
        for e in self.entries:
            if e.patient_id == patient_id and e.image_hash == digest:
                raise ValueError(f"duplicate template for patient {patient_id!r} (same image hash)")
        mask = np.asarray(mask)
        if mask.shape != image.shape:
            raise ValueError(f"mask shape {mask.shape} differs from image shape {image.shape}")
        self.entries.append(
            TemplateEntry(
                image=image,
                mask=mask,
                descriptor=self.descriptor_fn(image),
                patient_id=patient_id,
                class_set=frozenset(int(v) for v in np.unique(mask) if v != 0),
                image_hash=digest,
            )
        )
        return self


def top_k(bank: TemplateBank, query: np.ndarray, k: int, class_id: int | None = None) -> list[tuple[int, float]]:
    """Up to k (bank index, cosine similarity) pairs sorted by descending
    similarity, ties broken by lower index. ``class_id=None`` means any."""
    if len(bank) == 0:
        raise ValueError("template bank is empty")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    eligible = [
        i for i, e in enumerate(bank.entries) if class_id is None or class_id in e.class_set
    ]
    if not eligible:
        raise ValueError(f"no bank entry contains class {class_id}")
    query = np.asarray(query, dtype=np.float64)
    sims = [float(np.dot(bank.entries[i].descriptor, query)) for i in eligible]
    order = sorted(range(len(eligible)), key=lambda j: (-sims[j], eligible[j]))
    return [(eligible[j], sims[j]) for j in order[:k]]


def sample_template(bank: TemplateBank, query: np.ndarray, class_id: int | None, seed: int) -> SampleDraw:
    """Softmax-sample one template from the top-3 cosine matches."""
    cands = top_k(bank, query, 3, class_id)
    sims = np.array([s for _, s in cands], dtype=np.float64)
    z = sims / bank.temperature
    z -= z.max()
    expz = np.exp(z)
    probs = expz / expz.sum()
    rng = np.random.Generator(np.random.PCG64(seed))
    r = rng.random()
    idx = int(np.searchsorted(np.cumsum(probs), r, side="right"))
    idx = min(idx, len(cands) - 1)
    draw = SampleDraw(
        chosen=cands[idx][0],
        candidates=[i for i, _ in cands],
        similarities=[s for _, s in cands],
        probabilities=[float(p) for p in probs],
    )
    logger.debug("sample_template: %s", draw)
    return draw


def bank_from_manifest(manifest, temperature: float = 0.1, descriptor_fn: DescriptorFn = compute_descriptor) -> TemplateBank:
    """Insert every labeled entry of a manifest into a fresh bank."""
    bank = TemplateBank(temperature=temperature, descriptor_fn=descriptor_fn)
    for entry in manifest.select("labeled"):
        bank.insert(manifest.load_image(entry), manifest.load_mask(entry), entry.patient)
    return bank


def save_bank(bank: TemplateBank, root) -> Path:
    """Serialize to a directory: images/, masks/, and bank.json with
    descriptors as base-10 text arrays."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    records = []
    for i, e in enumerate(bank.entries):
        stem = f"entry_{i:04d}.png"
        save_png_image(root / "images" / stem, e.image)
        save_png_mask(root / "masks" / stem, e.mask)
        records.append(
            {
                "image": f"images/{stem}",
                "mask": f"masks/{stem}",
                "patient": e.patient_id,
                "descriptor": [float(v) for v in e.descriptor],
                "classes": sorted(e.class_set),
            }
        )
    path = root / "bank.json"
    with open(path, "w") as f:
        json.dump({"temperature": bank.temperature, "entries": records}, f)
        f.write("\n")
    return path


def load_bank(root, descriptor_fn: DescriptorFn = compute_descriptor) -> TemplateBank:
    """Load a serialized bank, recomputing descriptors to verify they match
    the stored ones (the recomputability invariant)."""
    root = Path(root)
    with open(root / "bank.json") as f:
        raw = json.load(f)
    bank = TemplateBank(temperature=raw["temperature"], descriptor_fn=descriptor_fn)
    for rec in raw["entries"]:
        image = load_png_image(root / rec["image"])
        mask = load_png_mask(root / rec["mask"])
        stored = np.array(rec["descriptor"], dtype=np.float64)
        recomputed = descriptor_fn(image)
        if not np.allclose(recomputed, stored, rtol=0, atol=1e-12):
            raise ValueError(f"descriptor mismatch for {rec['image']}: bank is stale")
        bank.insert(image, mask, rec["patient"])
    return bank
