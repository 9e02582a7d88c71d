"""Synthetic blob corpus: a desk-scale stand-in for slice-based medical data.

Each slice shows one smooth blob (ellipse with low-order radial
modulation) per foreground class over a noisy shaded background. Blob
geometry, intensity and background statistics are drawn per patient and
jittered per slice, so patient-level splits carry real appearance shifts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from ..rng import substream
from .arrays import save_png_image, save_png_mask
from .manifest import DatasetManifest, ManifestEntry

# Class anchor centers (fractions of the image side), ordered so the
# first two classes sit in opposite corners and cannot collide.
_ANCHORS = [(0.30, 0.30), (0.70, 0.70), (0.30, 0.70), (0.70, 0.30)]

# Per-class intensity bands, consistent across patients (anatomy-like: a
# class keeps its characteristic appearance from patient to patient). The
# bands of adjacent classes touch, so some patients sit near the boundary
# and intensity alone does not settle the class.
_INTENSITY_BASES = {
    1: [0.66],
    2: [0.58, 0.72],
    3: [0.54, 0.66, 0.78],
    4: [0.52, 0.62, 0.72, 0.82],
}
_INTENSITY_BANDS = {1: 0.08, 2: 0.07, 3: 0.06, 4: 0.05}


@dataclass
class _BlobStyle:
    center: tuple[float, float]  # pixels
    axes: tuple[float, float]  # semi-axes, pixels
    angle: float
    lobes: int
    lobe_amp: float
    lobe_phase: float
    intensity: float


def _patient_styles(rng: np.random.Generator, num_classes: int, size: int) -> list[_BlobStyle]:
    lo, hi = (0.11, 0.16) if num_classes <= 2 else (0.09, 0.13)
    bases = _INTENSITY_BASES[num_classes]
    band = _INTENSITY_BANDS[num_classes]
    styles = []
    for c in range(num_classes):
        ay, ax = _ANCHORS[c]
        cy = (ay + rng.uniform(-0.05, 0.05)) * size
        cx = (ax + rng.uniform(-0.05, 0.05)) * size
        styles.append(
            _BlobStyle(
                center=(cy, cx),
                axes=(rng.uniform(lo, hi) * size, rng.uniform(lo, hi) * size),
                angle=rng.uniform(0.0, math.pi),
                lobes=int(rng.integers(3, 6)),
                lobe_amp=rng.uniform(0.0, 0.15),
                lobe_phase=rng.uniform(0.0, 2.0 * math.pi),
                intensity=bases[c] + rng.uniform(-band, band),
            )
        )
    return styles


def _blob_mask(style: _BlobStyle, rng: np.random.Generator, size: int) -> np.ndarray:
    cy = style.center[0] + rng.uniform(-0.03, 0.03) * size
    cx = style.center[1] + rng.uniform(-0.03, 0.03) * size
    a = style.axes[0] * rng.uniform(0.85, 1.15)
    b = style.axes[1] * rng.uniform(0.85, 1.15)
    theta = style.angle + rng.uniform(-0.2, 0.2)
    phase = style.lobe_phase + rng.uniform(-0.3, 0.3)

    yy, xx = np.mgrid[0:size, 0:size]
    dy = yy - cy
    dx = xx - cx
    u = dx * math.cos(theta) + dy * math.sin(theta)
    v = -dx * math.sin(theta) + dy * math.cos(theta)
    rho = np.hypot(u / a, v / b)
    phi = np.arctan2(v / b, u / a)
    limit = 1.0 + style.lobe_amp * np.cos(style.lobes * phi + phase)
    return rho <= limit


def generate_synthetic(
    seed: int,
    num_patients: int,
    slices_per_patient: int,
    num_classes: int,
    size: int,
    root,
    test_fraction: float = 0.2,
) -> DatasetManifest:
    """Write a blob corpus under ``root`` and return its manifest.

    round(test_fraction * num_patients) patients are reserved as the test
    split; the remainder start out fully labeled (``split_labeled`` turns
    them into the labeled/unlabeled mix). Same arguments, same bytes.
    """
    if not 1 <= num_classes <= 4:
        raise ValueError(f"num_classes must be in [1,4], got {num_classes}")
    if size < 32:
        raise ValueError(f"size must be >= 32, got {size}")
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)

    n_test = int(round(test_fraction * num_patients))
    order = substream(seed, "synthetic.split").permutation(num_patients)
    test_ids = set(order[:n_test].tolist())

    entries = []
    for p in range(num_patients):
        pid = f"p{p:03d}"
        prng = substream(seed, f"synthetic.patient.{p}")
        styles = _patient_styles(prng, num_classes, size)
        background = prng.uniform(0.20, 0.34)
        grad_y = prng.uniform(-0.06, 0.06)
        grad_x = prng.uniform(-0.06, 0.06)
        noise_sigma = prng.uniform(0.05, 0.08)

        yy, xx = np.mgrid[0:size, 0:size]
        shading = background + grad_y * (yy / size - 0.5) + grad_x * (xx / size - 0.5)

        for s in range(slices_per_patient):
            srng = substream(seed, f"synthetic.slice.{p}.{s}")
            mask = np.zeros((size, size), dtype=np.int64)
            image = shading.copy()
            for c, style in enumerate(styles, start=1):
                inside = _blob_mask(style, srng, size)
                mask[inside] = c
                intensity = style.intensity + srng.uniform(-0.02, 0.02)
                soft = gaussian_filter(inside.astype(np.float64), sigma=1.3)
                image += (intensity - background) * soft
            image += srng.normal(0.0, noise_sigma, size=(size, size))
            image = np.clip(image, 0.0, 1.0)

            stem = f"{pid}_s{s:02d}.png"
            save_png_image(root / "images" / stem, image)
            save_png_mask(root / "masks" / stem, mask)
            entries.append(
                ManifestEntry(
                    image=f"images/{stem}",
                    mask=f"masks/{stem}",
                    patient=pid,
                    split="test" if p in test_ids else "labeled",
                )
            )

    manifest = DatasetManifest(
        root=root,
        num_classes=num_classes,
        classes=[f"blob{c}" for c in range(1, num_classes + 1)],
        entries=entries,
    )
    manifest.save()
    return manifest
