"""Dataset manifest: a JSON index over PNG images/masks with patient-level splits."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..rng import substream
from .arrays import load_png_image, load_png_mask

SPLITS = ("labeled", "unlabeled", "test")


@dataclass(frozen=True)
class ManifestEntry:
    image: str  # path relative to the dataset root
    mask: str | None
    patient: str
    split: str


@dataclass
class DatasetManifest:
    root: Path
    num_classes: int
    classes: list[str]
    entries: list[ManifestEntry]

    def __post_init__(self):
        self.root = Path(self.root)
        self.entries = sorted(self.entries, key=lambda e: (e.patient, e.image))

    def validate(self, check_files: bool = True) -> None:
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        if len(self.classes) != self.num_classes:
            raise ValueError(
                f"{len(self.classes)} class names for num_classes={self.num_classes}"
            )
        for e in self.entries:
            if e.split not in SPLITS:
                raise ValueError(f"entry {e.image}: unknown split {e.split!r}")
            if not e.patient:
                raise ValueError(f"entry {e.image}: empty patient id")
            if e.split in ("labeled", "test") and e.mask is None:
                raise ValueError(f"entry {e.image}: split {e.split!r} requires a mask")
            if check_files:
                if not (self.root / e.image).exists():
                    raise FileNotFoundError(f"entry {e.image}: image file missing")
                if e.mask is not None and not (self.root / e.mask).exists():
                    raise FileNotFoundError(f"entry {e.image}: mask file {e.mask} missing")

    def select(self, split: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == split]

    def patients(self, splits: tuple[str, ...] = SPLITS) -> list[str]:
        return sorted({e.patient for e in self.entries if e.split in splits})

    def load_image(self, entry: ManifestEntry) -> np.ndarray:
        return load_png_image(self.root / entry.image)

    def load_mask(self, entry: ManifestEntry) -> np.ndarray:
        if entry.mask is None:
            raise ValueError(f"entry {entry.image} has no mask")
        return load_png_mask(self.root / entry.mask)

    def to_dict(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "classes": list(self.classes),
            "entries": [
                {"image": e.image, "mask": e.mask, "patient": e.patient, "split": e.split}
                for e in self.entries
            ],
        }

    def save(self, path=None) -> Path:
        path = Path(path) if path is not None else self.root / "manifest.json"
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=1, sort_keys=True)
            f.write("\n")
        return path


def load_manifest(path) -> DatasetManifest:
    """Load and validate a manifest; ``path`` may be the JSON file or the
    dataset root containing ``manifest.json``."""
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    try:
        with open(path) as f:
            raw = json.load(f)
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed manifest JSON at {path}: {exc}") from exc
    try:
        entries = [
            ManifestEntry(
                image=e["image"], mask=e.get("mask"), patient=e["patient"], split=e["split"]
            )
            for e in raw["entries"]
        ]
        manifest = DatasetManifest(
            root=path.parent,
            num_classes=raw["num_classes"],
            classes=list(raw["classes"]),
            entries=entries,
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed manifest at {path}: missing field {exc}") from exc
    manifest.validate()
    return manifest


def split_labeled(manifest: DatasetManifest, ratio: float, seed: int) -> DatasetManifest:
    """Patient-level labeled/unlabeled split of the non-test entries.

    ceil(ratio * #train-patients) patients keep their masks and become
    ``labeled``; the rest become ``unlabeled`` with masks dropped. Test
    entries pass through untouched.
    """
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"ratio must be in (0, 1], got {ratio}")
    train_patients = manifest.patients(splits=("labeled", "unlabeled"))
    if not train_patients:
        raise ValueError("no non-test patients to split")
    n_labeled = math.ceil(ratio * len(train_patients))
    if n_labeled < 1:
        raise ValueError(f"ratio {ratio} leaves zero labeled patients")
    rng = substream(seed, "split_labeled")
    order = rng.permutation(len(train_patients))
    chosen = {train_patients[i] for i in order[:n_labeled]}
    entries = []
    for e in manifest.entries:
        if e.split == "test":
            entries.append(e)
        elif e.patient in chosen:
            entries.append(replace(e, split="labeled"))
        else:
            entries.append(replace(e, split="unlabeled", mask=None))
    return DatasetManifest(
        root=manifest.root,
        num_classes=manifest.num_classes,
        classes=list(manifest.classes),
        entries=entries,
    )
