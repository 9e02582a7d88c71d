from .arrays import load_png_image, load_png_mask, save_png_image, save_png_mask, validate_image, validate_mask
from .augment import (
    AugmentedView,
    apply_geometric,
    invert_geometric,
    make_overlay,
    strong_augment,
    template_augment,
    weak_augment,
)
from .manifest import DatasetManifest, ManifestEntry, load_manifest, split_labeled
from .synthetic import generate_synthetic

__all__ = [
    "AugmentedView",
    "DatasetManifest",
    "ManifestEntry",
    "apply_geometric",
    "generate_synthetic",
    "invert_geometric",
    "load_manifest",
    "load_png_image",
    "load_png_mask",
    "make_overlay",
    "save_png_image",
    "save_png_mask",
    "split_labeled",
    "strong_augment",
    "template_augment",
    "validate_image",
    "validate_mask",
    "weak_augment",
]
