import numpy as np
import pytest
import torch

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def tiny_manifest(tmp_path_factory):
    """A small split corpus shared by training-path tests."""
    from refseg.data import generate_synthetic, split_labeled

    root = tmp_path_factory.mktemp("tiny_corpus")
    manifest = generate_synthetic(
        seed=7, num_patients=6, slices_per_patient=2, num_classes=2, size=32, root=root
    )
    manifest = split_labeled(manifest, 0.25, seed=7)
    manifest.save()
    return manifest


def random_label_mask(rng: np.random.Generator, shape=(32, 32), num_classes=2, p_fg=0.3) -> np.ndarray:
    """Random blobby label mask (threshold of smoothed noise, per class)."""
    from scipy.ndimage import gaussian_filter

    mask = np.zeros(shape, dtype=np.int64)
    for c in range(1, num_classes + 1):
        field = gaussian_filter(rng.normal(size=shape), sigma=3.0)
        mask[field > np.quantile(field, 1.0 - p_fg * rng.uniform(0.2, 1.0))] = c
    return mask
