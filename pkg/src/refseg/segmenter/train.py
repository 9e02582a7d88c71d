"""Stage-1 training and inference for the reference-guided segmenter."""

from __future__ import annotations

import logging

import numpy as np
import torch

from ..bank import SampleDraw, TemplateBank, sample_template
from ..data.augment import template_augment
from ..rng import child_seed, substream
from .config import SegmenterConfig
from .losses import stage1_loss
from .model import Segmenter
from .prompts import SpatialPrompt, rasterize_prompt

logger = logging.getLogger("refseg.segmenter")


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, message: str):
        super().__init__(f"{message} at step {step}")
        self.step = step


def _to_tensor(arr: np.ndarray, dtype=torch.float32) -> torch.Tensor:
    return torch.as_tensor(np.ascontiguousarray(arr), dtype=dtype)


def _template_stack(image: np.ndarray, mask: np.ndarray, class_id: int) -> torch.Tensor:
    return torch.stack(
        [_to_tensor(image), _to_tensor((np.asarray(mask) == class_id).astype(np.float32))]
    )[None]


def train_stage1(
    manifest,
    bank: TemplateBank,
    config: SegmenterConfig,
    steps: int,
    lr: float,
    seed: int,
) -> tuple[Segmenter, list[dict]]:
    """Train the segmenter on the labeled split, one (image, class,
    sampled template) triple per step, with plain SGD.

    Returns the trained model and the per-step loss curve.
    """
    labeled = manifest.select("labeled")
    if not labeled:
        raise ValueError("manifest has no labeled entries")
    if len(bank) == 0:
        raise ValueError("template bank is empty")

    images = [manifest.load_image(e) for e in labeled]
    masks = [manifest.load_mask(e) for e in labeled]
    class_lists = [sorted(int(v) for v in np.unique(m) if v != 0) for m in masks]
    descriptors = [bank.descriptor_fn(img) for img in images]

    torch.manual_seed(child_seed(seed, "stage1.init"))
    model = Segmenter(config)
    optimizer = torch.optim.SGD(model.parameters(), lr=lr)

    data_rng = substream(seed, "stage1.data")
    retrieval_rng = substream(seed, "stage1.retrieval")
    augment_rng = substream(seed, "stage1.augment")

    curve: list[dict] = []
    for step in range(steps):
        idx = int(data_rng.integers(len(labeled)))
        classes = class_lists[idx]
        if not classes:
            continue
        class_id = classes[int(data_rng.integers(len(classes)))]

        draw = sample_template(
            bank, descriptors[idx], class_id, seed=int(retrieval_rng.integers(2**63))
        )
        entry = bank.entries[draw.chosen]
        aug = template_augment(entry.image, entry.mask, seed=int(augment_rng.integers(2**63)))

        image_t = _to_tensor(images[idx])[None, None]
        template_t = _template_stack(aug.image, aug.mask, class_id) if config.use_memory else None
        target_t = _to_tensor((masks[idx] == class_id).astype(np.float32))[None]

        outputs = model(image_t, template=template_t, class_ids=class_id)
        total, parts = stage1_loss(outputs, target_t, class_id, config)
        if not torch.isfinite(total):
            raise TrainingDiverged(step, "non-finite stage-1 loss")
        optimizer.zero_grad()
        total.backward()
        optimizer.step()
        curve.append({"step": step, "total": float(total.detach()), **parts})
        if step % 100 == 0:
            logger.debug("stage1 step %d: loss %.4f", step, float(total.detach()))
    return model, curve


def predict_logits(
    model: Segmenter,
    config: SegmenterConfig,
    image: np.ndarray,
    bank: TemplateBank,
    class_id: int,
    spatial: SpatialPrompt,
    seed: int,
) -> tuple[np.ndarray, SampleDraw]:
    """Retrieve a template via softmax sampling, run the segmenter, and
    return the raw per-pixel logits for ``class_id`` plus the draw."""
    query = bank.descriptor_fn(image)
    draw = sample_template(bank, query, class_id, seed=seed)
    entry = bank.entries[draw.chosen]
    dtype = next(model.parameters()).dtype
    image_t = _to_tensor(image, dtype)[None, None]
    template_t = _template_stack(entry.image, entry.mask, class_id).to(dtype) if config.use_memory else None
    raster = _to_tensor(rasterize_prompt(spatial, image.shape), dtype)[None, None]
    with torch.no_grad():
        outputs = model(image_t, template=template_t, class_ids=class_id, prompt_raster=raster)
    return outputs.logits[0].numpy(), draw


def predict(
    model: Segmenter,
    config: SegmenterConfig,
    image: np.ndarray,
    bank: TemplateBank,
    class_id: int,
    spatial: SpatialPrompt | None = None,
    seed: int = 0,
) -> np.ndarray:
    """Foreground probability map for ``class_id`` (sigmoid of the logits)."""
    spatial = spatial or SpatialPrompt.none()
    logits, draw = predict_logits(model, config, image, bank, class_id, spatial, seed)
    logger.debug("predict class %d: %s", class_id, draw)
    return 1.0 / (1.0 + np.exp(-logits.astype(np.float64)))
