"""Versioned JSON checkpoints: config plus shape-tagged parameter arrays.

Pure-text containers keep reruns hash-identical and make shape validation
against the config explicit at load time.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import torch

from .segmenter.config import SegmenterConfig
from .segmenter.model import Segmenter
from .ssl.model import StudentNet

FORMAT = "refseg-checkpoint"
VERSION = 1


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def save_checkpoint(path, kind: str, config: dict, model: torch.nn.Module, meta: dict | None = None) -> Path:
    path = Path(path)
    params = {}
    for name, tensor in model.state_dict().items():
        params[name] = {"shape": list(tensor.shape), "data": tensor.reshape(-1).tolist()}
    payload = {
        "format": FORMAT,
        "version": VERSION,
        "kind": kind,
        "config": config,
        "config_hash": config_hash(config),
        "meta": meta or {},
        "params": params,
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(payload, f, separators=(",", ":"))
        f.write("\n")
    return path


def load_checkpoint(path, expected_kind: str | None = None) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    with open(path) as f:
        raw = json.load(f)
    if raw.get("format") != FORMAT:
        raise ValueError(f"{path} is not a refseg checkpoint")
    if raw.get("version") != VERSION:
        raise ValueError(f"unsupported checkpoint version {raw.get('version')}")
    if expected_kind is not None and raw.get("kind") != expected_kind:
        raise ValueError(f"expected a {expected_kind!r} checkpoint, found {raw.get('kind')!r}")
    return raw


def _state_dict_from(raw: dict, model: torch.nn.Module) -> None:
    reference = model.state_dict()
    state = {}
    for name, spec in raw["params"].items():
        if name not in reference:
            raise ValueError(f"checkpoint parameter {name!r} not in model")
        expected = list(reference[name].shape)
        if spec["shape"] != expected:
            raise ValueError(f"parameter {name!r}: checkpoint shape {spec['shape']} != config shape {expected}")
        state[name] = torch.tensor(spec["data"], dtype=reference[name].dtype).reshape(spec["shape"])
    missing = set(reference) - set(state)
    if missing:
        raise ValueError(f"checkpoint missing parameters: {sorted(missing)}")
    model.load_state_dict(state)


def load_segmenter(path) -> tuple[Segmenter, SegmenterConfig]:
    raw = load_checkpoint(path, expected_kind="segmenter")
    config = SegmenterConfig.from_dict(raw["config"])
    model = Segmenter(config)
    _state_dict_from(raw, model)
    return model, config


def load_student(path, kind: str = "student") -> tuple[StudentNet, dict]:
    raw = load_checkpoint(path, expected_kind=kind)
    model = StudentNet(raw["config"]["num_classes"], raw["config"].get("feat_channels", 64))
    _state_dict_from(raw, model)
    return model, raw["config"]
