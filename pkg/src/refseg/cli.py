"""Command-line entry points: generate, pretrain, ssl-train, infer, eval, ablate.

Configuration precedence is CLI flag > --config JSON file > dataclass
defaults. The config file may carry partial ``{"segmenter": {...},
"ssl": {...}}`` sections. ``REFSEG_LOG=debug|info`` controls verbosity.
All randomness flows from ``--seed`` through named substreams, so ablation
variants see identical data order.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import torch

from .bank import bank_from_manifest, load_bank, save_bank
from .checkpoint import config_hash, load_checkpoint, load_segmenter, load_student, save_checkpoint
from .data import generate_synthetic, load_manifest, save_png_mask, split_labeled
from .metrics import evaluate, write_report_csv
from .rng import child_seed
from .segmenter import SegmenterConfig, TrainingDiverged, train_stage1
from .ssl import SSLConfig, train_stage2
from .ssl.pseudo import assistant_pseudo_label
from .ssl.train import evaluate_student, predict_student

logger = logging.getLogger("refseg.cli")


def _setup_logging() -> None:
    level = os.environ.get("REFSEG_LOG", "info").strip().lower()
    logging.basicConfig(
        level=logging.DEBUG if level == "debug" else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


def _read_config_file(path: str | None) -> dict:
    if not path:
        return {}
    with open(path) as f:
        return json.load(f)


def _segmenter_config(file_cfg: dict, num_classes: int, args) -> SegmenterConfig:
    base: dict = {"num_classes": num_classes}
    base.update(file_cfg.get("segmenter", {}))
    base["num_classes"] = num_classes
    if getattr(args, "no_prompt", False):
        base["use_prompt"] = False
    if getattr(args, "no_memory", False):
        base["use_memory"] = False
    return SegmenterConfig.from_dict(base)

def _ssl_config(file_cfg: dict, num_classes: int, args) -> SSLConfig:
    base: dict = {"num_classes": num_classes}
    base.update(file_cfg.get("ssl", {}))
    base["num_classes"] = num_classes
    if getattr(args, "iters", None) is not None:
        base["total_iters"] = args.iters
    if getattr(args, "lr", None) is not None:
        base["lr"] = args.lr
    if getattr(args, "no_assistant", False):
        base["use_assistant"] = False
    if getattr(args, "no_feedback", False):
        base["use_feedback"] = False
    return SSLConfig.from_dict(base)


def _write_csv(path, fieldnames: list[str], rows: list[dict], comment: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write(f"# {comment}\n")
        writer = csv.DictWriter(f, fieldnames=fieldnames, restval="")
        writer.writeheader()
        writer.writerows(rows)


def cmd_generate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = generate_synthetic(
        seed=args.seed,
        num_patients=args.patients,
        slices_per_patient=args.slices,
        num_classes=args.classes,
        size=args.size,
        root=out,
        test_fraction=args.test_fraction,
    )
    manifest = split_labeled(manifest, args.ratio, args.seed)
    manifest.save()
    n = {s: len(manifest.select(s)) for s in ("labeled", "unlabeled", "test")}
    logger.info("generated %d entries under %s: %s", len(manifest.entries), out, n)
    return 0


def cmd_pretrain(args) -> int:
    manifest = load_manifest(args.data)
    file_cfg = _read_config_file(args.config)
    seg_cfg = _segmenter_config(file_cfg, manifest.num_classes, args)
    bank = bank_from_manifest(manifest)
    try:
        model, curve = train_stage1(manifest, bank, seg_cfg, args.steps, args.lr, args.seed)
    except TrainingDiverged as exc:
        logger.error("pretraining diverged: %s", exc)
        return 1
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_bank(bank, out / "bank")
    meta = {"seed": args.seed, "steps": args.steps, "lr": args.lr}
    save_checkpoint(out / "segmenter.json", "segmenter", seg_cfg.to_dict(), model, meta)
    comment = f"config_hash={config_hash(seg_cfg.to_dict())} seed={args.seed}"
    if curve:
        _write_csv(out / "stage1_loss.csv", list(curve[0].keys()), curve, comment)
    logger.info("wrote %s", out / "segmenter.json")
    return 0


def cmd_ssl_train(args) -> int:
    manifest = load_manifest(args.data)
    file_cfg = _read_config_file(args.config)
    ssl_cfg = _ssl_config(file_cfg, manifest.num_classes, args)
    assistant = seg_cfg = bank = None
    if ssl_cfg.use_assistant:
        if not args.checkpoint:
            logger.error("--checkpoint is required unless --no-assistant is given")
            return 1
        assistant, seg_cfg = load_segmenter(args.checkpoint)
        bank_dir = Path(args.bank) if args.bank else Path(args.checkpoint).parent / "bank"
        bank = load_bank(bank_dir) if bank_dir.exists() else bank_from_manifest(manifest)
    try:
        state = train_stage2(manifest, assistant, bank, ssl_cfg, args.seed, seg_cfg)
    except TrainingDiverged as exc:
        logger.error("ssl training diverged: %s", exc)
        return 1
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg_dict = ssl_cfg.to_dict()
    meta = {"seed": args.seed}
    save_checkpoint(out / "student.json", "student", cfg_dict, state.student, meta)
    save_checkpoint(out / "teacher.json", "teacher", cfg_dict, state.teacher, meta)
    fields = ["iteration", "loss_sup", "loss_u_teacher", "loss_u_assistant", "alpha_t", "alpha_v"]
    fields += [f"dice_{c}" for c in range(1, manifest.num_classes + 1)]
    comment = f"config_hash={config_hash(cfg_dict)} seed={args.seed}"
    _write_csv(out / "training.csv", fields, state.loss_rows, comment)
    if state.metric_history:
        _, final_report = state.metric_history[-1]
        write_report_csv(out / "final_metrics.csv", final_report, comment)
        logger.info("final test mean dice: %.4f", final_report.mean_dice)
    return 0


def _predictions(raw_kind: str, checkpoint_path: str, manifest, split: str, seed: int):
    entries = manifest.select(split)
    images = [manifest.load_image(e) for e in entries]
    if raw_kind == "segmenter":
        model, seg_cfg = load_segmenter(checkpoint_path)
        bank = bank_from_manifest(manifest)
        preds = [
            assistant_pseudo_label(
                model, seg_cfg, bank, img, None, child_seed(seed, f"infer.{i}")
            ).hard
            for i, img in enumerate(images)
        ]
    else:
        model, _ = load_student(checkpoint_path, kind=raw_kind)
        preds = [predict_student(model, img) for img in images]
    return entries, preds


def cmd_eval(args) -> int:
    manifest = load_manifest(args.data)
    raw = load_checkpoint(args.checkpoint)
    entries, preds = _predictions(raw["kind"], args.checkpoint, manifest, "test", args.seed)
    truths = [manifest.load_mask(e) for e in entries]
    report = evaluate(preds, truths, manifest.num_classes)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_report_csv(out, report, f"config_hash={raw['config_hash']} seed={args.seed}")
    for c, m in sorted(report.per_class.items()):
        hd = "undefined" if m.hd95 is None else f"{m.hd95:.3f}"
        logger.info("class %d: dice %.4f iou %.4f hd95 %s", c, m.dice, m.iou, hd)
    logger.info("average: dice %.4f iou %.4f", report.mean_dice, report.mean_iou)
    return 0


def cmd_infer(args) -> int:
    manifest = load_manifest(args.data)
    raw = load_checkpoint(args.checkpoint)
    entries, preds = _predictions(raw["kind"], args.checkpoint, manifest, args.split, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for entry, pred in zip(entries, preds):
        save_png_mask(out / Path(entry.image).name, pred)
    logger.info("wrote %d predictions to %s", len(preds), out)
    return 0


_ABLATION_GRID = [
    # name, use_prompt, use_memory, use_feedback
    ("full", True, True, True),
    ("no_prompt", False, True, True),
    ("no_memory", True, False, True),
    ("no_feedback", True, True, False),
]


def cmd_ablate(args) -> int:
    manifest = load_manifest(args.data)
    file_cfg = _read_config_file(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bank = bank_from_manifest(manifest)
    stage1_cache: dict[tuple[bool, bool], tuple] = {}
    rows = []
    for name, use_prompt, use_memory, use_feedback in _ABLATION_GRID:
        key = (use_prompt, use_memory)
        if key not in stage1_cache:
            seg_base = {"num_classes": manifest.num_classes}
            seg_base.update(file_cfg.get("segmenter", {}))
            seg_base.update({"num_classes": manifest.num_classes, "use_prompt": use_prompt, "use_memory": use_memory})
            seg_cfg = SegmenterConfig.from_dict(seg_base)
            model, _ = train_stage1(manifest, bank, seg_cfg, args.steps, args.lr_stage1, args.seed)
            stage1_cache[key] = (model, seg_cfg)
        model, seg_cfg = stage1_cache[key]
        ssl_cfg = _ssl_config(file_cfg, manifest.num_classes, args)
        ssl_cfg.use_feedback = use_feedback
        state = train_stage2(manifest, model, bank, ssl_cfg, args.seed, seg_cfg)
        _, report = state.metric_history[-1]
        run_dir = out / name
        run_dir.mkdir(parents=True, exist_ok=True)
        save_checkpoint(run_dir / "segmenter.json", "segmenter", seg_cfg.to_dict(), model, {"seed": args.seed})
        save_checkpoint(run_dir / "student.json", "student", ssl_cfg.to_dict(), state.student, {"seed": args.seed})
        row = {
            "config": name,
            "seed": args.seed,
            "use_prompt": use_prompt,
            "use_memory": use_memory,
            "use_feedback": use_feedback,
            "reference": name == "full",
            "final_mean_dice": report.mean_dice,
        }
        for c, m in report.per_class.items():
            row[f"dice_{c}"] = m.dice
        rows.append(row)
        logger.info("ablation %s: mean dice %.4f", name, report.mean_dice)
    fields = ["config", "seed", "use_prompt", "use_memory", "use_feedback", "reference", "final_mean_dice"]
    fields += [f"dice_{c}" for c in range(1, manifest.num_classes + 1)]
    _write_csv(out / "ablation.csv", fields, rows, f"seed={args.seed}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="refseg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic corpus and split manifest")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--patients", type=int, default=20)
    g.add_argument("--slices", type=int, default=4)
    g.add_argument("--classes", type=int, default=2)
    g.add_argument("--size", type=int, default=64)
    g.add_argument("--ratio", type=float, default=0.05)
    g.add_argument("--test-fraction", type=float, default=0.2)
    g.set_defaults(func=cmd_generate)

    p = sub.add_parser("pretrain", help="stage-1 training of the reference-guided segmenter")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--steps", type=int, default=800)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--no-prompt", action="store_true")
    p.add_argument("--no-memory", action="store_true")
    p.set_defaults(func=cmd_pretrain)

    s = sub.add_parser("ssl-train", help="stage-2 semi-supervised training")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config")
    s.add_argument("--checkpoint", help="stage-1 segmenter checkpoint")
    s.add_argument("--bank", help="serialized bank directory (default: next to checkpoint)")
    s.add_argument("--seed", type=int, default=1)
    s.add_argument("--iters", type=int, default=None)
    s.add_argument("--lr", type=float, default=None)
    s.add_argument("--no-assistant", action="store_true")
    s.add_argument("--no-feedback", action="store_true")
    s.set_defaults(func=cmd_ssl_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    e.add_argument("--data", required=True)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--out", required=True, help="metric CSV path")
    e.add_argument("--seed", type=int, default=1)
    e.set_defaults(func=cmd_eval)

    i = sub.add_parser("infer", help="write predicted masks for a split")
    i.add_argument("--data", required=True)
    i.add_argument("--checkpoint", required=True)
    i.add_argument("--out", required=True)
    i.add_argument("--split", default="test", choices=["labeled", "unlabeled", "test"])
    i.add_argument("--seed", type=int, default=1)
    i.set_defaults(func=cmd_infer)

    a = sub.add_parser("ablate", help="run the 4-configuration ablation grid")
    a.add_argument("--data", required=True)
    a.add_argument("--out", required=True)
    a.add_argument("--config")
    a.add_argument("--seed", type=int, default=1)
    a.add_argument("--steps", type=int, default=800, help="stage-1 steps per variant")
    a.add_argument("--iters", type=int, default=None)
    a.add_argument("--lr", type=float, default=None, help="stage-2 learning rate")
    a.add_argument("--lr-stage1", type=float, default=0.05)
    a.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    torch.set_num_threads(1)
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, ValueError) as exc:
        logger.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
