"""Stage-2 trainer: UniMatch-v2-style student/EMA-teacher loop with
optional dual-source assistant supervision and teacher-to-assistant
feedback prompts."""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field

import numpy as np
import torch

from ..bank import TemplateBank
from ..data.augment import apply_geometric, invert_geometric, strong_augment, weak_augment
from ..metrics import MetricReport, evaluate
from ..rng import child_seed, substream
from ..segmenter.config import SegmenterConfig
from ..segmenter.model import Segmenter
from ..segmenter.train import TrainingDiverged
from .config import SSLConfig
from .losses import eq5_unlabeled_loss, joint_unlabeled_loss, supervised_loss
from .model import StudentNet, ema_update, student_forward_dual
from .pseudo import PseudoLabelPair, assistant_pseudo_label, feedback_prompt, teacher_pseudo_label
from .schedule import ScheduleWeights, schedule

logger = logging.getLogger("refseg.ssl")


@dataclass
class SSLState:
    student: StudentNet
    teacher: StudentNet
    iteration: int
    seed: int
    loss_rows: list[dict] = field(default_factory=list)
    metric_history: list[tuple[int, MetricReport]] = field(default_factory=list)


def _stack_images(images: list[np.ndarray]) -> torch.Tensor:
    return torch.as_tensor(np.stack(images), dtype=torch.float32)[:, None]


def _stack_masks(masks: list[np.ndarray]) -> torch.Tensor:
    return torch.as_tensor(np.stack(masks), dtype=torch.long)


def predict_student(student: StudentNet, image: np.ndarray) -> np.ndarray:
    """Hard label map: per-pixel argmax of the student's class probabilities."""
    with torch.no_grad():
        logits = student(_stack_images([image]))
    return logits[0].argmax(dim=0).numpy()


def evaluate_student(student: StudentNet, test_images, test_masks, num_classes: int) -> MetricReport:
    preds = [predict_student(student, img) for img in test_images]
    return evaluate(preds, test_masks, num_classes)


def _probs_to_weak_frame(record: list[dict], probs: np.ndarray) -> np.ndarray:
    """Transport an assistant probability stack (raw-image frame) into the
    weak-view frame. Pixels shifted in from outside become background."""
    out = np.empty_like(probs)
    for c in range(probs.shape[0]):
        fill = 1.0 if c == 0 else 0.0
        out[c] = apply_geometric(record, probs[c], is_mask=False, fill=fill)
    return out


def _feedback_prompts(
    teacher_probs: np.ndarray, record: list[dict], kind: str, num_classes: int
) -> dict[int, object]:
    """Per-class prompts from the teacher's weak-view probabilities,
    inverse-transformed into the raw-image frame the assistant sees."""
    prompts = {}
    for c in range(1, num_classes + 1):
        raw_frame = invert_geometric(record, teacher_probs[c], is_mask=False, fill=0.0)
        prompts[c] = feedback_prompt(raw_frame, kind)
    return prompts


def train_stage2(
    manifest,
    assistant: Segmenter | None,
    bank: TemplateBank | None,
    config: SSLConfig,
    seed: int,
    assistant_config: SegmenterConfig | None = None,
) -> SSLState:
    """Run the full stage-2 loop and return the final state with loss rows
    and the periodic test-split metric history."""
    if config.use_assistant and (assistant is None or bank is None or assistant_config is None):
        raise ValueError("use_assistant requires an assistant model, its config, and a template bank")

    labeled = manifest.select("labeled")
    unlabeled = manifest.select("unlabeled")
    test = manifest.select("test")
    if not labeled:
        raise ValueError("manifest has no labeled entries")
    if config.lambda_u > 0 and not unlabeled:
        raise ValueError("lambda_u > 0 but manifest has no unlabeled entries")

    lab_images = [manifest.load_image(e) for e in labeled]
    lab_masks = [manifest.load_mask(e) for e in labeled]
    unl_images = [manifest.load_image(e) for e in unlabeled]
    test_images = [manifest.load_image(e) for e in test]
    test_masks = [manifest.load_mask(e) for e in test]

    torch.manual_seed(child_seed(seed, "ssl.init"))
    student = StudentNet(config.num_classes)
    teacher = copy.deepcopy(student)
    for p in teacher.parameters():
        p.requires_grad_(False)
    optimizer = torch.optim.SGD(student.parameters(), lr=config.lr)

    labeled_rng = substream(seed, "ssl.labeled")
    unlabeled_rng = substream(seed, "ssl.unlabeled")
    dropout_rng = substream(seed, "ssl.dropout")
    assistant_rng = substream(seed, "ssl.assistant")

    state = SSLState(student=student, teacher=teacher, iteration=0, seed=seed)
    total_iters = config.total_iters
    feedback_from = config.feedback_start * total_iters

    for t in range(total_iters):
        idxs = labeled_rng.integers(len(labeled), size=config.batch_labeled)
        x_l = _stack_images([lab_images[i] for i in idxs])
        y_l = _stack_masks([lab_masks[i] for i in idxs])
        loss_sup = supervised_loss(student, x_l, y_l, config)

        loss_u = torch.zeros(())
        teacher_part = assistant_part = 0.0
        weights = ScheduleWeights(alpha_t=1.0, alpha_v=0.0)
        if config.lambda_u > 0:
            u_idxs = unlabeled_rng.integers(len(unl_images), size=config.batch_unlabeled)
            weak_views, strong1, strong2 = [], [], []
            for i in u_idxs:
                weak = weak_augment(unl_images[i], seed=int(unlabeled_rng.integers(2**63)))
                strong1.append(strong_augment(weak, seed=int(unlabeled_rng.integers(2**63))))
                strong2.append(strong_augment(weak, seed=int(unlabeled_rng.integers(2**63))))
                weak_views.append(weak)

            x_w = _stack_images([v.image for v in weak_views])
            tp = teacher_pseudo_label(teacher, x_w, config)
            p_sf, p_si, _ = student_forward_dual(
                student,
                _stack_images([v.image for v in strong1]),
                _stack_images([v.image for v in strong2]),
                seed=int(dropout_rng.integers(2**63)),
                dropout_p=config.dropout_p,
            )

            if config.use_assistant:
                weights = schedule(t, total_iters, config.schedule_kind)
                a_probs, a_hard = [], []
                for j, i in enumerate(u_idxs):
                    a_seed = int(assistant_rng.integers(2**63))
                    record = weak_views[j].geometric_record()
                    prompts = None
                    if config.use_feedback and t >= feedback_from:
                        prompts = _feedback_prompts(
                            tp.probs[j].numpy(), record, config.feedback_kind, config.num_classes
                        )
                    ap = assistant_pseudo_label(
                        assistant, assistant_config, bank, unl_images[i], prompts, a_seed
                    )
                    probs_w = _probs_to_weak_frame(record, ap.probs)
                    a_probs.append(probs_w)
                    a_hard.append(np.argmax(probs_w, axis=0))
                pair = PseudoLabelPair(
                    teacher_probs=tp.probs,
                    teacher_hard=tp.hard,
                    assistant_probs=torch.as_tensor(np.stack(a_probs), dtype=p_sf.dtype),
                    assistant_hard=torch.as_tensor(np.stack(a_hard), dtype=torch.long),
                    conf=tp.conf,
                )
                loss_u, t_part, v_part = joint_unlabeled_loss(p_sf, p_si, pair, weights, config)
                teacher_part, assistant_part = float(t_part.detach()), float(v_part.detach())
            else:
                loss_u = eq5_unlabeled_loss(p_sf, p_si, tp.hard, tp.conf)
                teacher_part = float(loss_u.detach())

        total = loss_sup + config.lambda_u * loss_u
        if not torch.isfinite(total):
            raise TrainingDiverged(t, "non-finite stage-2 loss")
        optimizer.zero_grad()
        total.backward()
        optimizer.step()
        ema_update(teacher, student, config.ema_decay)

        row = {
            "iteration": t,
            "loss_sup": float(loss_sup.detach()),
            "loss_u_teacher": teacher_part,
            "loss_u_assistant": assistant_part,
            "alpha_t": weights.alpha_t,
            "alpha_v": weights.alpha_v,
        }
        if test and ((t + 1) % config.eval_every == 0 or t == total_iters - 1):
            report = evaluate_student(student, test_images, test_masks, config.num_classes)
            state.metric_history.append((t, report))
            for c, m in report.per_class.items():
                row[f"dice_{c}"] = m.dice
            logger.info("iter %d: test mean dice %.4f", t, report.mean_dice)
        state.loss_rows.append(row)
        state.iteration = t + 1

    return state
