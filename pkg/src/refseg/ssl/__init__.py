from .config import SSLConfig
from .losses import eq5_unlabeled_loss, joint_unlabeled_loss, segmentation_loss, supervised_loss
from .model import StudentNet, ema_update, student_forward_dual, teacher_predict
from .pseudo import (
    AssistantPseudo,
    PseudoLabelPair,
    TeacherPseudo,
    assistant_pseudo_label,
    feedback_prompt,
    teacher_pseudo_label,
)
from .schedule import ScheduleWeights, schedule
from .train import SSLState, train_stage2

__all__ = [
    "AssistantPseudo",
    "PseudoLabelPair",
    "SSLConfig",
    "SSLState",
    "ScheduleWeights",
    "StudentNet",
    "TeacherPseudo",
    "assistant_pseudo_label",
    "ema_update",
    "eq5_unlabeled_loss",
    "feedback_prompt",
    "joint_unlabeled_loss",
    "schedule",
    "segmentation_loss",
    "student_forward_dual",
    "supervised_loss",
    "teacher_predict",
    "teacher_pseudo_label",
    "train_stage2",
]
