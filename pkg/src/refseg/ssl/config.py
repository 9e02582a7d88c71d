"""Stage-2 trainer hyperparameters."""

from __future__ import annotations

from dataclasses import asdict, dataclass


@dataclass
class SSLConfig:
    num_classes: int  # foreground classes C
    lambda_ce: float = 1.0
    lambda_dice: float = 1.0
    lambda_u: float = 1.0
    eps: float = 1e-6
    conf_threshold: float = 0.95  # teacher confidence gate
    ema_decay: float = 0.99
    total_iters: int = 600
    schedule_kind: str = "cosine"  # cosine | linear | teacher-only
    feedback_start: float = 0.25  # fraction of total_iters
    feedback_kind: str = "prob_map"  # prob_map | box | points
    batch_labeled: int = 2
    batch_unlabeled: int = 2
    dropout_p: float = 0.5  # channel-mask Bernoulli probability
    lr: float = 0.2
    eval_every: int = 200
    use_assistant: bool = True
    use_feedback: bool = True

    def __post_init__(self):
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        if not 0.0 < self.conf_threshold < 1.0:
            raise ValueError(f"conf_threshold must be in (0,1), got {self.conf_threshold}")
        if not 0.0 <= self.ema_decay <= 1.0:
            raise ValueError(f"ema_decay must be in [0,1], got {self.ema_decay}")
        if min(self.lambda_ce, self.lambda_dice, self.lambda_u) < 0:
            raise ValueError("loss weights must be >= 0")
        if self.total_iters < 1:
            raise ValueError("total_iters must be >= 1")
        if not 0.0 <= self.feedback_start <= 1.0:
            raise ValueError("feedback_start must be in [0,1]")
        if self.feedback_kind not in ("prob_map", "box", "points"):
            raise ValueError(f"unknown feedback kind {self.feedback_kind!r}")
        if min(self.batch_labeled, self.batch_unlabeled) < 1:
            raise ValueError("batch sizes must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SSLConfig":
        return cls(**d)
