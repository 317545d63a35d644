"""Clean accuracy, attack success rate, and the transferability matrix.

ASR compares each victim model's predictions before and after the attack,
so the reference labels are the victim's own clean predictions, not
ground truth: an example the victim already misclassified counts as a
success only if the attack changes the predicted class again.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attacks import AttackSpec, craft_set
from .errors import DomainError
from .nn import Dataset, ModelParams, predict

__all__ = ["MetricsReport", "AttackEvaluation", "clean_accuracy", "asr", "evaluate_attack", "transfer_matrix"]


@dataclass(frozen=True)
class MetricsReport:
    """Per-experiment evaluation results.

    transfer_matrix[r][v] is the ASR of examples crafted on model r when
    replayed against model v; the adversary's diagonal entry is asr_self.
    attack_accuracy is reserved in the schema but never populated.
    """

    clean_accuracy: tuple[float, ...]
    asr_self: float
    asr_avg: float
    transfer_matrix: tuple[tuple[float, ...], ...]
    adversary_client: int
    config_digest: str
    seed: int
    attack_accuracy: float | None = field(default=None)

    def __post_init__(self):
        rates = list(self.clean_accuracy) + [self.asr_self, self.asr_avg] + [
            v for row in self.transfer_matrix for v in row
        ]
        if any(not 0.0 <= r <= 1.0 for r in rates):
            raise DomainError("all rates must lie in [0, 1]")
        if self.transfer_matrix[self.adversary_client][self.adversary_client] != self.asr_self:
            raise DomainError("adversary diagonal entry must equal asr_self")


@dataclass(frozen=True)
class AttackEvaluation:
    """One transfer-matrix row: attacks crafted on a single model."""

    per_victim: tuple[float, ...]
    asr_self: float
    asr_avg: float


def clean_accuracy(params: ModelParams, test: Dataset) -> float:
    """Fraction of examples whose predicted class matches the label."""
    if test.n == 0:
        raise DomainError("accuracy of an empty set is undefined")
    preds = predict(params, test.features)
    return float(np.mean(preds == test.labels))


def asr(pre_labels, post_labels) -> float:
    """Fraction of positions where the predicted label changed."""
    pre = np.asarray(pre_labels)
    post = np.asarray(post_labels)
    if pre.shape != post.shape or pre.ndim != 1:
        raise DomainError("pre/post label arrays must be 1-D and equal length")
    if pre.size == 0:
        raise DomainError("ASR of an empty set is undefined")
    return float(np.mean(pre != post))


def evaluate_attack(
    models: list[ModelParams],
    adversary_idx: int,
    attack_set: Dataset,
    spec: AttackSpec,
) -> AttackEvaluation:
    """Craft on the adversary's model and replay against every model.

    asr_avg averages over the benign victims only (0.0 when there are
    none, i.e. a single-client federation).
    """
    if not 0 <= adversary_idx < len(models):
        raise DomainError(f"adversary index {adversary_idx} out of range for {len(models)} models")
    if attack_set.n == 0:
        raise DomainError("attack set must be nonempty")
    crafted = craft_set(models[adversary_idx], attack_set, spec)
    row = []
    for victim in models:
        pre = predict(victim, attack_set.features)
        post = predict(victim, crafted.features)
        row.append(asr(pre, post))
    others = [row[v] for v in range(len(models)) if v != adversary_idx]
    return AttackEvaluation(
        per_victim=tuple(row),
        asr_self=row[adversary_idx],
        asr_avg=float(np.mean(others)) if others else 0.0,
    )


def transfer_matrix(models: list[ModelParams], attack_set: Dataset, spec: AttackSpec) -> np.ndarray:
    """Full N x N matrix; row r crafts on model r (one crafted set per row)."""
    return np.array([evaluate_attack(models, r, attack_set, spec).per_victim for r in range(len(models))])
