"""Adversarial example crafting: single-step FGSM and iterative PGD.

Both attacks are untargeted (they follow the gradient of the true-label
loss), deterministic (no random start), and confined to an infinity-norm
ball intersected with the valid feature box. sign(0) is 0, so a zero
budget or a flat loss surface leaves inputs bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .nn import Dataset, ModelParams, grad_input, loss

__all__ = ["AttackSpec", "fgsm_spec", "pgd_spec", "fgsm", "pgd", "craft_set", "adversarial_loss"]

FGSM = "fgsm"
PGD = "pgd"


@dataclass(frozen=True)
class AttackSpec:
    """Attack method plus budget.

    epsilon is the infinity-norm budget (the FGSM step); for PGD, eta
    bounds the total perturbation and alpha the per-iteration step.
    Zero budgets are permitted and make the attack an identity map.
    """

    method: str
    epsilon: float = 0.0
    alpha: float = 0.0
    steps: int = 1
    eta: float = 0.0
    clamp_lo: float = -10.0
    clamp_hi: float = 10.0

    def __post_init__(self):
        if self.method not in (FGSM, PGD):
            raise DomainError(f"unknown attack method {self.method!r}")
        if not self.clamp_lo < self.clamp_hi:
            raise DomainError("clamp_lo must be strictly below clamp_hi")
        if self.epsilon < 0:
            raise DomainError("epsilon must be non-negative")
        if self.method == FGSM and self.epsilon > self.clamp_hi - self.clamp_lo:
            raise DomainError("FGSM epsilon exceeds the feature range")
        if self.method == PGD:
            if self.steps < 1:
                raise DomainError("PGD needs at least one step")
            if self.eta < 0 or self.alpha < 0:
                raise DomainError("eta and alpha must be non-negative")
            if self.alpha > self.eta:
                raise DomainError("PGD step size alpha must not exceed the ball radius eta")


def fgsm_spec(epsilon: float, clamp_lo: float = -10.0, clamp_hi: float = 10.0) -> AttackSpec:
    return AttackSpec(FGSM, epsilon=epsilon, clamp_lo=clamp_lo, clamp_hi=clamp_hi)


def pgd_spec(
    eta: float,
    steps: int = 10,
    alpha: float | None = None,
    clamp_lo: float = -10.0,
    clamp_hi: float = 10.0,
) -> AttackSpec:
    """PGD spec with the usual step-size default min(2.5 * eta / steps, eta)."""
    if steps < 1:
        raise DomainError("PGD needs at least one step")
    if alpha is None:
        alpha = min(2.5 * eta / steps, eta)
    return AttackSpec(PGD, epsilon=eta, alpha=alpha, steps=steps, eta=eta, clamp_lo=clamp_lo, clamp_hi=clamp_hi)


def fgsm(params: ModelParams, x: np.ndarray, y: int, spec: AttackSpec) -> np.ndarray:
    """x + epsilon * sign(input gradient), clamped to the feature box."""
    if spec.method != FGSM:
        raise DomainError(f"fgsm called with method {spec.method!r}")
    x = np.asarray(x, dtype=np.float64)
    if spec.epsilon == 0.0:
        return x.copy()
    g = grad_input(params, x, y)
    return np.clip(x + spec.epsilon * np.sign(g), spec.clamp_lo, spec.clamp_hi)


def pgd(params: ModelParams, x: np.ndarray, y: int, spec: AttackSpec) -> np.ndarray:
    """Iterated sign steps, projected onto the eta-ball around the original x
    and then onto the feature box, starting from x itself.

    The perturbation is carried separately from the iterate so that the
    single-step case (steps=1, alpha=eta) reproduces FGSM bit-exactly.
    """
    if spec.method != PGD:
        raise DomainError(f"pgd called with method {spec.method!r}")
    x = np.asarray(x, dtype=np.float64)
    xi = x
    delta = np.zeros_like(x)
    for _ in range(spec.steps):
        g = grad_input(params, xi, y)
        delta = np.clip(delta + spec.alpha * np.sign(g), -spec.eta, spec.eta)
        xi = np.clip(x + delta, spec.clamp_lo, spec.clamp_hi)
    return xi


_ATTACKS = {FGSM: fgsm, PGD: pgd}


def craft_set(params: ModelParams, data: Dataset, spec: AttackSpec) -> Dataset:
    """Replace every feature row by its adversarial twin; labels untouched."""
    if data.n == 0:
        raise DomainError("cannot craft an adversarial set from an empty dataset")
    attack = _ATTACKS[spec.method]
    crafted = np.empty_like(data.features)
    for i in range(data.n):
        crafted[i] = attack(params, data.features[i], int(data.labels[i]), spec)
    return Dataset(crafted, data.labels, data.num_classes)


def adversarial_loss(params: ModelParams, data: Dataset, spec: AttackSpec) -> float:
    """Mean loss on the crafted set: the inner maximization approximated
    by the configured attack."""
    return loss(params, craft_set(params, data, spec))
