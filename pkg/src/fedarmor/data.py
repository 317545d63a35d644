"""Synthetic dataset generation, non-IID partitioning, normalization, CSV IO.

Synthetic data are isotropic Gaussian blobs, one per class, centered on
signed axis vertices scaled by the class separation. The partitioner
splits a dataset into disjoint per-client chunks whose class mixture is
controlled by a single skew knob: 0 is near-IID, 1 gives each client a
single preferred class.

CSV format: header ``label,f0,...,f{d-1}``, one example per line,
decimal floats, UTF-8, LF line endings, no quoting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng as rng_mod
from .errors import DomainError, ParseError, ShapeError
from .nn import Dataset

__all__ = [
    "SynthSpec",
    "PartitionSpec",
    "gen_synthetic",
    "partition_non_iid",
    "normalize",
    "denormalize",
    "load_csv",
    "save_csv",
]


@dataclass(frozen=True)
class SynthSpec:
    """Shape of the synthetic classification problem."""

    num_classes: int = 2
    dim: int = 16
    n: int = 600
    class_separation: float = 2.0
    noise_std: float = 1.0

    def __post_init__(self):
        if self.num_classes < 2:
            raise DomainError("need at least two classes")
        if self.dim < 1:
            raise DomainError("dim must be positive")
        if self.n < self.num_classes:
            raise DomainError("need at least one example per class")
        if self.num_classes > 2 * self.dim:
            raise DomainError("at most 2*dim classes fit on signed axis vertices")
        if self.class_separation <= 0 or self.noise_std <= 0:
            raise DomainError("class_separation and noise_std must be positive")


@dataclass(frozen=True)
class PartitionSpec:
    """Client split: number of parts and label skew in [0, 1]."""

    num_parts: int
    skew: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.num_parts < 1:
            raise DomainError("num_parts must be at least 1")
        if not 0.0 <= self.skew <= 1.0:
            raise DomainError("skew must lie in [0, 1]")


def class_centers(num_classes: int, dim: int, separation: float) -> np.ndarray:
    """Distinct blob centers: +axis vertices first, then -axis vertices."""
    centers = np.zeros((num_classes, dim))
    for k in range(num_classes):
        centers[k, k % dim] = separation * (1.0 if k < dim else -1.0)
    return centers


def gen_synthetic(spec: SynthSpec, rng: np.random.Generator) -> Dataset:
    """Gaussian blobs with near-balanced labels (class counts differ by <= 1)."""
    counts = np.full(spec.num_classes, spec.n // spec.num_classes)
    counts[: spec.n % spec.num_classes] += 1
    labels = np.repeat(np.arange(spec.num_classes), counts)
    labels = labels[rng.permutation(spec.n)]
    centers = class_centers(spec.num_classes, spec.dim, spec.class_separation)
    features = centers[labels] + spec.noise_std * rng.standard_normal((spec.n, spec.dim))
    return Dataset(features, labels, spec.num_classes)


def _apportion(total: int, weights: np.ndarray) -> np.ndarray:
    """Integer counts summing to total, proportional to weights (largest remainder)."""
    quotas = total * weights / weights.sum()
    counts = np.floor(quotas).astype(np.int64)
    short = total - int(counts.sum())
    if short > 0:
        order = np.argsort(-(quotas - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def partition_non_iid(data: Dataset, spec: PartitionSpec) -> list[Dataset]:
    """Split into disjoint, nonempty parts whose union is the input.

    Client i prefers class i mod num_classes; skew mixes that one-hot
    prior with the uniform prior. Per class, shuffled example indices are
    apportioned to clients by largest remainder, so the split is exact.
    """
    n_parts, n = spec.num_parts, data.n
    if n_parts > n:
        raise DomainError(f"cannot split {n} examples into {n_parts} nonempty parts")
    gen = rng_mod.stream(spec.seed, "partition")
    k = data.num_classes
    uniform = np.full(n_parts, 1.0 / k)
    assigned: list[list[int]] = [[] for _ in range(n_parts)]
    for cls in range(k):
        idx = np.flatnonzero(data.labels == cls)
        idx = idx[gen.permutation(len(idx))]
        onehot = (np.arange(n_parts) % k == cls).astype(np.float64)
        weights = (1.0 - spec.skew) * uniform + spec.skew * onehot
        if weights.sum() == 0.0:  # skew=1 and no client prefers this class
            weights = np.full(n_parts, 1.0)
        counts = _apportion(len(idx), weights)
        pos = 0
        for i in range(n_parts):
            assigned[i].extend(idx[pos : pos + counts[i]].tolist())
            pos += counts[i]
    # Rebalance so every part is nonempty (possible under extreme skew).
    while any(len(a) == 0 for a in assigned):
        donor = max(range(n_parts), key=lambda i: len(assigned[i]))
        taker = next(i for i in range(n_parts) if not assigned[i])
        assigned[taker].append(assigned[donor].pop())
    return [data.subset(a) for a in assigned]


def normalize(data: Dataset, mean: np.ndarray, std: np.ndarray) -> Dataset:
    """(x - mean) / std per coordinate; labels untouched."""
    mean = np.asarray(mean, dtype=np.float64)
    std = np.asarray(std, dtype=np.float64)
    if mean.shape != (data.dim,) or std.shape != (data.dim,):
        raise ShapeError(f"mean/std must have shape ({data.dim},)")
    if np.any(std <= 0):
        raise DomainError("std coordinates must be positive")
    return Dataset((data.features - mean) / std, data.labels, data.num_classes)


def denormalize(data: Dataset, mean: np.ndarray, std: np.ndarray) -> Dataset:
    """Inverse of normalize: x * std + mean."""
    mean = np.asarray(mean, dtype=np.float64)
    std = np.asarray(std, dtype=np.float64)
    if mean.shape != (data.dim,) or std.shape != (data.dim,):
        raise ShapeError(f"mean/std must have shape ({data.dim},)")
    if np.any(std <= 0):
        raise DomainError("std coordinates must be positive")
    return Dataset(data.features * std + mean, data.labels, data.num_classes)


def save_csv(data: Dataset, path) -> None:
    """Write the interchange CSV; floats use repr so a reload is exact."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("label," + ",".join(f"f{j}" for j in range(data.dim)) + "\n")
        for i in range(data.n):
            row = ",".join(repr(float(v)) for v in data.features[i])
            fh.write(f"{int(data.labels[i])},{row}\n")


def load_csv(path, num_classes: int | None = None) -> Dataset:
    """Parse the interchange CSV; feature dimension is inferred from the header.

    num_classes, when given, bounds the labels; otherwise it is inferred
    as max(label) + 1.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError(f"{path}: empty file")
    header = lines[0].split(",")
    if header[0] != "label" or len(header) < 2:
        raise ParseError(f"{path}: line 1: header must be 'label,f0,...'")
    dim = len(header) - 1
    if header[1:] != [f"f{j}" for j in range(dim)]:
        raise ParseError(f"{path}: line 1: malformed feature columns")

    labels, rows = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != dim + 1:
            raise ParseError(f"{path}: line {lineno}: expected {dim + 1} fields, got {len(cells)}")
        try:
            labels.append(int(cells[0]))
            rows.append([float(c) for c in cells[1:]])
        except ValueError as exc:
            raise ParseError(f"{path}: line {lineno}: {exc}") from exc
        if labels[-1] < 0:
            raise DomainError(f"{path}: line {lineno}: negative label")

    features = np.array(rows, dtype=np.float64).reshape(len(rows), dim)
    label_arr = np.array(labels, dtype=np.int64)
    if num_classes is None:
        num_classes = int(label_arr.max()) + 1 if len(label_arr) else 1
    elif len(label_arr) and int(label_arr.max()) >= num_classes:
        raise DomainError(f"{path}: label {int(label_arr.max())} >= num_classes {num_classes}")
    return Dataset(features, label_arr, num_classes)
