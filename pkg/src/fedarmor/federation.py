"""Synchronous federated training with DP channels and server-side
adversarial adaptation.

One round: every client receives the (optionally noised) global model,
trains locally, clips its parameter vector and noises the uplink when DP
is enabled, and the server aggregates the uploads by weighted averaging.
After the configured number of rounds the server optionally retrains the
global model on a clean-plus-adversarial pool, then distributes per-client
copies through the final downlink, noised under the distributed-noise
defense. Every stochastic choice draws from a stream derived from the
master seed and its structural position, so runs are bit-reproducible
regardless of scheduling.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace

import numpy as np

from . import rng as rng_mod
from .attacks import AttackSpec, craft_set
from .data import PartitionSpec, gen_synthetic, load_csv, partition_non_iid
from .errors import DomainError, ExperimentError, ShapeError
from .metrics import MetricsReport, clean_accuracy, transfer_matrix
from .nn import (
    Dataset,
    ModelParams,
    concat_datasets,
    init_params,
    per_example_loss,
    train_local,
)
from .privacy import NoiseChannel, PrivacySpec, clip_params, gaussian_perturb

__all__ = [
    "FederationConfig",
    "FederationState",
    "fed_avg",
    "run_round",
    "adaptation_pool",
    "server_adapt",
    "broadcast_noisy",
    "retraining_risk",
    "run_experiment",
]

DEFENSE_NONE = "none"
DEFENSE_ADV_TRAINING = "adversarial-training"
DEFENSE_DISTRIBUTED_NOISE = "distributed-noise"
DEFENSES = (DEFENSE_NONE, DEFENSE_ADV_TRAINING, DEFENSE_DISTRIBUTED_NOISE)


@dataclass(frozen=True)
class FederationConfig:
    """Topology and schedule of the synchronous federation."""

    num_clients: int = 3
    rounds: int = 10
    local_epochs: int = 5
    lr: float = 0.05
    batch_size: int = 32
    adaptation_fraction: float = 0.5
    adversary_client: int = 0
    master_seed: int = 0
    client_weights: tuple[float, ...] | None = None
    adapt_epochs: int = 8
    adapt_lr: float = 0.05
    adapt_passes: int = 1
    per_round_adaptation: bool = False
    dropout: float = 0.0

    def __post_init__(self):
        if self.num_clients < 1:
            raise DomainError("num_clients must be at least 1")
        if self.rounds < 1 or self.local_epochs < 1 or self.batch_size < 1:
            raise DomainError("rounds, local_epochs and batch_size must be positive")
        if self.lr <= 0 or self.adapt_lr <= 0:
            raise DomainError("learning rates must be positive")
        if not 0.0 <= self.adaptation_fraction <= 1.0:
            raise DomainError("adaptation_fraction must lie in [0, 1]")
        if not 0 <= self.adversary_client < self.num_clients:
            raise DomainError("adversary_client must index a client")
        if self.adapt_epochs < 0 or self.adapt_passes < 1:
            raise DomainError("adapt_epochs must be non-negative and adapt_passes positive")
        if self.client_weights is not None:
            w = tuple(float(x) for x in self.client_weights)
            _check_weights(w, self.num_clients)
            object.__setattr__(self, "client_weights", w)


def _check_weights(weights, n: int) -> None:
    if len(weights) != n:
        raise DomainError(f"{len(weights)} weights for {n} clients")
    if any(w <= 0 for w in weights):
        raise DomainError("client weights must be positive")
    if abs(math.fsum(weights) - 1.0) > 1e-12:
        raise DomainError("client weights must sum to 1")


@dataclass(frozen=True)
class FederationState:
    """Server-side view after a round: global model and client uploads."""

    global_model: ModelParams
    client_models: tuple[ModelParams, ...]
    round: int
    server_dataset: Dataset


def fed_avg(models, weights) -> ModelParams:
    """Coordinate-wise weighted sum of the parameter vectors.

    Each coordinate is reduced with exact (fsum) summation, so the result
    is bit-identical under any joint permutation of models and weights.
    """
    models = list(models)
    weights = tuple(float(w) for w in weights)
    _check_weights(weights, len(models))
    ref = models[0]
    shapes = [(w.shape, b.shape) for w, b in ref.layers]
    for m in models[1:]:
        if [(w.shape, b.shape) for w, b in m.layers] != shapes:
            raise ShapeError("all models must share one architecture")
    contributions = np.stack([p * m.flatten() for p, m in zip(weights, models)])
    out = np.fromiter(
        (math.fsum(contributions[:, j]) for j in range(contributions.shape[1])),
        dtype=np.float64,
        count=contributions.shape[1],
    )
    return ref.unflatten(out)


def run_round(
    state: FederationState,
    cfg: FederationConfig,
    data_parts: list[Dataset],
    privacy: PrivacySpec | None = None,
) -> FederationState:
    """One synchronous round: broadcast, local training, uplink, aggregate.

    With `privacy` set, the broadcast and the uploads pass through the DP
    channels: per-client downlink noise, L2 clipping of the trained
    parameter vector, and uplink noise. Streams are derived per (round,
    client, direction), so the result does not depend on client order.
    """
    if len(data_parts) != cfg.num_clients:
        raise DomainError(f"{len(data_parts)} data parts for {cfg.num_clients} clients")
    seed, t = cfg.master_seed, state.round
    sigma_down = privacy.sigma_down if privacy is not None else 0.0
    global_flat = state.global_model.flatten()

    uploads = []
    for i in range(cfg.num_clients):
        try:
            received = global_flat
            if sigma_down > 0.0:
                channel = NoiseChannel(sigma_down, rng_mod.stream(seed, "round", t, "down", i))
                received = gaussian_perturb(received, channel)
            local = train_local(
                state.global_model.unflatten(received),
                data_parts[i],
                cfg.local_epochs,
                cfg.lr,
                cfg.batch_size,
                rng_mod.stream(seed, "round", t, "train", i),
                cfg.dropout,
            )
            upload = local.flatten()
            if privacy is not None:
                upload = clip_params(upload, privacy.clip_bound)
                channel = NoiseChannel(privacy.sigma_up, rng_mod.stream(seed, "round", t, "up", i))
                upload = gaussian_perturb(upload, channel)
            uploads.append(state.global_model.unflatten(upload))
        except Exception as exc:
            raise ExperimentError(f"round {t}, client {i}: {exc}") from exc

    weights = cfg.client_weights
    if weights is None:
        sizes = [part.n for part in data_parts]
        weights = tuple(s / sum(sizes) for s in sizes)
    new_global = fed_avg(uploads, weights)
    return FederationState(new_global, tuple(uploads), t + 1, state.server_dataset)


def adaptation_pool(server_data: Dataset, fraction: float, rng: np.random.Generator) -> Dataset:
    """Seeded subsample of floor(fraction * n) examples.

    Selection is a prefix of one permutation, so pools for increasing
    fractions are nested when derived from the same stream.
    """
    if not 0.0 <= fraction <= 1.0:
        raise DomainError("fraction must lie in [0, 1]")
    k = int(fraction * server_data.n)
    order = rng.permutation(server_data.n)
    return server_data.subset(order[:k])


def server_adapt(
    global_model: ModelParams,
    server_data: Dataset,
    attack: AttackSpec,
    fraction: float,
    epochs: int,
    lr: float,
    batch_size: int,
    rng: np.random.Generator,
    dropout: float = 0.0,
    passes: int = 1,
) -> ModelParams:
    """Retrain the global model on selected clean examples plus their
    adversarial twins, crafted against the current global model.

    fraction selects the participating examples; 0 returns the model
    unchanged. With passes > 1 the twins are re-crafted against each
    intermediate model (off by default).
    """
    if not 0.0 <= fraction <= 1.0:
        raise DomainError("fraction must lie in [0, 1]")
    if fraction > 0.0 and server_data.n == 0:
        raise DomainError("adaptation requested but the server dataset is empty")
    pool = adaptation_pool(server_data, fraction, rng)
    if pool.n == 0:
        return global_model
    model = global_model
    for _ in range(passes):
        twins = craft_set(model, pool, attack)
        model = train_local(model, concat_datasets(pool, twins), epochs, lr, batch_size, rng, dropout)
    return model


def broadcast_noisy(
    global_model: ModelParams,
    sigma_down: float,
    num_clients: int,
    master_seed: int,
    label: str = "final",
) -> list[ModelParams]:
    """Per-client noisy copies of the global model, one stream per client."""
    if num_clients < 1:
        raise DomainError("num_clients must be at least 1")
    if sigma_down < 0:
        raise DomainError("sigma_down must be non-negative")
    flat = global_model.flatten()
    out = []
    for k in range(num_clients):
        channel = NoiseChannel(sigma_down, rng_mod.stream(master_seed, label, "down", k))
        out.append(global_model.unflatten(gaussian_perturb(flat, channel)))
    return out


def retraining_risk(params: ModelParams, base: Dataset, augmented: Dataset) -> float:
    """Sum (not mean) of per-example losses over base plus augmented."""
    if base.n + augmented.n == 0:
        raise DomainError("retraining risk of two empty sets is undefined")
    total = 0.0
    for part in (base, augmented):
        if part.n:
            total += math.fsum(per_example_loss(params, part))
    return total


def _split_three(data: Dataset, test_fraction: float, server_fraction: float, rng) -> tuple[Dataset, Dataset, Dataset]:
    """Disjoint (client pool, server pool, test) split by one permutation."""
    n_test = int(round(test_fraction * data.n))
    n_server = int(round(server_fraction * data.n))
    if n_test + n_server >= data.n:
        raise DomainError("test and server fractions leave no training data")
    order = rng.permutation(data.n)
    test = data.subset(order[:n_test])
    server = data.subset(order[n_test : n_test + n_server])
    pool = data.subset(order[n_test + n_server :])
    return pool, server, test


def config_digest(payload: dict) -> str:
    """Stable digest of a JSON-serializable config payload."""
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def run_experiment(cfg) -> MetricsReport:
    """Full pipeline: rounds, adaptation, final distribution, evaluation.

    cfg is a resolved ExperimentConfig (see fedarmor.config). The
    designated adversary crafts attacks against its own received model;
    the crafted set is replayed against every client's model, and the
    full transferability matrix is computed one row per crafting model.
    """
    fed: FederationConfig = cfg.federation
    seed = fed.master_seed

    if cfg.data.source == "synthetic":
        full = gen_synthetic(cfg.data.synth, rng_mod.stream(seed, "data"))
    else:
        full = load_csv(cfg.data.csv_path, cfg.data.num_classes)
    pool, server, test = _split_three(
        full, cfg.data.test_fraction, cfg.data.server_fraction, rng_mod.stream(seed, "split")
    )
    parts = partition_non_iid(
        pool, PartitionSpec(fed.num_clients, cfg.data.skew, rng_mod.derive_seed(seed, "partition"))
    )

    layer_sizes = [full.dim, *cfg.model_hidden, full.num_classes]
    global_model = init_params(layer_sizes, rng_mod.stream(seed, "init"))
    state = FederationState(global_model, (global_model,) * fed.num_clients, 0, server)
    privacy = cfg.privacy if cfg.privacy_enabled else None

    adapt = cfg.defense != DEFENSE_NONE and fed.adaptation_fraction > 0.0
    for t in range(fed.rounds):
        state = run_round(state, fed, parts, privacy)
        if adapt and fed.per_round_adaptation:
            adapted = _adapt(state.global_model, server, cfg, rng_mod.stream(seed, "adapt", t))
            state = replace(state, global_model=adapted)

    final_model = state.global_model
    if adapt and not fed.per_round_adaptation:
        final_model = _adapt(final_model, server, cfg, rng_mod.stream(seed, "adapt"))

    if cfg.defense == DEFENSE_DISTRIBUTED_NOISE:
        sigma_final = cfg.defense_sigma
    elif cfg.privacy_enabled:
        sigma_final = cfg.privacy.sigma_down
    else:
        sigma_final = 0.0
    eval_models = broadcast_noisy(final_model, sigma_final, fed.num_clients, seed, "final")

    matrix = transfer_matrix(eval_models, test, cfg.attack)
    adv = fed.adversary_client
    others = [matrix[adv, v] for v in range(fed.num_clients) if v != adv]
    return MetricsReport(
        clean_accuracy=tuple(clean_accuracy(m, test) for m in eval_models),
        asr_self=float(matrix[adv, adv]),
        asr_avg=float(np.mean(others)) if others else 0.0,
        transfer_matrix=tuple(tuple(float(v) for v in row) for row in matrix),
        adversary_client=adv,
        config_digest=cfg.digest(),
        seed=seed,
    )


def _adapt(model: ModelParams, server: Dataset, cfg, rng) -> ModelParams:
    fed = cfg.federation
    return server_adapt(
        model,
        server,
        cfg.attack,
        fed.adaptation_fraction,
        fed.adapt_epochs,
        fed.adapt_lr,
        fed.batch_size,
        rng,
        fed.dropout,
        fed.adapt_passes,
    )
