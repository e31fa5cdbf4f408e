"""Distributed-gradient-descent training loop with scheduled perturbation.

One aggregation block: K sampled clients each start from the last global
model, take tau full-batch gradient steps with norm clipping after every
step, add Gaussian noise of the round's scheduled variance to their upload,
and the server averages the noisy uploads by shard-size weights.  The loop
is a single-process simulation; determinism is guaranteed by deriving every
random stream from the master seed, keyed by purpose, client, and round, so
results are bit-identical regardless of thread count.

When online adjustment is enabled, a plateau in the aggregator-side test
loss shrinks the planned number of aggregations to ceil(factor * M) and
recalibrates the remaining rounds' amplitude; the realized variance
sequence is re-verified against the budget at the end of the run.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from time import perf_counter

import numpy as np

from .data import Dataset, Partition
from .models import ModelParams
from .privacy import (BudgetCheck, MomentAccount, NoiseSchedule,
                      PrivacyBudget, adjusted_sigma, calibrate_schedule,
                      sensitivity_from_clip, variance_at_round,
                      verify_account)
from .rng import CounterRng, stream_key

__all__ = [
    "FederationConfig",
    "ClientState",
    "RoundMetrics",
    "RunResult",
    "clip_to_norm",
    "local_update",
    "perturb",
    "aggregate",
    "sample_clients",
    "maybe_adjust",
    "run_training",
    "probe_heterogeneity",
]


@dataclass(frozen=True)
class FederationConfig:
    """Settings of one federated run."""

    num_users: int
    num_sampled: int
    local_iters: int
    total_iters: int
    clip_norm: float
    step_size: float
    budget: PrivacyBudget
    theta: float
    adjust_enabled: bool = False
    adjust_factor: float = 0.8
    adjust_tolerance: float = 1e-4
    master_seed: int = 0

    def __post_init__(self):
        if not 1 <= self.num_sampled <= self.num_users:
            raise ValueError(
                f"num_sampled must be in [1, {self.num_users}], "
                f"got {self.num_sampled}")
        if self.local_iters < 1:
            raise ValueError(
                f"local_iters must be >= 1, got {self.local_iters}")
        if self.total_iters < 1 or self.total_iters % self.local_iters:
            raise ValueError(
                f"total_iters ({self.total_iters}) must be a positive "
                f"multiple of local_iters ({self.local_iters})")
        if self.clip_norm <= 0:
            raise ValueError(f"clip_norm must be > 0, got {self.clip_norm}")
        if self.step_size <= 0:
            raise ValueError(f"step_size must be > 0, got {self.step_size}")
        if self.theta <= 0:
            raise ValueError(f"theta must be > 0, got {self.theta}")
        if not 0 < self.adjust_factor <= 1:
            raise ValueError(
                f"adjust_factor must be in (0, 1], got {self.adjust_factor}")
        if self.adjust_tolerance < 0:
            raise ValueError(
                f"adjust_tolerance must be >= 0, got {self.adjust_tolerance}")

    @property
    def max_rounds(self) -> int:
        return self.total_iters // self.local_iters

    @property
    def sample_ratio(self) -> float:
        return self.num_sampled / self.num_users


@dataclass(frozen=True)
class ClientState:
    """A client's shard and current local parameters."""

    client_id: int
    features: np.ndarray
    labels: np.ndarray
    params: ModelParams

    def __post_init__(self):
        if self.features.shape[0] == 0:
            raise ValueError(f"client {self.client_id} has an empty shard")


@dataclass(frozen=True)
class RoundMetrics:
    """Telemetry of one aggregation."""

    round_index: int
    train_loss: float
    test_loss: float
    test_accuracy: float
    noise_variance: float
    sigma_in_force: float
    max_rounds_in_force: int
    adjustment_triggered: bool
    wall_ms: float


@dataclass(frozen=True)
class RunResult:
    """Metrics stream, final model, and the realized-schedule verdict."""

    metrics: tuple[RoundMetrics, ...]
    final_params: ModelParams
    budget_check: BudgetCheck | None


def clip_to_norm(values: np.ndarray, clip_norm: float) -> np.ndarray:
    """Rescale to l2 norm at most clip_norm: v / max(1, ||v||/clip_norm)."""
    norm = float(np.linalg.norm(values))
    return values / max(1.0, norm / clip_norm)


def local_update(client: ClientState, model, step_size: float,
                 clip_norm: float) -> ClientState:
    """One full-batch gradient step followed by the norm clip."""
    grad = model.gradient(client.params.values, client.features,
                          client.labels)
    if not np.all(np.isfinite(grad)):
        raise RuntimeError(
            f"non-finite gradient on client {client.client_id} "
            f"(parameter norm {client.params.norm():.3e})")
    stepped = client.params.values - step_size * grad
    return replace(client, params=ModelParams(clip_to_norm(stepped,
                                                           clip_norm)))


def perturb(params: ModelParams, variance: float,
            rng: CounterRng) -> ModelParams:
    """Add i.i.d. zero-mean Gaussian noise of the given variance."""
    if variance < 0:
        raise ValueError(f"variance must be >= 0, got {variance}")
    if variance == 0:
        return params
    noise = rng.gaussians(params.dimension, math.sqrt(variance))
    return ModelParams(params.values + noise)


def aggregate(weighted: list[tuple[float, ModelParams]]) -> ModelParams:
    """Weighted coordinatewise sum; weights must sum to 1."""
    if not weighted:
        raise ValueError("nothing to aggregate")
    total = math.fsum(w for w, _ in weighted)
    if abs(total - 1.0) > 1e-12:
        raise ValueError(f"aggregation weights sum to {total!r}, not 1")
    out = np.zeros_like(weighted[0][1].values)
    for w, params in weighted:
        out += w * params.values
    return ModelParams(out)


def sample_clients(num_users: int, num_sampled: int, round_index: int,
                   master_seed: int) -> np.ndarray:
    """K distinct client ids for the round, deterministic in (seed, round)."""
    if not 1 <= num_sampled <= num_users:
        raise ValueError(
            f"num_sampled must be in [1, {num_users}], got {num_sampled}")
    rng = CounterRng(stream_key(master_seed, "sample",
                                round_index=round_index))
    return rng.choose_without_replacement(num_users, num_sampled)


def maybe_adjust(test_losses, current_round: int, current_max: int,
                 factor: float, tolerance: float) -> int | None:
    """New planned maximum when the test loss has stopped decreasing.

    The plateau rule compares the last two entries: a trigger fires unless
    the newest loss undercuts the previous one by more than the relative
    tolerance.  Returns ceil(factor * current_max) on a trigger, else None.
    """
    if len(test_losses) < 2:
        return None
    prev, cur = test_losses[-2], test_losses[-1]
    if cur < prev - tolerance * abs(prev):
        return None
    # nudge before ceil so e.g. 0.8 * 30 lands on 24, not ceil of
    # 24.000000000000004
    return math.ceil(factor * current_max - 1e-9)


def _initial_params(dimension: int, master_seed: int) -> ModelParams:
    rng = CounterRng(stream_key(master_seed, "init"))
    return ModelParams(rng.uniform(dimension, -0.05, 0.05))


def run_training(config: FederationConfig, model, train: Dataset,
                 partition: Partition, test: Dataset | None = None,
                 num_threads: int = 1) -> RunResult:
    """Execute the full perturbed training loop.

    Args:
        config: run settings; an infinite epsilon runs noise-free
            (calibration skipped, variance 0 every round).
        model: loss/gradient/accuracy provider (``MlpModel``/``SvmModel``).
        train: training dataset, indexed by the partition's shards.
        partition: one shard per client; shard sizes set both the
            aggregation weights and the upload sensitivity (worst case:
            smallest shard).
        test: aggregator-side evaluation set; defaults to the training
            set.  Its loss drives online adjustment.
        num_threads: client-update parallelism; results are identical for
            any value.

    Returns:
        RunResult with one RoundMetrics per aggregation, the final global
        parameters, and the realized variance sequence's budget check
        (None for noise-free runs).
    """
    if partition.num_shards != config.num_users:
        raise ValueError(f"partition has {partition.num_shards} shards for "
                         f"{config.num_users} users")
    q = config.sample_ratio
    delta_s = sensitivity_from_clip(config.clip_norm,
                                    partition.min_shard_size())
    planned_rounds = config.max_rounds
    noise_free = not math.isfinite(config.budget.epsilon)
    if noise_free:
        schedule = NoiseSchedule(sigma0=0.0, theta=config.theta,
                                 max_rounds=planned_rounds, sample_ratio=q,
                                 sensitivity=delta_s)
    else:
        schedule = calibrate_schedule(config.budget, q, delta_s,
                                      planned_rounds, config.theta)

    shards = [(train.features[s], train.labels[s]) for s in partition.shards]
    test_x = test.features if test is not None else train.features
    test_y = test.labels if test is not None else train.labels

    global_params = _initial_params(model.dimension, config.master_seed)
    metrics: list[RoundMetrics] = []
    test_losses: list[float] = []
    current_max = planned_rounds
    m = 1
    while m <= current_max:
        started = perf_counter()
        sigma_in_force = schedule.sigma0
        max_in_force = current_max
        sampled = sample_clients(config.num_users, config.num_sampled, m,
                                 config.master_seed)
        sizes = np.array([shards[k][1].shape[0] for k in sampled],
                         dtype=np.float64)
        weights = sizes / sizes.sum()

        def run_block(k: int) -> ClientState:
            client = ClientState(client_id=k, features=shards[k][0],
                                 labels=shards[k][1], params=global_params)
            for _ in range(config.local_iters):
                client = local_update(client, model, config.step_size,
                                      config.clip_norm)
            return client

        if num_threads > 1:
            with ThreadPoolExecutor(max_workers=num_threads) as pool:
                clients = list(pool.map(run_block, sampled))
        else:
            clients = [run_block(k) for k in sampled]

        pre_noise = aggregate(list(zip(weights, (c.params for c in clients))))
        train_loss = model.loss(pre_noise.values, train.features,
                                train.labels)

        variance = variance_at_round(schedule, m)
        uploads = []
        for w, client in zip(weights, clients):
            noise_rng = CounterRng(stream_key(config.master_seed, "noise",
                                              client_id=client.client_id,
                                              round_index=m))
            uploads.append((w, perturb(client.params, variance, noise_rng)))
        global_params = aggregate(uploads)
        if not np.all(np.isfinite(global_params.values)):
            raise RuntimeError(f"non-finite global model after round {m}")

        test_loss = model.loss(global_params.values, test_x, test_y)
        test_accuracy = model.accuracy(global_params.values, test_x, test_y)
        test_losses.append(test_loss)

        triggered = False
        if config.adjust_enabled and m < current_max:
            new_max = maybe_adjust(test_losses, m, current_max,
                                   config.adjust_factor,
                                   config.adjust_tolerance)
            if new_max is not None:
                triggered = True
                if new_max <= m:
                    current_max = m
                else:
                    if not noise_free:
                        sigma_new = adjusted_sigma(config.budget, q, delta_s,
                                                   config.theta, m, new_max)
                    else:
                        sigma_new = 0.0
                    schedule = NoiseSchedule(sigma0=sigma_new,
                                             theta=config.theta,
                                             max_rounds=new_max,
                                             sample_ratio=q,
                                             sensitivity=delta_s)
                    current_max = new_max

        metrics.append(RoundMetrics(
            round_index=m,
            train_loss=train_loss,
            test_loss=test_loss,
            test_accuracy=test_accuracy,
            noise_variance=variance,
            sigma_in_force=sigma_in_force,
            max_rounds_in_force=max_in_force,
            adjustment_triggered=triggered,
            wall_ms=(perf_counter() - started) * 1e3,
        ))
        m += 1

    budget_check = None
    if not noise_free:
        account = MomentAccount(
            per_round_variances=tuple(r.noise_variance for r in metrics),
            sample_ratio=q, sensitivity=delta_s)
        budget_check = verify_account(account, config.budget)
    return RunResult(metrics=tuple(metrics), final_params=global_params,
                     budget_check=budget_check)


def probe_heterogeneity(model, train: Dataset, partition: Partition,
                        master_seed: int):
    """Per-client gradients and weights at the deterministic initial model.

    Returns the inputs expected by the dissimilarity/divergence estimator:
    a list of full-shard gradient vectors and the shard-size weights.
    """
    params = _initial_params(model.dimension, master_seed)
    grads = [model.gradient(params.values, train.features[s],
                            train.labels[s]) for s in partition.shards]
    return grads, list(partition.weights)
