"""Server loop and client update for head-only federated training.

One epoch is one communication round: every client makes a full local pass,
emits a :class:`HeadMessage`, and the server aggregates the heads.  What the
aggregate is used for depends on the :class:`Strategy`:

========  ==========================  ====================
strategy  local head after the round  distills from
========  ==========================  ====================
SOLO      kept (no messages)          --
AVG       replaced by the aggregate   --
OURS      kept                        aggregate (global head)
AVGKD     replaced by the aggregate   aggregate (global head)
========  ==========================  ====================
"""
from __future__ import annotations

import enum
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from hetfl._seeding import derive_rng
from hetfl.data import ClientShard
from hetfl.distill import DkdParams, dkd_loss, temperature
from hetfl.errors import HetFLError, InvalidArgumentError, ShapeError
from hetfl.models import (
    ClientModel, HeadParams, build_client_model, extract_head, generate_model_spec,
    init_head, set_global_head, set_local_head,
)
from hetfl.tensor_nn import GradTape, accuracy, backward, cross_entropy, forward, sgd_step

WORKERS_ENV = "HETFL_WORKERS"


class Strategy(str, enum.Enum):
    SOLO = "solo"
    AVG = "avg"
    AVGKD = "avgkd"
    OURS = "ours"

    @property
    def communicates(self) -> bool:
        return self is not Strategy.SOLO

    @property
    def distills(self) -> bool:
        return self in (Strategy.OURS, Strategy.AVGKD)

    @property
    def replaces_local_head(self) -> bool:
        return self in (Strategy.AVG, Strategy.AVGKD)


class Aggregation(str, enum.Enum):
    SUM = "sum"
    MEAN = "mean"
    WEIGHTED_MEAN = "weighted_mean"


@dataclass(frozen=True)
class FederationConfig:
    strategy: Strategy = Strategy.OURS
    t_max: int = 50
    alpha: float = 0.5
    beta: float = 5.0
    aggregation: Aggregation = Aggregation.MEAN
    lr: float = 0.05
    batch_size: int = 16
    embedding_dim: int = 32
    depth_range: tuple[int, int] = (1, 3)
    width_range: tuple[int, int] = (16, 64)
    seed: int = 0
    workers: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        object.__setattr__(self, "aggregation", Aggregation(self.aggregation))
        object.__setattr__(self, "depth_range", tuple(self.depth_range))
        object.__setattr__(self, "width_range", tuple(self.width_range))
        if self.alpha < 0 or self.beta < 0:
            raise InvalidArgumentError("alpha and beta must be non-negative")
        if self.t_max < 1:
            raise InvalidArgumentError(f"t_max must be >= 1, got {self.t_max}")
        if self.batch_size < 1 or not self.lr > 0:
            raise InvalidArgumentError("batch_size must be >= 1 and lr > 0")

    @property
    def dkd(self) -> DkdParams:
        return DkdParams(self.alpha, self.beta, self.t_max)


@dataclass(frozen=True)
class HeadMessage:
    """Everything a client sends to the server in one round.

    ``n_samples`` is only filled in for weighted aggregation; otherwise the
    head is the entire payload.
    """

    client_id: int
    epoch: int
    head: HeadParams
    n_samples: int | None = None

    @property
    def num_reals(self) -> int:
        return self.head.num_reals


@dataclass
class RoundMetrics:
    epoch: int
    train_loss: list[float]
    train_acc: list[float]
    valid_acc: list[float]

    @property
    def mean_valid_acc(self) -> float:
        return float(np.mean(self.valid_acc))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mean_valid_acc"] = self.mean_valid_acc
        return d


@dataclass
class ClientUpdateResult:
    head: HeadParams
    loss: float
    ce_loss: float
    dkd_loss: float


@dataclass
class FederationResult:
    rounds: list[RoundMetrics]
    models: list[ClientModel]
    messages: list[HeadMessage] = field(default_factory=list)
    global_heads: list[HeadParams] = field(default_factory=list)

    @property
    def best_mean_valid_acc(self) -> float:
        return max(r.mean_valid_acc for r in self.rounds)


def aggregate_heads(heads: Sequence[HeadParams], mode=Aggregation.MEAN,
                    client_weights: Sequence[float] | None = None) -> HeadParams:
    """Combine client heads in the given order (callers sort by client id)."""
    mode = Aggregation(mode)
    if not heads:
        raise InvalidArgumentError("cannot aggregate an empty set of heads")
    shape = heads[0].shape
    for h in heads:
        if h.shape != shape:
            raise ShapeError(f"head shape {h.shape} != {shape}")
    if mode is Aggregation.SUM:
        coef = np.ones(len(heads))
    elif mode is Aggregation.MEAN:
        coef = np.full(len(heads), 1.0 / len(heads))
    else:
        if client_weights is None or len(client_weights) != len(heads):
            raise InvalidArgumentError("weighted_mean needs one weight per head")
        w = np.asarray(client_weights, dtype=np.float64)
        if (w < 0).any() or w.sum() <= 0:
            raise InvalidArgumentError("client weights must be non-negative with positive sum")
        coef = w / w.sum()
    if len(heads) == 1 and coef[0] == 1.0:
        return heads[0]
    weights = np.zeros(shape)
    bias = np.zeros_like(heads[0].bias)
    for c, h in zip(coef, heads):
        weights = weights + c * h.weights
        bias = bias + c * h.bias
    return HeadParams(weights, bias)


def batch_order(seed: int, client_id: int, epoch: int, n: int) -> np.ndarray:
    return derive_rng(seed, "batches", client_id, epoch).permutation(n)


def client_update(model: ClientModel, shard: ClientShard, epoch: int, config: FederationConfig,
                  on_batch: Callable | None = None) -> ClientUpdateResult:
    """One local epoch of mini-batch SGD on body and local head.

    From epoch 2 on, distilling strategies add the DKD term against teacher
    logits computed once, for the whole training set, before the first step.
    The global head is never modified here.  ``on_batch(rows, teacher_rows)``
    is called per batch for inspection.
    """
    if shard.input_dim != model.spec.input_dim:
        raise ShapeError(
            f"shard has {shard.input_dim} features, model expects {model.spec.input_dim}"
        )
    x, y = shard.train_x, shard.train_y
    n = x.shape[0]
    use_kd = config.strategy.distills and epoch != 1 and config.alpha > 0
    params = config.dkd
    temp = temperature(epoch, params)
    teacher = model.teacher_logits(x) if use_kd else None

    layers = [*model.body, model.local_head]
    order = batch_order(config.seed, shard.client_id, epoch, n)
    total = ce_total = kd_total = 0.0
    for start in range(0, n, config.batch_size):
        idx = order[start:start + config.batch_size]
        tape = GradTape()
        logits = forward(layers, x[idx], tape)
        ce = cross_entropy(logits, y[idx], tape=tape)
        kd = 0.0
        if use_kd:
            kd = dkd_loss(logits, teacher[idx], y[idx], params, temp, tape=tape)
        if on_batch is not None:
            on_batch(idx, None if teacher is None else teacher[idx])
        layers = sgd_step(layers, backward(tape), config.lr)
        w = idx.size / n
        total += w * (ce + kd)
        ce_total += w * ce
        kd_total += w * kd
    model.body = layers[:-1]
    model.local_head = layers[-1]
    return ClientUpdateResult(extract_head(model), total, ce_total, kd_total)


def evaluate(model: ClientModel, shard: ClientShard) -> tuple[float, float]:
    return (accuracy(model.logits(shard.train_x), shard.train_y),
            accuracy(model.logits(shard.valid_x), shard.valid_y))


def build_models(shards: Sequence[ClientShard], config: FederationConfig) -> list[ClientModel]:
    """Private random body per client; one server-initialised global head for all."""
    num_classes = shards[0].num_classes
    for s in shards:
        if s.num_classes != num_classes:
            raise ShapeError("all shards must share the global class count")
    server_head = init_head(int(derive_rng(config.seed, "server_head").integers(2**31)),
                            config.embedding_dim, num_classes)
    models = []
    for s in shards:
        spec = generate_model_spec(
            int(derive_rng(config.seed, "spec", s.client_id).integers(2**31)),
            s.input_dim, config.embedding_dim, num_classes,
            config.depth_range, config.width_range,
        )
        model_seed = int(derive_rng(config.seed, "model", s.client_id).integers(2**31))
        models.append(build_client_model(spec, model_seed, server_head))
    return models


def resolve_workers(config: FederationConfig) -> int:
    if config.workers is not None:
        return max(1, int(config.workers))
    env = os.environ.get(WORKERS_ENV)
    return max(1, int(env)) if env else 1


def _run_client(model, shard, epoch, config):
    try:
        return client_update(model, shard, epoch, config)
    except HetFLError as e:
        raise type(e)(f"client {shard.client_id}: {e}") from e


def run_federation(config: FederationConfig, shards: Sequence[ClientShard],
                   models: Sequence[ClientModel] | None = None,
                   on_round: Callable[[RoundMetrics], None] | None = None) -> FederationResult:
    """Run ``t_max`` rounds.  ``models`` (mutated in place) default to :func:`build_models`."""
    if not shards:
        raise InvalidArgumentError("need at least one client")
    models = list(models) if models is not None else build_models(shards, config)
    if len(models) != len(shards):
        raise InvalidArgumentError(f"{len(models)} models for {len(shards)} shards")
    order = sorted(range(len(shards)), key=lambda i: shards[i].client_id)
    workers = resolve_workers(config)
    result = FederationResult([], models)

    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for epoch in range(1, config.t_max + 1):
            if pool is None:
                updates = [_run_client(models[i], shards[i], epoch, config) for i in order]
            else:
                futures = [pool.submit(_run_client, models[i], shards[i], epoch, config)
                           for i in order]
                updates = [f.result() for f in futures]

            if config.strategy.communicates:
                weighted = config.aggregation is Aggregation.WEIGHTED_MEAN
                messages = [
                    HeadMessage(shards[i].client_id, epoch, u.head,
                                shards[i].n_train if weighted else None)
                    for i, u in zip(order, updates)
                ]
                result.messages.extend(messages)
                merged = aggregate_heads([m.head for m in messages], config.aggregation,
                                         [m.n_samples for m in messages] if weighted else None)
                result.global_heads.append(merged)
                for i in order:
                    if config.strategy.distills:
                        set_global_head(models[i], merged)
                    if config.strategy.replaces_local_head:
                        set_local_head(models[i], merged)

            train_acc, valid_acc = [], []
            for i in order:
                tr, va = evaluate(models[i], shards[i])
                train_acc.append(tr)
                valid_acc.append(va)
            metrics = RoundMetrics(epoch, [u.loss for u in updates], train_acc, valid_acc)
            result.rounds.append(metrics)
            if on_round is not None:
                on_round(metrics)
    finally:
        if pool is not None:
            pool.shutdown()
    return result
