"""Private MLP bodies with a shared-shape classification head.

Each client owns a randomly shaped ReLU body ``input_dim -> ... -> E`` and two
``E -> C`` heads: the trainable local head, and a frozen copy of the global
head used as teacher.  Only :class:`HeadParams` ever leave a client.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from hetfl._seeding import derive_rng
from hetfl.errors import InvalidArgumentError, ShapeError
from hetfl.tensor_nn import Activation, DenseLayer, as_matrix, forward, init_layer


@dataclass(frozen=True)
class ModelSpec:
    input_dim: int
    hidden_dims: tuple[int, ...]
    embedding_dim: int
    num_classes: int

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        dims = (self.input_dim, *self.hidden_dims, self.embedding_dim, self.num_classes)
        if min(dims) < 1:
            raise InvalidArgumentError(f"all model dims must be >= 1, got {dims}")

    @property
    def body_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_dims, self.embedding_dim)


@dataclass(frozen=True)
class HeadParams:
    """Weights (E x C) and bias (1 x C) of a head; the only federation payload."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = as_matrix(self.weights).copy()
        b = as_matrix(self.bias).copy()
        if b.shape != (1, w.shape[1]):
            raise ShapeError(f"head bias {b.shape} does not match weights {w.shape}")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights.shape

    @property
    def num_reals(self) -> int:
        return self.weights.size + self.bias.size

    @classmethod
    def from_layer(cls, layer: DenseLayer) -> "HeadParams":
        return cls(layer.weights, layer.bias)

    def to_layer(self) -> DenseLayer:
        return DenseLayer(self.weights.copy(), self.bias.copy(), Activation.IDENTITY)


@dataclass
class ClientModel:
    spec: ModelSpec
    body: list[DenseLayer]
    local_head: DenseLayer
    global_head: DenseLayer
    meta: dict = field(default_factory=dict)

    def embed(self, x) -> np.ndarray:
        return forward(self.body, x)

    def logits(self, x) -> np.ndarray:
        """Student prediction: body followed by the local head."""
        return forward([*self.body, self.local_head], x)

    def teacher_logits(self, x) -> np.ndarray:
        """Teacher prediction: the same body followed by the global head."""
        return forward([*self.body, self.global_head], x)

    @property
    def num_params(self) -> int:
        return sum(l.num_params for l in self.body) + self.local_head.num_params

    def copy(self) -> "ClientModel":
        return ClientModel(
            self.spec, [l.copy() for l in self.body], self.local_head.copy(),
            self.global_head.copy(), dict(self.meta),
        )


def _check_range(name: str, rng_pair) -> tuple[int, int]:
    lo, hi = (int(v) for v in rng_pair)
    if lo > hi:
        raise InvalidArgumentError(f"{name} [{lo}, {hi}] is empty")
    if lo < 1:
        raise InvalidArgumentError(f"{name} must be >= 1, got {lo}")
    return lo, hi


def generate_model_spec(seed: int, input_dim: int, embedding_dim: int, num_classes: int,
                        depth_range=(1, 3), width_range=(16, 64)) -> ModelSpec:
    """Random hidden depth and widths, each drawn uniformly from its inclusive range."""
    d_lo, d_hi = _check_range("depth_range", depth_range)
    w_lo, w_hi = _check_range("width_range", width_range)
    rng = derive_rng(seed, "model_spec")
    depth = int(rng.integers(d_lo, d_hi + 1))
    widths = tuple(int(w) for w in rng.integers(w_lo, w_hi + 1, size=depth))
    return ModelSpec(input_dim, widths, embedding_dim, num_classes)


def init_head(seed: int, embedding_dim: int, num_classes: int) -> HeadParams:
    return HeadParams.from_layer(init_layer(seed, embedding_dim, num_classes))


def build_client_model(spec: ModelSpec, seed: int,
                       global_head: HeadParams | None = None) -> ClientModel:
    """Initialise a body and local head from ``seed``.

    ``global_head`` is the server's initial aggregate; all clients of a
    federation receive the same one.  Without it the local head is copied.
    """
    dims = spec.body_dims
    body = [
        init_layer(int(derive_rng(seed, "body", i).integers(2**31)), dims[i], dims[i + 1],
                   Activation.RELU)
        for i in range(len(dims) - 1)
    ]
    local = init_layer(int(derive_rng(seed, "local_head").integers(2**31)),
                       spec.embedding_dim, spec.num_classes)
    model = ClientModel(spec, body, local, local.copy())
    if global_head is not None:
        set_global_head(model, global_head)
    return model


def _check_head(model: ClientModel, params: HeadParams) -> None:
    expected = (model.spec.embedding_dim, model.spec.num_classes)
    if params.shape != expected:
        raise ShapeError(f"head shape {params.shape} != federation shape {expected}")


def extract_head(model: ClientModel) -> HeadParams:
    return HeadParams.from_layer(model.local_head)


def set_global_head(model: ClientModel, params: HeadParams) -> None:
    _check_head(model, params)
    model.global_head = params.to_layer()


def set_local_head(model: ClientModel, params: HeadParams) -> None:
    _check_head(model, params)
    model.local_head = params.to_layer()


def head_fraction(model: ClientModel) -> float:
    """Share of a client's trainable parameters that is communicated."""
    return model.local_head.num_params / model.num_params


# Checkpoint layout (JSON): {"spec": {...}, "body": [layer, ...], "local_head": layer,
# "global_head": layer}; layer = {"weights": [[...]], "bias": [[...]], "activation": str}.
# Floats are written with repr precision so a round trip is exact.

def _layer_to_json(layer: DenseLayer) -> dict:
    return {
        "weights": layer.weights.tolist(),
        "bias": layer.bias.tolist(),
        "activation": layer.activation.value,
    }


def _layer_from_json(d: dict) -> DenseLayer:
    return DenseLayer(np.array(d["weights"], dtype=np.float64),
                      np.array(d["bias"], dtype=np.float64), Activation(d["activation"]))


def save_checkpoint(model: ClientModel, path) -> None:
    spec = model.spec
    doc = {
        "spec": {
            "input_dim": spec.input_dim,
            "hidden_dims": list(spec.hidden_dims),
            "embedding_dim": spec.embedding_dim,
            "num_classes": spec.num_classes,
        },
        "body": [_layer_to_json(l) for l in model.body],
        "local_head": _layer_to_json(model.local_head),
        "global_head": _layer_to_json(model.global_head),
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path) -> ClientModel:
    doc = json.loads(Path(path).read_text())
    spec = ModelSpec(**doc["spec"])
    return ClientModel(
        spec,
        [_layer_from_json(d) for d in doc["body"]],
        _layer_from_json(doc["local_head"]),
        _layer_from_json(doc["global_head"]),
    )
