"""Single-layer Elman network with a per-timestep sigmoid output.

::

    h_0 = 0
    h_t = tanh(W_xh x_t + W_hh h_{t-1} + b_h)
    p_t = sigmoid(W_hy . h_t + b_y)

Training is plain per-sequence SGD on class-weighted binary cross-entropy,
with optional global-norm gradient clipping. The recurrent loops run in the
kernels chosen by :mod:`alrt.kernels`.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .errors import ConfigError, NumericError
from .preprocess import N_FEATURES, ClassWeights, FeatureSequence

EPS = 1e-12
DEFAULT_HIDDEN = 32


@dataclass
class ModelParams:
    W_xh: np.ndarray
    W_hh: np.ndarray
    b_h: np.ndarray
    W_hy: np.ndarray
    b_y: float

    def __post_init__(self):
        self.W_xh = np.ascontiguousarray(self.W_xh, dtype=np.float64)
        self.W_hh = np.ascontiguousarray(self.W_hh, dtype=np.float64)
        self.b_h = np.ascontiguousarray(self.b_h, dtype=np.float64).reshape(-1)
        self.W_hy = np.ascontiguousarray(self.W_hy, dtype=np.float64).reshape(-1)
        self.b_y = float(self.b_y)
        H = self.W_hh.shape[0]
        if (
            self.W_hh.shape != (H, H)
            or self.W_xh.ndim != 2
            or self.W_xh.shape[0] != H
            or self.b_h.shape != (H,)
            or self.W_hy.shape != (H,)
        ):
            raise ConfigError("inconsistent parameter shapes")

    @property
    def hidden_dim(self) -> int:
        return self.W_hh.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W_xh.shape[1]

    def arrays(self) -> tuple:
        return self.W_xh, self.W_hh, self.b_h, self.W_hy, self.b_y

    def copy(self) -> "ModelParams":
        return ModelParams(self.W_xh.copy(), self.W_hh.copy(), self.b_h.copy(), self.W_hy.copy(), self.b_y)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.W_xh.ravel(), self.W_hh.ravel(), self.b_h, self.W_hy, [self.b_y]])

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.flat()).all())

    def equals(self, other: "ModelParams") -> bool:
        """Bit-exact equality."""
        return self.flat().tobytes() == other.flat().tobytes()

    @classmethod
    def zeros(cls, hidden_dim: int, input_dim: int = N_FEATURES) -> "ModelParams":
        H = hidden_dim
        return cls(np.zeros((H, input_dim)), np.zeros((H, H)), np.zeros(H), np.zeros(H), 0.0)

    def to_dict(self) -> dict:
        return {
            "hidden_dim": self.hidden_dim,
            "input_dim": self.input_dim,
            "W_xh": self.W_xh.tolist(),
            "W_hh": self.W_hh.tolist(),
            "b_h": self.b_h.tolist(),
            "W_hy": [self.W_hy.tolist()],
            "b_y": self.b_y,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        try:
            params = cls(d["W_xh"], d["W_hh"], d["b_h"], d["W_hy"], d["b_y"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed model parameters: {exc}") from exc
        if params.hidden_dim != d.get("hidden_dim", params.hidden_dim):
            raise ConfigError("checkpoint hidden_dim disagrees with its weight matrices")
        return params


@dataclass
class TrainConfig:
    learning_rate: float = 0.02
    epochs: int = 5
    seed: int = 0
    gradient_clip: float | None = 5.0
    class_weights: ClassWeights = field(default_factory=lambda: ClassWeights(1.0, 1.0))

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ConfigError("learning_rate must be non-negative")
        if self.epochs < 1:
            raise ConfigError("epochs must be positive")
        if self.gradient_clip is not None and not self.gradient_clip > 0:
            raise ConfigError("gradient_clip must be positive or None")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["class_weights"] = {
            "negative": self.class_weights.weight_negative,
            "positive": self.class_weights.weight_positive,
        }
        return d


def init_params(hidden_dim: int = DEFAULT_HIDDEN, rng_seed: int = 0, input_dim: int = N_FEATURES) -> ModelParams:
    """Uniform weights in ``±1/sqrt(fan_in)``; zero biases."""
    if hidden_dim < 1:
        raise ConfigError("hidden_dim must be at least 1")
    rng = np.random.default_rng(rng_seed)
    bx, bh = 1.0 / math.sqrt(input_dim), 1.0 / math.sqrt(hidden_dim)
    return ModelParams(
        W_xh=rng.uniform(-bx, bx, size=(hidden_dim, input_dim)),
        W_hh=rng.uniform(-bh, bh, size=(hidden_dim, hidden_dim)),
        b_h=np.zeros(hidden_dim),
        W_hy=rng.uniform(-bh, bh, size=hidden_dim),
        b_y=0.0,
    )


def _as_matrix(sequence, input_dim: int) -> np.ndarray:
    X = sequence.matrix if isinstance(sequence, FeatureSequence) else sequence
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] != input_dim:
        raise ConfigError(f"sequence shape {X.shape} incompatible with input_dim {input_dim}")
    return X


def forward(params: ModelParams, sequence, backend=None) -> tuple[np.ndarray, np.ndarray]:
    """Per-timestep probabilities and the hidden states cached for :func:`backward`."""
    k = backend or kernels
    X = _as_matrix(sequence, params.input_dim)
    hs, probs = k.forward(params.W_xh, params.W_hh, params.b_h, params.W_hy, params.b_y, X)
    if not np.isfinite(probs).all():
        raise NumericError("non-finite activation in forward pass")
    return probs, hs


def predict_proba(params: ModelParams, sequence) -> np.ndarray:
    return forward(params, sequence)[0]


def loss(probs, labels, weights: ClassWeights) -> float:
    """Mean class-weighted binary cross-entropy, probabilities clamped to ``[EPS, 1-EPS]``."""
    p = np.clip(np.asarray(probs, dtype=np.float64), EPS, 1.0 - EPS)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape:
        raise ConfigError(f"probability length {p.shape} != label length {y.shape}")
    terms = weights.weight_positive * y * np.log(p) + weights.weight_negative * (1.0 - y) * np.log1p(-p)
    return float(-terms.mean())


def backward(
    params: ModelParams,
    sequence,
    labels,
    weights: ClassWeights,
    cache: tuple[np.ndarray, np.ndarray] | None = None,
    backend=None,
) -> ModelParams:
    """Exact gradient of :func:`loss` with respect to every parameter, by BPTT.

    The clamp inside :func:`loss` is ignored here; it only matters for
    probabilities within 1e-12 of 0 or 1.
    """
    k = backend or kernels
    X = _as_matrix(sequence, params.input_dim)
    y = np.ascontiguousarray(labels, dtype=np.int8)
    if y.shape != (X.shape[0],):
        raise ConfigError("label length does not match sequence length")
    probs, hs = cache if cache is not None else forward(params, X, backend=k)
    g = k.backward(
        params.W_xh, params.W_hh, params.W_hy, X, hs, probs, y,
        float(weights.weight_negative), float(weights.weight_positive),
    )
    grad = ModelParams(*g)
    if not grad.is_finite():
        raise NumericError("non-finite gradient")
    return grad


def sgd_step(params: ModelParams, grad: ModelParams, lr: float, clip: float | None) -> None:
    """In-place update ``params -= lr * clip(grad)``."""
    if clip is not None:
        norm = math.sqrt(
            float(np.dot(grad.W_xh.ravel(), grad.W_xh.ravel()))
            + float(np.dot(grad.W_hh.ravel(), grad.W_hh.ravel()))
            + float(np.dot(grad.b_h, grad.b_h))
            + float(np.dot(grad.W_hy, grad.W_hy))
            + grad.b_y * grad.b_y
        )
        if norm > clip:
            lr = lr * (clip / norm)
    params.W_xh -= lr * grad.W_xh
    params.W_hh -= lr * grad.W_hh
    params.b_h -= lr * grad.b_h
    params.W_hy -= lr * grad.W_hy
    params.b_y -= lr * grad.b_y


def epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    """Visiting order for one epoch; depends only on (seed, epoch)."""
    return np.random.default_rng([seed, epoch]).permutation(n)


def train_epoch(
    params: ModelParams,
    dataset: Sequence[FeatureSequence],
    config: TrainConfig,
    epoch: int,
    backend=None,
) -> float:
    """One shuffled pass of per-sequence SGD, updating ``params`` in place.

    Returns the mean of the per-sequence losses seen before each update.
    ``backend`` overrides the kernel module chosen at import.
    """
    if not dataset:
        raise ConfigError("cannot train on an empty dataset")
    weights = config.class_weights
    total = 0.0
    for i in epoch_order(len(dataset), config.seed, epoch):
        seq = dataset[i]
        try:
            cache = forward(params, seq.matrix, backend=backend)
            total += loss(cache[0], seq.labels, weights)
            if config.learning_rate == 0:
                continue
            grad = backward(params, seq.matrix, seq.labels, weights, cache=cache, backend=backend)
        except NumericError as exc:
            raise NumericError(f"epoch {epoch}, sequence {seq.patient_id!r}: {exc}") from exc
        sgd_step(params, grad, config.learning_rate, config.gradient_clip)
    mean = total / len(dataset)
    if not math.isfinite(mean) or not params.is_finite():
        raise NumericError(f"epoch {epoch}: training diverged")
    return mean


def train(
    params: ModelParams,
    dataset: Sequence[FeatureSequence],
    config: TrainConfig,
) -> tuple[ModelParams, list[float]]:
    """Run ``config.epochs`` epochs on a copy of ``params``."""
    params = params.copy()
    trace = [train_epoch(params, dataset, config, epoch) for epoch in range(config.epochs)]
    return params, trace


def save_checkpoint(path, params: ModelParams, **meta) -> None:
    payload = {"params": params.to_dict(), **meta}
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(json.dumps(payload, sort_keys=True))
    os.replace(tmp, path)


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read checkpoint {path}: {exc}") from exc
    meta = {k: v for k, v in payload.items() if k != "params"}
    return ModelParams.from_dict(payload["params"]), meta
