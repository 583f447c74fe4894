"""Relation classifier: dense -> BatchNorm -> ReLU (x2) -> dense, trained with Adam.

Everything runs in float64 numpy. Parameters live in a flat dict so that the
optimizer, the gradient checker and the checkpoint format can iterate over
them by name.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import NUM_CLASSES, ClauseInstance, assemble_features

CHECKPOINT_VERSION = 1
HIDDEN = (16, 32)
PARAM_NAMES = ("W1", "b1", "gamma1", "beta1", "W2", "b2", "gamma2", "beta2", "W3", "b3")
BUFFER_NAMES = ("running_mean1", "running_var1", "running_mean2", "running_var2")


class DimensionError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass
class MlpModel:
    in_dim: int
    params: dict[str, np.ndarray]
    buffers: dict[str, np.ndarray]
    eps: float = 1e-5
    momentum: float = 0.1

    def copy(self) -> "MlpModel":
        return MlpModel(
            self.in_dim,
            {k: v.copy() for k, v in self.params.items()},
            {k: v.copy() for k, v in self.buffers.items()},
            self.eps,
            self.momentum,
        )


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 12
    learning_rate: float = 1e-5
    seed: int = 0
    use_geo: bool = False
    shuffle: bool = True
    # BatchNorm makes the hidden layers scale-invariant, so the init scale sets
    # their effective step size; at lr=1e-5 a small gain is what lets them move
    init_gain: float = 0.03

    def __post_init__(self):
        if self.epochs <= 0:
            raise ValueError(f"epochs must be positive, got {self.epochs}")
        if self.batch_size < 2:
            raise ValueError(f"batch_size must be >= 2 for batch statistics, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not self.init_gain > 0:
            raise ValueError(f"init_gain must be positive, got {self.init_gain}")


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def init_model(in_dim: int, seed: int = 0, gain: float = 1.0, eps: float = 1e-5, momentum: float = 0.1) -> MlpModel:
    """Weights ~ U(-gain/sqrt(fan_in), gain/sqrt(fan_in)); biases are zero when
    gain != 1, otherwise drawn from the same range (the plain fan-in scheme)."""
    if in_dim not in (8, 11):
        raise DimensionError(f"in_dim must be 8 or 11, got {in_dim}")
    rng = np.random.default_rng(seed)
    sizes = (in_dim,) + HIDDEN + (NUM_CLASSES,)
    params, buffers = {}, {}
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:]), start=1):
        bound = gain / math.sqrt(fan_in)
        params[f"W{i}"] = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        bias = rng.uniform(-bound, bound, size=fan_out)
        params[f"b{i}"] = bias if gain == 1.0 else np.zeros(fan_out)
        if i <= len(HIDDEN):
            params[f"gamma{i}"] = np.ones(fan_out)
            params[f"beta{i}"] = np.zeros(fan_out)
            buffers[f"running_mean{i}"] = np.zeros(fan_out)
            buffers[f"running_var{i}"] = np.ones(fan_out)
    params = {k: params[k] for k in PARAM_NAMES}
    return MlpModel(in_dim, params, buffers, eps, momentum)


def zero_model(in_dim: int) -> MlpModel:
    """All weights and biases zero, identity BatchNorm: predicts the uniform distribution."""
    model = init_model(in_dim)
    for name, arr in model.params.items():
        if not name.startswith("gamma"):
            arr[...] = 0.0
    return model


def _as_batch(model: MlpModel, batch) -> np.ndarray:
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.in_dim:
        got = x.shape[-1] if x.ndim >= 1 else 0
        raise DimensionError(f"expected feature length in_dim={model.in_dim}, got {got}")
    return x


def forward(model: MlpModel, batch, mode: str = "eval", update_stats: bool = True):
    """Returns (logits, cache). Train mode uses batch statistics and, unless
    ``update_stats`` is False, folds them into the running buffers."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = _as_batch(model, batch)
    n = x.shape[0]
    if mode == "train" and n < 2:
        raise ValueError("train mode needs a batch of at least 2")
    p = model.params
    cache = {"x": x, "mode": mode}
    a = x
    for i in (1, 2):
        z = a @ p[f"W{i}"].T
        if mode == "train":
            # centre before adding the bias: the bias cancels exactly instead
            # of leaving roundoff in an otherwise zero gradient
            z_mean = z.mean(axis=0)
            centred = z - z_mean
            var = (centred * centred).mean(axis=0)
            if update_stats:
                m = model.momentum
                unbiased = var * n / (n - 1)
                mu = z_mean + p[f"b{i}"]
                model.buffers[f"running_mean{i}"] = (1 - m) * model.buffers[f"running_mean{i}"] + m * mu
                model.buffers[f"running_var{i}"] = (1 - m) * model.buffers[f"running_var{i}"] + m * unbiased
        else:
            centred = z + p[f"b{i}"] - model.buffers[f"running_mean{i}"]
            var = model.buffers[f"running_var{i}"]
        inv_std = 1.0 / np.sqrt(var + model.eps)
        xhat = centred * inv_std
        y = p[f"gamma{i}"] * xhat + p[f"beta{i}"]
        out = np.maximum(y, 0.0)
        cache[i] = {"a_in": a, "xhat": xhat, "inv_std": inv_std, "y": y}
        a = out
    logits = a @ p["W3"].T + p["b3"]
    cache["a2"] = a
    return logits, cache


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, labels) -> tuple[float, np.ndarray]:
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64)
    n = z.shape[0]
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    log_probs = shifted - log_norm[:, None]
    loss = float(-log_probs[np.arange(n), labels].mean())
    grad = np.exp(log_probs)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


def backward(model: MlpModel, cache: dict, dlogits) -> dict[str, np.ndarray]:
    if cache["mode"] != "train":
        raise ValueError("backward needs the cache of a train-mode forward pass")
    p = model.params
    dlogits = np.asarray(dlogits, dtype=np.float64)
    grads = {}
    grads["W3"] = dlogits.T @ cache["a2"]
    grads["b3"] = dlogits.sum(axis=0)
    da = dlogits @ p["W3"]
    for i in (2, 1):
        c = cache[i]
        dy = da * (c["y"] > 0)
        xhat = c["xhat"]
        grads[f"gamma{i}"] = (dy * xhat).sum(axis=0)
        grads[f"beta{i}"] = dy.sum(axis=0)
        dxhat = dy * p[f"gamma{i}"]
        n = dxhat.shape[0]
        dh = (c["inv_std"] / n) * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
        grads[f"W{i}"] = dh.T @ c["a_in"]
        grads[f"b{i}"] = dh.sum(axis=0)
        da = dh @ p[f"W{i}"]
    return {k: grads[k] for k in PARAM_NAMES}


def adam_step(model: MlpModel, grads: dict[str, np.ndarray], state: AdamState) -> tuple[MlpModel, AdamState]:
    """One bias-corrected Adam update, applied in place; returns (model, state)."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, g in grads.items():
        if name not in state.m:
            state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        m = state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        v = state.v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        model.params[name] = model.params[name] - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return model, state


def instances_to_arrays(instances: Sequence[ClauseInstance], use_geo: bool) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([assemble_features(i.subject.box, i.object.box, use_geo) for i in instances])
    y = np.asarray([int(i.relation) for i in instances], dtype=np.int64)
    return x, y


def train_arrays(x: np.ndarray, y: np.ndarray, config: TrainConfig, log=None) -> tuple[MlpModel, list[float]]:
    n = x.shape[0]
    if n < config.batch_size:
        raise ValueError(f"need at least batch_size={config.batch_size} instances, got {n}")
    rng = np.random.default_rng(config.seed)
    model = init_model(x.shape[1], seed=int(rng.integers(2**32)), gain=config.init_gain)
    state = AdamState(lr=config.learning_rate)
    n_batches = n // config.batch_size
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(n) if config.shuffle else np.arange(n)
        total = 0.0
        for b in range(n_batches):
            idx = order[b * config.batch_size:(b + 1) * config.batch_size]
            logits, cache = forward(model, x[idx], "train")
            loss, dlogits = softmax_cross_entropy(logits, y[idx])
            adam_step(model, backward(model, cache, dlogits), state)
            total += loss
        history.append(total / n_batches)
        if log is not None:
            log(epoch + 1, history[-1])
    return model, history


def train(instances: Sequence[ClauseInstance], config: TrainConfig, log=None) -> tuple[MlpModel, list[float]]:
    x, y = instances_to_arrays(instances, config.use_geo)
    return train_arrays(x, y, config, log)


def predict_batch(model: MlpModel, batch) -> np.ndarray:
    logits, _ = forward(model, batch, "eval")
    return softmax(logits)


def predict(model: MlpModel, features) -> np.ndarray:
    """Relation distribution (9 probabilities) for one feature vector."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 1:
        raise DimensionError("predict takes a single feature vector")
    return predict_batch(model, features)[0]


def batch_loss(model: MlpModel, x, y) -> float:
    logits, _ = forward(model, x, "train", update_stats=False)
    return softmax_cross_entropy(logits, y)[0]


def gradient_check(
    model: MlpModel,
    x,
    y,
    step: float = 1e-5,
    max_scalars: Optional[int] = None,
    seed: int = 0,
    grads: Optional[dict[str, np.ndarray]] = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``grads`` overrides the analytic gradients (for mutation tests). With
    ``max_scalars`` set, a seeded random subsample of that many scalars is
    checked instead of every one.
    """
    x = _as_batch(model, x)
    y = np.asarray(y, dtype=np.int64)
    if grads is None:
        logits, cache = forward(model, x, "train", update_stats=False)
        _, dlogits = softmax_cross_entropy(logits, y)
        grads = backward(model, cache, dlogits)
    probe = model.copy()
    coords = [(name, idx) for name in PARAM_NAMES for idx in np.ndindex(model.params[name].shape)]
    if max_scalars is not None and max_scalars < len(coords):
        rng = np.random.default_rng(seed)
        coords = [coords[i] for i in sorted(rng.choice(len(coords), size=max_scalars, replace=False))]
    worst = 0.0
    for name, idx in coords:
        arr = probe.params[name]
        orig = arr[idx]
        arr[idx] = orig + step
        plus = batch_loss(probe, x, y)
        arr[idx] = orig - step
        minus = batch_loss(probe, x, y)
        arr[idx] = orig
        numeric = (plus - minus) / (2.0 * step)
        analytic = float(grads[name][idx])
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
        worst = max(worst, err)
    return worst


# -- checkpoints --------------------------------------------------------------

def save_checkpoint(model: MlpModel, config: Optional[TrainConfig] = None) -> bytes:
    """Versioned JSON; floats are written with repr precision so they round-trip exactly."""
    p, b = model.params, model.buffers
    doc = {
        "version": CHECKPOINT_VERSION,
        "in_dim": model.in_dim,
        "layers": [{"W": p[f"W{i}"].tolist(), "b": p[f"b{i}"].tolist()} for i in (1, 2, 3)],
        "batchnorms": [
            {
                "gamma": p[f"gamma{i}"].tolist(),
                "beta": p[f"beta{i}"].tolist(),
                "running_mean": b[f"running_mean{i}"].tolist(),
                "running_var": b[f"running_var{i}"].tolist(),
            }
            for i in (1, 2)
        ],
        "config": {
            "eps": model.eps,
            "momentum": model.momentum,
            "train": asdict(config) if config is not None else None,
        },
    }
    return json.dumps(doc, sort_keys=True).encode()


def load_checkpoint(data: bytes | str) -> MlpModel:
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"malformed checkpoint: {exc}") from None
    if not isinstance(doc, dict):
        raise CheckpointError("malformed checkpoint: not a JSON object")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {doc.get('version')!r}, expected {CHECKPOINT_VERSION}")
    try:
        in_dim = int(doc["in_dim"])
        cfg = doc["config"]
        model = init_model(in_dim, eps=float(cfg["eps"]), momentum=float(cfg["momentum"]))
        for i, layer in enumerate(doc["layers"], start=1):
            _assign(model.params, f"W{i}", layer["W"])
            _assign(model.params, f"b{i}", layer["b"])
        for i, bn in enumerate(doc["batchnorms"], start=1):
            _assign(model.params, f"gamma{i}", bn["gamma"])
            _assign(model.params, f"beta{i}", bn["beta"])
            _assign(model.buffers, f"running_mean{i}", bn["running_mean"])
            _assign(model.buffers, f"running_var{i}", bn["running_var"])
        if len(doc["layers"]) != 3 or len(doc["batchnorms"]) != 2:
            raise CheckpointError("malformed checkpoint: expected 3 layers and 2 batchnorms")
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"malformed checkpoint: {exc!r}") from None
    for name in ("running_var1", "running_var2"):
        if not np.all(model.buffers[name] > 0):
            raise CheckpointError(f"malformed checkpoint: {name} must be positive")
    return model


def _assign(store: dict, name: str, values) -> None:
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != store[name].shape:
        raise CheckpointError(f"malformed checkpoint: {name} has shape {arr.shape}, expected {store[name].shape}")
    if not np.all(np.isfinite(arr)):
        raise CheckpointError(f"malformed checkpoint: {name} has non-finite values")
    store[name] = arr


def train_config_from_checkpoint(data: bytes | str) -> Optional[TrainConfig]:
    doc = json.loads(data)
    cfg = doc.get("config", {}).get("train")
    return TrainConfig(**cfg) if cfg else None
