"""Five-layer symmetric autoencoder trained by mini-batch SGD on a pseudo-Huber loss.

Layer sizes are ``p -> floor(1.5 p) -> s -> floor(1.5 p) -> p`` with tanh in
the mapping/demapping layers and identity in the bottleneck and output
layers. Responses are mapped per item from ``[0, L_j]`` to ``[-1, 1]`` before
entering the network; the loss is evaluated on residuals in the original
response units, so ``delta`` keeps its meaning of "one answer category".
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import ResponseMatrix, SurveyDesign

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


class DivergenceError(FloatingPointError):
    """Training produced a non-finite value."""


@dataclass(frozen=True)
class AutoencoderConfig:
    p: int
    bottleneck_size: int
    mapping_size: int | None = None
    delta: float = 1.0
    batch_size: int = 10
    learning_rate: float = 1e-4
    epochs: int = 100
    seed: int | None = 0
    clamp: bool = True

    def __post_init__(self) -> None:
        if self.mapping_size is None:
            object.__setattr__(self, "mapping_size", math.floor(1.5 * self.p))
        if not 1 <= self.bottleneck_size < self.p:
            raise ValueError(f"bottleneck_size must be in 1..p-1, got {self.bottleneck_size} for p={self.p}")
        if self.mapping_size < self.p:
            raise ValueError("mapping_size must be at least p")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")

    @classmethod
    def for_design(cls, m: ResponseMatrix, design: SurveyDesign, **kwargs) -> "AutoencoderConfig":
        return cls(p=m.p, bottleneck_size=design.s, **kwargs)

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        h = self.mapping_size
        return (self.p, h, self.bottleneck_size, h, self.p)


# activation per weight layer (layers 2..5)
ACTIVATIONS = ("tanh", "identity", "tanh", "identity")


@dataclass
class NetworkParameters:
    weights: list[np.ndarray]
    intercepts: list[np.ndarray]

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    def copy(self) -> "NetworkParameters":
        return NetworkParameters([w.copy() for w in self.weights], [b.copy() for b in self.intercepts])

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.intercepts) for a in pair])


@dataclass
class TrainingResult:
    params: NetworkParameters
    loss_history: np.ndarray
    config: AutoencoderConfig


@dataclass
class ReconstructionErrors:
    """Item-level squared, range-scaled reconstruction errors, shape ``(n, p)``."""

    values: np.ndarray
    reconstructions: np.ndarray
    metadata: dict = field(default_factory=dict)


def init_parameters(cfg: AutoencoderConfig) -> NetworkParameters:
    """Uniform fan-balanced weights, zero intercepts; deterministic given ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    sizes = cfg.layer_sizes
    weights, intercepts = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        intercepts.append(np.zeros(fan_out))
    return NetworkParameters(weights, intercepts)


def pseudo_huber(z, delta: float = 1.0):
    """``delta^2 (sqrt(1 + (z/delta)^2) - 1)``, elementwise."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    z = np.asarray(z, dtype=np.float64)
    # algebraically identical form that avoids cancellation for small |z|
    u = (z / delta) ** 2
    return z**2 / (np.sqrt(1.0 + u) + 1.0)


def pseudo_huber_grad(z, delta: float = 1.0):
    z = np.asarray(z, dtype=np.float64)
    return z / np.sqrt(1.0 + (z / delta) ** 2)


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    return np.tanh(z) if name == "tanh" else z


def forward(params: NetworkParameters, x: np.ndarray, *, return_activations: bool = False):
    """Propagate normalized inputs through the network.

    ``x`` is a ``(p,)`` vector or a ``(batch, p)`` matrix. With
    ``return_activations=True`` the list of all layer activations (input
    first) is returned instead of the output alone.
    """
    a = np.asarray(x, dtype=np.float64)
    squeeze = a.ndim == 1
    if squeeze:
        a = a[None, :]
    if a.shape[1] != params.layer_sizes[0]:
        raise ValueError(f"input has {a.shape[1]} items, network expects {params.layer_sizes[0]}")
    acts = [a]
    with np.errstate(over="ignore", invalid="ignore"):  # divergence is reported below
        for W, b, g in zip(params.weights, params.intercepts, ACTIVATIONS):
            a = _activate(g, a @ W.T + b)
            acts.append(a)
    if not np.all(np.isfinite(a)):
        raise DivergenceError("non-finite activation in forward pass")
    if return_activations:
        return acts
    return a[0] if squeeze else a


def _normalization(categories: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    half = np.asarray(categories, dtype=np.float64) / 2.0
    return half, half  # x = center + scale * u


def normalize(x: np.ndarray, categories: np.ndarray) -> np.ndarray:
    center, scale = _normalization(categories)
    return (np.asarray(x, dtype=np.float64) - center) / scale


def denormalize(u: np.ndarray, categories: np.ndarray) -> np.ndarray:
    center, scale = _normalization(categories)
    return center + scale * u


def loss_and_gradients(
    params: NetworkParameters,
    x_raw: np.ndarray,
    categories: np.ndarray,
    delta: float = 1.0,
) -> tuple[float, NetworkParameters]:
    """Batch loss ``(1/b) sum_i sum_j L(x_ij - xhat_ij)`` and its exact gradient."""
    x_raw = np.atleast_2d(np.asarray(x_raw, dtype=np.float64))
    bsz = x_raw.shape[0]
    _, scale = _normalization(categories)
    acts = forward(params, normalize(x_raw, categories), return_activations=True)
    resid = x_raw - denormalize(acts[-1], categories)
    with np.errstate(over="ignore", invalid="ignore"):
        loss = float(pseudo_huber(resid, delta).sum() / bsz)
        # d loss / d output (normalized units)
        g = -pseudo_huber_grad(resid, delta) * scale / bsz
    gW = [None] * 4
    gb = [None] * 4
    for layer in range(3, -1, -1):
        if ACTIVATIONS[layer] == "tanh":
            g = g * (1.0 - acts[layer + 1] ** 2)
        gW[layer] = g.T @ acts[layer]
        gb[layer] = g.sum(axis=0)
        if layer:
            g = g @ params.weights[layer]
    return loss, NetworkParameters(gW, gb)


def _responses(m) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(m, ResponseMatrix):
        return m.responses.astype(np.float64), m.categories
    raise TypeError("expected a ResponseMatrix")


def train(
    m: ResponseMatrix,
    cfg: AutoencoderConfig,
    design: SurveyDesign | None = None,
    init: NetworkParameters | None = None,
) -> TrainingResult:
    """Fit the autoencoder by plain mini-batch SGD.

    Respondents are reshuffled every epoch from a generator seeded with
    ``cfg.seed``; the last batch of an epoch may be smaller. The returned
    history holds the respondent-weighted mean batch loss per epoch.
    """
    x, cats = _responses(m)
    if design is not None and design.s != cfg.bottleneck_size:
        log.warning("bottleneck size %d differs from design s=%d", cfg.bottleneck_size, design.s)
    if x.shape[1] != cfg.p:
        raise ValueError(f"config is for p={cfg.p}, data has p={x.shape[1]}")
    params = init.copy() if init is not None else init_parameters(cfg)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(1)[0])
    n = x.shape[0]
    lr = cfg.learning_rate
    history = np.empty(cfg.epochs)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            try:
                loss, grads = loss_and_gradients(params, x[idx], cats, cfg.delta)
            except DivergenceError:
                raise DivergenceError(
                    f"non-finite activation at epoch {epoch + 1}, batch starting {start}; "
                    "try a lower learning rate"
                ) from None
            if not math.isfinite(loss):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch + 1}, batch starting {start}; try a lower learning rate"
                )
            total += loss * idx.size
            for W, b, gW, gb in zip(params.weights, params.intercepts, grads.weights, grads.intercepts):
                W -= lr * gW
                b -= lr * gb
        history[epoch] = total / n
        log.debug("epoch %d loss %.6f", epoch + 1, history[epoch])
    return TrainingResult(params, history, cfg)


def reconstruct(params: NetworkParameters, m: ResponseMatrix, *, clamp: bool = True) -> np.ndarray:
    """Reconstructions in original response units, optionally clamped to the valid range."""
    x, cats = _responses(m)
    xhat = denormalize(forward(params, normalize(x, cats)), cats)
    if clamp:
        lower = 0.0 if m.has_missing else 1.0
        xhat = np.clip(xhat, lower, cats.astype(np.float64))
    return xhat


def reconstruction_errors(params: NetworkParameters, m: ResponseMatrix, *, clamp: bool = True) -> ReconstructionErrors:
    """``((x - xhat) / (L_j - 1))^2`` for every respondent and item."""
    x, cats = _responses(m)
    xhat = reconstruct(params, m, clamp=clamp)
    re = ((x - xhat) / (cats - 1.0)) ** 2
    meta = {"input_scaling": "per-item affine [0, L_j] -> [-1, 1]", "clamped": clamp}
    return ReconstructionErrors(re, xhat, meta)


def re_from_reconstruction(x, xhat, categories) -> np.ndarray:
    """Scaled squared error for given observed and reconstructed responses."""
    x = np.asarray(x, dtype=np.float64)
    return ((x - np.asarray(xhat, dtype=np.float64)) / (np.asarray(categories) - 1.0)) ** 2


def save_checkpoint(result: TrainingResult, path: str | os.PathLike) -> None:
    """Store parameters with a versioned JSON header (layer sizes, seed, epochs)."""
    header = {
        "version": CHECKPOINT_VERSION,
        "layer_sizes": list(result.params.layer_sizes),
        "config": asdict(result.config),
        "epochs_run": int(result.loss_history.size),
    }
    arrays = {"header": np.frombuffer(json.dumps(header).encode(), dtype=np.uint8)}
    for i, (W, b) in enumerate(zip(result.params.weights, result.params.intercepts)):
        arrays[f"W{i}"] = W
        arrays[f"b{i}"] = b
    arrays["loss_history"] = result.loss_history
    with Path(path).open("wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path: str | os.PathLike) -> TrainingResult:
    with np.load(path) as z:
        header = json.loads(z["header"].tobytes().decode())
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header.get('version')}")
        n_layers = len(header["layer_sizes"]) - 1
        params = NetworkParameters(
            [z[f"W{i}"].copy() for i in range(n_layers)],
            [z[f"b{i}"].copy() for i in range(n_layers)],
        )
        history = z["loss_history"].copy()
    cfg = AutoencoderConfig(**header["config"])
    if params.layer_sizes != tuple(header["layer_sizes"]):
        raise ValueError("checkpoint arrays disagree with header layer sizes")
    return TrainingResult(params, history, cfg)
