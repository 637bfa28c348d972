"""Small dense MLP with hand-written derivatives.

Everything operates on batches: ``x`` has shape (B, n_in).  Besides the
forward pass we need the input Jacobian (Newton tangents of the embedding
PDE) and the parameter vector-Jacobian product (adjoint gradients).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CheckpointError, InvalidArgumentError

FORMAT_VERSION = 1
ACTIVATIONS = ("relu", "softplus", "sigmoid", "linear")


def _softplus(z):
    return np.log1p(np.exp(-np.abs(z))) + np.maximum(z, 0.0)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def activate(name: str, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Activation value and derivative.  ReLU'(0) is taken as 0."""
    if name == "relu":
        return np.maximum(z, 0.0), (z > 0).astype(float)
    if name == "softplus":
        return _softplus(z), _sigmoid(z)
    if name == "sigmoid":
        s = _sigmoid(z)
        return s, s * (1 - s)
    if name == "linear":
        return z, np.ones_like(z)
    raise InvalidArgumentError(f"unknown activation {name!r}")


@dataclass(frozen=True)
class MLPConfig:
    layer_widths: tuple[int, ...]
    activations: tuple[str, ...]

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        object.__setattr__(self, "activations", tuple(self.activations))
        if len(widths) < 3:
            raise InvalidArgumentError("need input, at least one hidden layer, and output widths")
        if any(w < 1 for w in widths):
            raise InvalidArgumentError(f"layer widths must be >= 1, got {list(widths)}")
        if len(self.activations) != len(widths) - 1:
            raise InvalidArgumentError("one activation per non-input layer required")
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise InvalidArgumentError(f"unknown activation {a!r}")

    @classmethod
    def simple(cls, widths, hidden: str = "relu", output: str = "linear") -> "MLPConfig":
        n = len(widths) - 1
        return cls(tuple(widths), (hidden,) * (n - 1) + (output,))

    @property
    def num_params(self) -> int:
        w = self.layer_widths
        return sum(w[i] * w[i + 1] + w[i + 1] for i in range(len(w) - 1))

    def to_dict(self) -> dict:
        return {"layer_widths": list(self.layer_widths), "activations": list(self.activations)}

    @classmethod
    def from_dict(cls, d: dict) -> "MLPConfig":
        return cls(tuple(d["layer_widths"]), tuple(d["activations"]))


@dataclass
class MLPParams:
    config: MLPConfig
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    seed: int | None = field(default=None, compare=False)

    def flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in zip(self.weights, self.biases)])

    def with_flat(self, theta: np.ndarray) -> "MLPParams":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.config.num_params,):
            raise InvalidArgumentError(f"expected {self.config.num_params} parameters, got {theta.shape}")
        return unflatten(self.config, theta, seed=self.seed)

    def copy(self) -> "MLPParams":
        return self.with_flat(self.flat())


def unflatten(config: MLPConfig, theta: np.ndarray, seed=None) -> MLPParams:
    w = config.layer_widths
    Ws, bs, k = [], [], 0
    for i in range(len(w) - 1):
        n_in, n_out = w[i], w[i + 1]
        Ws.append(theta[k : k + n_in * n_out].reshape(n_out, n_in).copy())
        k += n_in * n_out
        bs.append(theta[k : k + n_out].copy())
        k += n_out
    return MLPParams(config, Ws, bs, seed)


def init_params(config: MLPConfig, seed: int) -> MLPParams:
    """He-normal weights ahead of ReLU layers, Glorot-normal otherwise.

    Hidden biases are drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)) so that
    ReLU kinks are spread over the input range rather than stacked at the
    origin; the output bias starts at zero.
    """
    rng = np.random.default_rng(seed)
    w = config.layer_widths
    Ws, bs = [], []
    for i, act in enumerate(config.activations):
        n_in, n_out = w[i], w[i + 1]
        std = np.sqrt(2.0 / n_in) if act == "relu" else np.sqrt(2.0 / (n_in + n_out))
        Ws.append(rng.normal(0.0, std, size=(n_out, n_in)))
        last = i == len(config.activations) - 1
        bound = 1.0 / np.sqrt(n_in)
        bs.append(np.zeros(n_out) if last else rng.uniform(-bound, bound, size=n_out))
    return MLPParams(config, Ws, bs, seed)


def _as_batch(params: MLPParams, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != params.config.layer_widths[0]:
        raise InvalidArgumentError(f"input width {x.shape[1]} != {params.config.layer_widths[0]}")
    return x, single


def _forward_trace(params: MLPParams, x: np.ndarray):
    acts, derivs = [x], []
    a = x
    for W, b, name in zip(params.weights, params.biases, params.config.activations):
        a, d = activate(name, a @ W.T + b)
        acts.append(a)
        derivs.append(d)
    return acts, derivs


def forward(params: MLPParams, x) -> np.ndarray:
    x, single = _as_batch(params, x)
    a = x
    for W, b, name in zip(params.weights, params.biases, params.config.activations):
        a, _ = activate(name, a @ W.T + b)
    return a[0] if single else a


def input_jacobian(params: MLPParams, x) -> np.ndarray:
    """dy/dx with shape (B, n_out, n_in), or (n_out, n_in) for a single input."""
    x, single = _as_batch(params, x)
    _, derivs = _forward_trace(params, x)
    J = np.broadcast_to(np.eye(x.shape[1]), (len(x), x.shape[1], x.shape[1]))
    for W, d in zip(params.weights, derivs):
        J = d[:, :, None] * np.einsum("oi,bij->boj", W, J)
    return J[0] if single else J


def forward_and_jacobian(params: MLPParams, x) -> tuple[np.ndarray, np.ndarray]:
    x, _ = _as_batch(params, x)
    acts, derivs = _forward_trace(params, x)
    J = np.broadcast_to(np.eye(x.shape[1]), (len(x), x.shape[1], x.shape[1]))
    for W, d in zip(params.weights, derivs):
        J = d[:, :, None] * np.einsum("oi,bij->boj", W, J)
    return acts[-1], J


def param_vjp(params: MLPParams, x, cotangent, return_input: bool = False):
    """Sum over the batch of cotangent . d forward / d theta, as a flat vector.

    With ``return_input`` also returns the per-sample input cotangent (B, n_in).
    """
    x, single = _as_batch(params, x)
    ct = np.atleast_2d(np.asarray(cotangent, dtype=float))
    if ct.shape != (len(x), params.config.layer_widths[-1]):
        raise InvalidArgumentError(f"cotangent shape {ct.shape} does not match output {(len(x), params.config.layer_widths[-1])}")
    acts, derivs = _forward_trace(params, x)
    gW, gb = [None] * len(params.weights), [None] * len(params.weights)
    g = ct
    for i in range(len(params.weights) - 1, -1, -1):
        gz = g * derivs[i]
        gW[i] = gz.T @ acts[i]
        gb[i] = gz.sum(axis=0)
        g = gz @ params.weights[i]
    flat = np.concatenate([np.concatenate([W.ravel(), b]) for W, b in zip(gW, gb)])
    if return_input:
        return flat, (g[0] if single else g)
    return flat


# --------------------------------------------------------------- checkpoints
def params_to_dict(params: MLPParams) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "config": params.config.to_dict(),
        "seed": params.seed,
        "params": params.flat().tolist(),
    }


def params_from_dict(d: dict) -> MLPParams:
    if d.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format_version {d.get('format_version')!r}")
    try:
        config = MLPConfig.from_dict(d["config"])
        theta = np.asarray(d["params"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"corrupt network record: {exc}") from None
    if theta.shape != (config.num_params,) or not np.all(np.isfinite(theta)):
        raise CheckpointError("parameter array does not match the network configuration")
    return unflatten(config, theta, seed=d.get("seed"))


def save_params(params: MLPParams, path) -> None:
    Path(path).write_text(json.dumps(params_to_dict(params)))


def load_params(path) -> MLPParams:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: {exc}") from None
    return params_from_dict(d)
