"""Minimal fully-connected networks with hand-rolled reverse-mode gradients.

Two output heads are supported: a plain identity head and a softplus head
whose outputs are divided by their batch mean, so the head's output averages
exactly 1 over each batch.  The normalization couples every batch element;
``backward`` accounts for that coupling exactly, which matters because
training losses differentiate through the normalized density.

Optimization is plain SGD.  ``sgd_step`` applies either a descent or an
ascent step, so the same machinery serves minimization and the adversarial
maximizing player.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

HIDDEN_ACTIVATIONS = ("relu", "tanh")
OUTPUT_HEADS = ("identity", "softplus_unit_mean")

# softplus underflows to exactly 0 below about -745; keep outputs strictly positive
_SOFTPLUS_FLOOR = -700.0


class NetworkError(ValueError):
    """Raised for invalid architectures, shape mismatches, or stale caches."""


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, np.maximum(z, _SOFTPLUS_FLOOR))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class BatchGradients:
    """Per-parameter gradients for one batch, plus the loss they came from."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    loss_value: float = float("nan")


class Mlp:
    """Fully-connected net: affine layers, ReLU or tanh hidden units, chosen head.

    Weights use uniform He-style initialization scaled by fan-in and are
    reproducible from ``seed``.  ``forward`` caches activations; ``backward``
    consumes the cache and rejects a batch that differs from the cached one.
    """

    def __init__(
        self,
        layer_sizes: list[int] | tuple[int, ...],
        hidden_activation: str = "relu",
        output_head: str = "identity",
        seed: int = 0,
    ) -> None:
        sizes = [int(s) for s in layer_sizes]
        if len(sizes) < 2 or any(s <= 0 for s in sizes):
            raise NetworkError(f"layer_sizes must list >= 2 positive widths, got {sizes}")
        if hidden_activation not in HIDDEN_ACTIVATIONS:
            raise NetworkError(f"hidden_activation must be one of {HIDDEN_ACTIVATIONS}")
        if output_head not in OUTPUT_HEADS:
            raise NetworkError(f"output_head must be one of {OUTPUT_HEADS}")
        if output_head == "softplus_unit_mean" and sizes[-1] != 1:
            raise NetworkError("softplus_unit_mean head requires a single output unit")
        self.layer_sizes = sizes
        self.hidden_activation = hidden_activation
        self.output_head = output_head
        self.rng_seed = int(seed)
        rng = np.random.default_rng(self.rng_seed)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = np.sqrt(6.0 / fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))
        self._cache: dict | None = None

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    def params_finite(self) -> bool:
        return all(np.all(np.isfinite(w)) for w in self.weights) and all(
            np.all(np.isfinite(b)) for b in self.biases
        )


def forward(net: Mlp, batch: np.ndarray) -> np.ndarray:
    """Run the net on an (M, n_inputs) batch; returns (M, n_outputs).

    Activations are cached on the net for the following ``backward`` call.
    """
    x = np.asarray(batch, dtype=float)
    if x.ndim != 2 or x.shape[1] != net.n_inputs:
        raise NetworkError(f"batch has shape {x.shape}, expected (.., {net.n_inputs})")
    acts = [x]
    h = x
    n_layers = len(net.weights)
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w + b
        if i < n_layers - 1:
            h = np.maximum(z, 0.0) if net.hidden_activation == "relu" else np.tanh(z)
        else:
            h = z
        acts.append(h)
    cache = {"batch": x, "acts": acts}
    if net.output_head == "softplus_unit_mean":
        s = _softplus(h)
        m = s.mean()
        out = s / m
        cache["softplus"] = s
        cache["softplus_mean"] = m
    else:
        out = h
    cache["out"] = out
    net._cache = cache
    return out


def backward(net: Mlp, batch: np.ndarray, upstream_grad: np.ndarray, loss_value: float = float("nan")) -> BatchGradients:
    """Exact gradients of sum(upstream_grad * output) w.r.t. every parameter.

    Requires the cache written by ``forward`` for this same batch.  For the
    unit-mean head the batch-mean division is differentiated exactly, so the
    returned gradients include the coupling across batch elements.
    """
    cache = net._cache
    x = np.asarray(batch, dtype=float)
    if cache is None or (cache["batch"] is not x and not np.array_equal(cache["batch"], x)):
        raise NetworkError("stale cache: call forward on this batch before backward")
    g = np.asarray(upstream_grad, dtype=float)
    acts = cache["acts"]
    if g.shape != acts[-1].shape:
        raise NetworkError(f"upstream_grad has shape {g.shape}, expected {acts[-1].shape}")

    if net.output_head == "softplus_unit_mean":
        s, m = cache["softplus"], cache["softplus_mean"]
        mm = s.shape[0]
        # out_i = s_i / mean(s): d out_i / d s_j = delta_ij/m - s_i/(M m^2)
        ds = g / m - (np.sum(g * s) / (mm * m * m))
        z = acts[-1]
        delta = ds * _sigmoid(np.maximum(z, _SOFTPLUS_FLOOR))
    else:
        delta = g

    n_layers = len(net.weights)
    w_grads: list[np.ndarray] = [np.empty(0)] * n_layers
    b_grads: list[np.ndarray] = [np.empty(0)] * n_layers
    for i in range(n_layers - 1, -1, -1):
        w_grads[i] = acts[i].T @ delta
        b_grads[i] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ net.weights[i].T
            if net.hidden_activation == "relu":
                delta = delta * (acts[i] > 0.0)
            else:
                delta = delta * (1.0 - acts[i] ** 2)
    return BatchGradients(weights=w_grads, biases=b_grads, loss_value=float(loss_value))


def sgd_step(net: Mlp, grads: BatchGradients, lr: float, direction: str = "descent") -> None:
    """In-place SGD update: descent subtracts lr*grad, ascent adds it."""
    if direction not in ("descent", "ascent"):
        raise NetworkError(f"direction must be 'descent' or 'ascent', got {direction!r}")
    if not lr > 0:
        raise NetworkError(f"lr must be positive, got {lr}")
    sign = -lr if direction == "descent" else lr
    for w, gw in zip(net.weights, grads.weights):
        w += sign * gw
    for b, gb in zip(net.biases, grads.biases):
        b += sign * gb
    net._cache = None


def to_json(net: Mlp) -> str:
    """Serialize architecture and parameters (row-major) to a JSON string."""
    payload = {
        "layer_sizes": net.layer_sizes,
        "hidden_activation": net.hidden_activation,
        "output_head": net.output_head,
        "rng_seed": net.rng_seed,
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }
    return json.dumps(payload, sort_keys=True)


def from_json(text: str) -> Mlp:
    """Rebuild a net serialized by :func:`to_json`; the round trip is value-exact."""
    payload = json.loads(text)
    net = Mlp(
        payload["layer_sizes"],
        hidden_activation=payload["hidden_activation"],
        output_head=payload["output_head"],
        seed=payload["rng_seed"],
    )
    weights = [np.asarray(w, dtype=float) for w in payload["weights"]]
    biases = [np.asarray(b, dtype=float) for b in payload["biases"]]
    for have, want in zip(weights, net.weights):
        if have.shape != want.shape:
            raise NetworkError(f"checkpoint weight shape {have.shape} != architecture {want.shape}")
    net.weights = weights
    net.biases = biases
    return net
