"""Multivariate utilities for systemic shortfall risk.

Both built-in families have the separable-plus-aggregate form
``U(x) = sum_n u_n(x_n) + aggregate(x)`` with each piece concave, increasing
and bounded above.  ``PairedExponential`` additionally admits a closed-form
convex conjugate, exposed here for the analytic benchmark and for numeric
cross-checks.

Evaluation and gradients accept a single scenario (shape ``(N,)``) or a
batch (shape ``(M, N)``) and return a scalar or a length-M array
accordingly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

EXP_CLAMP = 700.0


class UtilityError(ValueError):
    """Raised for invalid utility parameters or mismatched input shapes."""


def _clamped_exp(t: np.ndarray) -> np.ndarray:
    """exp with the exponent clamped to +-EXP_CLAMP; clamping is reported once."""
    t = np.asarray(t, dtype=float)
    if np.any(np.abs(t) > EXP_CLAMP):
        warnings.warn(
            f"exponent magnitude above {EXP_CLAMP:g} clamped before exp; "
            "inputs are far outside the intended range",
            RuntimeWarning,
            stacklevel=3,
        )
        t = np.clip(t, -EXP_CLAMP, EXP_CLAMP)
    return np.exp(t)


@dataclass(frozen=True)
class PairedExponential:
    """U(x) = N^2/2 - (sum_n exp(-alpha_n x_n))^2 / 2 with alpha_n > 0.

    Supremum N^2/2, attained in the limit x -> +inf componentwise.
    """

    alpha: np.ndarray

    def __post_init__(self) -> None:
        a = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        if a.ndim != 1 or a.size == 0 or not np.all(a > 0) or not np.all(np.isfinite(a)):
            raise UtilityError("alpha must be a nonempty vector of positive finite reals")
        object.__setattr__(self, "alpha", a)

    @property
    def n_agents(self) -> int:
        return self.alpha.size

    @property
    def sup(self) -> float:
        return self.n_agents**2 / 2.0


@dataclass(frozen=True)
class ExpPlusAggregate:
    """U(x) = sum_n (1 - exp(-alpha_n x_n)) + 1 - exp(-p sum_n beta_n x_n).

    alpha_n > 0, beta_n >= 0, p > 1.  Supremum N + 1.
    """

    alpha: np.ndarray
    beta: np.ndarray
    p: float = 2.0

    def __post_init__(self) -> None:
        a = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        b = np.atleast_1d(np.asarray(self.beta, dtype=float))
        if a.ndim != 1 or a.size == 0 or not np.all(a > 0) or not np.all(np.isfinite(a)):
            raise UtilityError("alpha must be a nonempty vector of positive finite reals")
        if b.shape != a.shape or not np.all(b >= 0) or not np.all(np.isfinite(b)):
            raise UtilityError("beta must match alpha's length with nonnegative finite entries")
        if not self.p > 1:
            raise UtilityError(f"p must exceed 1, got {self.p}")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)

    @property
    def n_agents(self) -> int:
        return self.alpha.size

    @property
    def sup(self) -> float:
        return self.n_agents + 1.0


@dataclass(frozen=True)
class CustomUtility:
    """User-supplied utility: evaluator + gradient callables over batches.

    Both callables must accept an (M, N) array; ``evaluate`` returns shape
    (M,), ``gradient`` returns (M, N).  ``sup`` is the supremum of U, used to
    validate acceptance thresholds.
    """

    evaluate: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    n_agents_: int
    sup_: float = field(default=np.inf)

    @property
    def n_agents(self) -> int:
        return self.n_agents_

    @property
    def sup(self) -> float:
        return self.sup_


UtilitySpec = PairedExponential | ExpPlusAggregate | CustomUtility


def _check_shape(spec: UtilitySpec, x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != spec.n_agents:
        raise UtilityError(
            f"input has shape {np.asarray(x).shape}, expected (.., {spec.n_agents})"
        )
    return x, single


def eval_u(spec: UtilitySpec, x: np.ndarray) -> float | np.ndarray:
    """Evaluate U on one scenario (N,) or a batch (M, N)."""
    x, single = _check_shape(spec, x)
    if isinstance(spec, PairedExponential):
        e = _clamped_exp(-spec.alpha[None, :] * x)
        u = 0.5 * spec.n_agents**2 - 0.5 * e.sum(axis=1) ** 2
    elif isinstance(spec, ExpPlusAggregate):
        e = _clamped_exp(-spec.alpha[None, :] * x)
        agg = _clamped_exp(-spec.p * (x @ spec.beta))
        u = (1.0 - e).sum(axis=1) + 1.0 - agg
    else:
        u = np.asarray(spec.evaluate(x), dtype=float)
    return float(u[0]) if single else u


def grad_u(spec: UtilitySpec, x: np.ndarray) -> np.ndarray:
    """Gradient of U, same leading shape as the input."""
    x, single = _check_shape(spec, x)
    if isinstance(spec, PairedExponential):
        e = _clamped_exp(-spec.alpha[None, :] * x)
        g = spec.alpha[None, :] * e * e.sum(axis=1, keepdims=True)
    elif isinstance(spec, ExpPlusAggregate):
        e = _clamped_exp(-spec.alpha[None, :] * x)
        agg = _clamped_exp(-spec.p * (x @ spec.beta))
        g = spec.alpha[None, :] * e + spec.p * spec.beta[None, :] * agg[:, None]
    else:
        g = np.asarray(spec.gradient(x), dtype=float)
    return g[0] if single else g


def hedge_weights(spec: UtilitySpec) -> np.ndarray:
    """Per-agent weights of a proportional hedge profile, summing to 1.

    Along the profile x = w * s the exponential terms of the built-in
    utilities decay like exp(-alpha_n w_n s); inverse-scale weights
    w_n = (1/alpha_n) / sum_k (1/alpha_k) equalize those exponents, so the
    utility stays moderate over the whole range of the aggregate s.  Used to
    warm-start trainers; custom utilities get uniform weights.
    """
    if isinstance(spec, (PairedExponential, ExpPlusAggregate)):
        inv = 1.0 / spec.alpha
        return inv / inv.sum()
    return np.full(spec.n_agents, 1.0 / spec.n_agents)


def conjugate_v(alpha: np.ndarray, w: np.ndarray) -> float:
    """Convex conjugate V(w) = sup_x [U(x) + <x, w>] of the paired exponential.

    Finite for w with positive entries.
    """
    spec = PairedExponential(alpha)
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if w.shape != spec.alpha.shape:
        raise UtilityError(f"w has shape {w.shape}, expected {spec.alpha.shape}")
    if not np.all(w > 0):
        raise UtilityError("conjugate_v requires strictly positive weights")
    q = w / spec.alpha
    qs = q.sum()
    return float(
        0.5 * spec.n_agents**2
        + np.sum(q * np.log(q))
        - 0.5 * (qs + qs * np.log(qs))
    )


def grad_v_diagonal(alpha: np.ndarray, z: float) -> np.ndarray:
    """Gradient of V at the diagonal point w = (z, ..., z), z > 0.

    Component j equals log(z/alpha_j)/alpha_j - log(z*beta)/(2*alpha_j) with
    beta = sum_j 1/alpha_j.  The minus of this vector is the maximizer in the
    conjugate's defining sup.
    """
    spec = PairedExponential(alpha)
    if not z > 0:
        raise UtilityError(f"z must be positive, got {z}")
    beta = np.sum(1.0 / spec.alpha)
    return (np.log(z / spec.alpha) - 0.5 * np.log(z * beta)) / spec.alpha
