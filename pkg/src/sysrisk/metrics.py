"""Comparison metrics between trained solvers and the closed-form benchmark."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MetricsError(ValueError):
    """Raised for zero references, shape mismatches, or invalid binning."""


@dataclass
class MetricsReport:
    """One experiment's summary.  Oracle-relative fields are None when no
    closed form is available for the utility under test."""

    rho_hat_primal: float
    rho_hat_dual: float
    alpha_hat: float
    duality_gap: float
    fair_allocations_est: np.ndarray
    full_allocation_residual: float
    sigma_s_score: float
    abs_diff_rho: float | None = None
    abs_diff_alpha: float | None = None
    ord_rn: float | None = None
    ord_y: float | None = None
    ord_allocations: float | None = None
    fair_allocations_ref: np.ndarray | None = None


def ord_metric(estimate: np.ndarray, reference: np.ndarray) -> float:
    """Overall relative difference ||est - ref||_1 / ||ref||_1.

    Works for parameter vectors and for sampled random variables alike: with
    matching shapes the sample-size factor cancels, so the ratio of plain
    l1 norms covers both readings.  Matrices (sampled random vectors) are
    flattened.
    """
    est = np.asarray(estimate, dtype=float)
    ref = np.asarray(reference, dtype=float)
    if est.shape != ref.shape:
        raise MetricsError(f"shape mismatch: estimate {est.shape} vs reference {ref.shape}")
    denom = float(np.sum(np.abs(ref)))
    if denom == 0.0:
        raise MetricsError("reference has zero l1 norm; relative difference undefined")
    return float(np.sum(np.abs(est - ref)) / denom)


def fair_allocations(y_samples: np.ndarray, rn_samples: np.ndarray) -> np.ndarray:
    """Per-agent risk shares: mean of y_n weighted by the density samples."""
    y = np.asarray(y_samples, dtype=float)
    rn = np.asarray(rn_samples, dtype=float)
    if y.ndim != 2 or rn.ndim != 1 or y.shape[0] != rn.size:
        raise MetricsError(f"incompatible shapes: y {y.shape}, rn {rn.shape}")
    return np.mean(y * rn[:, None], axis=0)


def full_allocation_check(allocations: np.ndarray, rho_hat: float) -> float:
    """Absolute gap between the summed shares and the total risk."""
    return float(abs(np.sum(np.asarray(allocations, dtype=float)) - rho_hat))


def sigma_s_score(rn_samples: np.ndarray, s_values: np.ndarray, n_bins: int = 100) -> float:
    """How much of the density's variance is explained by the scenario total S.

    Samples are split into ``n_bins`` equal-count bins by S-order; the score
    is 1 - (within-bin variance / total variance), clamped to [0, 1].  A
    density that is a measurable function of S scores near 1.  Degenerate
    (constant) densities score exactly 1.
    """
    rn = np.asarray(rn_samples, dtype=float)
    s = np.asarray(s_values, dtype=float)
    if rn.ndim != 1 or s.shape != rn.shape:
        raise MetricsError(f"rn and s must be equal-length vectors, got {rn.shape} and {s.shape}")
    if n_bins < 2:
        raise MetricsError(f"n_bins must be at least 2, got {n_bins}")
    if rn.size < n_bins:
        raise MetricsError(f"need at least n_bins={n_bins} samples, got {rn.size}")
    total_var = float(np.var(rn))
    if total_var == 0.0:
        return 1.0
    order = np.argsort(s, kind="stable")
    within = 0.0
    for chunk in np.array_split(order, n_bins):
        vals = rn[chunk]
        within += float(np.sum((vals - vals.mean()) ** 2))
    within /= rn.size
    score = 1.0 - within / total_var
    return float(min(max(score, 0.0), 1.0))
