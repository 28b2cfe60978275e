"""Closed-form benchmark for the paired-exponential utility.

For ``U(x) = N^2/2 - (sum_n exp(-alpha_n x_n))^2 / 2`` the systemic
shortfall risk measure, its optimal scenario-dependent allocation, the
worst-case probability change of measure, and the dual penalty all have
explicit formulas driven by the per-scenario total ``S = sum_n X_n``.  The
one expectation involved, ``E[exp(-2 S / beta)]``, is evaluated as a sample
mean over the supplied scenario set, which makes every identity below hold
sample-exactly and keeps comparisons against trained solvers on the same
footing.

Conventions: ``beta = sum_j 1/alpha_j``, ``gamma_const = sum_j
log(1/alpha_j)/alpha_j``, ``lambda_hat = (N^2 - 2B)/beta``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import ScenarioSet
from .utility import PairedExponential


class AnalyticError(ValueError):
    """Raised for acceptance levels at or above sup U, or malformed inputs."""


@dataclass(frozen=True)
class PairedExpConstants:
    """Scalar constants entering every closed-form expression."""

    beta: float
    gamma_const: float
    lambda_hat: float
    d_value: float
    a_terms: np.ndarray


@dataclass
class AnalyticSolution:
    """Closed-form risk, allocations, density and penalty on one scenario set."""

    rho: float
    y_opt: np.ndarray
    rn_derivative: np.ndarray
    penalty_at_optimum: float
    fair_allocations: np.ndarray
    constants: PairedExpConstants


def _validated(alpha: np.ndarray, acceptance_level: float) -> PairedExponential:
    spec = PairedExponential(alpha)
    if not np.isfinite(acceptance_level) or acceptance_level >= spec.sup:
        raise AnalyticError(
            f"acceptance level must be below sup U = {spec.sup:g}, got {acceptance_level}"
        )
    return spec


def compute_constants(alpha: np.ndarray, acceptance_level: float, scenarios: ScenarioSet) -> PairedExpConstants:
    """Evaluate beta, gamma_const, lambda_hat, the per-agent log terms and d.

    d depends on the scenarios only through the sample mean of
    exp(-2 S / beta).
    """
    spec = _validated(alpha, acceptance_level)
    if scenarios.n_agents != spec.n_agents:
        raise AnalyticError(
            f"scenarios have {scenarios.n_agents} agents, alpha has {spec.n_agents}"
        )
    a = spec.alpha
    n = spec.n_agents
    beta = float(np.sum(1.0 / a))
    a_terms = np.log(1.0 / a) / a
    gamma_const = float(np.sum(a_terms))
    lambda_hat = (n**2 - 2.0 * acceptance_level) / beta
    s = scenarios.sum_per_scenario
    tilt_mean = float(np.mean(np.exp(-2.0 * s / beta)))
    d_value = 0.5 * beta * float(np.log(beta**2 / (n**2 - 2.0 * acceptance_level) * tilt_mean))
    return PairedExpConstants(
        beta=beta,
        gamma_const=gamma_const,
        lambda_hat=lambda_hat,
        d_value=d_value,
        a_terms=a_terms,
    )


def allocation_at(constants: PairedExpConstants, alpha: np.ndarray, scenarios: ScenarioSet) -> np.ndarray:
    """Closed-form allocation map with frozen constants, on any scenario set.

    Per scenario, agent n receives
    ``y_n = -x_n + (S + d)/(beta alpha_n) - log(1/alpha_n)/alpha_n``.  Holding
    d fixed lets a map fitted on one sample be applied to held-out draws for
    out-of-sample feasibility checks.
    """
    a = PairedExponential(alpha).alpha
    if scenarios.n_agents != a.size:
        raise AnalyticError(
            f"scenarios have {scenarios.n_agents} agents, alpha has {a.size}"
        )
    s = scenarios.sum_per_scenario
    return (
        -scenarios.data
        + (s[:, None] + constants.d_value) / (constants.beta * a[None, :])
        - constants.a_terms[None, :]
    )


def solve(alpha: np.ndarray, acceptance_level: float, scenarios: ScenarioSet) -> AnalyticSolution:
    """Full closed-form solution on the given scenario set.

    The allocation follows :func:`allocation_at` with constants fitted on
    this same set; the change of measure is the normalized exponential tilt
    of S.  Row sums of y_opt are the constant rho = d - gamma_const; the
    density averages exactly 1 by construction.
    """
    consts = compute_constants(alpha, acceptance_level, scenarios)
    s = scenarios.sum_per_scenario
    rho = consts.d_value - consts.gamma_const
    y_opt = allocation_at(consts, alpha, scenarios)
    tilt = np.exp(-2.0 * s / consts.beta)
    rn = tilt / tilt.mean()
    entropy = float(np.mean(rn * np.log(rn)))
    penalty_at_optimum = (
        consts.gamma_const
        - 0.5 * consts.beta * np.log(consts.beta)
        + 0.5 * consts.beta * np.log(consts.lambda_hat)
        + 0.5 * consts.beta * entropy
    )
    fair = np.mean(y_opt * rn[:, None], axis=0)
    return AnalyticSolution(
        rho=float(rho),
        y_opt=y_opt,
        rn_derivative=rn,
        penalty_at_optimum=float(penalty_at_optimum),
        fair_allocations=fair,
        constants=consts,
    )


def penalty(alpha: np.ndarray, acceptance_level: float, rn_samples: np.ndarray) -> float:
    """Dual penalty of the measure described by density samples ``rn_samples``.

    The samples must be strictly positive with sample mean 1 (the density of
    an equivalent probability change of measure).  Uses the convention
    0*log(0) = 0 through the positive-samples requirement: entries may be
    arbitrarily small but not zero.
    """
    spec = _validated(alpha, acceptance_level)
    rn = np.asarray(rn_samples, dtype=float)
    if rn.ndim != 1 or rn.size == 0:
        raise AnalyticError(f"rn_samples must be a nonempty vector, got shape {rn.shape}")
    if np.any(rn <= 0):
        raise AnalyticError("rn_samples must be strictly positive")
    mean = float(rn.mean())
    if abs(mean - 1.0) > 1e-8:
        raise AnalyticError(f"rn_samples must average 1, got {mean!r}")
    a = spec.alpha
    n = spec.n_agents
    beta = float(np.sum(1.0 / a))
    gamma_const = float(np.sum(np.log(1.0 / a) / a))
    lambda_hat = (n**2 - 2.0 * acceptance_level) / beta
    entropy = float(np.mean(rn * np.log(rn)))
    return (
        gamma_const
        - 0.5 * beta * np.log(beta)
        + 0.5 * beta * np.log(lambda_hat)
        + 0.5 * beta * entropy
    )


def dual_value_check(solution: AnalyticSolution, scenarios: ScenarioSet) -> float:
    """Gap | rho - (sum_n mean(-X_n rn) - penalty) |; zero up to rounding.

    The dual objective at the worst-case measure reproduces the primal value
    sample-exactly because d uses the same sample mean.
    """
    if scenarios.n_samples != solution.rn_derivative.size:
        raise AnalyticError("scenario count does not match the solution's sample count")
    rn = solution.rn_derivative
    dual_value = float(np.mean(-scenarios.sum_per_scenario * rn)) - solution.penalty_at_optimum
    return abs(solution.rho - dual_value)
