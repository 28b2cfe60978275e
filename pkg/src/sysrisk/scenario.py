"""Scenario generation for N-agent risk experiments.

Three generators are supported: equicorrelated (optionally truncated)
Gaussians, a common-shock Beta construction, and a fixed-sum wrapper that
shifts any base sample so the per-scenario total is a constant.  All
generation is driven by a single integer seed and is reproducible bit for
bit.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

_MAX_RESAMPLE_ROUNDS = 1000


class ScenarioError(ValueError):
    """Raised for invalid scenario specifications or malformed CSV files."""


@dataclass(frozen=True)
class CorrelatedGaussian:
    """Equicorrelated Gaussian marginals, truncated at ``truncation_sds``.

    ``mean`` and ``stdev`` may be scalars (broadcast to all agents) or
    per-agent vectors.  Truncation is componentwise: rows where any
    standardized coordinate leaves [-truncation_sds, truncation_sds] are
    redrawn.
    """

    mean: float | np.ndarray = 0.0
    pairwise_correlation: float = 0.3
    stdev: float | np.ndarray = 1.0
    truncation_sds: float = 6.0


@dataclass(frozen=True)
class CommonShockBeta:
    """X_n = Z_n + Z_{N+1} with Z_i iid Beta(a, b)."""

    a: float = 2.0
    b: float = 5.0


@dataclass(frozen=True)
class FixedSum:
    """Shift every base scenario uniformly so its components sum to ``target_sum``."""

    base: CorrelatedGaussian | CommonShockBeta
    target_sum: float = 15.0


Kind = CorrelatedGaussian | CommonShockBeta | FixedSum


@dataclass(frozen=True)
class DistributionSpec:
    """Full description of one scenario matrix: distribution kind plus shape and seed."""

    kind: Kind
    n_agents: int
    n_samples: int
    seed: int = 0

    def validate(self) -> None:
        if self.n_agents <= 0:
            raise ScenarioError(f"n_agents must be positive, got {self.n_agents}")
        if self.n_samples <= 0:
            raise ScenarioError(f"n_samples must be positive, got {self.n_samples}")
        kind = self.kind
        if isinstance(kind, FixedSum):
            if isinstance(kind.base, FixedSum):
                raise ScenarioError("FixedSum base must not itself be FixedSum")
            kind = kind.base
        if isinstance(kind, CorrelatedGaussian):
            n = self.n_agents
            r = kind.pairwise_correlation
            # equicorrelation matrix is positive definite iff r in (-1/(N-1), 1)
            low = -1.0 / (n - 1) if n > 1 else -1.0
            if not (low < r < 1.0):
                raise ScenarioError(
                    f"pairwise_correlation {r} outside positive-definite range "
                    f"({low}, 1) for {n} agents"
                )
            if kind.truncation_sds <= 0:
                raise ScenarioError(
                    f"truncation_sds must be positive, got {kind.truncation_sds}"
                )
            for name in ("mean", "stdev"):
                v = np.atleast_1d(np.asarray(getattr(kind, name), dtype=float))
                if v.size not in (1, n):
                    raise ScenarioError(
                        f"{name} must be scalar or length {n}, got length {v.size}"
                    )
            if np.any(np.atleast_1d(np.asarray(kind.stdev, dtype=float)) < 0):
                raise ScenarioError("stdev entries must be nonnegative")
        elif isinstance(kind, CommonShockBeta):
            if kind.a <= 0 or kind.b <= 0:
                raise ScenarioError(
                    f"Beta shape parameters must be positive, got a={kind.a}, b={kind.b}"
                )
        else:
            raise ScenarioError(f"unknown scenario kind {type(kind).__name__}")


@dataclass
class ScenarioSet:
    """Matrix of scenarios (one row per scenario) plus cached per-row sums.

    ``spec`` is None for sets loaded from CSV, which carries no generation
    metadata.
    """

    data: np.ndarray
    spec: DistributionSpec | None = None
    sum_per_scenario: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 2 or self.data.size == 0:
            raise ScenarioError(f"scenario data must be a nonempty 2-d array, got shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ScenarioError("scenario data contains non-finite entries")
        self.sum_per_scenario = self.data.sum(axis=1)

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def n_agents(self) -> int:
        return self.data.shape[1]


def _expand(value: float | np.ndarray, n: int) -> np.ndarray:
    v = np.atleast_1d(np.asarray(value, dtype=float))
    if v.size == 1:
        return np.full(n, float(v[0]))
    return v.copy()


def _draw_gaussian(kind: CorrelatedGaussian, n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    mean = _expand(kind.mean, n)
    stdev = _expand(kind.stdev, n)
    r = kind.pairwise_correlation
    corr = np.full((n, n), r)
    np.fill_diagonal(corr, 1.0)
    chol = np.linalg.cholesky(corr)

    def draw_rows(k: int) -> np.ndarray:
        z = rng.standard_normal((k, n)) @ chol.T
        return z

    z = draw_rows(m)
    # resample rows whose standardized coordinates exceed the truncation bound
    for _ in range(_MAX_RESAMPLE_ROUNDS):
        bad = np.any(np.abs(z) > kind.truncation_sds, axis=1)
        n_bad = int(bad.sum())
        if n_bad == 0:
            break
        z[bad] = draw_rows(n_bad)
    else:
        raise ScenarioError(
            f"truncation at {kind.truncation_sds} sd rejected samples for "
            f"{_MAX_RESAMPLE_ROUNDS} rounds; bound too tight"
        )
    return mean[None, :] + stdev[None, :] * z


def _draw_common_shock_beta(kind: CommonShockBeta, n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.beta(kind.a, kind.b, size=(m, n + 1))
    return z[:, :n] + z[:, n:]


def generate(spec: DistributionSpec) -> ScenarioSet:
    """Generate the scenario matrix described by ``spec``.

    Identical specs (seed included) produce bit-identical matrices.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    kind = spec.kind
    target = None
    if isinstance(kind, FixedSum):
        target = kind.target_sum
        kind = kind.base
    if isinstance(kind, CorrelatedGaussian):
        data = _draw_gaussian(kind, spec.n_agents, spec.n_samples, rng)
    else:
        data = _draw_common_shock_beta(kind, spec.n_agents, spec.n_samples, rng)
    if target is not None:
        # uniform per-scenario shift: adds the same amount to every agent
        shift = (target - data.sum(axis=1)) / spec.n_agents
        data = data + shift[:, None]
    logger.debug("generated %d scenarios for %d agents (seed %d)", spec.n_samples, spec.n_agents, spec.seed)
    return ScenarioSet(data=data, spec=spec)


def save_csv(scenarios: ScenarioSet, path: str) -> None:
    """Write one scenario per row under an agent_1..agent_N header.

    Values are written with repr, which round-trips float64 exactly
    (shortest representation with up to 17 significant digits).
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"agent_{j + 1}" for j in range(scenarios.n_agents)])
        for row in scenarios.data:
            writer.writerow([repr(float(v)) for v in row])


def load_csv(path: str) -> ScenarioSet:
    """Read a scenario matrix written by :func:`save_csv`. The round trip is value-exact."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ScenarioError(f"{path}: empty file")
        expected = [f"agent_{j + 1}" for j in range(len(header))]
        if header != expected:
            raise ScenarioError(f"{path}: malformed header {header[:4]}...")
        rows = []
        for i, row in enumerate(reader):
            if len(row) != len(header):
                raise ScenarioError(f"{path}: row {i + 1} has {len(row)} fields, expected {len(header)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise ScenarioError(f"{path}: row {i + 1}: {exc}") from None
    if not rows:
        raise ScenarioError(f"{path}: no data rows")
    return ScenarioSet(data=np.asarray(rows, dtype=float), spec=None)
