"""Experiment configuration: JSON schema, validation, presets, provenance.

One JSON file describes a whole experiment: the scenario distribution, the
utility, and both trainers.  A single top-level seed drives scenario
generation (held-out set uses seed+1), network initialization and shuffle
order.  ``provenance`` lists which fields are defaults of this
implementation rather than values fixed by the underlying methodology, so
emitted results are explicit about what was assumed.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace

import numpy as np

from .dual import DualConfig
from .primal import PrimalConfig
from .scenario import (
    CommonShockBeta,
    CorrelatedGaussian,
    DistributionSpec,
    FixedSum,
    ScenarioError,
)
from .utility import ExpPlusAggregate, PairedExponential, UtilityError, UtilitySpec

# ten risk-aversion coefficients used by the reference 10-agent experiments
ALPHA_10 = (1.11, 1.20, 1.36, 1.89, 1.94, 2.04, 2.27, 2.33, 2.63, 2.99)
# aggregate weights for the 10-agent separable-plus-aggregate experiment
AGG_BETA_10 = (0.65, 0.96, 0.04, 0.72, 0.77, 0.15, 0.97, 0.60, 0.81, 0.89)

# config fields this implementation chose; the methodology fixes none of these
PAPER_SILENT_FIELDS = (
    "seed",
    "scenario.mean",
    "scenario.pairwise_correlation",
    "scenario.stdev",
    "scenario.truncation_sds",
    "primal.acceptance_level",
    "primal.mu",
    "primal.lambda_a",
    "primal.lr",
    "primal.epochs",
    "primal.batch_size",
    "primal.hidden_sizes",
    "primal.activation",
    "dual.acceptance_level",
    "dual.lambda_alpha",
    "dual.lr_psi",
    "dual.lr_theta",
    "dual.epochs",
    "dual.batch_size",
    "dual.hidden_sizes",
    "dual.activation",
)


class ConfigError(ValueError):
    """Raised when a config file is malformed; the message names the field."""


@dataclass
class ExperimentConfig:
    n_agents: int
    seed: int
    output_dir: str
    scenario: DistributionSpec
    utility: UtilitySpec
    primal: PrimalConfig
    dual: DualConfig
    run_oracle: bool = True

    def validate(self) -> None:
        if self.n_agents <= 0:
            raise ConfigError(f"n_agents: must be positive, got {self.n_agents}")
        if self.utility.n_agents != self.n_agents:
            raise ConfigError(
                f"utility.alpha: length {self.utility.n_agents} != n_agents {self.n_agents}"
            )
        if self.scenario.n_agents != self.n_agents:
            raise ConfigError(
                f"scenario: n_agents {self.scenario.n_agents} != n_agents {self.n_agents}"
            )
        try:
            self.scenario.validate()
        except ScenarioError as exc:
            raise ConfigError(f"scenario: {exc}") from None
        if self.primal.acceptance_level != self.dual.acceptance_level:
            raise ConfigError(
                "primal.acceptance_level: differs from dual.acceptance_level "
                f"({self.primal.acceptance_level} vs {self.dual.acceptance_level})"
            )
        if self.primal.acceptance_level >= self.utility.sup:
            raise ConfigError(
                f"primal.acceptance_level: must be below sup U = {self.utility.sup:g}"
            )
        if self.run_oracle and not isinstance(self.utility, PairedExponential):
            raise ConfigError(
                "run_oracle: closed form exists only for the paired_exponential utility"
            )
        try:
            self.primal.validate()
        except ValueError as exc:
            raise ConfigError(f"primal: {exc}") from None
        try:
            self.dual.validate()
        except ValueError as exc:
            raise ConfigError(f"dual: {exc}") from None

    def train_scenario_spec(self) -> DistributionSpec:
        return replace(self.scenario, seed=self.seed)

    def test_scenario_spec(self) -> DistributionSpec:
        return replace(self.scenario, seed=self.seed + 1)


def _kind_to_dict(kind) -> dict:
    if isinstance(kind, CorrelatedGaussian):
        return {
            "kind": "correlated_gaussian",
            "mean": np.asarray(kind.mean, dtype=float).tolist(),
            "pairwise_correlation": kind.pairwise_correlation,
            "stdev": np.asarray(kind.stdev, dtype=float).tolist(),
            "truncation_sds": kind.truncation_sds,
        }
    if isinstance(kind, CommonShockBeta):
        return {"kind": "common_shock_beta", "a": kind.a, "b": kind.b}
    if isinstance(kind, FixedSum):
        return {
            "kind": "fixed_sum",
            "target_sum": kind.target_sum,
            "base": _kind_to_dict(kind.base),
        }
    raise ConfigError(f"scenario.kind: unknown type {type(kind).__name__}")


def _kind_from_dict(d: dict, where: str):
    name = d.get("kind")
    if name == "correlated_gaussian":
        return CorrelatedGaussian(
            mean=_num_or_vec(d, "mean", where, 0.0),
            pairwise_correlation=float(d.get("pairwise_correlation", 0.3)),
            stdev=_num_or_vec(d, "stdev", where, 1.0),
            truncation_sds=float(d.get("truncation_sds", 6.0)),
        )
    if name == "common_shock_beta":
        return CommonShockBeta(a=float(d.get("a", 2.0)), b=float(d.get("b", 5.0)))
    if name == "fixed_sum":
        if "base" not in d:
            raise ConfigError(f"{where}.base: required for fixed_sum")
        base = _kind_from_dict(d["base"], f"{where}.base")
        if isinstance(base, FixedSum):
            raise ConfigError(f"{where}.base: must not itself be fixed_sum")
        return FixedSum(base=base, target_sum=float(d.get("target_sum", 15.0)))
    raise ConfigError(f"{where}.kind: unknown scenario kind {name!r}")


def _num_or_vec(d: dict, key: str, where: str, default: float):
    v = d.get(key, default)
    if isinstance(v, (int, float)):
        return float(v)
    try:
        return np.asarray(v, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{key}: expected number or list of numbers") from None


def _utility_from_dict(d: dict) -> UtilitySpec:
    name = d.get("kind")
    try:
        if name == "paired_exponential":
            return PairedExponential(np.asarray(d["alpha"], dtype=float))
        if name == "exp_plus_aggregate":
            return ExpPlusAggregate(
                np.asarray(d["alpha"], dtype=float),
                np.asarray(d["beta"], dtype=float),
                p=float(d.get("p", 2.0)),
            )
    except KeyError as exc:
        raise ConfigError(f"utility.{exc.args[0]}: required") from None
    except UtilityError as exc:
        raise ConfigError(f"utility: {exc}") from None
    raise ConfigError(f"utility.kind: unknown utility kind {name!r}")


def _utility_to_dict(u: UtilitySpec) -> dict:
    if isinstance(u, PairedExponential):
        return {"kind": "paired_exponential", "alpha": u.alpha.tolist()}
    if isinstance(u, ExpPlusAggregate):
        return {
            "kind": "exp_plus_aggregate",
            "alpha": u.alpha.tolist(),
            "beta": u.beta.tolist(),
            "p": u.p,
        }
    raise ConfigError(f"utility: {type(u).__name__} cannot be serialized")


def _solver_cfg(d: dict, cls, where: str, seed: int):
    known = {f for f in cls.__dataclass_fields__}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"{where}.{sorted(unknown)[0]}: unknown field")
    kwargs = dict(d)
    if "hidden_sizes" in kwargs:
        kwargs["hidden_sizes"] = tuple(int(v) for v in kwargs["hidden_sizes"])
    kwargs["seed"] = seed
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def from_dict(payload: dict) -> ExperimentConfig:
    """Build and validate an ExperimentConfig from a parsed JSON object."""
    if not isinstance(payload, dict):
        raise ConfigError("top level: expected a JSON object")
    for key in ("n_agents", "seed", "output_dir", "scenario", "utility"):
        if key not in payload:
            raise ConfigError(f"{key}: required")
    seed = int(payload["seed"])
    scen = payload["scenario"]
    if not isinstance(scen, dict) or "n_samples" not in scen:
        raise ConfigError("scenario.n_samples: required")
    kind = _kind_from_dict(scen, "scenario")
    spec = DistributionSpec(
        kind=kind,
        n_agents=int(payload["n_agents"]),
        n_samples=int(scen["n_samples"]),
        seed=seed,
    )
    primal_d = dict(payload.get("primal", {}))
    dual_d = dict(payload.get("dual", {}))
    primal_d.pop("seed", None)
    dual_d.pop("seed", None)
    cfg = ExperimentConfig(
        n_agents=int(payload["n_agents"]),
        seed=seed,
        output_dir=str(payload["output_dir"]),
        scenario=spec,
        utility=_utility_from_dict(payload["utility"]),
        primal=_solver_cfg(primal_d, PrimalConfig, "primal", seed),
        dual=_solver_cfg(dual_d, DualConfig, "dual", seed),
        run_oracle=bool(payload.get("run_oracle", True)),
    )
    cfg.validate()
    return cfg


def to_dict(cfg: ExperimentConfig) -> dict:
    """Inverse of :func:`from_dict`; the round trip is value-preserving."""
    scen = _kind_to_dict(cfg.scenario.kind)
    scen["n_samples"] = cfg.scenario.n_samples
    primal = asdict(cfg.primal)
    dual = asdict(cfg.dual)
    for d in (primal, dual):
        d.pop("seed")
        d["hidden_sizes"] = list(d["hidden_sizes"])
    return {
        "n_agents": cfg.n_agents,
        "seed": cfg.seed,
        "output_dir": cfg.output_dir,
        "run_oracle": cfg.run_oracle,
        "scenario": scen,
        "utility": _utility_to_dict(cfg.utility),
        "primal": primal,
        "dual": dual,
    }


def load(path: str) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"config file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file: invalid JSON: {exc}") from None
    return from_dict(payload)


def save(cfg: ExperimentConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")


def provenance(cfg: ExperimentConfig) -> dict:
    """Annotate which config fields are this implementation's defaults."""
    return {
        field: {"non_paper_default": True} for field in PAPER_SILENT_FIELDS
    } | {"optimizer": "plain SGD", "sample_split": "train seed, test seed+1"}


def benchmark_primal(seed: int) -> PrimalConfig:
    """Primal settings tuned on the 10-agent benchmarks (M = 50000).

    The dataclass defaults are deliberately left at the plain exposed values;
    these are the settings the shipped experiments are known to converge
    under: a stronger variance penalty with a weak, row-clipped hinge, a
    small net, and a decayed step size.
    """
    return PrimalConfig(
        seed=seed,
        mu=20.0,
        lambda_a=0.5,
        lr=5e-4,
        epochs=8000,
        hidden_sizes=(32, 32),
        pretrain_steps=3000,
    )


def benchmark_dual(seed: int) -> DualConfig:
    """Dual settings tuned alongside :func:`benchmark_primal`."""
    return DualConfig(
        seed=seed,
        lambda_alpha=0.5,
        lr_psi=1e-3,
        lr_theta=3e-2,
        epochs=8000,
        hidden_sizes=(32, 32),
        pretrain_steps=3000,
    )


def default_gaussian(
    n_samples: int = 50_000, seed: int = 20240601, output_dir: str = "runs/gaussian"
) -> ExperimentConfig:
    """Ten correlated Gaussian agents under the paired-exponential utility."""
    alpha = np.asarray(ALPHA_10)
    cfg = ExperimentConfig(
        n_agents=10,
        seed=seed,
        output_dir=output_dir,
        scenario=DistributionSpec(
            kind=CorrelatedGaussian(mean=0.0, pairwise_correlation=0.3, stdev=1.0, truncation_sds=6.0),
            n_agents=10,
            n_samples=n_samples,
            seed=seed,
        ),
        utility=PairedExponential(alpha),
        primal=benchmark_primal(seed),
        dual=benchmark_dual(seed),
        run_oracle=True,
    )
    cfg.validate()
    return cfg


def default_fixed_sum(
    target_sum: float = 15.0,
    n_samples: int = 50_000,
    seed: int = 20240601,
    output_dir: str = "runs/fixed_sum",
) -> ExperimentConfig:
    """Gaussian base conditioned (by uniform shift) on a deterministic total."""
    cfg = default_gaussian(n_samples=n_samples, seed=seed, output_dir=output_dir)
    cfg.scenario = replace(
        cfg.scenario,
        kind=FixedSum(base=cfg.scenario.kind, target_sum=target_sum),
    )
    cfg.validate()
    return cfg


def default_beta(
    n_samples: int = 50_000, seed: int = 20240601, output_dir: str = "runs/beta"
) -> ExperimentConfig:
    """Common-shock Beta(2, 5) scenarios under the paired-exponential utility."""
    cfg = default_gaussian(n_samples=n_samples, seed=seed, output_dir=output_dir)
    cfg.scenario = replace(cfg.scenario, kind=CommonShockBeta(a=2.0, b=5.0))
    cfg.validate()
    return cfg


def default_aggregate(
    n_samples: int = 50_000, seed: int = 20240601, output_dir: str = "runs/aggregate"
) -> ExperimentConfig:
    """Separable exponential utilities plus an aggregate exponential term.

    Runs on the bounded common-shock scenarios: with a bounded aggregate S
    the equal-count bins of the measurability score resolve the learned
    density, which heavy Gaussian tails structurally prevent.
    """
    cfg = default_beta(n_samples=n_samples, seed=seed, output_dir=output_dir)
    cfg.utility = ExpPlusAggregate(
        np.asarray(ALPHA_10), np.asarray(AGG_BETA_10), p=2.0
    )
    cfg.run_oracle = False
    cfg.validate()
    return cfg
