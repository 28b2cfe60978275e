"""Systemic shortfall risk measures: closed-form benchmark, neural primal and
dual solvers, and fair risk allocations for N-agent systems."""

from . import analytic, cli, config, dual, metrics, nn, primal, scenario, utility

__all__ = [
    "analytic",
    "cli",
    "config",
    "dual",
    "metrics",
    "nn",
    "primal",
    "scenario",
    "utility",
]

__version__ = "0.1.0"
