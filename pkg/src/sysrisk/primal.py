"""Neural estimation of the systemic risk value and its scenario allocations.

A single network maps each scenario to the N allocation components.  The
training objective is the batch mean of the summed allocations plus two
penalties: ``mu`` times the batch variance of the sum (the optimal summed
allocation is deterministic, so variance is pure slack) and ``lambda_a``
times the hinge of the acceptance constraint ``E[U(X + Y)] >= B``.  Plain
SGD; the hinge subgradient at the kink is taken as 0.

The reported risk estimate is the plain full-sample mean of the summed
allocations under the final parameters, without penalty terms; both penalty
magnitudes are reported alongside as diagnostics.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .scenario import ScenarioSet
from .utility import UtilitySpec, eval_u, grad_u, hedge_weights

logger = logging.getLogger(__name__)

WARM_START_STEP = 0.5
WARM_START_MAX = 200.0
# shrink the freshly initialized output layer so training starts from a
# near-constant allocation map; the warm-start bias then controls the scale
OUTPUT_SCALE = 1e-2
PRETRAIN_BATCH = 4096


class TrainingDiverged(RuntimeError):
    """Raised when a loss or parameter becomes non-finite during training."""


@dataclass
class PrimalConfig:
    """Hyperparameters for the allocation trainer.

    ``batch_size`` None means full-batch updates; otherwise fixed-size
    mini-batches in a seed-derived shuffle order.  Network width/depth and
    the activation are exposed because the source material fixes neither.
    """

    mu: float = 10.0
    lambda_a: float = 10.0
    acceptance_level: float = -5.0
    lr: float = 1e-3
    epochs: int = 1000
    batch_size: int | None = None
    seed: int = 0
    hidden_sizes: tuple[int, ...] = (64, 64, 64)
    activation: str = "relu"
    grad_clip: float = 1e5
    warm_start: str = "hedge"
    pretrain_steps: int = 500
    pretrain_lr: float = 1e-2
    lr_decay: float = 1.0

    def validate(self) -> None:
        if self.mu < 0 or self.lambda_a < 0:
            raise ValueError(f"penalty weights must be nonnegative, got mu={self.mu}, lambda_a={self.lambda_a}")
        if self.warm_start not in ("hedge", "cash"):
            raise ValueError(f"warm_start must be 'hedge' or 'cash', got {self.warm_start!r}")
        if self.pretrain_steps < 0 or not self.pretrain_lr > 0:
            raise ValueError(
                f"pretrain_steps must be >= 0 and pretrain_lr positive, got {self.pretrain_steps}, {self.pretrain_lr}"
            )
        if not 0.0 <= self.lr_decay <= 1.0:
            raise ValueError(f"lr_decay must lie in [0, 1], got {self.lr_decay}")
        if not self.lr > 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.epochs <= 0:
            raise ValueError(f"epochs must be positive, got {self.epochs}")
        if self.batch_size is not None and self.batch_size <= 0:
            raise ValueError(f"batch_size must be positive or None, got {self.batch_size}")
        if not self.grad_clip > 0:
            raise ValueError(f"grad_clip must be positive, got {self.grad_clip}")


@dataclass
class PrimalSolution:
    """Trained allocation map evaluated on the full training sample."""

    rho_hat: float
    y_samples: np.ndarray
    variance_of_sum: float
    acceptance_slack: float
    loss_history: np.ndarray
    net: nn.Mlp
    diagnostics: dict = field(default_factory=dict)


def loss_primal(
    utility: UtilitySpec, net: nn.Mlp, batch: ScenarioSet | np.ndarray, cfg: PrimalConfig
) -> tuple[float, np.ndarray]:
    """Penalized batch objective and its gradient w.r.t. the net outputs.

    Returns ``(loss, upstream)`` where ``upstream`` seeds
    :func:`sysrisk.nn.backward`.  Calls ``forward`` itself, so the net's
    cache matches the batch afterwards.
    """
    x = batch.data if isinstance(batch, ScenarioSet) else np.asarray(batch, dtype=float)
    y = nn.forward(net, x)
    m = x.shape[0]
    total = y.sum(axis=1)
    mean_total = float(total.mean())
    var_total = float(total.var())
    u_mean = float(np.mean(eval_u(utility, x + y)))
    slack = cfg.acceptance_level - u_mean
    loss = mean_total + cfg.mu * var_total + cfg.lambda_a * max(slack, 0.0)

    upstream = np.full_like(y, 1.0 / m)
    upstream += (2.0 * cfg.mu / m) * (total - mean_total)[:, None]
    if slack > 0.0:
        # subgradient of the hinge; exactly at the kink the 0 branch applies
        gu = np.clip(grad_u(utility, x + y), -1e150, 1e150)
        # tail scenarios can carry utility gradients many orders of magnitude
        # above the bulk; capping each row's norm bounds the step while
        # preserving the row's direction, which carries the allocation shape
        norms = np.linalg.norm(gu, axis=1, keepdims=True)
        gu *= np.minimum(1.0, cfg.grad_clip / np.maximum(norms, 1e-300))
        upstream -= (cfg.lambda_a / m) * gu
    return float(loss), upstream


def feasible_shift(
    utility: UtilitySpec,
    base: np.ndarray,
    level: float,
    direction: np.ndarray | None = None,
) -> float:
    """Smallest grid multiple t of a cash add-on with E[U(base + t*direction)] >= level.

    ``direction`` defaults to a uniform unit add-on per agent.  Used to
    warm-start trainers inside the acceptance region, where utility gradients
    are moderate.  Deterministic.
    """
    d = np.ones(utility.n_agents) if direction is None else np.asarray(direction, dtype=float)
    t = 0.0
    while t <= WARM_START_MAX:
        if float(np.mean(eval_u(utility, base + t * d[None, :]))) >= level:
            return t
        t += WARM_START_STEP
    raise TrainingDiverged(
        f"no feasible shift up to {WARM_START_MAX}; acceptance level {level} unattainable"
    )


def pretrain_to_map(
    net: nn.Mlp, x: np.ndarray, target: np.ndarray, steps: int, lr: float, rng: np.random.Generator
) -> float:
    """Fit the net to a target map by mini-batch least squares; returns final mse."""
    m = x.shape[0]
    batch = min(PRETRAIN_BATCH, m)
    mse = float(np.mean((nn.forward(net, x) - target) ** 2))
    for _ in range(steps):
        idx = rng.integers(0, m, size=batch) if batch < m else slice(None)
        xb, tb = x[idx], target[idx]
        resid = nn.forward(net, xb) - tb
        grads = nn.backward(net, xb, resid / xb.shape[0], loss_value=float(np.mean(resid**2)))
        nn.sgd_step(net, grads, lr, "descent")
        if not net.params_finite():
            raise TrainingDiverged("non-finite parameters during warm-start fit")
    mse = float(np.mean((nn.forward(net, x) - target) ** 2))
    return mse


def train(utility: UtilitySpec, scenarios: ScenarioSet, cfg: PrimalConfig) -> PrimalSolution:
    """Run the SGD loop and evaluate the final network on the full sample.

    Warm start: in "hedge" mode the net is first fit to a feasible
    proportional hedge of the aggregate loss (see
    :func:`sysrisk.utility.hedge_weights`); in "cash" mode the output bias is
    shifted by a feasible uniform cash amount.  Raises
    :class:`TrainingDiverged` (with the epoch index) if the loss or any
    parameter goes non-finite.
    """
    cfg.validate()
    if scenarios.n_agents != utility.n_agents:
        raise ValueError(
            f"scenarios have {scenarios.n_agents} agents, utility has {utility.n_agents}"
        )
    x = scenarios.data
    m = scenarios.n_samples
    seeds = np.random.SeedSequence(cfg.seed).spawn(3)
    net = nn.Mlp(
        [scenarios.n_agents, *cfg.hidden_sizes, scenarios.n_agents],
        hidden_activation=cfg.activation,
        output_head="identity",
        seed=int(seeds[0].generate_state(1)[0]),
    )
    net.weights[-1] *= OUTPUT_SCALE

    pretrain_mse = None
    if cfg.warm_start == "hedge" and cfg.pretrain_steps > 0:
        # start from a proportional hedge of the aggregate: y = -x + w*(s + t)
        # keeps every per-scenario utility gradient moderate, so the hinge
        # never sees the huge gradients a pure cash start produces on tails
        w = hedge_weights(utility)
        base = np.outer(scenarios.sum_per_scenario, w)
        warm = feasible_shift(utility, base, cfg.acceptance_level, direction=w)
        warm += WARM_START_STEP  # margin for imperfect fit
        target = base + warm * w[None, :] - x
        pretrain_mse = pretrain_to_map(
            net, x, target, cfg.pretrain_steps, cfg.pretrain_lr, np.random.default_rng(seeds[2])
        )
    else:
        warm = feasible_shift(utility, x + nn.forward(net, x), cfg.acceptance_level)
        net.biases[-1] += warm

    shuffle_rng = np.random.default_rng(seeds[1])
    batch = m if cfg.batch_size is None else min(cfg.batch_size, m)
    history = np.empty(cfg.epochs)
    for epoch in range(cfg.epochs):
        if batch == m:
            xb = x
        else:
            idx = shuffle_rng.permutation(m)[:batch]
            xb = x[idx]
        loss, upstream = loss_primal(utility, net, xb, cfg)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
        grads = nn.backward(net, xb, upstream, loss_value=loss)
        # linear step-size decay quenches the boundary oscillation so the
        # final parameters settle at the constraint instead of mid-swing
        lr_t = cfg.lr * (1.0 - cfg.lr_decay * epoch / cfg.epochs)
        nn.sgd_step(net, grads, lr_t, "descent")
        if not net.params_finite():
            raise TrainingDiverged(f"non-finite parameters at epoch {epoch}")
        history[epoch] = loss

    y = nn.forward(net, x)
    total = y.sum(axis=1)
    rho_hat = float(total.mean())
    u_mean = float(np.mean(eval_u(utility, x + y)))
    solution = PrimalSolution(
        rho_hat=rho_hat,
        y_samples=y,
        variance_of_sum=float(total.var()),
        acceptance_slack=float(cfg.acceptance_level - u_mean),
        loss_history=history,
        net=net,
        diagnostics={
            "warm_start_mode": cfg.warm_start,
            "warm_start_shift": warm,
            "pretrain_mse": pretrain_mse,
            "mean_utility": u_mean,
            "final_loss": float(history[-1]),
        },
    )
    logger.info(
        "primal done: rho_hat=%.6f var_sum=%.3e slack=%.3e",
        rho_hat,
        solution.variance_of_sum,
        solution.acceptance_slack,
    )
    return solution
