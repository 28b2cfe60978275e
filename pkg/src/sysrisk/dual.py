"""Adversarial estimation of the dual representation of the risk measure.

Two networks train against each other.  The allocation player Psi maps a
scenario to an N-vector Z and tries to maximize the penalty objective

    J_alpha = sum_n E[-Psi_n(X) Theta(X)] - lambda_alpha (B - E[U(Psi(X))])^+

for the current density, while the density player Theta (positive, batch
mean exactly 1 through its output head) ascends the dual objective

    J_dual = sum_n E[-X_n Theta(X)] - J_alpha.

Each epoch takes one gradient step for each player, both computed at the
epoch-start parameters.  Gradients flow through Theta's unit-mean
normalization.  The final estimates are the full-sample J_alpha and J_dual
under the frozen networks; the hinge term stays inside the reported
alpha_hat, with its residual logged separately.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .primal import WARM_START_STEP, TrainingDiverged, feasible_shift, pretrain_to_map
from .scenario import ScenarioSet
from .utility import UtilitySpec, eval_u, grad_u, hedge_weights

logger = logging.getLogger(__name__)

# the density player starts near the reference measure (output ~ 1)
THETA_OUTPUT_SCALE = 1e-2


@dataclass
class DualConfig:
    """Hyperparameters for the adversarial trainer.

    lr_psi / lr_theta are the two players' step sizes.  The oscillation
    detector flags a trailing-window swing of the dual objective larger than
    ``osc_bound``.
    """

    lambda_alpha: float = 10.0
    acceptance_level: float = -5.0
    lr_psi: float = 1e-3
    lr_theta: float = 1e-3
    epochs: int = 1000
    batch_size: int | None = None
    seed: int = 0
    hidden_sizes: tuple[int, ...] = (64, 64, 64)
    activation: str = "relu"
    osc_window: int = 50
    osc_bound: float = 1.0
    grad_clip: float = 1e5
    warm_start: str = "hedge"
    pretrain_steps: int = 500
    pretrain_lr: float = 1e-2
    lr_decay: float = 1.0

    def validate(self) -> None:
        if self.lambda_alpha < 0:
            raise ValueError(f"lambda_alpha must be nonnegative, got {self.lambda_alpha}")
        if not (self.lr_psi > 0 and self.lr_theta > 0):
            raise ValueError(f"learning rates must be positive, got {self.lr_psi}, {self.lr_theta}")
        if self.warm_start not in ("hedge", "cash"):
            raise ValueError(f"warm_start must be 'hedge' or 'cash', got {self.warm_start!r}")
        if self.pretrain_steps < 0 or not self.pretrain_lr > 0:
            raise ValueError(
                f"pretrain_steps must be >= 0 and pretrain_lr positive, got {self.pretrain_steps}, {self.pretrain_lr}"
            )
        if not self.grad_clip > 0:
            raise ValueError(f"grad_clip must be positive, got {self.grad_clip}")
        if not 0.0 <= self.lr_decay <= 1.0:
            raise ValueError(f"lr_decay must lie in [0, 1], got {self.lr_decay}")
        if self.epochs <= 0:
            raise ValueError(f"epochs must be positive, got {self.epochs}")
        if self.batch_size is not None and self.batch_size <= 0:
            raise ValueError(f"batch_size must be positive or None, got {self.batch_size}")
        if self.osc_window <= 1:
            raise ValueError(f"osc_window must exceed 1, got {self.osc_window}")


@dataclass
class DualSolution:
    """Frozen-network estimates on the full training sample."""

    rho_hat: float
    alpha_hat: float
    rn_samples: np.ndarray
    z_samples: np.ndarray
    loss_history: np.ndarray
    psi: nn.Mlp
    theta: nn.Mlp
    diagnostics: dict = field(default_factory=dict)


def loss_alpha(
    utility: UtilitySpec,
    psi: nn.Mlp,
    theta: nn.Mlp,
    batch: ScenarioSet | np.ndarray,
    cfg: DualConfig,
) -> float:
    """Empirical penalty objective J_alpha over one batch.

    In the players' gradients the density factor is a fixed weight for the
    allocation player; only the density player differentiates through Theta.
    """
    x = batch.data if isinstance(batch, ScenarioSet) else np.asarray(batch, dtype=float)
    dens = nn.forward(theta, x)[:, 0]
    z = nn.forward(psi, x)
    return _j_alpha(utility, z, dens, cfg)


def _j_alpha(utility: UtilitySpec, z: np.ndarray, dens: np.ndarray, cfg: DualConfig) -> float:
    slack = cfg.acceptance_level - float(np.mean(eval_u(utility, z)))
    return float(np.mean(-z.sum(axis=1) * dens)) - cfg.lambda_alpha * max(slack, 0.0)


def train(utility: UtilitySpec, scenarios: ScenarioSet, cfg: DualConfig) -> DualSolution:
    """Run the two-player SGD loop, then evaluate both objectives full-sample.

    Psi warm-starts like the primal net: fit to a feasible proportional hedge
    of the aggregate in "hedge" mode, or bias-shifted by a feasible uniform
    cash amount in "cash" mode.  Theta's last layer starts near zero so the
    initial density is close to 1 everywhere.  Raises
    :class:`TrainingDiverged` on non-finite losses or parameters.
    """
    cfg.validate()
    if scenarios.n_agents != utility.n_agents:
        raise ValueError(
            f"scenarios have {scenarios.n_agents} agents, utility has {utility.n_agents}"
        )
    x = scenarios.data
    m = scenarios.n_samples
    n = scenarios.n_agents
    seeds = np.random.SeedSequence(cfg.seed).spawn(4)
    psi = nn.Mlp(
        [n, *cfg.hidden_sizes, n],
        hidden_activation=cfg.activation,
        output_head="identity",
        seed=int(seeds[0].generate_state(1)[0]),
    )
    theta = nn.Mlp(
        [n, *cfg.hidden_sizes, 1],
        hidden_activation=cfg.activation,
        output_head="softplus_unit_mean",
        seed=int(seeds[1].generate_state(1)[0]),
    )
    theta.weights[-1] *= THETA_OUTPUT_SCALE
    psi.weights[-1] *= THETA_OUTPUT_SCALE
    pretrain_mse = None
    if cfg.warm_start == "hedge" and cfg.pretrain_steps > 0:
        # start the allocation player on the proportional hedge of the
        # aggregate, z = w*(s + t): the same S-linear family the primal warm
        # start uses, so only the per-agent offsets remain to be learned
        w = hedge_weights(utility)
        base = np.outer(scenarios.sum_per_scenario, w)
        warm = feasible_shift(utility, base, cfg.acceptance_level, direction=w)
        warm += WARM_START_STEP  # margin for imperfect fit
        target = base + warm * w[None, :]
        pretrain_mse = pretrain_to_map(
            psi, x, target, cfg.pretrain_steps, cfg.pretrain_lr, np.random.default_rng(seeds[3])
        )
    else:
        warm = feasible_shift(utility, nn.forward(psi, x), cfg.acceptance_level)
        psi.biases[-1] += warm

    shuffle_rng = np.random.default_rng(seeds[2])
    batch = m if cfg.batch_size is None else min(cfg.batch_size, m)
    history = np.empty(cfg.epochs)
    for epoch in range(cfg.epochs):
        if batch == m:
            xb = x
            sb = scenarios.sum_per_scenario
        else:
            idx = shuffle_rng.permutation(m)[:batch]
            xb = x[idx]
            sb = scenarios.sum_per_scenario[idx]
        mb = xb.shape[0]

        dens = nn.forward(theta, xb)[:, 0]
        z = nn.forward(psi, xb)
        z_total = z.sum(axis=1)
        slack = cfg.acceptance_level - float(np.mean(eval_u(utility, z)))
        j_alpha = float(np.mean(-z_total * dens)) - cfg.lambda_alpha * max(slack, 0.0)
        j_dual = float(np.mean(-sb * dens)) - j_alpha
        if not np.isfinite(j_dual):
            raise TrainingDiverged(f"non-finite loss at epoch {epoch}")

        # both players' gradients at the epoch-start parameters
        up_z = np.tile((dens / mb)[:, None], (1, z.shape[1]))
        if slack > 0.0:
            # same per-scenario norm cap as the primal trainer: bounded step,
            # row direction (the allocation shape) preserved
            gu = np.clip(grad_u(utility, z), -1e150, 1e150)
            norms = np.linalg.norm(gu, axis=1, keepdims=True)
            gu *= np.minimum(1.0, cfg.grad_clip / np.maximum(norms, 1e-300))
            up_z -= (cfg.lambda_alpha / mb) * gu
        up_dens = ((z_total - sb) / mb)[:, None]
        g_psi = nn.backward(psi, xb, up_z, loss_value=j_dual)
        g_theta = nn.backward(theta, xb, up_dens, loss_value=j_dual)
        # linear step-size decay quenches the players' oscillation at the end
        decay = 1.0 - cfg.lr_decay * epoch / cfg.epochs
        nn.sgd_step(psi, g_psi, cfg.lr_psi * decay, "descent")
        nn.sgd_step(theta, g_theta, cfg.lr_theta * decay, "ascent")
        if not (psi.params_finite() and theta.params_finite()):
            raise TrainingDiverged(f"non-finite parameters at epoch {epoch}")
        history[epoch] = j_dual

    rn = nn.forward(theta, x)[:, 0]
    z = nn.forward(psi, x)
    alpha_hat = _j_alpha(utility, z, rn, cfg)
    rho_hat = float(np.mean(-scenarios.sum_per_scenario * rn)) - alpha_hat

    window = history[-min(cfg.osc_window, cfg.epochs):]
    swing = float(window.max() - window.min())
    oscillating = swing > cfg.osc_bound
    if oscillating:
        logger.warning("dual objective swung %.3g over the last %d epochs", swing, window.size)
    hinge_residual = max(cfg.acceptance_level - float(np.mean(eval_u(utility, z))), 0.0)
    solution = DualSolution(
        rho_hat=rho_hat,
        alpha_hat=alpha_hat,
        rn_samples=rn,
        z_samples=z,
        loss_history=history,
        psi=psi,
        theta=theta,
        diagnostics={
            "warm_start_mode": cfg.warm_start,
            "warm_start_shift": warm,
            "pretrain_mse": pretrain_mse,
            "hinge_residual": hinge_residual,
            "trailing_swing": swing,
            "oscillation_warning": oscillating,
        },
    )
    logger.info("dual done: rho_hat=%.6f alpha_hat=%.6f swing=%.3g", rho_hat, alpha_hat, swing)
    return solution
