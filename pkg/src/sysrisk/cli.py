"""Command-line pipeline: generate scenarios, run solvers, compare, report.

Typical run:

    sysrisk generate --config cfg.json
    sysrisk oracle   --config cfg.json
    sysrisk primal   --config cfg.json
    sysrisk dual     --config cfg.json
    sysrisk report   --config cfg.json

Every command reads one JSON config (see sysrisk.config), writes its
artifacts under the config's output_dir, and is deterministic for a given
config and seed: re-running a command reproduces byte-identical payloads.
Exit codes: 0 success, 2 config or usage error, 3 training divergence.

A held-out scenario set (generated from seed+1) accompanies the training
set; solvers train on the training set and every metric is reported for
both.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict

import numpy as np

from . import analytic, config, dual, metrics, nn, primal, scenario
from .config import ConfigError, ExperimentConfig
from .primal import TrainingDiverged
from .utility import eval_u

logger = logging.getLogger(__name__)

REPORT_BINS = 100


def _out_path(cfg: ExperimentConfig, name: str) -> str:
    os.makedirs(cfg.output_dir, exist_ok=True)
    return os.path.join(cfg.output_dir, name)


def _write_json(cfg: ExperimentConfig, name: str, payload: dict) -> None:
    with open(_out_path(cfg, name), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_pairs_csv(path: str, s: np.ndarray, rn: np.ndarray) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["s", "rn"])
        for a, b in zip(s, rn):
            writer.writerow([repr(float(a)), repr(float(b))])


def _read_pairs_csv(path: str) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) != 2:
            raise ConfigError(f"{path}: malformed pairs CSV")
        rows = [(float(a), float(b)) for a, b in reader]
    arr = np.asarray(rows, dtype=float)
    return arr[:, 0], arr[:, 1]


def _load_artifact(cfg: ExperimentConfig, name: str):
    path = os.path.join(cfg.output_dir, name)
    if not os.path.exists(path):
        raise ConfigError(f"missing artifact {path}; run the earlier pipeline stages first")
    if name.endswith(".json"):
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    return scenario.load_csv(path)


def _scenario_sets(cfg: ExperimentConfig) -> dict[str, scenario.ScenarioSet]:
    return {
        "train": _load_artifact(cfg, "scenarios_train.csv"),
        "test": _load_artifact(cfg, "scenarios_test.csv"),
    }


def _base_payload(cfg: ExperimentConfig) -> dict:
    return {"config": config.to_dict(cfg), "provenance": config.provenance(cfg)}


def cmd_generate(cfg: ExperimentConfig) -> dict:
    """Write scenarios_train.csv and scenarios_test.csv (held-out, seed+1)."""
    train = scenario.generate(cfg.train_scenario_spec())
    test = scenario.generate(cfg.test_scenario_spec())
    scenario.save_csv(train, _out_path(cfg, "scenarios_train.csv"))
    scenario.save_csv(test, _out_path(cfg, "scenarios_test.csv"))
    payload = _base_payload(cfg) | {
        "train_rows": train.n_samples,
        "test_rows": test.n_samples,
    }
    _write_json(cfg, "generate.json", payload)
    return payload


def cmd_oracle(cfg: ExperimentConfig) -> dict:
    """Closed-form solution on both scenario sets (paired exponential only)."""
    if not cfg.run_oracle:
        raise ConfigError("run_oracle: set it to true to run the oracle stage")
    sets = _scenario_sets(cfg)
    payload = _base_payload(cfg)
    for label, scen in sets.items():
        sol = analytic.solve(cfg.utility.alpha, cfg.primal.acceptance_level, scen)
        consts = sol.constants
        payload[label] = {
            "rho": sol.rho,
            "penalty_at_optimum": sol.penalty_at_optimum,
            "fair_allocations": sol.fair_allocations.tolist(),
            "dual_value_gap": analytic.dual_value_check(sol, scen),
            "constants": {
                "beta": consts.beta,
                "gamma_const": consts.gamma_const,
                "lambda_hat": consts.lambda_hat,
                "d_value": consts.d_value,
            },
        }
        y_set = scenario.ScenarioSet(data=sol.y_opt)
        scenario.save_csv(y_set, _out_path(cfg, f"oracle_y_{label}.csv"))
        _write_pairs_csv(
            _out_path(cfg, f"oracle_rn_{label}.csv"),
            scen.sum_per_scenario,
            sol.rn_derivative,
        )
    _write_json(cfg, "oracle.json", payload)
    return payload


def cmd_primal(cfg: ExperimentConfig) -> dict:
    """Train the allocation network; evaluate on the train and held-out sets."""
    sets = _scenario_sets(cfg)
    sol = primal.train(cfg.utility, sets["train"], cfg.primal)
    payload = _base_payload(cfg)
    for label, scen in sets.items():
        y = sol.y_samples if label == "train" else nn.forward(sol.net, scen.data)
        total = y.sum(axis=1)
        u_mean = float(np.mean(eval_u(cfg.utility, scen.data + y)))
        payload[label] = {
            "rho_hat": float(total.mean()),
            "variance_of_sum": float(total.var()),
            "acceptance_slack": float(cfg.primal.acceptance_level - u_mean),
        }
        y_set = scenario.ScenarioSet(data=y)
        scenario.save_csv(y_set, _out_path(cfg, f"primal_y_{label}.csv"))
    payload["train"]["diagnostics"] = sol.diagnostics
    with open(_out_path(cfg, "primal_net.json"), "w", encoding="utf-8") as fh:
        fh.write(nn.to_json(sol.net))
    _write_json(cfg, "primal.json", payload)
    return payload


def cmd_dual(cfg: ExperimentConfig) -> dict:
    """Train the adversarial pair; evaluate density and penalty on both sets."""
    sets = _scenario_sets(cfg)
    sol = dual.train(cfg.utility, sets["train"], cfg.dual)
    payload = _base_payload(cfg)
    for label, scen in sets.items():
        if label == "train":
            rn, alpha_hat, rho_hat = sol.rn_samples, sol.alpha_hat, sol.rho_hat
        else:
            rn = nn.forward(sol.theta, scen.data)[:, 0]
            alpha_hat = dual.loss_alpha(cfg.utility, sol.psi, sol.theta, scen, cfg.dual)
            rho_hat = float(np.mean(-scen.sum_per_scenario * rn)) - alpha_hat
        payload[label] = {"rho_hat": rho_hat, "alpha_hat": alpha_hat}
        _write_pairs_csv(
            _out_path(cfg, f"dual_rn_{label}.csv"), scen.sum_per_scenario, rn
        )
    payload["train"]["diagnostics"] = sol.diagnostics
    with open(_out_path(cfg, "psi_net.json"), "w", encoding="utf-8") as fh:
        fh.write(nn.to_json(sol.psi))
    with open(_out_path(cfg, "theta_net.json"), "w", encoding="utf-8") as fh:
        fh.write(nn.to_json(sol.theta))
    _write_json(cfg, "dual.json", payload)
    return payload


def _metrics_for(
    cfg: ExperimentConfig,
    scen: scenario.ScenarioSet,
    y_est: np.ndarray,
    rn_est: np.ndarray,
    primal_block: dict,
    dual_block: dict,
    oracle_block: dict | None,
    oracle_y: np.ndarray | None,
    oracle_rn: np.ndarray | None,
) -> metrics.MetricsReport:
    fair_est = metrics.fair_allocations(y_est, rn_est)
    rho_p = float(primal_block["rho_hat"])
    report = metrics.MetricsReport(
        rho_hat_primal=rho_p,
        rho_hat_dual=float(dual_block["rho_hat"]),
        alpha_hat=float(dual_block["alpha_hat"]),
        duality_gap=abs(float(primal_block["rho_hat"]) - float(dual_block["rho_hat"])),
        fair_allocations_est=fair_est,
        full_allocation_residual=metrics.full_allocation_check(fair_est, rho_p),
        # small sets get fewer bins so every bin keeps at least two samples
        sigma_s_score=metrics.sigma_s_score(
            rn_est, scen.sum_per_scenario, min(REPORT_BINS, scen.n_samples // 2)
        ),
    )
    if oracle_block is not None:
        fair_ref = np.asarray(oracle_block["fair_allocations"], dtype=float)
        report.abs_diff_rho = abs(rho_p - float(oracle_block["rho"]))
        report.abs_diff_alpha = abs(report.alpha_hat - float(oracle_block["penalty_at_optimum"]))
        report.ord_rn = _ord_or_none(rn_est, oracle_rn)
        report.ord_y = _ord_or_none(y_est, oracle_y)
        report.ord_allocations = _ord_or_none(fair_est, fair_ref)
        report.fair_allocations_ref = fair_ref
    return report


def _ord_or_none(est: np.ndarray, ref: np.ndarray) -> float | None:
    # a reference that is identically zero leaves the relative metric
    # undefined; the field is omitted instead of failing the report
    try:
        return metrics.ord_metric(est, ref)
    except metrics.MetricsError:
        logger.warning("ORD reference has zero norm; omitting the relative metric")
        return None


def _report_dict(report: metrics.MetricsReport) -> dict:
    d = asdict(report)
    for key, value in list(d.items()):
        if value is None:
            del d[key]
        elif isinstance(value, np.ndarray):
            d[key] = value.tolist()
    return d


def cmd_report(cfg: ExperimentConfig) -> dict:
    """Assemble the solver-vs-oracle comparison from the saved artifacts."""
    sets = _scenario_sets(cfg)
    primal_payload = _load_artifact(cfg, "primal.json")
    dual_payload = _load_artifact(cfg, "dual.json")
    oracle_payload = _load_artifact(cfg, "oracle.json") if cfg.run_oracle else None
    payload = _base_payload(cfg)
    for label, scen in sets.items():
        y_est = _load_artifact(cfg, f"primal_y_{label}.csv").data
        s_vals, rn_est = _read_pairs_csv(os.path.join(cfg.output_dir, f"dual_rn_{label}.csv"))
        if rn_est.size != scen.n_samples:
            raise ConfigError(f"dual_rn_{label}.csv does not match the scenario count")
        oracle_block = oracle_y = oracle_rn = None
        if oracle_payload is not None:
            oracle_block = oracle_payload[label]
            oracle_y = _load_artifact(cfg, f"oracle_y_{label}.csv").data
            _, oracle_rn = _read_pairs_csv(os.path.join(cfg.output_dir, f"oracle_rn_{label}.csv"))
        report = _metrics_for(
            cfg,
            scen,
            y_est,
            rn_est,
            primal_payload[label],
            dual_payload[label],
            oracle_block,
            oracle_y,
            oracle_rn,
        )
        payload[label] = _report_dict(report)
        if label == "test":
            path = _out_path(cfg, "report_rn_test.csv")
            with open(path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                if oracle_rn is not None:
                    writer.writerow(["s", "rn_learned", "rn_analytic"])
                    for a, b, c in zip(s_vals, rn_est, oracle_rn):
                        writer.writerow([repr(float(a)), repr(float(b)), repr(float(c))])
                else:
                    writer.writerow(["s", "rn_learned"])
                    for a, b in zip(s_vals, rn_est):
                        writer.writerow([repr(float(a)), repr(float(b))])
    _write_json(cfg, "report.json", payload)
    return payload


COMMANDS = {
    "generate": cmd_generate,
    "oracle": cmd_oracle,
    "primal": cmd_primal,
    "dual": cmd_dual,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sysrisk",
        description="Systemic shortfall risk: scenario generation, oracle, neural solvers, report.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__.splitlines()[0] if fn.__doc__ else None)
        p.add_argument("--config", required=True, help="path to the experiment JSON config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="override the config output_dir")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = config.load(args.config)
        if args.seed is not None:
            payload = config.to_dict(cfg)
            payload["seed"] = args.seed
            cfg = config.from_dict(payload)
        if args.out is not None:
            cfg.output_dir = args.out
        COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
