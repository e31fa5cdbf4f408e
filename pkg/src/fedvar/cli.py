"""Command-line reports: sigma, bound, train, sweep.

Every subcommand reads one INI config (all settings have defaults), writes
a delimited report to --out or stdout, and — when writing to a file —
renders a companion PNG unless --no-figures is passed.  Exit codes: 0 on
success, 2 for usage or configuration errors, 3 when a runtime constraint
is violated (privacy budget not met by the realized schedule, or a
diverging model).  The FEDVAR_THREADS environment variable caps worker
threads; results do not depend on it.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from . import figures
from .bounds import BoundParams, convexity_holds, estimate_heterogeneity, \
    optimal_M
from .config import (ConfigError, ExperimentConfig, build_datasets,
                     build_federation, build_model, emit, parse_file)
from .engine import probe_heterogeneity, run_training
from .privacy import (PrivacyBudget, calibrate_schedule,
                      sensitivity_from_clip, verify_account, account_for)

__all__ = ["main", "cmd_sigma", "cmd_bound", "cmd_train", "cmd_sweep"]

_EXIT_OK = 0
_EXIT_USAGE = 2
_EXIT_CONSTRAINT = 3

_SIGMA_COLUMNS = ["theta", "epsilon", "M", "sigma", "achieved_delta",
                  "satisfied", "variances"]
_BOUND_COLUMNS = ["theta", "epsilon", "M", "bound", "optimal", "convex"]
_TRAIN_COLUMNS = ["m", "theta", "epsilon", "sigma_in_force",
                  "variance_applied", "M_current", "test_loss",
                  "test_accuracy", "adjusted", "wall_ms"]
_SWEEP_COLUMNS = ["theta", "epsilon", "M", "final_loss", "final_accuracy"]


def _thread_budget() -> int:
    raw = os.environ.get("FEDVAR_THREADS", "1")
    try:
        count = int(raw)
    except ValueError:
        raise ConfigError(f"FEDVAR_THREADS must be an integer, got {raw!r}")
    if count < 1:
        raise ConfigError(f"FEDVAR_THREADS must be >= 1, got {count}")
    return count


def _format_cell(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_rows(columns, rows, out_path: str | None, delimiter: str) -> None:
    def dump(handle):
        writer = csv.writer(handle, delimiter=delimiter,
                            lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format_cell(row[c]) for c in columns])

    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="") as handle:
            dump(handle)
    else:
        dump(sys.stdout)


def _maybe_render(renderer, rows, out_path: str | None,
                  want_figures: bool) -> None:
    if out_path and want_figures and rows:
        target = renderer(rows, out_path)
        print(f"figure written to {target}", file=sys.stderr)


def _sensitivity(config: ExperimentConfig) -> float:
    _, _, partition = build_datasets(config)
    return sensitivity_from_clip(config.clip_norm,
                                 partition.min_shard_size())


def cmd_sigma(config: ExperimentConfig, out_path: str | None,
              want_figures: bool) -> int:
    """Calibrated amplitudes and budget verification over the (theta,
    epsilon) grid at the configured round count."""
    delta_s = _sensitivity(config)
    rounds = config.total_iters // config.local_iters
    q = config.num_sampled / config.num_users
    rows = []
    for theta in config.sweep_thetas:
        for epsilon in config.sweep_epsilons:
            budget = PrivacyBudget(epsilon=epsilon, delta=config.delta)
            if math.isinf(epsilon):
                sigma = 0.0
                variances = (0.0,) * rounds
                achieved, satisfied = 0.0, True
            else:
                schedule = calibrate_schedule(budget, q, delta_s, rounds,
                                              theta)
                sigma = schedule.sigma0
                variances = schedule.variances()
                check = verify_account(account_for(schedule), budget)
                achieved, satisfied = check.achieved_delta, check.satisfied
            rows.append({
                "theta": theta,
                "epsilon": epsilon,
                "M": rounds,
                "sigma": sigma,
                "achieved_delta": achieved,
                "satisfied": satisfied,
                "variances": ";".join(repr(v) for v in variances),
            })
    _write_rows(_SIGMA_COLUMNS, rows, out_path, config.delimiter)
    _maybe_render(figures.render_sigma, rows, out_path, want_figures)
    return _EXIT_OK


def _bound_params(config: ExperimentConfig, total_iters: int) -> BoundParams:
    dissimilarity = config.dissimilarity
    divergence = config.divergence
    if config.probe:
        train, _, partition = build_datasets(config)
        model = build_model(config, train.input_dim)
        grads, weights = probe_heterogeneity(model, train, partition,
                                             config.master_seed)
        probed = estimate_heterogeneity(grads, weights)
        dissimilarity = max(1.0, probed.dissimilarity)
        divergence = probed.divergence
    return BoundParams(
        smoothness=config.smoothness,
        lipschitz=config.lipschitz,
        step_size=config.step_size,
        pl_constant=config.pl_constant,
        dissimilarity=dissimilarity,
        divergence=divergence,
        initial_gap=config.initial_gap,
        num_users=config.num_users,
        num_sampled=config.num_sampled,
        total_iterations=total_iters,
    )


def cmd_bound(config: ExperimentConfig, out_path: str | None,
              want_figures: bool) -> int:
    """Loss-gap bound across all feasible round counts, optima marked."""
    delta_s = _sensitivity(config)
    q = config.num_sampled / config.num_users
    params = _bound_params(config, config.total_iters)
    rows = []
    for theta in config.sweep_thetas:
        for epsilon in config.sweep_epsilons:
            budget = PrivacyBudget(epsilon=epsilon, delta=config.delta)
            search = optimal_M(params, budget, q, delta_s, theta,
                               config.total_iters)
            for m, value in enumerate(search.g_values, start=1):
                rows.append({
                    "theta": theta,
                    "epsilon": epsilon,
                    "M": m,
                    "bound": value,
                    "optimal": m == search.m_star,
                    "convex": convexity_holds(params, theta,
                                              config.total_iters / m),
                })
    _write_rows(_BOUND_COLUMNS, rows, out_path, config.delimiter)
    _maybe_render(figures.render_bound, rows, out_path, want_figures)
    return _EXIT_OK


def cmd_train(config: ExperimentConfig, out_path: str | None,
              want_figures: bool) -> int:
    """One full training run, one report row per aggregation."""
    train, test, partition = build_datasets(config)
    model = build_model(config, train.input_dim)
    federation = build_federation(config)
    result = run_training(federation, model, train, partition, test=test,
                          num_threads=_thread_budget())
    rows = [{
        "m": r.round_index,
        "theta": config.theta,
        "epsilon": config.epsilon,
        "sigma_in_force": r.sigma_in_force,
        "variance_applied": r.noise_variance,
        "M_current": r.max_rounds_in_force,
        "test_loss": r.test_loss,
        "test_accuracy": r.test_accuracy,
        "adjusted": r.adjustment_triggered,
        "wall_ms": r.wall_ms,
    } for r in result.metrics]
    _write_rows(_TRAIN_COLUMNS, rows, out_path, config.delimiter)
    _maybe_render(figures.render_train, rows, out_path, want_figures)
    if result.budget_check is not None and not result.budget_check.satisfied:
        print(f"error: realized noise schedule misses the privacy budget "
              f"(achieved delta {result.budget_check.achieved_delta:.3e} > "
              f"{config.delta:.3e})", file=sys.stderr)
        return _EXIT_CONSTRAINT
    return _EXIT_OK


def cmd_sweep(config: ExperimentConfig, out_path: str | None,
              want_figures: bool) -> int:
    """Final metrics across the (theta, epsilon, M) product grid.

    Each point trains to completion with total iterations M * local_iters,
    so every run spends the same per-round noise budget shape but a
    different horizon; all points share the master seed.
    """
    points = [(theta, epsilon, rounds)
              for theta in config.sweep_thetas
              for epsilon in config.sweep_epsilons
              for rounds in config.sweep_max_rounds]
    train, test, partition = build_datasets(config)
    model = build_model(config, train.input_dim)

    def run_point(point):
        theta, epsilon, rounds = point
        federation = build_federation(
            config, epsilon=epsilon, theta=theta,
            total_iters=rounds * config.local_iters)
        return run_training(federation, model, train, partition, test=test)

    workers = _thread_budget()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_point, points))
    else:
        results = [run_point(p) for p in points]

    violations = []
    rows = []
    for (theta, epsilon, rounds), result in zip(points, results):
        last = result.metrics[-1]
        rows.append({
            "theta": theta,
            "epsilon": epsilon,
            "M": rounds,
            "final_loss": last.test_loss,
            "final_accuracy": last.test_accuracy,
        })
        if (result.budget_check is not None
                and not result.budget_check.satisfied):
            violations.append((theta, epsilon, rounds))
    rows.sort(key=lambda r: (r["theta"], r["epsilon"], r["M"]))
    _write_rows(_SWEEP_COLUMNS, rows, out_path, config.delimiter)
    _maybe_render(figures.render_sweep, rows, out_path, want_figures)
    if violations:
        for theta, epsilon, rounds in violations:
            print(f"error: budget missed at theta={theta:g} "
                  f"epsilon={epsilon:g} M={rounds}", file=sys.stderr)
        return _EXIT_CONSTRAINT
    return _EXIT_OK


_COMMANDS = {
    "sigma": cmd_sigma,
    "bound": cmd_bound,
    "train": cmd_train,
    "sweep": cmd_sweep,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedvar",
        description="federated training with an amplitude-varying "
                    "Gaussian noise schedule")
    subparsers = parser.add_subparsers(dest="command", required=True)
    help_lines = {
        "sigma": "calibrate the noise schedule and verify the budget",
        "bound": "evaluate the convergence bound and locate the optimum",
        "train": "run one federated training loop",
        "sweep": "train across a (theta, epsilon, M) grid",
    }
    for name, line in help_lines.items():
        sub = subparsers.add_parser(name, help=line, description=line)
        sub.add_argument("--config", metavar="PATH",
                         help="INI settings file (defaults used if omitted)")
        sub.add_argument("--seed", type=int, metavar="INT",
                         help="override the master seed")
        sub.add_argument("--out", metavar="PATH",
                         help="write the report here instead of stdout")
        sub.add_argument("--no-figures", action="store_true",
                         help="skip PNG rendering next to --out")
        sub.add_argument("--dump-config", action="store_true",
                         help="print the effective settings and exit")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.config:
            config = parse_file(args.config)
        else:
            config = ExperimentConfig()
        if args.seed is not None:
            config = ExperimentConfig(**{
                **{f: getattr(config, f) for f in config.__dataclass_fields__},
                "master_seed": args.seed})
        if args.dump_config:
            sys.stdout.write(emit(config))
            return _EXIT_OK
        return _COMMANDS[args.command](config, args.out,
                                       not args.no_figures)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_USAGE
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_CONSTRAINT


if __name__ == "__main__":
    sys.exit(main())
