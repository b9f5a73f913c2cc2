"""Command-line experiment runner.

    infofilter <subcommand> --config <path> [--seed <u64>] [--output <dir>]

Subcommands: ``simulate`` (one policy, one cost), ``bound``, ``tune``,
``sweep`` and ``fit-prior``. Every run writes ``manifest.json`` next to its
tables; results tables share the columns in :data:`ResultRow.FIELDS`.
Set ``INFOFILTER_WORKERS`` to override the number of worker processes.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import platform
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from ._random import STREAM_BOUND, STREAM_EVAL, STREAM_TUNE, seed_sequence
from .bounds import combined_bound
from .config import build_instance, fit_prior, parse_config
from .dp import DpCache
from .errors import ConfigurationError, IngestionError, InfoFilterError
from .kernels import BACKEND
from .simulator import (
    ResultRow,
    bound_rows,
    estimate_policy_value,
    run_cost_sweep,
    tune_alpha,
)

WORKERS_ENV = "INFOFILTER_WORKERS"
SUBCOMMANDS = ("simulate", "bound", "tune", "sweep", "fit-prior")


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_table(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_results(path, rows):
    write_table(path, ResultRow.FIELDS,
                ([getattr(r, f) for f in ResultRow.FIELDS] for r in rows))


def _workers(cfg):
    text = os.environ.get(WORKERS_ENV)
    if text is None or text == "":
        return cfg.execution.workers
    try:
        n = int(text)
    except ValueError:
        raise ConfigurationError(f"{WORKERS_ENV} must be a positive integer, got {text!r}")
    if n < 1:
        raise ConfigurationError(f"{WORKERS_ENV} must be a positive integer, got {text!r}")
    return n


def _output_dir(cfg):
    out = cfg.execution.output
    if out is None:
        raise ConfigurationError("an output directory is required (--output or execution.output)")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _single_cost(costs, what):
    if len(costs) != 1:
        raise ConfigurationError(f"{what} takes a single cost, got {len(costs)}")
    return costs[0]


# ----------------------------------------------------------------------------
# subcommands; each returns (rows, extra info for the manifest)


def cmd_simulate(cfg, out):
    instance, costs, thetas = build_instance(cfg)
    instance = instance.with_cost(_single_cost(costs, "simulate"))
    configs = cfg.policy_configs()
    if len(configs) != 1:
        raise ConfigurationError(f"simulate takes exactly one policy, got {len(configs)}")
    config = configs[0]
    seed = cfg.seed
    cache = DpCache()
    info = {}
    if config.kind.tunable and config.alpha is None:
        alpha, _ = tune_alpha(instance, config.kind,
                              cfg.execution.tune_episodes or cfg.execution.episodes,
                              seed_sequence(seed, STREAM_TUNE), cfg.alpha_grid, cache, thetas,
                              config.settings, config.bins)
        config = replace(config, alpha=alpha)
        info["tuned_alpha"] = alpha
    est = estimate_policy_value(instance, config, cfg.execution.episodes,
                                seed_sequence(seed, STREAM_EVAL), thetas, cache)
    info["truncation_tail"] = est.truncation_tail
    alpha = config.alpha if config.kind.tunable else None
    rows = [ResultRow(cfg.experiment, instance.cost, config.label, alpha, est.mean,
                      est.stderr, est.ci95_low, est.ci95_high, "policy")]
    write_results(out / "results.csv", rows)
    return info


def cmd_bound(cfg, out):
    instance, costs, _ = build_instance(cfg)
    bc = cfg.bound_config
    cache = DpCache()
    rows, per_feature = [], []
    kinds = ("decomposition_bound", "hindsight_bound", "combined_bound")
    for c in costs:
        report = combined_bound(instance.with_cost(c), bc.samples, bc.hindsight_samples,
                                bc.settings, seed_sequence(cfg.seed, STREAM_BOUND), cache,
                                bc.bins)
        rows.extend(bound_rows(cfg.experiment, c, report, kinds))
        for j, (v, se) in enumerate(zip(report.per_feature_values,
                                        report.per_feature_stderrs)):
            per_feature.append((cfg.experiment, float(c), j + 1, v, se))
    write_results(out / "results.csv", rows)
    write_table(out / "per_feature.csv",
                ("experiment", "cost", "feature", "value", "stderr"), per_feature)
    return {"bound_samples": bc.samples, "hindsight_samples": bc.hindsight_samples}


def cmd_tune(cfg, out):
    instance, costs, thetas = build_instance(cfg)
    configs = [p for p in cfg.policy_configs() if p.kind.tunable]
    if not configs:
        raise ConfigurationError("tune needs at least one tunable policy (UCB, DTDDP, DTDUCB)")
    episodes = cfg.execution.tune_episodes or cfg.execution.episodes
    rows, best = [], []
    for c in costs:
        inst = instance.with_cost(c)
        cache = DpCache()
        for config in configs:
            alpha, table = tune_alpha(inst, config.kind, episodes,
                                      seed_sequence(cfg.seed, STREAM_TUNE), cfg.alpha_grid,
                                      cache, thetas, config.settings, config.bins)
            for a, est in table:
                rows.append(ResultRow(cfg.experiment, float(c), config.label, a, est.mean,
                                      est.stderr, est.ci95_low, est.ci95_high, "policy"))
            best.append({"cost": float(c), "policy": config.label, "alpha": alpha})
    write_results(out / "results.csv", rows)
    return {"best_alpha": best}


def cmd_sweep(cfg, out):
    instance, costs, thetas = build_instance(cfg)
    configs = cfg.policy_configs()
    ex = cfg.execution
    rows, _ = run_cost_sweep(instance, configs, costs, ex.episodes, cfg.bound_config,
                             cfg.seed, ex.tune_episodes, cfg.experiment, cfg.alpha_grid,
                             thetas, _workers(cfg))
    write_results(out / "results.csv", rows)
    return {"workers": _workers(cfg)}


def cmd_fit_prior(cfg, out):
    prior, users = fit_prior(cfg)
    with open(out / "prior.json", "w", encoding="utf-8") as fh:
        json.dump({"mean": prior.mean.tolist(), "covariance": prior.covariance.tolist()},
                  fh, indent=2)
        fh.write("\n")
    k = prior.k
    write_table(out / "fitted_users.csv",
                ["user_id", "ratings", "flagged"] + [f"theta_{i + 1}" for i in range(k)],
                ([u, users.counts[u], int(u in users.flagged), *map(float, users.thetas[u])]
                 for u in sorted(users.thetas)))
    return {"users": len(users.thetas), "flagged": len(users.flagged)}


COMMANDS = {
    "simulate": cmd_simulate,
    "bound": cmd_bound,
    "tune": cmd_tune,
    "sweep": cmd_sweep,
    "fit-prior": cmd_fit_prior,
}


def _manifest(cfg, command, info):
    return {
        "command": command,
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "config_text": cfg.source_text,
        "config": cfg.model_dump(mode="json", exclude={"source_text", "base_dir"}),
        "config_dir": cfg.base_dir,
        "versions": {
            "infofilter": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
        "kernel_backend": BACKEND,
        "info": info,
    }


def execute(cfg, command):
    """Run ``command`` for a parsed config; returns the output directory."""
    out = _output_dir(cfg)
    info = COMMANDS[command](cfg, out)
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(_manifest(cfg, command, info), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


def _u64(text):
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser():
    parser = argparse.ArgumentParser(prog="infofilter",
                                     description="Information filtering experiments.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment YAML file")
        p.add_argument("--seed", type=_u64, help="master seed (overrides the config)")
        p.add_argument("--output", help="output directory (overrides the config)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config, seed=args.seed, output=args.output)
        out = execute(cfg, args.command)
    except IngestionError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc),
                          "problems": list(exc.problems)}), file=sys.stderr)
        return 2
    except (InfoFilterError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 2
    print(out / "manifest.json")
    return 0


if __name__ == "__main__":
    sys.exit(main())
