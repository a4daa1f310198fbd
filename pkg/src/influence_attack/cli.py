"""Command-line entry point: ``attack``, ``baseline``, ``sweep`` and ``inspect-plan``.

The configuration file is TOML. Top-level keys describe the data, budgets and
trial loop; optional ``[sbm]``, ``[surrogate]`` and ``[victim]`` tables set the
synthetic generator and the two training procedures. Flags override the file.

Exit codes: 0 on success, 1 on a configuration error, 2 if any trial failed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import tomli

from .evaluation import BaselineKind, VictimConfig
from .graph import ConfigurationError, GraphFormatError
from .influence import AttackKind, AttackMode
from .pipeline import AttackConfig, dumps, read_plan, run_attack, run_baseline, run_sweep
from .surrogate import TrainConfig
from .synthetic import SbmConfig

EXIT_OK, EXIT_CONFIG, EXIT_TRIALS = 0, 1, 2

# config-file key -> AttackConfig field
_SCALARS = {
    "edges": "edges",
    "features": "features",
    "labels": "labels",
    "splits": "splits",
    "feature_kind": "feature_kind",
    "num_labels": "num_labels",
    "node_budget": "node_budget_fraction",
    "feature_budget": "feature_budget_fraction",
    "degree_remove": "degree_remove_fraction",
    "depth": "depth",
    "bounds": "bounds",
    "trials": "trials",
    "seed": "base_seed",
    "n_proxies": "n_proxies",
    "workers": "workers",
}
_MODE_KEYS = {"mode", "target_label", "ablation"}
_TABLES = {"sbm": SbmConfig, "surrogate": TrainConfig, "victim": VictimConfig}


def _table(cls, values, name: str):
    if not isinstance(values, dict):
        raise ConfigurationError(f"[{name}] must be a table")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigurationError(f"unknown keys in [{name}]: {', '.join(sorted(unknown))}")
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigurationError(f"[{name}]: {exc}") from exc


def _mode(kind: str, target_label, ablation) -> AttackMode:
    if ablation not in (None, "global", "inconsistency"):
        raise ConfigurationError(f"unknown ablation {ablation!r}")
    try:
        kind = AttackKind(kind)
    except ValueError as exc:
        raise ConfigurationError(f"unknown mode {kind!r}") from exc
    return AttackMode(
        kind,
        target_label,
        consistency=ablation != "inconsistency",
        global_perturbation=ablation == "global",
    )


def config_from_mapping(data: dict, base_dir: Path | None = None) -> AttackConfig:
    """Build an :class:`AttackConfig` from parsed TOML; paths are relative to ``base_dir``."""
    unknown = set(data) - set(_SCALARS) - _MODE_KEYS - set(_TABLES)
    if unknown:
        raise ConfigurationError(f"unknown config keys: {', '.join(sorted(unknown))}")
    kwargs = {_SCALARS[k]: v for k, v in data.items() if k in _SCALARS}
    if base_dir is not None:
        for key in ("edges", "features", "labels", "splits"):
            if kwargs.get(key):
                kwargs[key] = str(base_dir / kwargs[key])
    for name, cls in _TABLES.items():
        if name in data:
            kwargs[name] = _table(cls, data[name], name)
    kwargs["mode"] = _mode(data.get("mode", "untargeted"), data.get("target_label"), data.get("ablation"))
    try:
        return AttackConfig(**kwargs)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc


def load_config(path: str | Path | None, overrides: dict) -> AttackConfig:
    data: dict = {}
    base_dir = None
    if path is not None:
        path = Path(path)
        try:
            data = tomli.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        except tomli.TOMLDecodeError as exc:
            raise ConfigurationError(f"{path}: {exc}") from exc
        base_dir = path.parent
    data.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_mapping(data, base_dir)


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="influence-attack", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def run_options(p):
        p.add_argument("config", nargs="?", help="TOML configuration file")
        p.add_argument("--mode", choices=[k.value for k in AttackKind])
        p.add_argument("--target-label", type=int)
        p.add_argument("--ablation", choices=["global", "inconsistency"])
        p.add_argument("--node-budget", type=float, help="fraction of nodes that may be perturbed")
        p.add_argument("--feature-budget", type=float, help="fraction of features per node")
        p.add_argument("--degree-remove", type=float, help="fraction of highest-degree nodes excluded")
        p.add_argument("--trials", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--out", required=True, help="report directory (or CSV path for sweep)")

    run_options(sub.add_parser("attack", help="run the influence attack"))
    base = sub.add_parser("baseline", help="run a heuristic baseline")
    run_options(base)
    base.add_argument("--method", required=True, choices=[k.value for k in BaselineKind])
    sweep = sub.add_parser("sweep", help="attack over a series of budgets")
    run_options(sweep)
    sweep.add_argument("--axis", required=True, choices=["node_budget", "feature_budget"])
    sweep.add_argument("--values", required=True, help="comma-separated ascending fractions")

    inspect = sub.add_parser("inspect-plan", help="print a stored attack plan")
    inspect.add_argument("plan_dir")
    return parser


def _overrides(args) -> dict:
    return {
        "mode": args.mode,
        "target_label": args.target_label,
        "ablation": args.ablation,
        "node_budget": args.node_budget,
        "feature_budget": args.feature_budget,
        "degree_remove": args.degree_remove,
        "trials": args.trials,
        "seed": args.seed,
        "workers": args.workers,
    }


def _report(summary: dict) -> int:
    print(dumps(summary))
    return EXIT_TRIALS if summary["failed"] else EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s"
    )
    try:
        if args.command == "inspect-plan":
            plan = read_plan(args.plan_dir)
            print(json.dumps(plan["summary"], sort_keys=True))
            for order, (node, affected) in enumerate(plan["selected"]):
                eps = plan["perturbations"].get(node)
                n_feat = len(eps) if eps is not None else 0
                print(f"{order}\tnode={node}\taffected={len(affected)}\tfeatures={n_feat}")
            return EXIT_OK

        cfg = load_config(args.config, _overrides(args))
        g = cfg.load()
        if args.command == "attack":
            _, summary = run_attack(cfg, args.out, g)
            return _report(summary)
        if args.command == "baseline":
            _, summary = run_baseline(cfg, args.method, args.out, g)
            return _report(summary)
        try:
            values = [float(v) for v in args.values.split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigurationError(f"bad --values: {exc}") from exc
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        rows = run_sweep(cfg, args.axis, values, args.out, g)
        for value, mean, std in rows:
            print(f"{value:.6g}\t{mean:.6f}\t{std:.6f}")
        return EXIT_OK
    except (ConfigurationError, GraphFormatError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
