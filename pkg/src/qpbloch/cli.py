"""Command line entry point: ``qpbloch <stage> [options]``.

Each stage subcommand runs that stage plus its prerequisites; ``run`` runs
the stages listed in the config (all by default).  Outputs are CSV/JSON in
``--out``; results are cached in ``$QPBLOCH_CACHE_DIR`` when it is set.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import presets
from .cache import ENV_VAR, Cache, default_dir
from .config import STAGES, ExperimentConfig, numbers
from .errors import QPBlochError
from .pipeline import run

OVERRIDES = {
    # flag: (config field, parser)
    "N": ("N", int),
    "deltas": ("deltas", None),
    "etas": ("etas", None),
    "h": ("h", float),
    "route": ("route", str),
    "delta": ("wave_delta", float),
    "eps": (None, None),
    "xis": ("xis", None),
    "g": ("g", str),
    "g_samples": ("g_samples", str),
    "cells_per_eps": ("cells_per_eps", int),
}


def _list(text: str) -> list:
    """Comma separated numbers; ';' separates vectors, e.g. '0.1,0;0,0.1'."""
    if ";" in text:
        return [numbers([t for t in part.split(",") if t.strip()]) for part in text.split(";") if part.strip()]
    return [numbers(t.strip()) for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--out", default="qpbloch-out", help="output directory (default: %(default)s)")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--seed", type=int, default=0, help="seed for sampled diagnostics only")
    common.add_argument("--preset", choices=presets.names(), help="coefficient preset")
    common.add_argument("--coefficient", help="JSON file holding a coefficient object")
    common.add_argument("--no-cache", action="store_true", help=f"ignore ${ENV_VAR}")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="qpbloch", description="Regularized Bloch-wave homogenization toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("lift", parents=[common], help="detect the frequency module and lift the coefficient")
    s = sub.add_parser("eig", parents=[common], help="first Bloch eigenvalue over an eta grid")
    s.add_argument("--etas", type=_list, help="eta points, e.g. -0.1,0,0.1 or '0.1,0;0,0.1'")
    s.add_argument("--delta", type=float)
    s.add_argument("--N", type=int)
    s = sub.add_parser("cell", parents=[common], help="cell-problem tensors along the delta schedule")
    s.add_argument("--deltas", type=_list)
    s.add_argument("--N", type=int)
    s = sub.add_parser("tensor", parents=[common], help="extrapolated effective tensor and route comparison")
    s.add_argument("--deltas", type=_list)
    s.add_argument("--N", type=int)
    s.add_argument("--h", type=float)
    s.add_argument("--route", choices=["cell", "hessian", "both"])
    s = sub.add_parser("transform", parents=[common], help="Bloch transform convergence table")
    s.add_argument("--g", choices=["gaussian", "bump", "custom"])
    s.add_argument("--g-samples", dest="g_samples", help="JSON file with support and values (g=custom)")
    s.add_argument("--eps", type=_list, help="decreasing eps schedule")
    s.add_argument("--xis", type=_list)
    s.add_argument("--delta", type=float)
    s.add_argument("--N", type=int)
    s = sub.add_parser("direct", parents=[common], help="direct eps-solves against the homogenized solution")
    s.add_argument("--eps", type=_list, help="decreasing eps schedule")
    s.add_argument("--q-source", dest="q_source", help="tensor.json from an earlier run")
    s.add_argument("--cells-per-eps", dest="cells_per_eps", type=int)
    sub.add_parser("run", parents=[common], help="run the stages listed in the config")
    return p


def config_from_args(args) -> ExperimentConfig:
    base = {}
    if args.config:
        with open(args.config) as fh:
            base = json.load(fh)
    if args.coefficient:
        with open(args.coefficient) as fh:
            base["coefficient"] = json.load(fh)
    elif args.preset:
        base["coefficient"] = args.preset
    for flag, (name, _) in OVERRIDES.items():
        v = getattr(args, flag, None)
        if v is None:
            continue
        if flag == "eps":
            base["eps_transform" if args.command == "transform" else "eps_direct"] = v
        elif flag == "xis":
            base[name] = [x if isinstance(x, list) else [x] for x in v]
        else:
            base[name] = v
    if getattr(args, "q_source", None):
        base["q_source"] = args.q_source
    if args.command != "run":
        base["stages"] = [args.command]
    return ExperimentConfig.from_dict(base)


def load_q(path):
    with open(path) as fh:
        d = json.load(fh)
    return d["q"]


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        q = load_q(cfg.q_source) if cfg.q_source else None
    except (QPBlochError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"qpbloch: invalid input: {exc}", file=sys.stderr)
        return 2
    cache = Cache(None if args.no_cache else default_dir())
    rec = run(cfg, args.out, cache, seed=args.seed, threads=args.threads, q_override=q)
    for s in rec.completed:
        print(f"{s}: ok ({', '.join(rec.outputs.get(s, []))})")
    for s, msg in rec.failed.items():
        print(f"{s}: FAILED {msg}", file=sys.stderr)
    for s in rec.skipped:
        print(f"{s}: skipped (upstream failure)", file=sys.stderr)
    for w in rec.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return 1 if rec.failed else 0


if __name__ == "__main__":
    sys.exit(main())
