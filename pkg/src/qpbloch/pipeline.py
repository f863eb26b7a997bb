"""Stage graph behind the command line: lift -> eig/cell/tensor/transform -> direct.

Every stage returns a JSON-normalized payload (through the cache), and all
files are written from those payloads, so warm and cold runs emit identical
bytes.  Wall-clock timings live only in ``run.json``.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import time
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import blochtransform as bt
from . import directsolver as ds
from .cache import Cache, make_key
from .cell import cell_tensor
from .config import ExperimentConfig, canonical_json, field_digest
from .effective import _plain
from .errors import MalformedInputError, QPBlochError
from .qpcore import (
    WindingMap,
    coercivity_estimate,
    detect_module,
    field_min_eig,
    kozlov_diagnostic,
    lift,
)
from .spectral import ShiftedOperator, default_truncation, eigen_sweep
from .tensor import cross_route, delta_continuation

logger = logging.getLogger(__name__)

DEPENDS = {
    "lift": (),
    "eig": ("lift",),
    "cell": ("lift",),
    "tensor": ("lift",),
    "transform": ("lift",),
    "direct": ("tensor",),
}


def closure(stages) -> list[str]:
    """Requested stages plus their prerequisites, in pipeline order."""
    need = set()

    def add(s):
        if s not in need:
            need.add(s)
            for p in DEPENDS[s]:
                add(p)

    for s in stages:
        add(s)
    return [s for s in DEPENDS if s in need]


@dataclass
class RunRecord:
    config_hash: str
    outputs: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    completed: list = field(default_factory=list)
    failed: dict = field(default_factory=dict)
    skipped: list = field(default_factory=list)
    cache: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _plain(self.__dict__)


class Context:
    def __init__(self, cfg: ExperimentConfig, cache: Cache, seed: int = 0, threads: int = 1, q_override=None):
        self.cfg = cfg
        self.cache = cache
        self.seed = seed
        self.threads = max(1, int(threads))
        self.q_override = q_override
        self.A, self.Lambda, self.label = cfg.coefficient_and_lambda()
        self.results: dict = {}
        self.w: WindingMap | None = None
        self.B = None

    @property
    def N(self) -> int:
        return int(self.cfg.N) if self.cfg.N is not None else default_truncation(self.w.M)

    def key(self, stage: str, **extra) -> str:
        return make_key(
            stage,
            coefficient=field_digest(self.B),
            Lambda=self.w.Lambda.tolist(),
            N=self.N,
            **extra,
        )

    def require_operator(self):
        if not self.A.is_operator:
            raise MalformedInputError(
                f"coefficient {self.label} is a {self.A.size}x{self.A.size} matrix on R^{self.A.dim}; "
                "only the lift stage applies"
            )


# ---------------------------------------------------------------- stages


def stage_lift(ctx: Context) -> dict:
    A = ctx.A
    w = WindingMap.from_lambda(ctx.Lambda) if ctx.Lambda is not None else detect_module(
        A.frequencies() if len(A.frequencies()) else np.zeros((1, A.dim))
    )
    ctx.w = w
    ctx.B = lift(A, w)
    payload = {"coefficient": ctx.label, "winding": w.to_dict(), "modes": len(ctx.B.modes)}
    payload["lambda_source"] = "given" if ctx.Lambda is not None else "detected"
    try:
        payload["kozlov_tau2"] = kozlov_diagnostic(w, 2.0, 50)
    except ValueError:
        payload["kozlov_tau2"] = kozlov_diagnostic([w.Lambda[:, i] for i in range(w.d)], 2.0, 50)
    if A.is_operator:
        payload["coercivity"] = coercivity_estimate(A, w=w)
        payload["mean"] = np.real(ctx.B.mean()).tolist()
    warn = []
    if w.checked_bound < 1000:
        warn.append(f"injectivity checked only up to |p|_inf <= {w.checked_bound}")
    payload["warnings"] = warn
    return json.loads(canonical_json(_plain(payload)))


def stage_eig(ctx: Context) -> dict:
    ctx.require_operator()
    cfg = ctx.cfg
    rng = np.random.default_rng(ctx.seed)
    probes = rng.uniform(-0.25, 0.25, size=(3, ctx.w.d)).tolist()

    def compute():
        op = ShiftedOperator.build(ctx.B, ctx.w, np.zeros(ctx.w.d), cfg.wave_delta, ctx.N)
        rows = eigen_sweep(op, cfg.etas, cfg.eig_tol, ctx.threads)
        pr = eigen_sweep(op, probes + [[-x for x in p] for p in probes], cfg.eig_tol, ctx.threads)
        k = len(probes)
        even = [abs(pr[i].lam - pr[i + k].lam) for i in range(k)]
        return {
            "delta": cfg.wave_delta,
            "N": ctx.N,
            "rows": [
                {
                    "eta": np.atleast_1d(r.eta).tolist(),
                    "lambda": r.lam,
                    "gap": r.gap,
                    "residual": r.residual,
                    "simple": r.simple,
                    "error": r.error,
                }
                for r in rows
            ],
            "evenness_probes": {"seed": ctx.seed, "etas": probes, "max_defect": max(even)},
        }

    return ctx.cache.get_or_compute(
        ctx.key("eig", delta=cfg.wave_delta, etas=cfg.etas, tol=cfg.eig_tol, seed=ctx.seed), compute
    )


def stage_cell(ctx: Context) -> dict:
    ctx.require_operator()
    cfg = ctx.cfg
    alpha = field_min_eig(ctx.B)
    rows = []
    for dl in cfg.deltas:

        def compute(dl=dl):
            t = cell_tensor(ctx.B, ctx.w, dl, ctx.N, alpha, cfg.cell_tol)
            return {"delta": dl, **t.to_dict()}

        rows.append(ctx.cache.get_or_compute(ctx.key("cell", delta=dl, tol=cfg.cell_tol), compute))
    return {"alpha": alpha, "rows": rows}


def stage_tensor(ctx: Context) -> dict:
    ctx.require_operator()
    cfg = ctx.cfg
    routes = ["cell", "hessian"] if cfg.route == "both" else [cfg.route]

    def compute():
        out = {"routes": {}, "warnings": []}
        for r in routes:
            t = delta_continuation(ctx.B, ctx.w, cfg.deltas, ctx.N, route=r, h=cfg.h, threads=ctx.threads)
            out["routes"][r] = t.to_dict()
            out["warnings"] += [f"{r}: {m}" for m in t.warnings]
        if cfg.route == "both":
            cr = cross_route(ctx.B, ctx.w, cfg.deltas[-1], ctx.N, cfg.h, ctx.threads)
            out["cross_route"] = cr
            if not cr["ok"]:
                out["warnings"].append("cross_route: cell and Hessian tensors disagree beyond tolerance")
        best = "cell" if "cell" in out["routes"] else routes[0]
        out["q"] = out["routes"][best]["q"]
        out["q_route"] = best
        return _plain(out)

    return ctx.cache.get_or_compute(
        ctx.key("tensor", deltas=cfg.deltas, route=cfg.route, h=cfg.h, tol=[cfg.eig_tol, cfg.cell_tol]), compute
    )


def load_samples(path) -> bt.CompactFunction:
    """Custom g from JSON ``{"support": [[a, b], ...], "values": nested list}``."""
    with open(path) as fh:
        d = json.load(fh)
    return bt.CompactFunction(d["support"], samples=np.array(d["values"], dtype=float), name="custom")


def make_g(cfg: ExperimentConfig, d: int) -> bt.CompactFunction:
    if cfg.g == "gaussian":
        return bt.CompactFunction.gaussian(1.0, d=d)
    if cfg.g == "bump":
        return bt.CompactFunction.bump(1.0, d=d)
    return load_samples(cfg.g_samples)


def stage_transform(ctx: Context) -> dict:
    ctx.require_operator()
    cfg = ctx.cfg
    d = ctx.w.d
    xis = [np.atleast_1d(np.asarray(x, dtype=float)) for x in cfg.xis]
    if any(x.size != d for x in xis):
        raise MalformedInputError(f"xi points must have dimension {d}")
    g = make_g(cfg, d)
    g_id = cfg.g if cfg.g != "custom" else canonical_json(g.samples.tolist())

    def compute():
        bw = bt.BlochWave(ctx.B, ctx.w, cfg.wave_delta, cfg.eps_transform[0], ctx.N, cfg.eig_tol)
        tab = bt.transform_convergence(g, bw, cfg.eps_transform, xis, ctx.threads)
        rows = []
        for r in tab.rows:
            for v in r["values"]:
                rows.append(
                    {
                        "xi": v["xi"],
                        "epsilon": r["epsilon"],
                        "re": v["value"].real,
                        "im": v["value"].imag,
                        "fourier_re": v["fourier"].real,
                        "fourier_im": v["fourier"].imag,
                        "abs_error": abs(v["value"] - v["fourier"]),
                        "simple": v["simple"],
                    }
                )
        reg = [bt.regularization_residual(bw.with_epsilon(e), xis[0]) for e in cfg.eps_transform if bt.in_zone(e * xis[0])]
        return {
            "rows": rows,
            "sup_errors": [{"epsilon": r["epsilon"], "sup_error": r["sup_error"]} for r in tab.rows],
            "slope": tab.slope,
            "decreasing": ds.decreasing_trend([r["sup_error"] for r in tab.rows], 0),
            "regularization_residual": reg,
        }

    return ctx.cache.get_or_compute(
        ctx.key("transform", delta=cfg.wave_delta, eps=cfg.eps_transform, xis=cfg.xis, g=g_id, tol=cfg.eig_tol),
        compute,
    )


def stage_direct(ctx: Context) -> dict:
    ctx.require_operator()
    cfg = ctx.cfg
    if ctx.A.dim != 1:
        raise MalformedInputError("direct solves are one-dimensional")
    if ctx.q_override is not None:
        q, source = ctx.q_override, "file"
    else:
        q, source = ctx.results["tensor"]["q"], "tensor stage"
    q = float(np.asarray(q, dtype=float).reshape(()))
    a = ctx.A.entries[0][0]
    policy = ds.MeshPolicy(cfg.cells_per_eps)

    def compute():
        rc = ds.refinement_check(a, q, 1.0, cfg.eps_direct, policy)
        rows = rc["base"]
        return {
            "q": q,
            "rows": rows,
            "l2_decreasing": ds.decreasing_trend([r["rel_l2"] for r in rows]),
            "flux_decreasing": ds.decreasing_trend([r["flux_error"] for r in rows]),
            "refinement_change": rc["max_relative_change"],
            "refinement_ok": rc["ok"],
        }

    out = ctx.cache.get_or_compute(
        make_key("direct", coefficient=field_digest(ctx.B), q=q, eps=cfg.eps_direct, cells=cfg.cells_per_eps), compute
    )
    return {**out, "q_source": source}


STAGE_FUNCS = {
    "lift": stage_lift,
    "eig": stage_eig,
    "cell": stage_cell,
    "tensor": stage_tensor,
    "transform": stage_transform,
    "direct": stage_direct,
}


# ---------------------------------------------------------------- writers


def _csv(rows: list[list], header: list[str]) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for r in rows:
        wr.writerow([repr(float(v)) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"


def render(stage: str, payload: dict) -> dict[str, str]:
    """File name -> text for one stage payload."""
    if stage == "eig":
        d = len(payload["rows"][0]["eta"])
        rows = [r["eta"] + [r["lambda"], r["gap"], r["residual"], r["simple"], r["error"] or ""] for r in payload["rows"]]
        hdr = [f"eta{i + 1}" for i in range(d)] + ["lambda", "gap", "residual", "simple", "error"]
        return {"eig.csv": _csv(rows, hdr), "eig.json": _json(payload)}
    if stage == "transform":
        d = len(payload["rows"][0]["xi"])
        rows = [r["xi"] + [r["epsilon"], r["re"], r["im"], r["abs_error"], r["simple"]] for r in payload["rows"]]
        hdr = [f"xi{i + 1}" for i in range(d)] + ["epsilon", "re", "im", "abs_error", "simple"]
        summary = {k: v for k, v in payload.items() if k != "rows"}
        return {"transform.csv": _csv(rows, hdr), "transform.json": _json(summary)}
    if stage == "direct":
        rows = [[r["epsilon"], r["n_cells"], r["rel_l2"], r["flux_error"]] for r in payload["rows"]]
        summary = {k: v for k, v in payload.items() if k != "rows"}
        return {
            "direct.csv": _csv(rows, ["epsilon", "n_cells", "rel_l2_error", "flux_error"]),
            "direct.json": _json(summary),
        }
    if stage == "cell":
        rows = [[r["delta"], *np.ravel(r["q"]).tolist()] for r in payload["rows"]]
        d = len(payload["rows"][0]["q"])
        hdr = ["delta"] + [f"q{k + 1}{l + 1}" for k in range(d) for l in range(d)]
        return {"cell.csv": _csv(rows, hdr), "cell.json": _json(payload)}
    return {f"{stage}.json": _json(payload)}


# ---------------------------------------------------------------- runner


def run(
    cfg: ExperimentConfig,
    out_dir,
    cache: Cache | None = None,
    seed: int = 0,
    threads: int = 1,
    q_override=None,
) -> RunRecord:
    """Execute the requested stages in dependency order and write their outputs.

    Independent stages run concurrently when ``threads > 1``.  A failed stage
    skips everything downstream of it; completed stages keep their files.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cache = cache or Cache(None)
    stages = closure(cfg.stages)
    if q_override is not None and "direct" in cfg.stages and "tensor" not in cfg.stages:
        stages = [s for s in stages if s != "tensor"]
    ctx = Context(cfg, cache, seed, threads, q_override)
    rec = RunRecord(cfg.digest())
    deps = {s: tuple(p for p in DEPENDS[s] if p in stages) for s in stages}

    def execute(stage):
        t0 = time.perf_counter()
        payload = STAGE_FUNCS[stage](ctx)
        return payload, time.perf_counter() - t0

    pending = list(stages)
    running = {}
    pool = ThreadPoolExecutor(max(1, threads))
    try:
        while pending or running:
            for s in list(pending):
                if any(p in rec.failed or p in rec.skipped for p in deps[s]):
                    pending.remove(s)
                    rec.skipped.append(s)
                elif all(p in rec.completed for p in deps[s]) and (threads > 1 or not running):
                    pending.remove(s)
                    running[pool.submit(execute, s)] = s
            if not running:
                continue
            done, _ = wait(running, return_when=FIRST_COMPLETED)
            for fut in done:
                s = running.pop(fut)
                try:
                    payload, dt = fut.result()
                except QPBlochError as exc:
                    rec.failed[s] = f"{type(exc).__name__}: {exc}"
                    logger.error("stage %s failed: %s", s, exc)
                    continue
                ctx.results[s] = payload
                rec.timings[s] = dt
                rec.completed.append(s)
                rec.warnings += [f"{s}: {w}" for w in payload.get("warnings", [])]
                for name, text in render(s, payload).items():
                    (out / name).write_text(text)
                    rec.outputs.setdefault(s, []).append(name)
    finally:
        pool.shutdown()
    for s, p in ctx.results.items():
        if s == "eig":
            rec.warnings += [f"eig: eigenvalue not simple at eta={r['eta']}" for r in p["rows"] if not r["simple"]]
        if s == "transform":
            bad = sorted({tuple(r["xi"]) for r in p["rows"] if r["simple"] is False})
            rec.warnings += [f"transform: eigenvalue not simple at xi={list(x)}" for x in bad]
    rec.completed.sort(key=stages.index)
    rec.cache = {"hits": cache.hits, "misses": cache.misses, "dir": str(cache.root) if cache.root else None}
    rec.outputs["run"] = ["run.json"]
    (out / "run.json").write_text(_json({**rec.to_dict(), "config": cfg.to_dict()}))
    return rec
