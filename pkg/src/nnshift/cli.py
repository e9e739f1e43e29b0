"""Command-line entry point: ``nnshift <command> [options]``.

Exit codes: 0 success, 1 runtime failure, 2 invalid usage or configuration.
Every run writes its data files plus ``manifest.json`` into the output
directory (``--output-dir``, else ``$NNSHIFT_OUTPUT_DIR``, else ``.``).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from collections import Counter
from pathlib import Path

import numpy as np

import nnshift
from nnshift import asymptotics
from nnshift.experiment import (
    ConfigError,
    ExperimentConfig,
    dumps_json,
    event_simulation,
    histogram_csv,
    run_replications,
    spatial_csv,
    spatial_export,
    summary_json,
)
from nnshift.geometry import PointSet, sample_points
from nnshift.nngraph import (
    build_knn_graph,
    counts_from_stars,
    in_degree_counts,
    mutual_pairs,
    star_counts,
    weak_components,
)
from nnshift.strategy import KPNNS, LRNNS, classify_overload, effective_rates

log = logging.getLogger("nnshift")

OUTPUT_DIR_ENV = "NNSHIFT_OUTPUT_DIR"

DEFAULTS = {
    "d": 1,
    "k": 1,
    "n_nodes": 1000,
    "n_reps": 1000,
    "strategy": "kpnns",
    "p": 1.0,
    "ell": 0.5,
    "r": 0.5,
    "lambda": 1.0,
    "mu": 1.0,
    "master_seed": 0,
    "event_horizon": 1000.0,
}

_FLAG_TO_KEY = {
    "d": "d",
    "k": "k",
    "n_nodes": "n_nodes",
    "n_reps": "n_reps",
    "strategy": "strategy",
    "p": "p",
    "ell": "ell",
    "r": "r",
    "lam": "lambda",
    "mu": "mu",
    "seed": "master_seed",
    "horizon": "event_horizon",
}


class UsageError(Exception):
    pass


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"config: cannot read {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise UsageError("config: top level must be a JSON object")
    flat = dict(doc)
    strat = flat.pop("strategy", None)
    if isinstance(strat, dict):
        strat = dict(strat)
        flat["strategy"] = strat.pop("type", "kpnns")
        for key, val in strat.items():
            if key not in ("k", "p", "ell", "r"):
                raise UsageError(f"strategy.{key}: unknown field")
            flat[key] = val
    elif strat is not None:
        flat["strategy"] = strat
    if "lam" in flat:
        flat["lambda"] = flat.pop("lam")
    unknown = set(flat) - set(DEFAULTS)
    if unknown:
        raise UsageError(f"{sorted(unknown)[0]}: unknown config field")
    return flat


def _resolve(args) -> dict:
    params = dict(DEFAULTS)
    params.update(_load_config(getattr(args, "config", None)))
    for flag, key in _FLAG_TO_KEY.items():
        val = getattr(args, flag, None)
        if val is not None:
            params[key] = val
    return params


def _number(params, key, kind):
    try:
        return kind(params[key])
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected {kind.__name__}, got {params[key]!r}") from None


def _strategy(params):
    kind = params["strategy"]
    try:
        if kind == "kpnns":
            return KPNNS(_number(params, "k", int), _number(params, "p", float))
        if kind == "lrnns":
            return LRNNS(_number(params, "ell", float), _number(params, "r", float))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError("strategy", str(exc)) from None
    raise ConfigError("strategy", f"must be 'kpnns' or 'lrnns', got {kind!r}")


def _experiment_config(params, with_horizon=False) -> ExperimentConfig:
    cfg = ExperimentConfig(
        d=_number(params, "d", int),
        k=_number(params, "k", int),
        n_nodes=_number(params, "n_nodes", int),
        n_reps=_number(params, "n_reps", int),
        strategy=_strategy(params),
        lam=_number(params, "lambda", float),
        mu=_number(params, "mu", float),
        master_seed=_number(params, "master_seed", int),
        event_horizon=_number(params, "event_horizon", float) if with_horizon else None,
    )
    cfg.validate()
    if cfg.lam > cfg.mu:
        log.warning("lambda > mu: the asymptotic predictions do not apply; direct counts are still exact")
    return cfg


def _output_dir(args) -> Path:
    out = Path(args.output_dir or os.environ.get(OUTPUT_DIR_ENV) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(out: Path, name: str, text: str, written: list) -> None:
    path = out / name
    path.write_text(text)
    written.append(str(path))


def _threads(args):
    if args.threads is not None and args.threads < 1:
        raise ConfigError("threads", f"must be >= 1, got {args.threads}")
    return args.threads


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args, out, written):
    params = _resolve(args)
    cfg = _experiment_config(params)
    threads = _threads(args)
    summary = run_replications(cfg, threads=threads)
    _write(out, "summary.json", dumps_json(summary_json(summary)), written)
    _write(out, "histogram.csv", histogram_csv(summary), written)
    log.info("mean O_N = %.6f, N*Var = %.6f over %d replications", summary.mean, summary.scaled_variance, summary.n_reps)
    return cfg.to_json()


def cmd_constants(args, out, written):
    d, k, method = args.d, args.k, args.method
    if method == "table":
        try:
            table = asymptotics.known_constants(d, k)
        except ValueError as exc:
            raise ConfigError("method", str(exc)) from None
    elif method == "integral":
        if k != 1 or d not in (1, 2):
            raise ConfigError("method", "the integral method supports k = 1 and d in (1, 2)")
        if args.samples < 10_000:
            raise ConfigError("samples", "must be >= 10000")
        table = asymptotics.mc_table(d, args.samples, args.seed)
    else:
        if d not in (1, 2, 3) or k < 1:
            raise ConfigError("d", "the empirical method supports d in (1, 2, 3) and k >= 1")
        if args.nodes < 1000:
            raise ConfigError("nodes", "must be >= 1000")
        if args.reps < 100:
            raise ConfigError("reps", "must be >= 100")
        table = asymptotics.empirical_constants(d, k, args.nodes, args.reps, args.seed, threads=_threads(args))
    doc = table.to_json()
    text = dumps_json(doc)
    _write(out, "constants.json", text, written)
    sys.stdout.write(text)
    return {"d": d, "k": k, "method": method, "samples": args.samples, "nodes": args.nodes, "reps": args.reps, "seed": args.seed}


def _instance(args, params):
    if args.points_csv:
        ps = PointSet.from_csv(args.points_csv)
        params["d"] = ps.dim
        params["n_nodes"] = ps.n
        if ps.seed is not None:
            params["master_seed"] = ps.seed
        return ps
    d = _number(params, "d", int)
    n = _number(params, "n_nodes", int)
    if d < 1:
        raise ConfigError("d", f"must be >= 1, got {d}")
    if n < 2:
        raise ConfigError("n_nodes", f"must be >= 2, got {n}")
    seed = _number(params, "master_seed", int)
    if not 0 <= seed < 2**64:
        raise ConfigError("master_seed", "must be a 64-bit unsigned integer")
    return sample_points(n, d, seed)


def _check_k(k, n):
    if k < 1 or k > n - 1:
        raise ConfigError("k", f"must satisfy 1 <= k <= N - 1 (k={k}, N={n})")


def cmd_graph_stats(args, out, written):
    params = _resolve(args)
    ps = _instance(args, params)
    k = _number(params, "k", int)
    _check_k(k, ps.n)
    g = build_knn_graph(ps, k)
    ak = asymptotics.alpha(ps.dim) * k if ps.dim in (1, 2, 3) else int(g.in_degree.max())
    q = in_degree_counts(g, ak)
    stars = star_counts(g, ak)
    roundtrip = counts_from_stars(stars, ak) == q if ps.n > ak + 1 else None
    comps = weak_components(g)
    stats = {
        "master_seed": ps.seed,
        "n_nodes": ps.n,
        "d": ps.dim,
        "k": k,
        "in_degree_counts": q.q.tolist(),
        "star_counts": stars.i_counts.tolist(),
        "edges_equal_nk": int(stars[1]) == ps.n * k,
        "roundtrip_ok": roundtrip,
        "q0_equals_q2": bool(q.q[0] == q.q[2]) if (ps.dim, k) == (1, 1) else None,
        "n_components": len(comps),
        "component_size_counts": {str(sz): n for sz, n in sorted(Counter(len(c) for c in comps).items())},
        "n_mutual_pairs": len(mutual_pairs(g)) if k == 1 else None,
    }
    header = f"# seed={'' if ps.seed is None else ps.seed}\n"
    _write(out, "edges.csv", header + g.edges_csv(), written)
    _write(out, "nodes.csv", header + g.nodes_csv(), written)
    _write(out, "graph_stats.json", dumps_json(stats), written)
    return {"d": ps.dim, "k": k, "n_nodes": ps.n, "master_seed": ps.seed, "points_csv": args.points_csv}


def cmd_event_sim(args, out, written):
    params = _resolve(args)
    horizon = _number(params, "event_horizon", float)
    if not horizon > 0:
        raise ConfigError("event_horizon", f"must be positive, got {horizon}")
    ps = _instance(args, params)
    strat = _strategy(params)
    lam, mu = _number(params, "lambda", float), _number(params, "mu", float)
    if not (lam > 0 and mu > 0):
        raise ConfigError("lambda" if not lam > 0 else "mu", "must be positive")
    if isinstance(strat, KPNNS):
        _check_k(strat.k, ps.n)
    elif ps.dim != 1:
        raise ConfigError("strategy", "the left-right strategy needs d = 1")
    seed = _number(params, "master_seed", int)
    res = event_simulation(ps, strat, lam, mu, horizon, seed)
    _write(out, "rates.csv", res.to_csv(seed), written)
    report = {
        "master_seed": seed,
        "t": horizon,
        "total_arrivals": int(res.arrivals.sum()),
        "total_joins": int(res.joins.sum()),
        "max_relative_deviation": res.max_relative_deviation(0.5),
        "max_abs_z": float(np.max(np.abs(res.z_scores))),
    }
    _write(out, "event_summary.json", dumps_json(report), written)
    log.info("max relative deviation %.4f, max |z| %.2f", report["max_relative_deviation"], report["max_abs_z"])
    return params


def cmd_export_spatial(args, out, written):
    params = _resolve(args)
    ps = _instance(args, params)
    lam, mu = _number(params, "lambda", float), _number(params, "mu", float)
    if not (lam > 0 and mu > 0):
        raise ConfigError("lambda" if not lam > 0 else "mu", "must be positive")
    k = _number(params, "k", int)
    _check_k(k, ps.n)
    ps_values = args.p_values or [_number(params, "p", float)]
    for p in ps_values:
        if not 0 <= p <= 1:
            raise ConfigError("p", f"must lie in [0, 1], got {p}")
    g = build_knn_graph(ps, k)
    for p in ps_values:
        report = classify_overload(effective_rates(g, KPNNS(k, p), lam), mu, lam)
        rows = spatial_export(ps, report, g.in_degree)
        _write(out, f"spatial_p{p:g}.csv", spatial_csv(rows, ps.dim, ps.seed), written)
        log.info("p=%g: %s", p, report.tally())
    return {"d": ps.dim, "k": k, "n_nodes": ps.n, "master_seed": ps.seed, "p": ps_values, "lambda": lam, "mu": mu}


# ---------------------------------------------------------------------------


def _common(sp, experiment=True):
    sp.add_argument("--config", help="JSON file with ExperimentConfig fields")
    sp.add_argument("--output-dir", help=f"output directory (default ${OUTPUT_DIR_ENV} or .)")
    sp.add_argument("--threads", type=int, help="worker threads (default: all cores)")
    sp.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    if experiment:
        sp.add_argument("--d", type=int)
        sp.add_argument("--k", type=int)
        sp.add_argument("--n-nodes", dest="n_nodes", type=int)
        sp.add_argument("--seed", type=int, help="master seed")
        sp.add_argument("--strategy", choices=["kpnns", "lrnns"])
        sp.add_argument("--p", type=float, help="shift probability")
        sp.add_argument("--ell", type=float)
        sp.add_argument("--r", type=float)
        sp.add_argument("--lambda", dest="lam", type=float)
        sp.add_argument("--mu", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nnshift", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=nnshift.__version__)
    parser.add_argument("-v", "--verbose", action="store_true", default=False)
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="replicated overload experiment")
    _common(sp)
    sp.add_argument("--reps", dest="n_reps", type=int)

    sp = sub.add_parser("constants", help="asymptotic in-degree fractions")
    _common(sp, experiment=False)
    sp.add_argument("--d", type=int, default=1)
    sp.add_argument("--k", type=int, default=1)
    sp.add_argument("--method", choices=["table", "integral", "empirical"], default="table")
    sp.add_argument("--samples", type=int, default=1_000_000)
    sp.add_argument("--nodes", type=int, default=1000)
    sp.add_argument("--reps", type=int, default=200)
    sp.add_argument("--seed", type=int, default=0)

    for name, help_ in (
        ("graph-stats", "dump one k-NN graph and its counts"),
        ("event-sim", "arrival-level simulation of one placement"),
        ("export-spatial", "per-server classes for plotting"),
    ):
        sp = sub.add_parser(name, help=help_)
        _common(sp)
        sp.add_argument("--points-csv", help="use these points instead of sampling")
        if name == "event-sim":
            sp.add_argument("--horizon", type=float, help="simulated time t")
        if name == "export-spatial":
            sp.add_argument("--p-values", type=float, nargs="+", help="one output file per p")
    return parser


COMMANDS = {
    "simulate": cmd_simulate,
    "constants": cmd_constants,
    "graph-stats": cmd_graph_stats,
    "event-sim": cmd_event_sim,
    "export-spatial": cmd_export_spatial,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    started = time.perf_counter()
    written: list[str] = []
    try:
        out = _output_dir(args)
        resolved = COMMANDS[args.command](args, out, written)
    except (ConfigError, UsageError) as exc:
        print(f"nnshift {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"nnshift {args.command}: failed: {exc}", file=sys.stderr)
        return 1
    manifest = {
        "command": args.command,
        "parameters": resolved,
        "master_seed": resolved.get("master_seed", resolved.get("seed")),
        "version": nnshift.__version__,
        "outputs": written,
        "duration_s": time.perf_counter() - started,
    }
    (out / "manifest.json").write_text(dumps_json(manifest))
    return 0


if __name__ == "__main__":
    sys.exit(main())
