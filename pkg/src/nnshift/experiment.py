"""Replicated experiments, CLT diagnostics and the arrival-level simulation."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import stats

from nnshift import _rng
from nnshift._parallel import ordered_map
from nnshift.asymptotics import alpha, known_constants, known_variance, limit_overload
from nnshift.geometry import PointSet, format_float, sample_points
from nnshift.nngraph import build_knn_graph, in_degree_counts
from nnshift.strategy import (
    KPNNS,
    LRNNS,
    TIE_RTOL,
    LoadReport,
    Strategy,
    classify_overload,
    effective_rates,
    line_order,
)


class ConfigError(ValueError):
    """Invalid experiment parameter; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class ExperimentConfig:
    d: int = 1
    k: int = 1
    n_nodes: int = 1000
    n_reps: int = 1000
    strategy: Strategy = field(default_factory=lambda: KPNNS(1, 1.0))
    lam: float = 1.0
    mu: float = 1.0
    master_seed: int = 0
    event_horizon: float | None = None

    def validate(self) -> "ExperimentConfig":
        if self.d not in (1, 2, 3):
            raise ConfigError("d", f"must be 1, 2 or 3, got {self.d}")
        if self.k < 1:
            raise ConfigError("k", f"must be >= 1, got {self.k}")
        if self.k > self.n_nodes - 1:
            raise ConfigError("k", f"must satisfy k <= N - 1 (k={self.k}, N={self.n_nodes})")
        if self.n_nodes <= alpha(self.d) * self.k + 1:
            raise ConfigError(
                "n_nodes", f"must exceed alpha_d * k + 1 = {alpha(self.d) * self.k + 1}, got {self.n_nodes}"
            )
        if self.n_reps < 1:
            raise ConfigError("n_reps", f"must be >= 1, got {self.n_reps}")
        if not self.lam > 0:
            raise ConfigError("lambda", f"must be positive, got {self.lam}")
        if not self.mu > 0:
            raise ConfigError("mu", f"must be positive, got {self.mu}")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed", "must be a 64-bit unsigned integer")
        if self.event_horizon is not None and not self.event_horizon > 0:
            raise ConfigError("event_horizon", f"must be positive, got {self.event_horizon}")
        s = self.strategy
        if isinstance(s, KPNNS) and s.k != self.k:
            raise ConfigError("k", f"strategy uses k={s.k} but the graph uses k={self.k}")
        if isinstance(s, LRNNS) and self.d != 1:
            raise ConfigError("strategy", "the left-right strategy needs d = 1")
        return self

    def to_json(self) -> dict:
        s = self.strategy
        strat = {"type": "kpnns", "k": s.k, "p": s.p} if isinstance(s, KPNNS) else {"type": "lrnns", "ell": s.ell, "r": s.r}
        return {
            "d": self.d,
            "k": self.k,
            "n_nodes": self.n_nodes,
            "n_reps": self.n_reps,
            "strategy": strat,
            "lambda": self.lam,
            "mu": self.mu,
            "master_seed": self.master_seed,
            "event_horizon": self.event_horizon,
        }


@dataclass(frozen=True, eq=False)
class ReplicationSummary:
    config: ExperimentConfig
    overload_counts: np.ndarray  # servers overloaded per replication
    unchanged_counts: np.ndarray
    indegree_counts: np.ndarray  # (n_reps, alpha_k + 1)
    event_max_z: np.ndarray | None = None

    @property
    def n_nodes(self) -> int:
        return self.config.n_nodes

    @property
    def n_reps(self) -> int:
        return len(self.overload_counts)

    @property
    def overload(self) -> np.ndarray:
        return self.overload_counts / self.n_nodes

    @property
    def mean(self) -> float:
        return float(self.overload.mean())

    @property
    def variance(self) -> float:
        return float(self.overload.var(ddof=1)) if self.n_reps > 1 else 0.0

    @property
    def scaled_variance(self) -> float:
        return self.n_nodes * self.variance

    @property
    def histogram(self) -> np.ndarray:
        """``histogram[c]`` = replications with exactly ``c`` overloaded servers."""
        return np.bincount(self.overload_counts, minlength=self.n_nodes + 1)

    @property
    def indegree_fractions(self) -> np.ndarray:
        return self.indegree_counts.sum(axis=0) / (self.n_nodes * self.n_reps)

    @property
    def unchanged_fraction(self) -> float:
        return float(self.unchanged_counts.mean() / self.n_nodes)

    @property
    def skewness(self) -> float | None:
        if self.variance == 0:
            return None
        return float(stats.skew(self.overload))

    @property
    def excess_kurtosis(self) -> float | None:
        if self.variance == 0:
            return None
        return float(stats.kurtosis(self.overload))


@dataclass(frozen=True)
class CltDiagnostics:
    n_reps: int
    scaled_variance: float
    sigma2: float | None
    rel_error: float | None
    skewness: float | None
    excess_kurtosis: float | None
    skew_band: float
    kurtosis_band: float
    normal_ok: bool | None
    variance_ok: bool | None
    skipped: bool

    def to_json(self) -> dict:
        return asdict(self)


VARIANCE_RTOL = 0.15


def clt_check(summary: ReplicationSummary, sigma2: float | None = None) -> CltDiagnostics:
    """Compare ``N * Var(O_N)`` with ``sigma2`` and test skewness/kurtosis against normal bands.

    The bands are five normal-theory standard errors of the sample moments.
    A degenerate (zero-variance) sample skips every check.
    """
    n = summary.n_reps
    if n < 100:
        raise ValueError(f"the CLT check needs at least 100 replications, got {n}")
    skew_band = 5.0 * math.sqrt(6.0 / n)
    kurt_band = 5.0 * math.sqrt(24.0 / n)
    sv = summary.scaled_variance
    if summary.variance == 0:
        return CltDiagnostics(n, 0.0, sigma2, None, None, None, skew_band, kurt_band, None, None, True)
    sk, ku = summary.skewness, summary.excess_kurtosis
    rel = None if sigma2 is None else abs(sv - sigma2) / sigma2
    return CltDiagnostics(
        n_reps=n,
        scaled_variance=sv,
        sigma2=sigma2,
        rel_error=rel,
        skewness=sk,
        excess_kurtosis=ku,
        skew_band=skew_band,
        kurtosis_band=kurt_band,
        normal_ok=abs(sk) <= skew_band and abs(ku) <= kurt_band,
        variance_ok=None if rel is None else rel <= VARIANCE_RTOL,
        skipped=False,
    )


@dataclass(frozen=True, eq=False)
class EventSimResult:
    arrivals: np.ndarray
    joins: np.ndarray
    t: float
    lam: float
    mu: float
    lambda_eff: np.ndarray

    @property
    def empirical_rate(self) -> np.ndarray:
        return self.joins / self.t

    @property
    def z_scores(self) -> np.ndarray:
        """Join-count deviation from ``lambda_eff * t`` in Poisson standard deviations."""
        expected = self.lambda_eff * self.t
        sd = np.sqrt(expected)
        dev = self.joins - expected
        return np.divide(dev, sd, out=np.where(dev == 0, 0.0, np.inf), where=sd > 0)

    def max_relative_deviation(self, min_rate: float = 0.5) -> float:
        sel = self.lambda_eff >= min_rate
        if not sel.any():
            return 0.0
        return float(np.max(np.abs(self.empirical_rate[sel] - self.lambda_eff[sel]) / self.lambda_eff[sel]))

    def empirical_report(self) -> LoadReport:
        return classify_overload(self.empirical_rate, self.mu, self.lam)

    def to_csv(self, seed=None) -> str:
        buf = io.StringIO()
        buf.write(f"# seed={'' if seed is None else seed} t={format_float(self.t)}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "arrivals", "joins", "empirical_rate", "lambda_eff", "z"])
        z = self.z_scores
        for i in range(len(self.joins)):
            w.writerow([
                i, int(self.arrivals[i]), int(self.joins[i]),
                format_float(self.empirical_rate[i]), format_float(self.lambda_eff[i]), format_float(z[i]),
            ])
        return buf.getvalue()


def event_simulation(ps: PointSet, s: Strategy, lam: float, mu: float, t: float, seed: int) -> EventSimResult:
    """Simulate Poisson arrivals at every server over ``[0, t]`` and route each customer.

    Routing decisions do not depend on arrival epochs or queue state, so each
    station's process is represented by its Poisson count on ``[0, t]`` and
    every arrival then draws its own destination.
    """
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    n = ps.n
    rng = _rng.stream(seed, "events")
    arrivals = rng.poisson(lam * t, size=n)
    station = np.repeat(np.arange(n), arrivals)
    u = rng.random(station.size)

    if isinstance(s, KPNNS):
        g = build_knn_graph(ps, s.k)
        target = station.copy()
        shift = u < s.p
        if s.p > 0:
            slot = np.minimum((u[shift] / s.p * s.k).astype(np.int64), s.k - 1)
            target[shift] = g.out_neighbours[station[shift], slot]
        expected = effective_rates(g, s, lam)
    elif isinstance(s, LRNNS):
        order = line_order(ps.points)
        rank = np.empty(n, dtype=np.int64)
        rank[order] = np.arange(n)
        pos = rank[station]
        has_left = pos > 0
        has_right = pos < n - 1
        go_left = has_left & (u < s.ell)
        # Interior servers split [ell, ell + r) to the right; the left end uses [0, r).
        go_right = has_right & np.where(has_left, (u >= s.ell) & (u < s.ell + s.r), u < s.r)
        new_pos = pos - go_left + go_right
        target = order[new_pos]
        expected = effective_rates(build_knn_graph(ps, 1), s, lam)
    else:
        raise TypeError(f"unknown strategy {s!r}")

    return EventSimResult(
        arrivals=arrivals,
        joins=np.bincount(target, minlength=n),
        t=float(t),
        lam=float(lam),
        mu=float(mu),
        lambda_eff=expected,
    )


def _one_replication(cfg: ExperimentConfig, rep: int):
    rep_seed = _rng.replication_seed(cfg.master_seed, rep)
    ps = sample_points(cfg.n_nodes, cfg.d, rep_seed)
    g = build_knn_graph(ps, cfg.k)
    report = classify_overload(effective_rates(g, cfg.strategy, cfg.lam), cfg.mu, cfg.lam)
    counts = in_degree_counts(g, alpha(cfg.d) * cfg.k).q
    event_z = None
    if cfg.event_horizon is not None:
        ev = event_simulation(ps, cfg.strategy, cfg.lam, cfg.mu, cfg.event_horizon, _rng.derive_seed(rep_seed, "events"))
        event_z = float(np.max(np.abs(ev.z_scores)))
    return int(report.overloaded.sum()), int(report.unchanged.sum()), counts, event_z


def run_replications(cfg: ExperimentConfig, threads: int | None = None) -> ReplicationSummary:
    """Run ``cfg.n_reps`` independent placements and collect overload statistics.

    Replication ``r`` draws its points from a stream derived from
    ``(master_seed, r)``; results are identical for any ``threads``.
    """
    cfg.validate()
    out = ordered_map(lambda r: _one_replication(cfg, r), range(cfg.n_reps), threads)
    return ReplicationSummary(
        config=cfg,
        overload_counts=np.array([o[0] for o in out], dtype=np.int64),
        unchanged_counts=np.array([o[1] for o in out], dtype=np.int64),
        indegree_counts=np.array([o[2] for o in out], dtype=np.int64),
        event_max_z=None if cfg.event_horizon is None else np.array([o[3] for o in out]),
    )


def small_n_expectation(n: int, reps: int, seed: int, p: float = 1.0, lam: float = 1.0, mu: float = 1.0) -> float:
    """Mean overload fraction of the (1, p) strategy on ``n`` in {2, 3} points of [0, 1].

    Vectorised over replications: each row of one ``(reps, n)`` draw is an
    instance.
    """
    if n not in (2, 3):
        raise ValueError(f"n must be 2 or 3, got {n}")
    if not (1.0 / (1.0 + p) < lam / mu <= 1.0):
        raise ValueError("requires 1/(1+p) < lambda/mu <= 1")
    x = _rng.stream(seed, "small-n", n).random((reps, n))
    d2 = (x[:, None, :] - x[:, :, None]) ** 2
    d2[:, np.arange(n), np.arange(n)] = np.inf
    nn = d2.argmin(axis=2)  # first minimum = smaller index on ties
    indeg = np.stack([(nn == j).sum(axis=1) for j in range(n)], axis=1)
    rates = lam * (1.0 - p) + lam * indeg * p
    over = (rates > mu) & ~np.isclose(rates, mu, rtol=TIE_RTOL, atol=0.0)
    return float(over.sum(axis=1).mean() / n)


class SpatialRow(NamedTuple):
    index: int
    coords: tuple
    in_degree: int | None
    lambda_eff: float
    cls: str


def spatial_export(ps: PointSet, report: LoadReport, in_degree=None) -> list[SpatialRow]:
    classes = report.classes()
    return [
        SpatialRow(
            i,
            tuple(float(v) for v in ps.points[i]),
            None if in_degree is None else int(in_degree[i]),
            float(report.lambda_eff[i]),
            classes[i],
        )
        for i in range(ps.n)
    ]


def spatial_csv(rows: list[SpatialRow], dim: int, seed=None) -> str:
    buf = io.StringIO()
    buf.write(f"# seed={'' if seed is None else seed}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index"] + [f"x{c + 1}" for c in range(dim)] + ["in_degree", "lambda_eff", "class"])
    for r in rows:
        w.writerow(
            [r.index] + [format_float(v) for v in r.coords]
            + ["" if r.in_degree is None else r.in_degree, format_float(r.lambda_eff), r.cls]
        )
    return buf.getvalue()


def summary_json(summary: ReplicationSummary) -> dict:
    cfg = summary.config
    sigma2 = known_variance(cfg.d, cfg.k) if isinstance(cfg.strategy, KPNNS) else None
    diag = clt_check(summary, sigma2).to_json() if summary.n_reps >= 100 else None
    prediction = None
    s = cfg.strategy
    if isinstance(s, KPNNS) and cfg.lam <= cfg.mu and (cfg.d, cfg.k) in ((1, 1), (2, 1)):
        prediction = limit_overload(cfg.d, cfg.k, s.p, cfg.lam, cfg.mu, known_constants(cfg.d, cfg.k))
    return {
        "master_seed": cfg.master_seed,
        "config": cfg.to_json(),
        "n_reps": summary.n_reps,
        "mean": summary.mean,
        "variance": summary.variance,
        "scaled_variance": summary.scaled_variance,
        "unchanged_fraction": summary.unchanged_fraction,
        "indegree_fractions": [float(x) for x in summary.indegree_fractions],
        "limit_prediction": prediction,
        "diagnostics": diag,
    }


def dumps_json(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def histogram_csv(summary: ReplicationSummary) -> str:
    buf = io.StringIO()
    buf.write(f"# master_seed={summary.config.master_seed}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["count", "frequency"])
    hist = summary.histogram
    lo, hi = int(summary.overload_counts.min()), int(summary.overload_counts.max())
    for c in range(lo, hi + 1):
        w.writerow([c, int(hist[c])])
    return buf.getvalue()
