"""Asymptotic constants of the k-NN in-degree distribution.

For ``k = 1`` the limiting in-degree fractions are alternating sums of the
integrals

    C_m = int_{A_m} exp(-vol(B(u_1, |u_1|) u ... u B(u_m, |u_m|))) du_1..du_m

over the configurations ``A_m`` in which the origin is the nearest neighbour
of every ``u_i``.  They are estimated here by importance sampling with exact
union volumes (interval merging in 1D, boundary arcs in 2D).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from nnshift import _rng
from nnshift._parallel import ordered_map
from nnshift.geometry import sample_points
from nnshift.nngraph import ALPHA, build_knn_graph, in_degree_counts
from nnshift.strategy import TIE_RTOL, floor_threshold, theta

SOURCES = ("exact", "paper_table", "mc_integral", "empirical")

_TABLE_2D = (2.84e-1, 4.63e-1, 2.22e-1, 3.04e-2, 6.56e-4, 1.90e-7)
# Half a unit in the last printed digit of each table entry.
_TABLE_2D_ROUNDING = (5e-4, 5e-4, 5e-4, 5e-5, 5e-7, 5e-10)

_CHUNK = 100_000


def alpha(d: int) -> int:
    """Maximum in-degree per unit of ``k`` in dimension ``d`` (1, 2 or 3)."""
    if d not in ALPHA:
        raise ValueError(f"alpha_d is only available for d in (1, 2, 3), got d={d}")
    return ALPHA[d]


@dataclass(frozen=True, eq=False)
class ConstantsTable:
    d: int
    k: int
    q: np.ndarray
    source: str
    stderr: np.ndarray | None = None
    samples: int | None = None
    seed: int | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}")
        q = np.asarray(self.q, dtype=float)
        if len(q) != alpha(self.d) * self.k + 1:
            raise ValueError(f"expected {alpha(self.d) * self.k + 1} entries, got {len(q)}")
        object.__setattr__(self, "q", q)
        if self.stderr is not None:
            object.__setattr__(self, "stderr", np.asarray(self.stderr, dtype=float))

    def sum_tolerance(self) -> float:
        if self.source in ("exact", "paper_table") or self.stderr is None:
            return 1e-6
        return max(3.0 * float(np.sqrt((self.stderr**2).sum())), 1e-12)

    def to_json(self) -> dict:
        doc = {
            "d": self.d,
            "k": self.k,
            "source": self.source,
            "q": [float(x) for x in self.q],
            "stderr": None if self.stderr is None else [float(x) for x in self.stderr],
            "samples": self.samples,
            "seed": self.seed,
        }
        doc.update(self.extra)
        return doc


def known_constants(d: int, k: int) -> ConstantsTable:
    """Closed-form 1D fractions (1/4, 1/2, 1/4) or the published 2D table."""
    if (d, k) == (1, 1):
        return ConstantsTable(1, 1, np.array([0.25, 0.5, 0.25]), "exact", stderr=np.zeros(3))
    if (d, k) == (2, 1):
        return ConstantsTable(2, 1, np.array(_TABLE_2D), "paper_table", stderr=np.array(_TABLE_2D_ROUNDING))
    raise ValueError(f"no published constants for (d, k) = ({d}, {k}); use mc_constants or empirical_constants")


def known_variance(d: int, k: int) -> float | None:
    """Limit of ``N * Var(O_N)`` when it is known in closed form."""
    if (d, k) == (1, 1):
        return 19 / 240
    return None


# ---------------------------------------------------------------------------
# Union volumes of balls through the origin


def ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def union_volume(u: np.ndarray) -> np.ndarray:
    """Volume of ``B(u_1, |u_1|) u ... u B(u_m, |u_m|)`` per row of ``u`` (shape ``(S, m, d)``)."""
    d = u.shape[-1]
    if d == 1:
        x = u[..., 0]
        return 2.0 * (np.maximum(x, 0.0).max(axis=1) + np.maximum(-x, 0.0).max(axis=1))
    if d == 2:
        return _disk_union_area(u)
    raise ValueError(f"union volumes are implemented for d in (1, 2), got d={d}")


def _disk_union_area(c: np.ndarray) -> np.ndarray:
    # Green's theorem over the uncovered boundary arcs of each circle.
    s, m, _ = c.shape
    r = np.linalg.norm(c, axis=-1)
    two_pi = 2.0 * np.pi
    area = np.zeros(s)
    for i in range(m):
        ci, ri = c[:, i, :], r[:, i]
        lo, hi = [], []
        swallowed = np.zeros(s, dtype=bool)
        for j in range(m):
            if j == i:
                continue
            delta = c[:, j, :] - ci
            dist = np.linalg.norm(delta, axis=-1)
            rj = r[:, j]
            swallowed |= dist + ri <= rj
            crossing = (dist < ri + rj) & (dist + rj > ri) & (dist + ri > rj)
            cos_half = (ri**2 + dist**2 - rj**2) / (2.0 * ri * np.where(dist > 0, dist, 1.0))
            half = np.where(crossing, np.arccos(np.clip(cos_half, -1.0, 1.0)), 0.0)
            a = np.mod(np.arctan2(delta[:, 1], delta[:, 0]) - half, two_pi)
            b = a + 2.0 * half
            wraps = b > two_pi
            lo += [a, np.zeros(s)]
            hi += [np.where(wraps, two_pi, b), np.where(wraps, b - two_pi, 0.0)]
        if lo:
            lo_a, hi_a = np.stack(lo, axis=1), np.stack(hi, axis=1)
            order = np.argsort(lo_a, axis=1)
            lo_a = np.take_along_axis(lo_a, order, axis=1)
            hi_a = np.take_along_axis(hi_a, order, axis=1)
            reach = np.maximum.accumulate(hi_a, axis=1)
            gap_lo = np.concatenate([np.zeros((s, 1)), reach], axis=1)
            gap_hi = np.maximum(np.concatenate([lo_a, np.full((s, 1), two_pi)], axis=1), gap_lo)
        else:
            gap_lo, gap_hi = np.zeros((s, 1)), np.full((s, 1), two_pi)
        cx, cy, rr = ci[:, :1], ci[:, 1:], ri[:, None]
        arcs = 0.5 * (
            rr**2 * (gap_hi - gap_lo)
            + rr * (cx * (np.sin(gap_hi) - np.sin(gap_lo)) - cy * (np.cos(gap_hi) - np.cos(gap_lo)))
        )
        area += np.where(swallowed, 0.0, arcs.sum(axis=1))
    return area


def in_region(u: np.ndarray) -> np.ndarray:
    """Rows where ``|u_i| < |u_j - u_i|`` for every ``i != j``."""
    s, m, _ = u.shape
    norms = np.linalg.norm(u, axis=-1)
    ok = np.ones(s, dtype=bool)
    for i in range(m):
        for j in range(m):
            if i != j:
                ok &= norms[:, i] < np.linalg.norm(u[:, j, :] - u[:, i, :], axis=-1)
    return ok


def _proposal_rate(m: int) -> float:
    # Per-point density beta * exp(-beta * vol(B(u, |u|))).  beta = 1 makes the
    # m = 1 weight identically one; 0.7 keeps the weights bounded in practice
    # for m >= 2 (union volume >= largest single ball).
    return 1.0 if m == 1 else 0.7


def union_integral(d: int, m: int, n_samples: int, seed: int) -> tuple[float, float]:
    """Importance-sampling estimate of ``C^d_m`` and its standard error.

    ``C_0 = 1`` by convention.  The proposal has full support, so there is no
    truncation error.
    """
    if d not in (1, 2):
        raise ValueError(f"the union integral is implemented for d in (1, 2), got d={d}")
    if m < 0:
        raise ValueError(f"m must be >= 0, got {m}")
    if m == 0:
        return 1.0, 0.0
    if n_samples < 2:
        raise ValueError("need at least two samples")
    rng = _rng.stream(seed, "union-integral", d, m)
    beta = _proposal_rate(m)
    vd = ball_volume(d)
    sums, sq_sums = [], []
    left = n_samples
    while left > 0:
        size = min(_CHUNK, left)
        left -= size
        vol = rng.exponential(1.0 / beta, size=(size, m))
        radius = (vol / vd) ** (1.0 / d)
        if d == 1:
            direction = rng.choice(np.array([-1.0, 1.0]), size=(size, m, 1))
        else:
            g = rng.standard_normal((size, m, d))
            direction = g / np.linalg.norm(g, axis=-1, keepdims=True)
        u = radius[..., None] * direction
        w = np.zeros(size)
        ok = in_region(u)
        if ok.any():
            log_w = -union_volume(u[ok]) + beta * vol[ok].sum(axis=1) - m * math.log(beta)
            w[ok] = np.exp(log_w)
        sums.append(w.sum())
        sq_sums.append((w * w).sum())
    mean = math.fsum(sums) / n_samples
    var = max(math.fsum(sq_sums) / n_samples - mean * mean, 0.0) * n_samples / (n_samples - 1)
    return mean, math.sqrt(var / n_samples)


def _q_weights(j: int, a: int) -> dict[int, float]:
    # q_j = (1/j!) sum_{i=0}^{a-j} (-1)^i / i! * C_{i+j}
    return {i + j: (-1) ** i / (math.factorial(i) * math.factorial(j)) for i in range(a - j + 1)}


def mc_constants(d: int, j: int, n_samples: int, seed: int) -> tuple[float, float]:
    """Monte Carlo estimate of ``q_{d,1,j}`` with its standard error."""
    if d not in (1, 2):
        raise ValueError(f"Monte Carlo constants are implemented for d in (1, 2), got d={d}")
    a = alpha(d)
    if not 0 <= j <= a:
        raise ValueError(f"j must lie in 0..{a}, got {j}")
    if n_samples < 10_000:
        raise ValueError(f"n_samples must be >= 1e4, got {n_samples}")
    est, var = 0.0, 0.0
    for m, wt in _q_weights(j, a).items():
        c, se = union_integral(d, m, n_samples, seed)
        est += wt * c
        var += (wt * se) ** 2
    return est, math.sqrt(var)


def mc_table(d: int, n_samples: int, seed: int) -> ConstantsTable:
    """All ``q_{d,1,j}`` from one set of ``C_m`` estimates."""
    if n_samples < 10_000:
        raise ValueError(f"n_samples must be >= 1e4, got {n_samples}")
    a = alpha(d)
    if d not in (1, 2):
        raise ValueError(f"Monte Carlo constants are implemented for d in (1, 2), got d={d}")
    cs = [union_integral(d, m, n_samples, seed) for m in range(a + 1)]
    q, se = [], []
    for j in range(a + 1):
        wts = _q_weights(j, a)
        q.append(sum(w * cs[m][0] for m, w in wts.items()))
        se.append(math.sqrt(sum((w * cs[m][1]) ** 2 for m, w in wts.items())))
    return ConstantsTable(
        d, 1, np.array(q), "mc_integral", stderr=np.array(se), samples=n_samples, seed=seed,
        extra={"C": [c for c, _ in cs], "C_stderr": [s for _, s in cs], "truncation_error": 0.0},
    )


# ---------------------------------------------------------------------------
# Empirical estimation and limits


def replication_counts(d: int, k: int, n_nodes: int, rep: int, seed: int) -> np.ndarray:
    """In-degree tally of replication ``rep`` under master ``seed``."""
    ps = sample_points(n_nodes, d, _rng.replication_seed(seed, rep))
    g = build_knn_graph(ps, k)
    return in_degree_counts(g, alpha(d) * k).q


def empirical_constants(
    d: int, k: int, n_nodes: int = 1000, n_reps: int = 200, seed: int = 0, threads: int | None = None
) -> ConstantsTable:
    """Average in-degree fractions of simulated k-NN graphs.

    Replication ``r`` uses the same points as replication ``r`` of an
    experiment run with the same master seed.
    """
    if n_nodes < 1000:
        raise ValueError(f"n_nodes must be >= 1000, got {n_nodes}")
    if n_reps < 100:
        raise ValueError(f"n_reps must be >= 100, got {n_reps}")
    counts = np.array(
        ordered_map(lambda r: replication_counts(d, k, n_nodes, r, seed), range(n_reps), threads)
    )
    q = counts.sum(axis=0) / (n_nodes * n_reps)
    se = (counts / n_nodes).std(axis=0, ddof=1) / math.sqrt(n_reps)
    return ConstantsTable(d, k, q, "empirical", stderr=se, samples=n_reps, seed=seed, extra={"n_nodes": n_nodes})


def zero_overload(d: int, k: int, p: float, lam: float, mu: float) -> bool:
    """True when no server can be overloaded whatever the placement."""
    if p == 0:
        return lam <= mu or math.isclose(lam, mu, rel_tol=TIE_RTOL)
    return floor_threshold(theta(k, p, lam, mu)) >= alpha(d) * k


def limit_overload(d: int, k: int, p: float, lam: float, mu: float, table: ConstantsTable) -> float:
    """Almost-sure limit of the overload fraction as ``N -> inf`` (requires ``lam <= mu``)."""
    if (table.d, table.k) != (d, k):
        raise ValueError(f"table is for (d, k) = ({table.d}, {table.k}), not ({d}, {k})")
    if lam > mu and not math.isclose(lam, mu, rel_tol=TIE_RTOL):
        raise ValueError("the limit is only established for lambda <= mu")
    if zero_overload(d, k, p, lam, mu):
        return 0.0
    start = int(floor_threshold(theta(k, p, lam, mu))) + 1
    return float(table.q[start:].sum())
