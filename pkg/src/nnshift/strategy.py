"""Customer strategies, effective arrival rates and the overload fraction."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from math import comb

import numpy as np

from nnshift.geometry import format_float
from nnshift.nngraph import DegreeCounts, KnnGraph, StarCounts

# Rates within this relative distance of a threshold count as equal to it.
# Only floating-point representations of exact ties get this close.
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class KPNNS:
    """Stay with probability ``1 - p``, else join one of the ``k`` nearest queues uniformly."""

    k: int
    p: float

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")


@dataclass(frozen=True)
class LRNNS:
    """One-dimensional shift to the left neighbour w.p. ``ell`` or the right one w.p. ``r``.

    A server at the left end has no left neighbour: its customers go right
    with probability ``r`` and stay otherwise (mirror image at the right end).
    """

    ell: float
    r: float

    def __post_init__(self):
        if self.ell < 0 or self.r < 0 or self.ell + self.r > 1.0 + 1e-15:
            raise ValueError(f"need ell, r >= 0 and ell + r <= 1, got ell={self.ell}, r={self.r}")


Strategy = KPNNS | LRNNS


@dataclass(frozen=True, eq=False)
class LoadReport:
    lambda_eff: np.ndarray
    rho: np.ndarray
    overloaded: np.ndarray
    overload_fraction: float
    mu: float
    lam: float | None = None

    @property
    def n(self) -> int:
        return len(self.lambda_eff)

    @property
    def unchanged(self) -> np.ndarray:
        if self.lam is None:
            raise ValueError("the exogenous rate is needed to tell unchanged servers apart")
        return _close(self.lambda_eff, self.lam) & ~self.overloaded

    def classes(self) -> list[str]:
        """``overloaded``, ``unchanged`` (joins at exactly the exogenous rate) or ``underloaded``."""
        unchanged = self.unchanged
        return [
            "overloaded" if o else "unchanged" if u else "underloaded"
            for o, u in zip(self.overloaded.tolist(), unchanged.tolist())
        ]

    def tally(self) -> dict[str, int]:
        out = {"overloaded": 0, "unchanged": 0, "underloaded": 0}
        for c in self.classes():
            out[c] += 1
        return out

    def to_csv(self, points: np.ndarray) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        dim = points.shape[1]
        w.writerow(["index"] + [f"x{c + 1}" for c in range(dim)] + ["lambda_eff", "rho", "class"])
        for i, cls in enumerate(self.classes()):
            w.writerow(
                [i]
                + [format_float(v) for v in points[i]]
                + [format_float(self.lambda_eff[i]), format_float(self.rho[i]), cls]
            )
        return buf.getvalue()


def _close(a, b):
    return np.isclose(a, b, rtol=TIE_RTOL, atol=0.0)


def _check_rates(lam, mu):
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")


def theta(k: int, p: float, lam: float, mu: float) -> float:
    """In-degree threshold above which a server is overloaded.

    ``k + (k / p) * (mu / lam - 1)``.  With ``p == 0`` nobody shifts and the
    limit is returned: ``+inf`` for ``mu > lam``, ``k`` for ``mu == lam`` and
    ``-inf`` for ``mu < lam``.
    """
    _check_rates(lam, mu)
    if p == 0:
        if math.isclose(mu, lam, rel_tol=TIE_RTOL):
            return float(k)
        return math.inf if mu > lam else -math.inf
    return k + (k / p) * (mu / lam - 1.0)


def floor_threshold(th: float) -> float:
    """``floor(th)``, snapping values a rounding error below an integer up to it."""
    if math.isinf(th):
        return th
    nearest = round(th)
    if math.isclose(th, nearest, rel_tol=TIE_RTOL, abs_tol=TIE_RTOL):
        return nearest
    return math.floor(th)


def effective_rates(g: KnnGraph, s: Strategy, lam: float) -> np.ndarray:
    """Long-run rate at which customers join each queue.

    KPNNS: ``lam * (1 - p) + lam * d_in(i) * p / k``.
    LRNNS: flow balance along the line; a server collects ``lam * r`` from
    its left neighbour and ``lam * ell`` from its right neighbour.
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    if isinstance(s, KPNNS):
        if s.k != g.k:
            raise ValueError(f"strategy k={s.k} does not match graph k={g.k}")
        return lam * (1.0 - s.p) + lam * g.in_degree * (s.p / s.k)
    if isinstance(s, LRNNS):
        return _lr_rates(g.points.points, s, lam)
    raise TypeError(f"unknown strategy {s!r}")


def line_order(points: np.ndarray) -> np.ndarray:
    """Node indices sorted left to right (coordinate ties by index)."""
    if points.shape[1] != 1:
        raise ValueError(f"the left-right strategy needs d = 1, got d = {points.shape[1]}")
    if points.shape[0] < 2:
        raise ValueError("the left-right strategy needs at least two servers")
    return np.argsort(points[:, 0], kind="stable")


def _lr_rates(points, s: LRNNS, lam):
    order = line_order(points)
    n = len(order)
    has_left = np.ones(n)
    has_right = np.ones(n)
    has_left[0] = 0.0
    has_right[-1] = 0.0
    # Keeps what does not leave, gains r from the left and ell from the right.
    by_rank = lam * (1.0 - s.ell * has_left - s.r * has_right + s.r * has_left + s.ell * has_right)
    rates = np.empty(n)
    rates[order] = by_rank
    return rates


def classify_overload(rates, mu: float, lam: float | None = None) -> LoadReport:
    """Mark servers with ``rate > mu`` (strictly) as overloaded."""
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    rates = np.asarray(rates, dtype=float)
    over = (rates > mu) & ~_close(rates, mu)
    return LoadReport(
        lambda_eff=rates,
        rho=rates / mu,
        overloaded=over,
        overload_fraction=float(over.sum()) / len(rates),
        mu=mu,
        lam=lam,
    )


def overload_via_indegree(q: DegreeCounts, k: int, p: float, lam: float, mu: float, alpha_k: int) -> float:
    """Overload fraction from in-degree counts: nodes with in-degree above the threshold."""
    n = q.n
    if p == 0:
        return 0.0 if lam <= mu or math.isclose(lam, mu, rel_tol=TIE_RTOL) else 1.0
    tf = floor_threshold(theta(k, p, lam, mu))
    if tf >= alpha_k:
        return 0.0
    start = max(int(tf) + 1, 0)
    return int(q.q[start : alpha_k + 1].sum()) / n


def a_coefficients(theta_floor: int, alpha_k: int) -> list[int]:
    """Weights ``a_1..a_alpha_k`` with ``O_N = (1/N) sum_m a_m I_{K_m}``."""
    if not 0 <= theta_floor <= alpha_k:
        raise ValueError(f"need 0 <= theta_floor <= alpha_k, got {theta_floor}, {alpha_k}")
    return [
        sum((-1) ** (m - n) * comb(m, n) for n in range(theta_floor + 1, m + 1)) if m > theta_floor else 0
        for m in range(1, alpha_k + 1)
    ]


def overload_via_stars(s: StarCounts, k: int, p: float, lam: float, mu: float, alpha_k: int) -> float:
    """Overload fraction as a weighted sum of star counts."""
    if p == 0:
        return 0.0 if lam <= mu or math.isclose(lam, mu, rel_tol=TIE_RTOL) else 1.0
    tf = floor_threshold(theta(k, p, lam, mu))
    if tf >= alpha_k:
        return 0.0
    if tf < 0:
        # Even isolated servers are overloaded; star counts do not see them.
        return 1.0
    a = a_coefficients(int(tf), alpha_k)
    return sum(am * int(im) for am, im in zip(a, s.i_counts)) / s.n_nodes
