"""Directed k-NN graphs, in-degree tallies and star-subgraph counts.

Every node points at its ``k`` nearest neighbours.  The in-degree of a node
is bounded by ``alpha_d * k`` where ``alpha_d`` is the largest number of
points on the unit sphere of R^d with pairwise distances above one.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from math import comb

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from nnshift.geometry import PointSet, knn_table

ALPHA = {1: 2, 2: 5, 3: 12}


class DegreeBoundError(ValueError):
    """An in-degree exceeded ``alpha_d * k``."""


@dataclass(frozen=True, eq=False)
class KnnGraph:
    points: PointSet
    k: int
    out_neighbours: np.ndarray  # (n, k), row i ordered by distance from i
    in_degree: np.ndarray  # (n,)

    @property
    def n(self) -> int:
        return self.out_neighbours.shape[0]

    @property
    def dim(self) -> int:
        return self.points.dim

    def edges(self):
        """Yield ``(src, dst, rank)`` with rank 1 for the nearest neighbour."""
        for src, row in enumerate(self.out_neighbours):
            for rank, dst in enumerate(row, start=1):
                yield src, int(dst), rank

    def edges_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["src", "dst", "rank"])
        w.writerows(self.edges())
        return buf.getvalue()

    def nodes_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "in_degree"])
        w.writerows(enumerate(self.in_degree.tolist()))
        return buf.getvalue()


@dataclass(frozen=True, eq=False)
class DegreeCounts:
    """``q[j]`` is the number of nodes with in-degree ``j``, ``j = 0..alpha_k``."""

    q: np.ndarray

    @property
    def n(self) -> int:
        return int(self.q.sum())

    @property
    def alpha_k(self) -> int:
        return len(self.q) - 1

    def __eq__(self, other):
        return isinstance(other, DegreeCounts) and np.array_equal(self.q, other.q)


@dataclass(frozen=True, eq=False)
class StarCounts:
    """``i_counts[m - 1]`` is the number of copies of the star with ``m`` leaves."""

    i_counts: np.ndarray
    n_nodes: int

    def __getitem__(self, m: int) -> int:
        if not 1 <= m <= len(self.i_counts):
            raise IndexError(m)
        return int(self.i_counts[m - 1])


def build_knn_graph(ps: PointSet, k: int) -> KnnGraph:
    """Build the directed k-NN graph on ``ps``.

    Raises ``ValueError`` if ``k > N - 1`` and :class:`DegreeBoundError` if an
    in-degree breaks the ``alpha_d * k`` bound (only checked for d <= 3).
    """
    out = knn_table(ps, k)
    out.setflags(write=False)
    indeg = np.bincount(out.ravel(), minlength=ps.n)
    indeg.setflags(write=False)
    if ps.dim in ALPHA and indeg.max() > ALPHA[ps.dim] * k:
        raise DegreeBoundError(
            f"in-degree {indeg.max()} exceeds alpha_{ps.dim} * k = {ALPHA[ps.dim] * k}"
        )
    return KnnGraph(points=ps, k=k, out_neighbours=out, in_degree=indeg)


def in_degree_counts(g: KnnGraph, alpha_k: int) -> DegreeCounts:
    top = int(g.in_degree.max())
    if top > alpha_k:
        raise DegreeBoundError(f"in-degree {top} exceeds alpha_k = {alpha_k}")
    return DegreeCounts(q=np.bincount(g.in_degree, minlength=alpha_k + 1).astype(np.int64))


def star_counts(g: KnnGraph, alpha_k: int) -> StarCounts:
    """Count directed stars ``K_m`` (``m`` tails into one head), ``m = 1..alpha_k``.

    A node of in-degree ``D`` is the head of ``comb(D, m)`` such stars.
    """
    tally = np.bincount(g.in_degree).tolist()
    counts = [sum(c * comb(j, m) for j, c in enumerate(tally)) for m in range(1, alpha_k + 1)]
    return StarCounts(i_counts=np.array(counts, dtype=np.int64), n_nodes=g.n)


def counts_from_stars(s: StarCounts, alpha_k: int) -> DegreeCounts:
    """Recover in-degree counts from star counts by inclusion-exclusion.

    ``Q_j = sum_{i=j}^{alpha_k} (-1)^(i-j) C(i, j) I_i`` for ``j >= 1`` and
    ``Q_0 = N - sum_{j>=1} Q_j``.  Exact integer arithmetic throughout.
    """
    n = s.n_nodes
    if n <= alpha_k + 1:
        raise ValueError(f"inversion needs N > alpha_k + 1 (N={n}, alpha_k={alpha_k})")
    if len(s.i_counts) != alpha_k:
        raise ValueError(f"expected {alpha_k} star counts, got {len(s.i_counts)}")
    stars = [int(x) for x in s.i_counts]
    q = [0] * (alpha_k + 1)
    for j in range(1, alpha_k + 1):
        q[j] = sum((-1) ** (i - j) * comb(i, j) * stars[i - 1] for i in range(j, alpha_k + 1))
    q[0] = n - sum(q[1:])
    return DegreeCounts(q=np.array(q, dtype=np.int64))


def mutual_pairs(g: KnnGraph) -> list[tuple[int, int]]:
    """Pairs ``(i, j)``, ``i < j``, that are each other's nearest neighbour."""
    if g.k != 1:
        raise ValueError(f"mutual pairs are defined for 1-NN graphs only (k={g.k})")
    nn = g.out_neighbours[:, 0]
    i = np.arange(g.n)
    mask = (nn[nn] == i) & (i < nn)
    return [(int(a), int(b)) for a, b in zip(i[mask], nn[mask])]


def weak_components(g: KnnGraph) -> list[set[int]]:
    n = g.n
    rows = np.repeat(np.arange(n), g.k)
    adj = csr_matrix((np.ones(rows.size, dtype=np.int8), (rows, g.out_neighbours.ravel())), shape=(n, n))
    ncomp, labels = connected_components(adj, directed=True, connection="weak")
    comps = [set() for _ in range(ncomp)]
    for node, lab in enumerate(labels.tolist()):
        comps[lab].add(node)
    return sorted(comps, key=min)
