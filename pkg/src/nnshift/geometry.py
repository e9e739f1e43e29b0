"""Server locations in the unit cube and exact k-nearest-neighbour queries."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from nnshift._rng import check_seed, stream

# Below this size a full distance matrix is cheaper than building a tree.
_BRUTE_FORCE_MAX_N = 64
# Extra KD-tree candidates per row so that exact re-ranking rarely needs a fallback.
_EXTRA_CANDIDATES = 2


@dataclass(frozen=True, eq=False)
class PointSet:
    """``n`` points in ``[0, 1]^dim``.

    ``points`` has shape ``(n, dim)`` and is read-only; row ``i`` is server
    ``i`` for the lifetime of the object.
    """

    dim: int
    points: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, copy=True)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2 or pts.shape[1] != self.dim:
            raise ValueError(f"points must have shape (n, {self.dim}), got {pts.shape}")
        if pts.shape[0] < 1:
            raise ValueError("a point set needs at least one point")
        if not np.all((pts >= 0.0) & (pts <= 1.0)):
            raise ValueError("all coordinates must lie in [0, 1]")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @cached_property
    def tree(self) -> cKDTree:
        return cKDTree(self.points)

    def to_csv(self, path=None) -> str:
        """Write ``index, x1..xd`` rows; the seed goes in a leading comment."""
        buf = io.StringIO()
        buf.write(f"# seed={'' if self.seed is None else self.seed} dim={self.dim}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index"] + [f"x{c + 1}" for c in range(self.dim)])
        for i, row in enumerate(self.points):
            w.writerow([i] + [format_float(v) for v in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "PointSet":
        seed = None
        rows = []
        with open(path, newline="") as fh:
            lines = []
            for line in fh:
                if line.startswith("#"):
                    for tok in line[1:].split():
                        key, _, val = tok.partition("=")
                        if key == "seed" and val:
                            seed = int(val)
                    continue
                lines.append(line)
        reader = csv.reader(lines)
        header = next(reader)
        dim = len(header) - 1
        for rec in reader:
            if rec:
                rows.append((int(rec[0]), [float(v) for v in rec[1:]]))
        rows.sort(key=lambda r: r[0])
        if [r[0] for r in rows] != list(range(len(rows))):
            raise ValueError(f"{path}: indices must be 0..n-1")
        return cls(dim=dim, points=np.array([r[1] for r in rows]).reshape(-1, dim), seed=seed)


def format_float(x: float) -> str:
    """17 significant digits, locale independent."""
    return format(float(x), ".17g")


def sample_points(n: int, d: int, seed: int) -> PointSet:
    """Draw ``n`` independent uniform points in ``[0, 1]^d``.

    The same ``(n, d, seed)`` always reproduces the same coordinates.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    seed = check_seed(seed)
    pts = stream(seed, "points").random((n, d))
    return PointSet(dim=d, points=pts, seed=seed)


def _check_query(ps: PointSet, i: int, k: int):
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k >= ps.n:
        raise ValueError(f"k must satisfy k <= N - 1 (k={k}, N={ps.n})")
    if not 0 <= i < ps.n:
        raise IndexError(f"node index {i} out of range for N={ps.n}")


def _sq_dist(points: np.ndarray, i, idx) -> np.ndarray:
    # Single formula for every path so that ties resolve identically.
    return ((points[idx] - points[i]) ** 2).sum(axis=-1)


def _rank(d2: np.ndarray, idx: np.ndarray, k: int) -> np.ndarray:
    # Sort each row by (distance, index) and keep the first k.
    order = np.lexsort((idx, d2), axis=-1)
    return np.take_along_axis(idx, order, axis=-1)[..., :k]


def brute_force_knn(ps: PointSet, i: int, k: int) -> list[int]:
    """Reference k-NN query by sorting all distances from point ``i``.

    Same contract as :func:`k_nearest`: increasing distance, ties to the
    smaller index, ``i`` itself excluded.
    """
    _check_query(ps, i, k)
    idx = np.arange(ps.n)
    d2 = _sq_dist(ps.points, i, idx)
    d2[i] = np.inf
    return _rank(d2, idx, k).tolist()


def _brute_force_table(points: np.ndarray, k: int) -> np.ndarray:
    n = points.shape[0]
    d2 = ((points[None, :, :] - points[:, None, :]) ** 2).sum(axis=-1)
    np.fill_diagonal(d2, np.inf)
    idx = np.broadcast_to(np.arange(n), (n, n))
    return _rank(d2, idx, k)


def knn_table(ps: PointSet, k: int) -> np.ndarray:
    """Out-neighbour lists of every point as an ``(n, k)`` integer array."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k >= ps.n:
        raise ValueError(f"k must satisfy k <= N - 1 (k={k}, N={ps.n})")
    if ps.n <= _BRUTE_FORCE_MAX_N:
        return _brute_force_table(ps.points, k)
    return _tree_rows(ps, np.arange(ps.n), k)


def _tree_rows(ps: PointSet, rows: np.ndarray, k: int) -> np.ndarray:
    pts = ps.points
    m = min(k + 1 + _EXTRA_CANDIDATES, ps.n)
    kd_dist, cand = ps.tree.query(pts[rows], k=m)
    cand = np.asarray(cand).reshape(len(rows), m)
    kd_dist = np.asarray(kd_dist).reshape(len(rows), m)
    d2 = _sq_dist(pts, rows[:, None], cand)
    d2[cand == rows[:, None]] = np.inf
    out = _rank(d2, cand, k)
    if m < ps.n:
        # Rows whose k-th exact distance reaches the candidate horizon may
        # have tied points the tree did not return.
        kth = np.take_along_axis(d2, np.lexsort((cand, d2), axis=-1), axis=-1)[:, k - 1]
        horizon = (kd_dist[:, -1] * (1.0 - 1e-9)) ** 2
        redo = np.flatnonzero(kth >= horizon)
        for r in redo:
            out[r] = brute_force_knn(ps, int(rows[r]), k)
    return out


def k_nearest(ps: PointSet, i: int, k: int) -> list[int]:
    """Indices of the ``k`` nearest neighbours of point ``i``.

    Ordered by increasing Euclidean distance; equal distances go to the
    smaller index.  Raises ``ValueError`` unless ``1 <= k <= N - 1``.
    """
    _check_query(ps, i, k)
    if ps.n <= _BRUTE_FORCE_MAX_N:
        return brute_force_knn(ps, i, k)
    return _tree_rows(ps, np.array([i]), k)[0].tolist()
