"""Voronoi quantization of the state space.

A quantizer holds an ordered set of codeword points and maps any state to the
region of its nearest codeword (Euclidean distance, exact ties resolved to the
lowest codeword index). Lookups go through a kd-tree; the tree is rebuilt on
insertion, which is cheap at the codeword counts this toolkit produces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import DimensionMismatchError, InvalidArgumentError


@dataclass(frozen=True)
class Codeword:
    point: np.ndarray  # shape (d,)
    index: int


def _as_point(x, dim: int | None = None) -> np.ndarray:
    p = np.asarray(x, dtype=float)
    if p.ndim != 1:
        raise DimensionMismatchError(f"expected a 1-D point, got shape {p.shape}")
    if dim is not None and p.shape[0] != dim:
        raise DimensionMismatchError(f"point has dimension {p.shape[0]}, expected {dim}")
    return p


class Quantizer:
    """Immutable nearest-codeword mapper. Use :func:`build_quantizer` to create one.

    Concurrent read-only queries are safe; `add` returns a new quantizer with
    a freshly built index instead of mutating.
    """

    def __init__(self, points: np.ndarray, scale=None):
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[0] == 0:
            raise InvalidArgumentError("quantizer needs a non-empty (m, d) point array")
        self._points = points.copy()
        self._points.setflags(write=False)
        if scale is None:
            self._scale = None
            scaled = self._points
        else:
            self._scale = np.asarray(scale, dtype=float)
            if self._scale.shape != (points.shape[1],):
                raise InvalidArgumentError("scale must have one entry per dimension")
            scaled = self._points * self._scale
        self._tree = cKDTree(scaled)

    @property
    def dimension(self) -> int:
        return self._points.shape[1]

    @property
    def scale(self):
        """Optional per-dimension distance weights (None means raw Euclidean)."""
        return None if self._scale is None else self._scale.copy()

    def _scaled(self, x: np.ndarray) -> np.ndarray:
        return x if self._scale is None else x * self._scale

    @property
    def points(self) -> np.ndarray:
        """(m, d) array of codeword points, in index order. Read-only view."""
        return self._points

    @property
    def codewords(self) -> list[Codeword]:
        return [Codeword(p, i) for i, p in enumerate(self._points)]

    def __len__(self) -> int:
        return self._points.shape[0]

    def nearest(self, x) -> int:
        """Index of the codeword closest to `x`; exact ties go to the lowest index."""
        x = self._scaled(_as_point(x, self.dimension))
        m = len(self)
        k = min(m, 4)
        while True:
            dist, idx = self._tree.query(x, k=k)
            dist = np.atleast_1d(dist)
            idx = np.atleast_1d(idx)
            # All k returned tied: a lower tied index may exist beyond k.
            if k < m and dist[-1] == dist[0]:
                k = min(m, 2 * k)
                continue
            tied = idx[dist == dist[0]]
            return int(tied.min())

    def nearest_batch(self, xs) -> np.ndarray:
        """Vectorized :meth:`nearest` over an (n, d) array of states."""
        xs = np.asarray(xs, dtype=float)
        if xs.ndim != 2 or xs.shape[1] != self.dimension:
            raise DimensionMismatchError(
                f"expected states of shape (n, {self.dimension}), got {xs.shape}"
            )
        m = len(self)
        if m == 1:
            return np.zeros(len(xs), dtype=int)
        dist, idx = self._tree.query(self._scaled(xs), k=2, workers=-1)
        out = idx[:, 0].astype(int)
        # Exact two-way ties need the full lowest-index rule.
        ties = np.nonzero(dist[:, 0] == dist[:, 1])[0]
        for i in ties:
            out[i] = self.nearest(xs[i])
        return out

    def assign_all(self, states) -> dict[int, list[int]]:
        """Partition states over regions: codeword index -> positions in `states`.

        Every state lands in exactly one bucket, the bucket of its nearest
        codeword. Regions with no states are absent from the result.
        """
        states = np.asarray(states, dtype=float)
        if states.size == 0:
            return {}
        regions = self.nearest_batch(states)
        buckets: dict[int, list[int]] = {}
        for pos, r in enumerate(regions):
            buckets.setdefault(int(r), []).append(pos)
        return buckets

    def add(self, point) -> "Quantizer":
        """New quantizer with `point` appended as the next codeword index."""
        p = _as_point(point, self.dimension)
        return Quantizer(np.vstack([self._points, p[None, :]]), scale=self._scale)


def build_quantizer(codewords) -> Quantizer:
    """Build a quantizer from a non-empty list of equal-dimension points."""
    if len(codewords) == 0:
        raise InvalidArgumentError("codeword list must be non-empty")
    first = _as_point(codewords[0])
    pts = [first]
    for c in codewords[1:]:
        pts.append(_as_point(c, first.shape[0]))
    return Quantizer(np.stack(pts))


def add_codeword(q: Quantizer, point) -> Quantizer:
    return q.add(point)
