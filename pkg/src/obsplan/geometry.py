"""Sensor motion spaces: index sets with coordinates and a travel distance.

Three kinds are supported.  ``line`` and ``grid2d`` use Euclidean distance in
grid units (with optional periodic wrap per axis); ``graph`` uses hop counts
over an explicit adjacency structure, which is how land masks restrict travel
on gridded datasets.
"""

from __future__ import annotations

import collections
from dataclasses import dataclass

import numpy as np


class Geometry:
    """Immutable index space with a distance function.

    Construct through one of the classmethods :meth:`line`, :meth:`grid2d` or
    :meth:`graph`.  Distances from a given source index are memoised, since
    planners query the same sources repeatedly.
    """

    def __init__(self, kind, n, coords, *, shape=None, periodic=None, adjacency=None):
        if n < 1:
            raise ValueError("geometry needs at least one index")
        self.kind = kind
        self.n = int(n)
        self.coords = np.asarray(coords, dtype=float)
        self.shape = shape
        self.periodic = periodic
        self.adjacency = adjacency
        self._dist_cache: dict[int, np.ndarray] = {}
        self._reach_cache: dict[tuple, list] = {}

    # -- constructors ------------------------------------------------------

    @classmethod
    def line(cls, n, periodic=False):
        """1-D chain of ``n`` cells, optionally wrapped into a ring."""
        coords = np.arange(n, dtype=float)[:, None]
        return cls("line", n, coords, shape=(n,), periodic=(bool(periodic),))

    @classmethod
    def grid2d(cls, rows, cols, periodic=(False, False)):
        """``rows x cols`` lattice in row-major index order."""
        if rows < 1 or cols < 1:
            raise ValueError("grid2d needs positive extents")
        idx = np.arange(rows * cols)
        coords = np.stack([idx // cols, idx % cols], axis=1).astype(float)
        return cls("grid2d", rows * cols, coords, shape=(rows, cols),
                   periodic=(bool(periodic[0]), bool(periodic[1])))

    @classmethod
    def graph(cls, adjacency, coords=None):
        """Explicit undirected adjacency; distance is the hop count.

        ``adjacency`` is a sequence of neighbor-index sequences.  Isolated
        nodes are allowed: they are unreachable from everywhere else and thus
        never appear in motion candidate sets.
        """
        n = len(adjacency)
        adj = tuple(tuple(sorted(int(j) for j in nbrs)) for nbrs in adjacency)
        for i, nbrs in enumerate(adj):
            for j in nbrs:
                if not 0 <= j < n:
                    raise ValueError(f"neighbor {j} of node {i} out of range")
                if i not in adj[j]:
                    raise ValueError(f"adjacency not symmetric: {i} -> {j}")
        if coords is None:
            coords = np.arange(n, dtype=float)[:, None]
        coords = np.asarray(coords, dtype=float)
        if coords.ndim != 2 or coords.shape[0] != n:
            raise ValueError("coords must be (n, d)")
        return cls("graph", n, coords, adjacency=adj)

    # -- distances ---------------------------------------------------------

    def distances_from(self, source):
        """Distance from ``source`` to every index, as a float array.

        Unreachable graph nodes get ``+inf``.  Results are cached per source.
        """
        source = int(source)
        if not 0 <= source < self.n:
            raise ValueError(f"source index {source} out of range")
        hit = self._dist_cache.get(source)
        if hit is not None:
            return hit
        if self.kind == "graph":
            d = self._bfs(source)
        else:
            d = self._euclidean(source)
        d.setflags(write=False)
        self._dist_cache[source] = d
        return d

    def distance(self, i, j):
        return float(self.distances_from(i)[int(j)])

    def reachable_within(self, source, moves, speed):
        """Mask of indices reachable from ``source`` in at most ``moves`` steps.

        A step may cover at most ``speed`` distance.  This is the exact
        discrete reachable set, generally smaller than the ``moves * speed``
        ball: on a lattice, two consecutive step balls need not contain a
        common index, so budgeted distance alone does not guarantee a
        realizable chain of moves.  Computed by iterated ball dilation and
        cached per ``(source, speed)``; the metric is symmetric, so the same
        mask answers "which indices can still return to ``source``".
        """
        source = int(source)
        if not 0 <= source < self.n:
            raise ValueError(f"source index {source} out of range")
        moves = int(moves)
        if moves < 1:
            raise ValueError("moves must be >= 1")
        speed = float(speed)
        if np.isinf(speed):
            return np.ones(self.n, dtype=bool)
        if (source != 0 and self.kind in ("line", "grid2d")
                and all(self.periodic)):
            # index shifts are isometries of a fully wrapped lattice, so
            # the set reachable from any source is the source-0 set rolled
            base = self.reachable_within(0, moves, speed)
            if self.kind == "line":
                return np.roll(base, source)
            rows, cols = self.shape
            dr, dc = divmod(source, cols)
            return np.roll(base.reshape(rows, cols), (dr, dc),
                           axis=(0, 1)).ravel()
        masks = self._reach_cache.setdefault((source, speed), [])
        if not masks:
            first = self.distances_from(source) <= speed
            first.setflags(write=False)
            masks.append(first)
        while len(masks) < moves:
            prev = masks[-1]
            saturated = prev.all() or (len(masks) > 1
                                       and np.array_equal(prev, masks[-2]))
            if saturated:
                masks.append(prev)
                continue
            frontier = np.flatnonzero(prev & ~masks[-2]) if len(masks) > 1 \
                else np.flatnonzero(prev)
            nxt = prev.copy()
            if self.kind == "graph":
                for y in frontier:
                    nxt |= self.distances_from(int(y)) <= speed
            else:
                chunk = max(1, (1 << 18) // self.n)
                for i in range(0, frontier.size, chunk):
                    batch = self._euclidean_batch(frontier[i:i + chunk])
                    nxt |= (batch <= speed).any(axis=0)
            nxt.setflags(write=False)
            masks.append(nxt)
        return masks[moves - 1]

    def _euclidean(self, source):
        return self._euclidean_batch(np.array([source]))[0].copy()

    def _euclidean_batch(self, sources):
        delta = np.abs(self.coords[None, :, :] - self.coords[sources][:, None, :])
        if self.kind == "line":
            if self.periodic[0]:
                delta = np.minimum(delta, self.n - delta)
            return delta[..., 0].astype(float)
        rows, cols = self.shape
        extents = (rows, cols)
        for axis in range(2):
            if self.periodic[axis]:
                delta[..., axis] = np.minimum(delta[..., axis],
                                              extents[axis] - delta[..., axis])
        return np.hypot(delta[..., 0], delta[..., 1])

    def _bfs(self, source):
        d = np.full(self.n, np.inf)
        d[source] = 0.0
        queue = collections.deque([source])
        while queue:
            i = queue.popleft()
            for j in self.adjacency[i]:
                if not np.isfinite(d[j]):
                    d[j] = d[i] + 1.0
                    queue.append(j)
        return d

    # -- grid helpers ------------------------------------------------------

    def index_of(self, *coords):
        """Flat index of a (row, col) pair or a line position."""
        if self.kind == "grid2d":
            r, c = coords
            rows, cols = self.shape
            if not (0 <= r < rows and 0 <= c < cols):
                raise ValueError(f"({r}, {c}) outside {rows}x{cols} grid")
            return int(r) * cols + int(c)
        if self.kind == "line":
            (x,) = coords
            if not 0 <= x < self.n:
                raise ValueError(f"{x} outside line of length {self.n}")
            return int(x)
        # graph: match the stored node coordinates exactly
        target = np.asarray(coords, dtype=float)
        hits = np.flatnonzero(np.all(self.coords == target, axis=1))
        if hits.size == 0:
            raise ValueError(f"no graph node at coordinates {tuple(coords)}")
        return int(hits[0])

    def __repr__(self):
        return f"Geometry(kind={self.kind!r}, n={self.n})"


@dataclass(frozen=True)
class MotionConstraint:
    """Per-step travel budget for one sensor; distance comes from the geometry.

    ``speed`` is the maximum distance a sensor may cover between consecutive
    schedule steps.  ``inf`` means unconstrained motion and ``0`` pins sensors
    in place after the first step.
    """

    speed: float

    def __post_init__(self):
        if not (self.speed >= 0.0):  # also rejects nan
            raise ValueError("speed must be non-negative (inf allowed)")
