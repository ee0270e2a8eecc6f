"""Observability matrices along periodic sensor schedules.

For a periodic schedule sigma with period l and k sensors per step, the
stacked matrix has one block per step: the selected rows of
``modes @ dynamics^t`` for t = 0 .. l-1.  Blocks are built by repeated
right-multiplication with the m x m dynamics, never by forming powers of an
n-sized operator.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

#: relative singular-value cutoff for numerical rank decisions
RANK_RTOL = 1e-10
#: sigma_min below this fraction of sigma_max collapses kappa to +inf
_COND_SENTINEL_RTOL = 1e-12


@dataclass(frozen=True)
class Trajectory:
    """Periodic schedule: ``locations[t][j]`` is sensor j's index at step t."""

    locations: tuple

    def __post_init__(self):
        locs = tuple(tuple(int(i) for i in row) for row in self.locations)
        if len(locs) < 1:
            raise ValueError("trajectory needs at least one step")
        k = len(locs[0])
        if k < 1:
            raise ValueError("trajectory needs at least one sensor")
        for t, row in enumerate(locs):
            if len(row) != k:
                raise ValueError(f"step {t} has {len(row)} sensors, expected {k}")
            if any(i < 0 for i in row):
                raise ValueError(f"negative location index at step {t}")
            if len(set(row)) != k:
                raise ValueError(f"duplicate sensor locations at step {t}")
        object.__setattr__(self, "locations", locs)

    @property
    def period_l(self):
        return len(self.locations)

    @property
    def k(self):
        return len(self.locations[0])

    def to_dict(self):
        flat = [i for row in self.locations for i in row]
        return {"l": self.period_l, "k": self.k, "locations": flat}

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def from_dict(cls, d):
        l, k = int(d["l"]), int(d["k"])
        flat = [int(i) for i in d["locations"]]
        if len(flat) != l * k:
            raise ValueError("serialized trajectory has the wrong number of entries")
        return cls(tuple(tuple(flat[t * k:(t + 1) * k]) for t in range(l)))

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_csv(self, path, geometry=None):
        """Write one row per (step, sensor) with optional grid coordinates."""
        ndim = 0 if geometry is None else geometry.coords.shape[1]
        header = ["t", "sensor_id", "index"] + [f"coord{d}" for d in range(ndim)]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for t, row in enumerate(self.locations):
                for j, idx in enumerate(row):
                    rec = [t, j, idx]
                    if geometry is not None:
                        rec += [f"{c:g}" for c in geometry.coords[idx]]
                    writer.writerow(rec)


@dataclass(frozen=True)
class ObservabilityMatrix:
    """Stacked (l*k) x m observability matrix plus its provenance."""

    matrix: np.ndarray
    trajectory: Trajectory
    model: object = None


def projected_block(model, t):
    """Return ``modes @ dynamics^t`` of a real-block model, for t >= 0."""
    if t < 0:
        raise ValueError("block index t must be >= 0")
    X = np.array(model.modes, dtype=float, copy=True)
    for _ in range(int(t)):
        X = X @ model.dynamics
    return X


def assemble(model, traj):
    """Stack the scheduled rows of ``modes @ dynamics^t`` for one period."""
    n = model.n
    for t, row in enumerate(traj.locations):
        for idx in row:
            if idx >= n:
                raise ValueError(f"location {idx} at step {t} outside state of size {n}")
    X = np.array(model.modes, dtype=float, copy=True)
    blocks = []
    for t in range(traj.period_l):
        blocks.append(X[list(traj.locations[t]), :])
        if t + 1 < traj.period_l:
            X = X @ model.dynamics
    return ObservabilityMatrix(np.vstack(blocks), traj, model)


def condition_number(obs):
    """kappa = sigma_max / sigma_min over the model rank, +inf when singular.

    Accepts an :class:`ObservabilityMatrix` or a plain 2-D array.  Matrices
    with fewer rows than columns cannot be full column rank, so they report
    +inf directly.
    """
    M = obs.matrix if isinstance(obs, ObservabilityMatrix) else np.asarray(obs, dtype=float)
    rows, m = M.shape
    if rows < m:
        return float("inf")
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0 or s[-1] < _COND_SENTINEL_RTOL * s[0]:
        return float("inf")
    return float(s[0] / s[-1])


@dataclass(frozen=True)
class RankReport:
    """Outcome of an observability rank test."""

    observable: bool
    rank: int
    required: int
    singular_values: np.ndarray

    def __bool__(self):
        return self.observable


def is_observable(model, traj):
    """Rank test of the assembled one-period observability matrix."""
    M = assemble(model, traj).matrix
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        rank = 0
    else:
        rank = int(np.count_nonzero(s > RANK_RTOL * s[0]))
    return RankReport(rank == model.m, rank, model.m, s)
