"""Greedy time-forwarding planner for periodic sensor trajectories.

Rows of the growing observability matrix are chosen one sensor at a time.
While fewer rows than the model rank have been selected, the score of a
candidate row is its squared residual against the span of the rows already
chosen (the pivoted-QR rule, which for a single step reproduces pivoted-QR
column selection of the mode matrix).  Once the matrix is oversampled the
score switches to a rank-one-update lower bound on the smallest squared
singular value of the augmented matrix, using the gap between the two
smallest singular values.

Motion is restricted per step by a speed budget and, when cycle closure is
enforced, by the requirement that a sensor can still return to its starting
location by the time the period wraps.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRankError, InfeasiblePlanError
from .observability import RANK_RTOL, Trajectory, condition_number

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PlanConfig:
    """Schedule shape: sensors per step, period length, cycle policy.

    The tie-break rule is fixed: equal scores resolve to the lowest index.
    """

    k: int
    period_l: int
    enforce_cycle: bool = True
    tie_break: str = "lowest-index"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("need at least one sensor")
        if self.period_l < 1:
            raise ValueError("period must be >= 1")
        if self.tie_break != "lowest-index":
            raise ValueError("only the lowest-index tie-break is implemented")

    def oversamples(self, m):
        """Whether a full period stacks more rows than the model rank."""
        return self.k * self.period_l > m


@dataclass(frozen=True)
class PlanStep:
    """One selection event, for diagnostic reports."""

    step: int
    sensor: int
    index: int
    score: float
    n_candidates: int
    mode: str
    running_cond: float


def candidate_set(geom, mc, current, t, l, start, occupied=(), enforce_cycle=True):
    """Admissible locations for one sensor at 0-based cycle step ``t``.

    For ``t == 0`` (no history) every non-occupied index is admissible and
    ``current``/``start`` are ignored.  Otherwise a location must lie within
    ``speed`` of ``current`` and, when ``enforce_cycle`` is set, be able to
    return to ``start`` in the remaining ``l - t`` moves.  Return ability is
    the exact discrete reachable set, not the ``(l - t) * speed`` distance
    budget: on a lattice the budget can admit indices from which no chain of
    legal moves closes the cycle.

    An empty result means the cycle cannot be closed from ``current`` or
    occupancy took every admissible cell (including ``current``, which is
    otherwise always its own candidate), so the plan is infeasible here.
    """
    if not 0 <= t < l:
        raise ValueError(f"step {t} outside period of length {l}")
    occ = np.zeros(geom.n, dtype=bool)
    occupied = list(occupied)
    if occupied:
        occ[occupied] = True
    if t == 0:
        allowed = ~occ
    else:
        v = mc.speed
        allowed = (geom.distances_from(current) <= v) & ~occ
        if enforce_cycle:
            allowed &= geom.reachable_within(start, l - t, v)
    idx = np.flatnonzero(allowed)
    if idx.size == 0:
        raise InfeasiblePlanError(
            f"no admissible location at step {t} (from index {current})", step=t)
    return idx


def selection_score(X, O_cur, mode):
    """Score every row of ``X`` as the next observability row.

    Parameters
    ----------
    X : (n, m) array
        Current projected block ``modes @ dynamics^t``.
    O_cur : (p, m) array
        Rows selected so far (may be empty).
    mode : {"qrcp", "gappy_e"}
        ``qrcp`` (requires p < m): squared residual of each row against the
        span of the selected rows; for p = 0 this is the squared row norm.
        ``gappy_e`` (requires p >= m and full numerical rank): rank-one-update
        lower bound on the smallest squared singular value after appending
        the row, built from the gap between the two smallest singular values.

    Higher scores are better in both modes.
    """
    X = np.asarray(X, dtype=float)
    n, m = X.shape
    O_cur = np.asarray(O_cur, dtype=float).reshape(-1, m)
    p = O_cur.shape[0]
    if mode == "qrcp":
        if p >= m:
            raise ValueError(f"qrcp mode requires p < m, got p={p}, m={m}")
        return _qr_residual_scores(X, O_cur)
    if mode == "gappy_e":
        if p < m:
            raise ValueError(f"gappy_e mode requires p >= m, got p={p}, m={m}")
        s, Vt = np.linalg.svd(O_cur, full_matrices=False)[1:]
        if s[0] == 0.0 or s[-1] < RANK_RTOL * s[0]:
            achievable = int(np.count_nonzero(s > RANK_RTOL * s[0])) if s[0] else 0
            raise DegenerateRankError(
                f"selected rows have numerical rank {achievable} < {m}",
                achievable_rank=achievable)
        # gap between the two smallest squared singular values (non-negative)
        gap = s[-2] ** 2 - s[-1] ** 2
        U = Vt @ X.T
        total = (U * U).sum(axis=0)
        weakest = U[-1, :] ** 2
        base = gap + total
        radicand = base * base - 4.0 * gap * weakest
        bad = radicand < -1e-10 * np.maximum(base * base, 1.0)
        if np.any(bad):
            logger.warning(
                "gappy_e radicand negative for %d candidate(s) (min %.3e); "
                "falling back to residual scores", int(bad.sum()), float(radicand.min()))
            return residual_scores(X, O_cur)
        # guaranteed eigenvalue increment of O^T O under the rank-one update,
        # in a cancellation-free form: base - sqrt(radicand) loses every
        # significant digit once gap * weakest << base**2, which is the
        # common case deep into oversampling where the small singular
        # values cluster
        root = np.sqrt(np.clip(radicand, 0.0, None))
        denom = base + root
        increment = np.divide(2.0 * gap * weakest, denom,
                              out=np.zeros_like(denom), where=denom > 0.0)
        return s[-1] ** 2 + increment
    raise ValueError(f"unknown selection mode {mode!r}")


def _qr_residual_scores(X, O_cur):
    # components of each row of X orthogonal to the row space of O_cur,
    # via a complete orthogonal factorization of O_cur^T
    m = X.shape[1]
    p = O_cur.shape[0]
    if p == 0:
        return (X * X).sum(axis=1)
    Q = np.linalg.qr(O_cur.T, mode="complete")[0]
    comp = X @ Q[:, p:]
    return (comp * comp).sum(axis=1)


def residual_scores(X, O_cur):
    """Rank-aware squared residual of each row of X against span(O_cur)."""
    O_cur = np.asarray(O_cur, dtype=float)
    if O_cur.shape[0] == 0:
        return (X * X).sum(axis=1)
    s, Vt = np.linalg.svd(O_cur, full_matrices=False)[1:]
    r = int(np.count_nonzero(s > RANK_RTOL * s[0])) if s[0] else 0
    if r == 0:
        return (X * X).sum(axis=1)
    comp = X - (X @ Vt[:r].T) @ Vt[:r]
    return (comp * comp).sum(axis=1)


def _score_rows(X, O_rows, m, step):
    if len(O_rows) < m:
        return selection_score(X, np.array(O_rows).reshape(-1, m), "qrcp"), "qrcp"
    O_mat = np.array(O_rows)
    try:
        return selection_score(X, O_mat, "gappy_e"), "gappy_e"
    except DegenerateRankError as exc:
        logger.warning("oversampled rows degenerate at step %d (%s); using residual scores",
                       step, exc)
        return residual_scores(X, O_mat), "residual"


def plan(model, geom, mc, cfg, report=None):
    """Plan a periodic trajectory by greedy time-forwarding.

    Parameters
    ----------
    model : RealBlockModel
    geom : Geometry
        Must have one index per model state row.
    mc : MotionConstraint
    cfg : PlanConfig
    report : list, optional
        If given, a :class:`PlanStep` record is appended per selection.

    Returns
    -------
    Trajectory

    Notes
    -----
    Within a step, sensors are assigned to selected rows by proximity: the
    closest not-yet-assigned sensor that can legally reach the chosen index
    takes it (ties on distance resolve to the lowest sensor id).  On the
    first step there is no history, so sensors are assigned in selection
    order.
    """
    n, m = model.modes.shape
    if geom.n != n:
        raise ValueError(f"geometry has {geom.n} indices but the model has {n} state rows")
    if cfg.k > n:
        raise ValueError(f"cannot place {cfg.k} distinct sensors on {n} indices")
    X = np.array(model.modes, dtype=float, copy=True)
    O_rows: list[np.ndarray] = []
    schedule: list[tuple] = []
    positions: list[int] = [0] * cfg.k
    starts: list[int] = [0] * cfg.k
    for step in range(cfg.period_l):
        placed = [False] * cfg.k
        chosen: list[int] = []
        step_locs = [-1] * cfg.k
        for pick in range(cfg.k):
            if step == 0:
                mask = np.ones(n, dtype=bool)
                mask[chosen] = False
                sensor_masks = None
            else:
                sensor_masks = {}
                mask = np.zeros(n, dtype=bool)
                for s in range(cfg.k):
                    if placed[s]:
                        continue
                    try:
                        cand = candidate_set(geom, mc, positions[s], step, cfg.period_l,
                                             starts[s], chosen, cfg.enforce_cycle)
                    except InfeasiblePlanError as exc:
                        raise InfeasiblePlanError(
                            f"sensor {s} has no admissible move at step {step}",
                            step=step, sensor=s,
                            partial=tuple(tuple(r) for r in schedule)) from exc
                    ms = np.zeros(n, dtype=bool)
                    ms[cand] = True
                    sensor_masks[s] = ms
                    mask |= ms
                if not mask.any():
                    raise InfeasiblePlanError(
                        f"all candidate locations occupied at step {step}",
                        step=step, partial=tuple(tuple(r) for r in schedule))
            scores, score_mode = _score_rows(X, O_rows, m, step)
            masked = np.where(mask, scores, -np.inf)
            loc = int(np.argmax(masked))  # first max: lowest index wins ties
            if step == 0:
                sensor = pick
            else:
                eligible = [s for s, ms in sensor_masks.items() if ms[loc]]
                sensor = min(eligible, key=lambda s: (geom.distance(positions[s], loc), s))
            placed[sensor] = True
            step_locs[sensor] = loc
            chosen.append(loc)
            O_rows.append(X[loc].copy())
            if report is not None:
                report.append(PlanStep(step, sensor, loc, float(scores[loc]),
                                       int(mask.sum()), score_mode,
                                       condition_number(np.array(O_rows))))
        positions = list(step_locs)
        if step == 0:
            starts = list(step_locs)
        schedule.append(tuple(step_locs))
        X = X @ model.dynamics
    return Trajectory(tuple(schedule))


def multiscale_refine(model_fine, coarse, refine_factor, geom, mc_fine, cfg_fine,
                      report=None):
    """Refine a coarse-rate plan onto a finer schedule with pinned waypoints.

    The fine trajectory visits the coarse locations exactly at every
    ``refine_factor``-th step; the steps in between are filled greedily with
    the same scoring rules as :func:`plan`, restricted so each sensor can
    still reach its next pinned waypoint in the remaining moves.

    ``model_fine`` must evolve at the fine rate (its dynamics taken to the
    ``refine_factor``-th power is the coarse-rate operator the coarse plan
    was built for).
    """
    r = int(refine_factor)
    if r < 2:
        raise ValueError("refine_factor must be an integer >= 2")
    lc, k = coarse.period_l, coarse.k
    l_fine = lc * r
    if cfg_fine.period_l != l_fine:
        raise ValueError(
            f"fine period {cfg_fine.period_l} must equal coarse period * factor = {l_fine}")
    if cfg_fine.k != k:
        raise ValueError("sensor counts of coarse plan and fine config disagree")
    n, m = model_fine.modes.shape
    if geom.n != n:
        raise ValueError("geometry and model disagree on state dimension")
    v = mc_fine.speed
    for j in range(k):
        for ci in range(lc):
            a = coarse.locations[ci][j]
            b = coarse.locations[(ci + 1) % lc][j]
            if not geom.reachable_within(a, r, v)[b]:
                raise InfeasiblePlanError(
                    f"sensor {j} cannot cover the waypoint gap "
                    f"({geom.distance(a, b):.3g}) from coarse step {ci} to "
                    f"{(ci + 1) % lc} within {r} fine moves at speed {v}",
                    sensor=j, step=ci)

    X = np.array(model_fine.modes, dtype=float, copy=True)
    O_rows: list[np.ndarray] = []
    schedule: list[tuple] = []
    positions: list[int] = [0] * k
    for f in range(l_fine):
        ci, rem = divmod(f, r)
        if rem == 0:
            locs = list(coarse.locations[ci])
            for j in range(k):
                O_rows.append(X[locs[j]].copy())
                if report is not None:
                    report.append(PlanStep(f, j, locs[j], float("nan"), 1, "pinned",
                                           condition_number(np.array(O_rows))))
        else:
            pin_step = (ci + 1) * r
            budget = pin_step - f  # moves left until the next pinned step
            waypoints = [coarse.locations[(ci + 1) % lc][j] for j in range(k)]
            placed = [False] * k
            chosen: list[int] = []
            locs = [-1] * k
            occ = np.zeros(n, dtype=bool)
            for pick in range(k):
                sensor_masks = {}
                mask = np.zeros(n, dtype=bool)
                for s in range(k):
                    if placed[s]:
                        continue
                    # the waypoint must stay reachable through actual moves,
                    # not merely within the remaining distance budget
                    reach = geom.reachable_within(waypoints[s], budget, v)
                    ms = (geom.distances_from(positions[s]) <= v) & reach & ~occ
                    sensor_masks[s] = ms
                    mask |= ms
                if not mask.any():
                    raise InfeasiblePlanError(
                        f"no admissible interpolating move at fine step {f}", step=f,
                        partial=tuple(tuple(row) for row in schedule))
                scores, score_mode = _score_rows(X, O_rows, m, f)
                masked = np.where(mask, scores, -np.inf)
                loc = int(np.argmax(masked))
                eligible = [s for s, ms in sensor_masks.items() if ms[loc]]
                sensor = min(eligible, key=lambda s: (geom.distance(positions[s], loc), s))
                placed[sensor] = True
                locs[sensor] = loc
                chosen.append(loc)
                occ[loc] = True
                O_rows.append(X[loc].copy())
                if report is not None:
                    report.append(PlanStep(f, sensor, loc, float(scores[loc]),
                                           int(mask.sum()), score_mode,
                                           condition_number(np.array(O_rows))))
        positions = list(locs)
        schedule.append(tuple(locs))
        X = X @ model_fine.dynamics
    return Trajectory(tuple(schedule))
