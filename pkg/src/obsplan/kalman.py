"""Kalman filtering on real-block models, DARE fixed points, and trace bounds.

The filter runs in reduced real-block coordinates: the state transition is
the block dynamics, the measurement matrix is the selected rows of the real
mode matrix, disturbance covariance is ``q I`` and measurement covariance is
``rho I``.  The covariance recurrence per step is

    Sigma' = A (Sigma - Sigma C^T (C Sigma C^T + R)^{-1} C Sigma) A^T + Q

i.e. measurement update with this step's rows followed by prediction, so the
recorded trace series tracks the one-step-ahead (prior) covariance, the
quantity whose stationary limit solves the discrete algebraic Riccati
equation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConditioningError, ConvergenceError, UnobservableError
from .observability import RANK_RTOL, assemble

#: innovation condition number above which an update is refused
_INNOVATION_COND_LIMIT = 1e14
#: measurement variance below which the Joseph-form update is used
_JOSEPH_RHO = 1e-6


@dataclass(frozen=True)
class KfState:
    """Filter state: estimate and covariance in real-block coordinates."""

    estimate: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        est = np.asarray(self.estimate, dtype=float).reshape(-1)
        cov = np.asarray(self.covariance, dtype=float)
        m = est.shape[0]
        if cov.shape != (m, m):
            raise ValueError(f"covariance shape {cov.shape} does not match state size {m}")
        scale = max(1.0, float(np.abs(cov).max()))
        if np.abs(cov - cov.T).max() > 1e-10 * scale:
            raise ValueError("covariance is not symmetric")
        trace = float(np.trace(cov))
        if np.linalg.eigvalsh(cov).min() < -1e-10 * max(1.0, trace):
            raise ValueError("covariance is not positive semidefinite")
        object.__setattr__(self, "estimate", est)
        object.__setattr__(self, "covariance", cov)


def _measurement_update(model, state, sel, y, noise):
    """Condition the state on measurements at rows ``sel`` (may be empty)."""
    sel = list(sel)
    if not sel:
        return state
    C = model.modes[sel, :]
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] != len(sel):
        raise ValueError(f"{len(sel)} rows selected but {y.shape[0]} measurements given")
    Sigma = state.covariance
    rho = float(noise.rho)
    S = C @ Sigma @ C.T + rho * np.eye(len(sel))
    cond = np.linalg.cond(S)
    if not np.isfinite(cond) or cond > _INNOVATION_COND_LIMIT:
        raise ConditioningError(
            f"innovation covariance condition {cond:.3e} exceeds {_INNOVATION_COND_LIMIT:.0e}")
    K = np.linalg.solve(S, C @ Sigma).T
    est = state.estimate + K @ (y - C @ state.estimate)
    if rho < _JOSEPH_RHO:
        # Joseph form keeps the update PSD when R is nearly singular
        IKC = np.eye(model.m) - K @ C
        cov = IKC @ Sigma @ IKC.T + rho * (K @ K.T)
    else:
        cov = Sigma - K @ (C @ Sigma)
    cov = 0.5 * (cov + cov.T)
    return KfState(est, cov)


def _predict(model, state, noise):
    A = model.dynamics
    est = A @ state.estimate
    cov = A @ state.covariance @ A.T + float(noise.q) * np.eye(model.m)
    cov = 0.5 * (cov + cov.T)
    return KfState(est, cov)


def kf_step(model, state, sel, y, noise):
    """One filter cycle: measurement update at ``sel`` rows, then prediction.

    Parameters
    ----------
    model : RealBlockModel
    state : KfState
        Prior state at the current step.
    sel : sequence of int
        Measured state rows (may be empty: the step is pure prediction).
    y : array
        Measurements, one per entry of ``sel``.
    noise : NoiseSpec

    Returns
    -------
    KfState
        Prior state at the next step.
    """
    return _predict(model, _measurement_update(model, state, sel, y, noise), noise)


@dataclass(frozen=True)
class KfRun:
    """Per-step filter outputs.

    ``trace_series[t]`` is the trace of the prior covariance entering step t;
    ``recon_error_series[t]`` is the per-cell mean squared reconstruction
    error of the posterior estimate against the supplied truth (``None`` in
    covariance-only runs).
    """

    trace_series: np.ndarray
    recon_error_series: np.ndarray | None
    dt: float
    estimate_series: np.ndarray | None = None

    def to_csv(self, path):
        steps = self.trace_series.shape[0]
        with open(path, "w", newline="") as fh:
            fh.write("step,time,trace_sigma,recon_mse\n")
            for t in range(steps):
                mse = "" if self.recon_error_series is None else repr(float(self.recon_error_series[t]))
                fh.write(f"{t},{repr(t * self.dt)},{repr(float(self.trace_series[t]))},{mse}\n")


def run_filter(model, traj, data, noise, steps=None, sigma0=None,
               initial_estimate=None, seed=0, add_noise=True,
               store_estimates=False):
    """Run the periodic-schedule Kalman filter.

    Parameters
    ----------
    model : RealBlockModel
    traj : Trajectory
        Measurement schedule, reused cyclically.
    data : SnapshotMatrix or None
        Truth snapshots; measurements are the scheduled rows of each column,
        plus white noise of variance ``noise.rho`` when ``add_noise`` is set.
        ``None`` runs the covariance recurrence only (measurements are zeros
        and no reconstruction error is reported), which is exact because the
        covariance never depends on measured values.
    steps : int, optional
        Defaults to the number of available snapshots.
    sigma0 : (m, m) array, optional
        Initial covariance; defaults to ``10 I``.
    initial_estimate : (m,) array, optional
        Defaults to zero.
    seed : int
        Seed for the measurement-noise stream.

    Returns
    -------
    KfRun
    """
    m, n = model.m, model.n
    for t, row in enumerate(traj.locations):
        for idx in row:
            if idx >= n:
                raise ValueError(f"trajectory location {idx} outside state of size {n}")
    truth = None
    if data is not None:
        truth = np.asarray(data.data, dtype=float)
        if truth.shape[0] != n:
            raise ValueError(f"data has {truth.shape[0]} rows, model expects {n}")
        if steps is None:
            steps = truth.shape[1]
        if steps > truth.shape[1]:
            raise ValueError(f"requested {steps} steps but data has {truth.shape[1]} snapshots")
    if steps is None:
        raise ValueError("steps is required when no data is supplied")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    cov0 = 10.0 * np.eye(m) if sigma0 is None else np.asarray(sigma0, dtype=float)
    est0 = np.zeros(m) if initial_estimate is None else np.asarray(initial_estimate, dtype=float)
    state = KfState(est0, cov0)
    rng = np.random.default_rng(seed)
    rho = float(noise.rho)
    l = traj.period_l
    traces = np.empty(steps)
    recon = np.empty(steps) if truth is not None else None
    ests = np.empty((m, steps)) if store_estimates else None
    dt = data.dt if data is not None else 1.0
    for t in range(steps):
        sel = traj.locations[t % l]
        traces[t] = float(np.trace(state.covariance))
        if truth is None:
            y = np.zeros(len(sel))
        else:
            y = truth[list(sel), t].astype(float)
            if add_noise:
                y = y + np.sqrt(rho) * rng.standard_normal(len(sel))
        try:
            post = _measurement_update(model, state, sel, y, noise)
        except ConditioningError as exc:
            raise ConditioningError(f"step {t}: {exc}") from exc
        if truth is not None:
            xhat = model.modes @ post.estimate
            recon[t] = float(np.mean((xhat - truth[:, t]) ** 2))
        if ests is not None:
            ests[:, t] = post.estimate
        state = _predict(model, post, noise)
    return KfRun(traces, recon, float(dt), ests)


# ---------------------------------------------------------------------------
# DARE fixed point and trace bounds


@dataclass(frozen=True)
class DareSolution:
    covariance: np.ndarray
    residual: float
    iterations: int


def _riccati_map(A, C, Q, R, Sigma):
    S = C @ Sigma @ C.T + R
    G = np.linalg.solve(S, C @ Sigma)  # S^{-1} C Sigma
    nxt = A @ (Sigma - Sigma @ C.T @ G) @ A.T + Q
    return 0.5 * (nxt + nxt.T)


def dare_iterate(A, C, Q, R, tol=1e-9, max_iter=200000):
    """Fixed-point iteration of the filter Riccati recurrence from Sigma = Q.

    Stops when the Frobenius norm of the step falls below ``tol`` relative to
    the current iterate.  Requires (A, C) observable (checked via the rank of
    the stacked powers ``C A^i``), which guarantees a unique stabilizing
    fixed point for positive-definite R.

    Returns
    -------
    DareSolution
        The fixed point, the Frobenius norm of its residual under one more
        Riccati step, and the iteration count.
    """
    A = np.asarray(A, dtype=float)
    C = np.asarray(C, dtype=float).reshape(-1, A.shape[0])
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    mdim = A.shape[0]
    if A.shape != (mdim, mdim) or Q.shape != (mdim, mdim):
        raise ValueError("A and Q must be square with matching size")
    if R.shape != (C.shape[0], C.shape[0]):
        raise ValueError("R must match the number of measurement rows")
    if not (tol > 0.0):
        raise ValueError("tol must be > 0")
    stack = [C]
    for _ in range(mdim - 1):
        stack.append(stack[-1] @ A)
    sv = np.linalg.svd(np.vstack(stack), compute_uv=False)
    rank = int(np.count_nonzero(sv > RANK_RTOL * sv[0])) if sv[0] else 0
    if rank < mdim:
        raise UnobservableError(
            f"(A, C) is unobservable: stacked rank {rank} < {mdim}")
    Sigma = Q.copy()
    diff = np.inf
    for it in range(1, max_iter + 1):
        nxt = _riccati_map(A, C, Q, R, Sigma)
        diff = float(np.linalg.norm(nxt - Sigma))
        if diff < tol * max(float(np.linalg.norm(Sigma)), 1e-300):
            resid = float(np.linalg.norm(_riccati_map(A, C, Q, R, nxt) - nxt))
            return DareSolution(nxt, resid, it)
        Sigma = nxt
    raise ConvergenceError(
        f"DARE iteration did not converge in {max_iter} steps (last step {diff:.3e})",
        residual=diff, iterations=max_iter)


@dataclass(frozen=True)
class DareBounds:
    """Analytic sandwich for the trace of the DARE fixed point.

    Both bounds require the measurement information matrix ``C^T R^{-1} C``
    and ``Q`` to be positive definite; the ``*_applicable`` flags report that
    precondition.  ``a1``/``a2`` are the intermediate coefficients of the
    upper/lower quadratic, kept for diagnosis and serialization.
    """

    lower: float
    upper: float
    a1: float
    a2: float
    lower_applicable: bool
    upper_applicable: bool

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump({"lower": self.lower, "upper": self.upper,
                       "a1": self.a1, "a2": self.a2,
                       "lower_applicable": self.lower_applicable,
                       "upper_applicable": self.upper_applicable}, fh, indent=2)


def dare_trace_bounds(A, C, Q, R):
    """Trace bounds for the filter DARE fixed point.

    With ``M = C^T R^{-1} C``, eigenvalues sorted so lambda_1 is largest:

    upper:  a1 = 1 - lambda_1(A^T A) - lambda_1(Q) lambda_n(M)
            tr <= 2 tr(Q) / (a1 + sqrt(a1^2 + 4 lambda_n(M) tr(Q) / n))

    lower:  a2 = n - sum_i |lambda_i(A)|^2 - tr(Q^{1/2})^2 lambda_1(M)
            tr >= 2 tr(Q^{1/2})^2 / (a2 + sqrt(a2^2 + 4 n lambda_1(M) tr(Q^{1/2})^2))

    Both are exact for scalar systems.  When a precondition fails the
    corresponding bound is reported as ``nan`` with its flag cleared.
    """
    A = np.asarray(A, dtype=float)
    C = np.asarray(C, dtype=float).reshape(-1, A.shape[0])
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    mdim = A.shape[0]
    M = C.T @ np.linalg.solve(R, C)
    M = 0.5 * (M + M.T)
    m_eigs = np.linalg.eigvalsh(M)
    q_eigs = np.linalg.eigvalsh(0.5 * (Q + Q.T))
    lam_min_M, lam_max_M = float(m_eigs[0]), float(m_eigs[-1])
    applicable = bool(lam_min_M > 1e-12 * max(1.0, lam_max_M) and q_eigs[0] > 0.0)

    tr_q = float(q_eigs.sum())
    lam_max_Q = float(q_eigs[-1])
    a1 = 1.0 - float(np.linalg.eigvalsh(A.T @ A)[-1]) - lam_max_Q * lam_min_M
    abs_eigs_sq = float((np.abs(np.linalg.eigvals(A)) ** 2).sum())
    tr_sqrt_q_sq = float(np.sqrt(np.clip(q_eigs, 0.0, None)).sum() ** 2)
    a2 = mdim - abs_eigs_sq - tr_sqrt_q_sq * lam_max_M

    if applicable:
        upper = 2.0 * tr_q / (a1 + np.sqrt(a1 * a1 + 4.0 * lam_min_M * tr_q / mdim))
        lower = (2.0 * tr_sqrt_q_sq
                 / (a2 + np.sqrt(a2 * a2 + 4.0 * mdim * lam_max_M * tr_sqrt_q_sq)))
    else:
        upper = float("nan")
        lower = float("nan")
    return DareBounds(float(lower), float(upper), float(a1), float(a2),
                      applicable, applicable)


@dataclass(frozen=True)
class LiftedSystem:
    """One-period lifted pair: A_hat = dynamics^l, C_hat = assembled matrix."""

    A: np.ndarray
    C: np.ndarray


def lift_system(model, traj):
    """Lift a periodic schedule to a time-invariant pair over one period.

    The lifted measurement matrix is exactly the assembled observability
    matrix of the schedule, so observability of the lifted pair and rank of
    the assembled matrix coincide by construction.
    """
    A_hat = np.linalg.matrix_power(model.dynamics, traj.period_l)
    C_hat = assemble(model, traj).matrix
    return LiftedSystem(A_hat, C_hat)
