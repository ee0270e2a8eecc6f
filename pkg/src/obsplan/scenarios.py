"""Synthetic benchmark scenarios: oscillating torus fields and the KS equation.

The torus generator builds a known reduced model directly: global plane-wave
modes from the 2-D inverse Fourier basis plus localized Gaussian bumps, each
carrying a conjugate eigenvalue pair ``e^{(delta +- i omega) dt}``.  The
Kuramoto-Sivashinsky solver produces chaotic 1-D snapshot data for the
data-driven (DMD) path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BlowUpError
from .geometry import Geometry
from .model import ReducedModel, SnapshotMatrix, LEAD, FOLLOW

__all__ = ["TorusSpec", "TorusScenario", "make_torus", "KsSpec", "solve_ks"]


@dataclass(frozen=True)
class TorusSpec:
    """Parameters of the synthetic torus field.

    Frequencies are in radians per unit time and dampings per unit time
    (non-positive); ``dt`` is the sampling interval that turns them into
    discrete eigenvalues ``e^{(delta + i omega) dt}``.
    """

    rows: int = 32
    cols: int = 32
    n_fourier: int = 2
    n_gauss: int = 3
    gauss_width: float = 2.5
    freq_range: tuple = (0.05, 0.3)
    damp_range: tuple = (-0.01, -0.002)
    dt: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.rows < 4 or self.cols < 4:
            raise ValueError("torus grid must be at least 4x4")
        if self.n_fourier < 0 or self.n_gauss < 0 or self.n_fourier + self.n_gauss < 1:
            raise ValueError("need at least one mode pair")
        if not (self.gauss_width > 0):
            raise ValueError("gauss_width must be positive")
        lo, hi = self.freq_range
        if not (0 <= lo <= hi):
            raise ValueError("freq_range must be 0 <= lo <= hi")
        dlo, dhi = self.damp_range
        if not (dlo <= dhi <= 0):
            raise ValueError("damp_range must be non-positive (stable or neutral)")
        if not (self.dt > 0):
            raise ValueError("dt must be positive")


@dataclass(frozen=True)
class TorusScenario:
    """A torus model plus the metadata experiments need.

    Unpacks as ``model, geometry = make_torus(spec)`` for callers that only
    want the pair.
    """

    model: ReducedModel
    geometry: Geometry
    centers: tuple  # (row, col) of each Gaussian mode
    frequencies: np.ndarray  # rad per unit time, one per conjugate pair
    dampings: np.ndarray
    nyquist_steps: float  # samples per Nyquist period at the spec's dt

    def __iter__(self):
        return iter((self.model, self.geometry))


def _torus_distance_sq(rows, cols, r0, c0):
    r = np.arange(rows)[:, None]
    c = np.arange(cols)[None, :]
    dr = np.minimum(np.abs(r - r0), rows - np.abs(r - r0))
    dc = np.minimum(np.abs(c - c0), cols - np.abs(c - c0))
    return dr * dr + dc * dc


def make_torus(spec):
    """Build the synthetic torus scenario.

    Fourier modes are unit plane waves ``exp(2 pi i (p r / rows + q c / cols))``
    with distinct nonzero integer wavevectors; Gaussian modes are periodically
    wrapped real bumps whose centers are resampled (up to 100 attempts) until
    all pairwise torus distances are at least ``2 * gauss_width``.  Every mode
    carries a conjugate eigenvalue pair, so the model rank is
    ``2 (n_fourier + n_gauss)``.
    """
    rng = np.random.default_rng(spec.seed)
    rows, cols, n = spec.rows, spec.cols, spec.rows * spec.cols
    n_pairs = spec.n_fourier + spec.n_gauss

    wavevectors = []
    seen = set()
    max_wv = 4
    while len(wavevectors) < spec.n_fourier:
        p, q = int(rng.integers(-max_wv, max_wv + 1)), int(rng.integers(-max_wv, max_wv + 1))
        if (p, q) == (0, 0) or (p, q) in seen or (-p, -q) in seen:
            continue
        seen.add((p, q))
        wavevectors.append((p, q))

    centers = []
    min_sep = 2.0 * spec.gauss_width
    for _ in range(spec.n_gauss):
        for attempt in range(100):
            r0, c0 = int(rng.integers(rows)), int(rng.integers(cols))
            ok = True
            for (r1, c1) in centers:
                dr = min(abs(r0 - r1), rows - abs(r0 - r1))
                dc = min(abs(c0 - c1), cols - abs(c0 - c1))
                if np.hypot(dr, dc) < min_sep:
                    ok = False
                    break
            if ok:
                centers.append((r0, c0))
                break
        else:
            raise ValueError(
                f"could not place {spec.n_gauss} Gaussian centers at separation "
                f">= {min_sep:g} on a {rows}x{cols} torus within 100 attempts")

    omegas = rng.uniform(spec.freq_range[0], spec.freq_range[1], size=n_pairs)
    deltas = rng.uniform(spec.damp_range[0], spec.damp_range[1], size=n_pairs)

    cols_list, eigs, pair_map = [], [], []
    r_idx = np.arange(rows)[:, None]
    c_idx = np.arange(cols)[None, :]
    for i in range(n_pairs):
        if i < spec.n_fourier:
            p, q = wavevectors[i]
            field = np.exp(2j * np.pi * (p * r_idx / rows + q * c_idx / cols))
        else:
            r0, c0 = centers[i - spec.n_fourier]
            d2 = _torus_distance_sq(rows, cols, r0, c0)
            field = np.exp(-d2 / (2.0 * spec.gauss_width ** 2)).astype(complex)
        col = field.ravel()
        col = col / np.linalg.norm(col)
        lam = np.exp((deltas[i] + 1j * omegas[i]) * spec.dt)
        pos = len(eigs)
        eigs.extend([lam, np.conj(lam)])
        cols_list.extend([col, np.conj(col)])
        pair_map.extend([(LEAD, pos + 1), (FOLLOW, pos)])

    # canonical order: descending modulus, ties by descending lead argument
    order = sorted(range(n_pairs),
                   key=lambda i: (-abs(eigs[2 * i]), -np.angle(eigs[2 * i])))
    eig_arr = np.empty(2 * n_pairs, dtype=complex)
    mode_arr = np.empty((n, 2 * n_pairs), dtype=complex)
    for new_i, old_i in enumerate(order):
        eig_arr[2 * new_i] = eigs[2 * old_i]
        eig_arr[2 * new_i + 1] = eigs[2 * old_i + 1]
        mode_arr[:, 2 * new_i] = cols_list[2 * old_i]
        mode_arr[:, 2 * new_i + 1] = cols_list[2 * old_i + 1]
    pm = tuple(x for i in range(n_pairs) for x in ((LEAD, 2 * i + 1), (FOLLOW, 2 * i)))

    model = ReducedModel(eig_arr, mode_arr, pm)
    geometry = Geometry.grid2d(rows, cols, periodic=(True, True))
    w_max = float(omegas.max())
    nyquist_steps = float("inf") if w_max == 0 else np.pi / (w_max * spec.dt)
    return TorusScenario(model, geometry, tuple(centers), omegas, deltas, nyquist_steps)


@dataclass(frozen=True)
class KsSpec:
    """Kuramoto-Sivashinsky run: u_t + u u_x + u_xx + u_xxxx = 0, periodic."""

    n_grid: int = 256
    domain_length: float = 22.0
    dt_solver: float = 0.05
    t_final: float = 100.0
    dt_out: float | None = None  # defaults to dt_solver
    seed: int = 0

    def __post_init__(self):
        if self.n_grid < 8 or self.n_grid & (self.n_grid - 1):
            raise ValueError("n_grid must be a power of two >= 8")
        if not (self.domain_length > 0 and self.dt_solver > 0 and self.t_final > 0):
            raise ValueError("domain_length, dt_solver and t_final must be positive")
        out = self.dt_solver if self.dt_out is None else self.dt_out
        stride = out / self.dt_solver
        if not (out > 0) or abs(stride - round(stride)) > 1e-9 or round(stride) < 1:
            raise ValueError("dt_out must be a positive integer multiple of dt_solver")


def _etdrk4_coeffs(lin, h, n_contour=16):
    """Exponential-integrator coefficients via a contour-integral mean.

    Evaluating the phi functions on a small circle of radius 1 around each
    ``h * lin`` value sidesteps the removable singularities at zero.
    """
    roots = np.exp(1j * np.pi * (np.arange(n_contour) + 0.5) / n_contour)
    LR = h * lin[:, None] + roots[None, :]
    Q = h * np.real(np.mean((np.exp(LR / 2) - 1) / LR, axis=1))
    f1 = h * np.real(np.mean((-4 - LR + np.exp(LR) * (4 - 3 * LR + LR ** 2)) / LR ** 3, axis=1))
    f2 = h * np.real(np.mean((2 + LR + np.exp(LR) * (-2 + LR)) / LR ** 3, axis=1))
    f3 = h * np.real(np.mean((-4 - 3 * LR - LR ** 2 + np.exp(LR) * (4 - LR)) / LR ** 3, axis=1))
    return Q, f1, f2, f3


def solve_ks(spec, u0=None):
    """Integrate KS with a pseudospectral ETDRK4 scheme.

    Parameters
    ----------
    spec : KsSpec
    u0 : (n_grid,) array, optional
        Initial condition; by default standard-normal samples per grid point
        from ``spec.seed``.

    Returns
    -------
    SnapshotMatrix
        Snapshots at ``dt_out`` spacing (including t = 0), with a periodic
        line geometry attached.

    Raises
    ------
    BlowUpError
        If the solution norm ever exceeds 1e6 (instability), reporting the
        simulation time.

    Notes
    -----
    The nonlinear term is dealiased with the 2/3 rule.  The spatial mean is
    an exact invariant of the discretization (every term is a derivative), so
    mean drift is a solver-correctness diagnostic.
    """
    N, L, h = spec.n_grid, spec.domain_length, spec.dt_solver
    if u0 is None:
        u = np.random.default_rng(spec.seed).standard_normal(N)
    else:
        u = np.asarray(u0, dtype=float).copy()
        if u.shape != (N,):
            raise ValueError(f"u0 must have shape ({N},)")

    k = 2.0 * np.pi * np.fft.rfftfreq(N, d=L / N)
    lin = k ** 2 - k ** 4
    E = np.exp(h * lin)
    E2 = np.exp(h * lin / 2)
    Q, f1, f2, f3 = _etdrk4_coeffs(lin, h)
    dealias = np.ones_like(k)
    dealias[np.arange(k.size) >= N // 3] = 0.0
    g = -0.5j * k * dealias

    def nl(vhat):
        real = np.fft.irfft(vhat, n=N)
        return g * np.fft.rfft(real * real)

    dt_out = spec.dt_solver if spec.dt_out is None else spec.dt_out
    stride = int(round(dt_out / h))
    n_steps = int(round(spec.t_final / h))
    n_out = n_steps // stride + 1

    out = np.empty((N, n_out))
    out[:, 0] = u
    vhat = np.fft.rfft(u)
    col = 1
    for step in range(1, n_steps + 1):
        nv = nl(vhat)
        a = E2 * vhat + Q * nv
        na = nl(a)
        b = E2 * vhat + Q * na
        nb = nl(b)
        c = E2 * a + Q * (2 * nb - nv)
        nc = nl(c)
        vhat = E * vhat + nv * f1 + 2 * (na + nb) * f2 + nc * f3
        if step % stride == 0:
            u = np.fft.irfft(vhat, n=N)
            if not np.all(np.isfinite(u)) or np.abs(u).max() > 1e6:
                raise BlowUpError(
                    f"KS solution blew up at t = {step * h:g}", time=step * h)
            out[:, col] = u
            col += 1
    return SnapshotMatrix(out[:, :col], dt=dt_out,
                          grid=Geometry.line(N, periodic=True))
