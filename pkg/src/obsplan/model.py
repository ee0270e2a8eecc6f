"""Low-rank linear models of spatiotemporal fields.

The canonical object is :class:`ReducedModel`: diagonal complex dynamics
``z_{t+1} = diag(eigenvalues) z_t`` observed through a tall matrix of spatial
modes, ``x_t = Re(modes @ z_t)``.  Columns are kept in a fixed canonical
order (descending eigenvalue modulus, conjugate pairs adjacent with the
positive-imaginary member first) so that serialization, planning and
filtering all agree on indexing.

Estimation code works in real coordinates.  :func:`to_real_blocks` maps the
complex model through the unitary pair isomorphism

    s = (sqrt(2) Re z_lead, sqrt(2) Im z_lead)

under which each conjugate eigenvalue pair ``r e^{+-i w}`` becomes the 2x2
rotation-scaling block ``r [[cos w, -sin w], [sin w, cos w]]`` and isotropic
disturbance covariance stays isotropic.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRankError, DiagonalizationError, StructureError

#: column kinds recorded in ``ReducedModel.pair_map``
REAL = "real"
LEAD = "lead"
FOLLOW = "follow"

#: relative tolerance below which an eigenvalue / column counts as real
_REAL_RTOL = 1e-9
#: relative agreement required between conjugate partners
_CONJ_RTOL = 1e-10


@dataclass(frozen=True)
class NoiseSpec:
    """Isotropic noise levels: disturbance Q = q I (latent), measurement R = rho I."""

    q: float = 0.0
    rho: float = 1.0

    def __post_init__(self):
        if not (self.q >= 0.0):
            raise ValueError("disturbance scale q must be >= 0")
        if not (self.rho > 0.0):
            raise ValueError("measurement variance rho must be > 0")


@dataclass(frozen=True)
class FullModel:
    """Known full-order linear dynamics ``x_{t+1} = A x_t`` with noise scales."""

    A: np.ndarray
    q: float = 0.0
    rho: float = 1.0

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
            raise ValueError("A must be square and non-empty")
        object.__setattr__(self, "A", A)
        if not (self.q >= 0.0):
            raise ValueError("q must be >= 0")
        if not (self.rho > 0.0):
            raise ValueError("rho must be > 0")

    @property
    def n(self):
        return self.A.shape[0]


@dataclass(frozen=True)
class SnapshotMatrix:
    """Column-per-time-step data matrix with its sampling interval.

    ``grid`` is an optional :class:`~obsplan.geometry.Geometry` tying state
    indices to physical locations; it is carried along for planners and
    plotting but never consulted by the numerics here.
    """

    data: np.ndarray
    dt: float = 1.0
    grid: object = None

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError("snapshot data must be a non-empty (n, T) matrix")
        if not np.all(np.isfinite(data)):
            raise ValueError("snapshot data contains non-finite entries")
        if not (self.dt > 0.0):
            raise ValueError("dt must be > 0")
        object.__setattr__(self, "data", data)

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def T(self):
        return self.data.shape[1]


@dataclass(frozen=True)
class ReducedModel:
    """Diagonalized rank-m model in canonical spectral order.

    Attributes
    ----------
    eigenvalues : (m,) complex ndarray
        Discrete-time eigenvalues, sorted by descending modulus (ties by
        descending argument); conjugate pairs are adjacent, lead first.
    modes : (n, m) complex ndarray
        Unit 2-norm spatial mode columns matching ``eigenvalues``.
    pair_map : tuple of (kind, partner)
        Per column: ``("real", -1)``, ``("lead", i+1)`` or ``("follow", i-1)``.
    """

    eigenvalues: np.ndarray
    modes: np.ndarray
    pair_map: tuple

    def __post_init__(self):
        eig = np.asarray(self.eigenvalues, dtype=complex)
        modes = np.asarray(self.modes, dtype=complex)
        object.__setattr__(self, "eigenvalues", eig)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "pair_map", tuple((str(k), int(p)) for k, p in self.pair_map))
        self._validate()

    def _validate(self):
        eig, modes, pm = self.eigenvalues, self.modes, self.pair_map
        if eig.ndim != 1 or modes.ndim != 2 or modes.shape[1] != eig.shape[0]:
            raise StructureError("eigenvalues and modes shapes disagree")
        m, n = eig.shape[0], modes.shape[0]
        if m < 1:
            raise StructureError("model must have at least one mode")
        if m > n:
            raise StructureError(f"rank {m} exceeds state dimension {n}")
        if len(pm) != m:
            raise StructureError("pair_map length disagrees with rank")
        i = 0
        while i < m:
            kind, partner = pm[i]
            if kind == REAL:
                if partner != -1:
                    raise StructureError(f"real column {i} must have partner -1")
                if abs(eig[i].imag) > _REAL_RTOL * max(1.0, abs(eig[i])):
                    raise StructureError(f"column {i} marked real but eigenvalue is complex")
                i += 1
            elif kind == LEAD:
                if i + 1 >= m or pm[i + 1] != (FOLLOW, i) or partner != i + 1:
                    raise StructureError(f"conjugate pair at column {i} is not adjacent")
                scale = max(1.0, abs(eig[i]))
                if eig[i].imag <= 0:
                    raise StructureError(f"pair lead at column {i} must have positive imaginary part")
                if abs(eig[i + 1] - np.conj(eig[i])) > _CONJ_RTOL * scale:
                    raise StructureError(f"eigenvalues of pair at column {i} are not conjugate")
                cnorm = np.linalg.norm(modes[:, i])
                if np.linalg.norm(modes[:, i + 1] - np.conj(modes[:, i])) > _CONJ_RTOL * max(1.0, cnorm):
                    raise StructureError(f"mode columns of pair at column {i} are not conjugate")
                i += 2
            else:
                raise StructureError(f"unexpected pair_map entry {pm[i]!r} at column {i}")

    @property
    def n(self):
        return self.modes.shape[0]

    @property
    def m(self):
        return self.eigenvalues.shape[0]

    # -- serialization (JSON keeps full 64-bit precision via repr round-trip)

    def to_dict(self):
        return {
            "n": self.n,
            "m": self.m,
            "eigenvalues": [[float(v.real), float(v.imag)] for v in self.eigenvalues],
            "modes": [[float(v.real), float(v.imag)] for v in self.modes.ravel(order="C")],
            "pair_map": [[kind, partner] for kind, partner in self.pair_map],
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def from_dict(cls, d):
        n, m = int(d["n"]), int(d["m"])
        eig = np.array([complex(re, im) for re, im in d["eigenvalues"]])
        flat = np.array([complex(re, im) for re, im in d["modes"]])
        if flat.shape[0] != n * m:
            raise StructureError("serialized mode matrix has the wrong size")
        modes = flat.reshape(n, m)
        return cls(eig, modes, tuple((k, int(p)) for k, p in d["pair_map"]))

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class RealBlockModel:
    """Real block-diagonal form consumed by planners and filters.

    ``blocks`` mirrors the source model's ``pair_map`` entry for entry: the
    real columns correspond index-for-index to the complex ones.
    """

    dynamics: np.ndarray
    modes: np.ndarray
    blocks: tuple

    def __post_init__(self):
        dyn = np.asarray(self.dynamics, dtype=float)
        modes = np.asarray(self.modes, dtype=float)
        if dyn.ndim != 2 or dyn.shape[0] != dyn.shape[1]:
            raise StructureError("dynamics must be square")
        if modes.ndim != 2 or modes.shape[1] != dyn.shape[0]:
            raise StructureError("modes and dynamics shapes disagree")
        object.__setattr__(self, "dynamics", dyn)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "blocks", tuple((str(k), int(p)) for k, p in self.blocks))

    @property
    def n(self):
        return self.modes.shape[0]

    @property
    def m(self):
        return self.dynamics.shape[0]


# ---------------------------------------------------------------------------
# canonical spectral ordering


def _group_key(value):
    # descending modulus, ties broken by descending argument; the lead of a
    # conjugate pair (positive imaginary part) carries the group's argument
    return (-abs(value), -np.angle(value))


def _canonicalize(eigvals, vectors):
    """Sort an eigensystem into canonical order and enforce exact pairing.

    Returns ``(eigenvalues, modes, pair_map)`` with unit-norm columns, follow
    columns constructed as exact conjugates of their leads, and real columns
    rotated onto the real axis.
    """
    eigvals = np.asarray(eigvals, dtype=complex)
    vectors = np.asarray(vectors, dtype=complex)
    m0 = eigvals.shape[0]
    used = np.zeros(m0, dtype=bool)
    groups = []
    for i in range(m0):
        if used[i]:
            continue
        lam = eigvals[i]
        scale = max(1.0, abs(lam))
        if abs(lam.imag) <= _REAL_RTOL * scale:
            used[i] = True
            groups.append((REAL, i, None))
            continue
        # find the closest unused conjugate partner
        best, best_err = None, np.inf
        for j in range(m0):
            if j == i or used[j]:
                continue
            err = abs(eigvals[j] - np.conj(lam))
            if err < best_err:
                best, best_err = j, err
        if best is None or best_err > 1e-6 * scale:
            raise StructureError(
                f"complex eigenvalue {lam} at index {i} has no conjugate partner")
        used[i] = used[best] = True
        lead, follow = (i, best) if lam.imag > 0 else (best, i)
        groups.append((LEAD, lead, follow))

    groups.sort(key=lambda g: _group_key(eigvals[g[1]]))

    out_eig, out_cols, pair_map = [], [], []
    for kind, lead, follow in groups:
        col = vectors[:, lead].astype(complex)
        nrm = np.linalg.norm(col)
        if nrm == 0:
            raise StructureError(f"zero mode column at source index {lead}")
        col = col / nrm
        # fix the free phase: largest-magnitude entry becomes real positive
        pivot = int(np.argmax(np.abs(col)))
        piv = col[pivot]
        col = col * (np.conj(piv) / abs(piv))
        if kind == REAL:
            resid = np.linalg.norm(col.imag)
            if resid > 1e-8:
                raise StructureError(
                    f"eigenvector for real eigenvalue {eigvals[lead]} is not "
                    f"phase-alignable to real (residual {resid:.2e})")
            col = col.real.astype(complex)
            col /= np.linalg.norm(col)
            pair_map.append((REAL, -1))
            out_eig.append(complex(eigvals[lead].real, 0.0))
            out_cols.append(col)
        else:
            lam = eigvals[lead]
            pos = len(out_eig)
            pair_map.append((LEAD, pos + 1))
            pair_map.append((FOLLOW, pos))
            out_eig.extend([lam, np.conj(lam)])
            out_cols.extend([col, np.conj(col)])
    return np.array(out_eig), np.stack(out_cols, axis=1), tuple(pair_map)


# ---------------------------------------------------------------------------
# model construction


def spectral_truncate(full, m):
    """Reduce a known full model to its ``m`` leading eigenvalue groups.

    Parameters
    ----------
    full : FullModel
    m : int
        Requested rank, ``1 <= m <= n``.  If the cut would split a conjugate
        pair the rank is reduced by one and a ``UserWarning`` is emitted.

    Returns
    -------
    ReducedModel

    Raises
    ------
    DiagonalizationError
        If the eigenvector matrix has condition number above ``1e12`` (or is
        singular), which makes the diagonalized model meaningless.
    """
    if not isinstance(full, FullModel):
        full = FullModel(np.asarray(full, dtype=float))
    if not 1 <= m <= full.n:
        raise ValueError(f"rank m={m} must lie in [1, {full.n}]")
    w, V = np.linalg.eig(full.A)
    cond = np.linalg.cond(V)
    if not np.isfinite(cond) or cond > 1e12:
        raise DiagonalizationError(
            f"eigenvector matrix condition {cond:.3e} exceeds 1e12; "
            "the full operator is too far from diagonalizable")
    eig, cols, pm = _canonicalize(w, V)
    keep = m
    if keep < eig.shape[0] and pm[keep - 1][0] == LEAD:
        keep -= 1
        warnings.warn(
            f"rank {m} would split a conjugate pair; returning rank {keep}",
            UserWarning, stacklevel=2)
    if keep == 0:
        raise ValueError("rank 1 cut falls inside a conjugate pair; no valid truncation")
    return ReducedModel(eig[:keep], cols[:, :keep], pm[:keep])


def fit_dmd(snaps, m):
    """Fit a rank-``m`` model to snapshots by exact dynamic mode decomposition.

    The shifted snapshot matrices are related through the rank-``m`` SVD of
    the unshifted block; eigenvectors of the reduced operator are lifted to
    exact DMD modes (scale and phase are then discarded by the canonical
    unit-norm convention, so amplitude information lives in the initial
    coefficients, not in the model).

    Parameters
    ----------
    snaps : SnapshotMatrix
        At least ``m + 1`` snapshots.
    m : int

    Raises
    ------
    DegenerateRankError
        If the data's numerical rank (relative threshold ``1e-12``) is below
        ``m``; the achievable rank is attached to the exception.
    """
    if not isinstance(snaps, SnapshotMatrix):
        snaps = SnapshotMatrix(np.asarray(snaps, dtype=float))
    if m < 1:
        raise ValueError("rank m must be >= 1")
    if snaps.T < m + 1:
        raise ValueError(f"need at least m+1={m + 1} snapshots, got {snaps.T}")
    data = np.asarray(snaps.data, dtype=float)
    X, Y = data[:, :-1], data[:, 1:]
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    if s[0] == 0.0:
        raise DegenerateRankError("snapshot matrix is identically zero", achievable_rank=0)
    achievable = int(np.count_nonzero(s >= 1e-12 * s[0]))
    if achievable < m:
        raise DegenerateRankError(
            f"data supports rank {achievable}, below requested {m}",
            achievable_rank=achievable)
    Ur, sr, Vr = U[:, :m], s[:m], Vt[:m].T
    Atil = (Ur.T @ Y @ Vr) / sr
    w, W = np.linalg.eig(Atil)
    lifted = (Y @ Vr / sr) @ W
    # exact DMD modes; near-zero eigenvalues fall back to projected modes
    # because the exact lift degenerates there
    wmax = max(1.0, np.abs(w).max())
    for i in range(m):
        if abs(w[i]) <= 1e-12 * wmax:
            lifted[:, i] = Ur @ W[:, i]
    eig, cols, pm = _canonicalize(w, lifted)
    return ReducedModel(eig, cols, pm)


def coarsen(model, factor):
    """Model of the same state sampled every ``factor`` steps.

    The dynamics of ``z_{t+factor} = diag(eigenvalues)^factor z_t`` share the
    spatial modes of ``model``; only the eigenvalues are raised to the given
    power.  Raising a conjugate pair to a power can move the lead below the
    real axis, in which case the pair's eigenvalues and mode columns are
    swapped so the positive-imaginary member stays first.  If a pair's power
    lands on the real axis the two columns collapse onto repeated real
    dynamics and no valid pair structure remains, which raises
    :class:`StructureError`.  Column moduli stay sorted because
    ``|lambda|^factor`` is monotone in ``|lambda|``.
    """
    factor = int(factor)
    if factor < 1:
        raise ValueError(f"coarsening factor must be >= 1, got {factor}")
    eig = model.eigenvalues.astype(complex) ** factor
    cols = model.modes.copy()
    for i, (kind, _) in enumerate(model.pair_map):
        if kind != LEAD:
            continue
        lam = eig[i]
        if abs(lam.imag) <= _REAL_RTOL * max(1.0, abs(lam)):
            raise StructureError(
                f"pair at column {i} degenerates to a real eigenvalue under "
                f"coarsening by {factor}; the pair structure cannot be kept")
        if lam.imag < 0:
            eig[[i, i + 1]] = eig[[i + 1, i]]
            cols[:, [i, i + 1]] = cols[:, [i + 1, i]]
    return ReducedModel(eig, cols, model.pair_map)


def to_real_blocks(model):
    """Realify a :class:`ReducedModel` through the unitary pair isomorphism.

    Real eigenvalues become 1x1 blocks with the real eigenvector column; a
    conjugate pair with lead ``a + ib`` (b > 0) and mode ``u + iv`` becomes
    the block ``[[a, -b], [b, a]]`` with mode columns
    ``(sqrt(2) u, -sqrt(2) v)``.  For any conjugate-symmetric coefficient
    vector ``z``, ``modes_real @ to_real_coeffs(z)`` equals ``Re(modes @ z)``.
    """
    m = model.m
    dyn = np.zeros((m, m))
    cols = np.zeros((model.n, m))
    rt2 = np.sqrt(2.0)
    for i, (kind, _) in enumerate(model.pair_map):
        if kind == REAL:
            dyn[i, i] = model.eigenvalues[i].real
            cols[:, i] = model.modes[:, i].real
        elif kind == LEAD:
            a, b = model.eigenvalues[i].real, model.eigenvalues[i].imag
            dyn[i, i] = a
            dyn[i, i + 1] = -b
            dyn[i + 1, i] = b
            dyn[i + 1, i + 1] = a
            cols[:, i] = rt2 * model.modes[:, i].real
            cols[:, i + 1] = -rt2 * model.modes[:, i].imag
    return RealBlockModel(dyn, cols, model.pair_map)


def to_real_coeffs(pair_map, z):
    """Map conjugate-symmetric complex coefficients to real-block coordinates."""
    z = np.asarray(z, dtype=complex)
    s = np.zeros(z.shape[0])
    rt2 = np.sqrt(2.0)
    for i, (kind, _) in enumerate(pair_map):
        if kind == REAL:
            s[i] = z[i].real
        elif kind == LEAD:
            s[i] = rt2 * z[i].real
            s[i + 1] = rt2 * z[i].imag
    return s


def to_complex_coeffs(pair_map, s):
    """Inverse of :func:`to_real_coeffs`."""
    s = np.asarray(s, dtype=float)
    z = np.zeros(s.shape[0], dtype=complex)
    inv_rt2 = 1.0 / np.sqrt(2.0)
    for i, (kind, _) in enumerate(pair_map):
        if kind == REAL:
            z[i] = s[i]
        elif kind == LEAD:
            z[i] = (s[i] + 1j * s[i + 1]) * inv_rt2
            z[i + 1] = np.conj(z[i])
    return z


def _check_conjugate_symmetric(pair_map, z):
    scale = max(1.0, float(np.linalg.norm(z)))
    for i, (kind, _) in enumerate(pair_map):
        if kind == REAL and abs(z[i].imag) > 1e-8 * scale:
            raise ValueError(f"coefficient {i} must be real for a real column")
        if kind == LEAD and abs(z[i + 1] - np.conj(z[i])) > 1e-8 * scale:
            raise ValueError(f"coefficients {i}, {i + 1} must be a conjugate pair")


def simulate(model, z0, steps, noise=None, seed=0, dt=1.0, return_states=False):
    """Roll the reduced dynamics forward and emit real field snapshots.

    Parameters
    ----------
    model : ReducedModel
    z0 : (m,) complex array
        Initial coefficients; must be conjugate-symmetric with respect to the
        model's pair structure so that emitted fields are real.
    steps : int
        Number of snapshots emitted (``steps - 1`` transitions).
    noise : NoiseSpec, optional
        Disturbance drawn in conjugate-symmetric form with covariance
        ``q I`` in real-block coordinates.
    return_states : bool
        Also return the (m, steps) complex coefficient history.
    """
    z = np.asarray(z0, dtype=complex).reshape(-1)
    if z.shape[0] != model.m:
        raise ValueError(f"z0 has length {z.shape[0]}, expected {model.m}")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    _check_conjugate_symmetric(model.pair_map, z)
    q = 0.0 if noise is None else float(noise.q)
    rng = np.random.default_rng(seed)
    inv_rt2 = 1.0 / np.sqrt(2.0)
    out = np.empty((model.n, steps))
    states = np.empty((model.m, steps), dtype=complex)
    for t in range(steps):
        states[:, t] = z
        out[:, t] = (model.modes @ z).real
        if t + 1 == steps:
            break
        z = model.eigenvalues * z
        if q > 0.0:
            e = np.sqrt(q) * rng.standard_normal(model.m)
            w = np.zeros(model.m, dtype=complex)
            for i, (kind, _) in enumerate(model.pair_map):
                if kind == REAL:
                    w[i] = e[i]
                elif kind == LEAD:
                    w[i] = (e[i] + 1j * e[i + 1]) * inv_rt2
                    w[i + 1] = np.conj(w[i])
            z = z + w
    snaps = SnapshotMatrix(out, dt=dt)
    return (snaps, states) if return_states else snaps
