"""Shared builders and checks for the test suite.

Every trajectory produced by the planner anywhere in the suite is recorded in
``PLAN_REGISTRY`` (see ``conftest.py``) together with the geometry and motion
limits it was planned under, so motion-safety checks can audit all of them.
"""

import numpy as np

import obsplan as ob

#: (trajectory, geometry, speed, enforce_cycle) for every plan the suite emits
PLAN_REGISTRY = []

#: "criterion N: PASS/FAIL (...)" lines, echoed in the terminal summary
CRITERION_LINES = []


def record_criterion(num, limit_s, elapsed_s, detail, ok=True):
    """Record one acceptance-criterion outcome and enforce it.

    Appends a single pass/fail line (also printed immediately) and then
    asserts both the checked condition and the per-criterion time budget.
    """
    status = "PASS" if (ok and elapsed_s < limit_s) else "FAIL"
    line = (f"criterion {num}: {status} ({detail}; "
            f"{elapsed_s:.1f}s < {limit_s:.0f}s)")
    CRITERION_LINES.append(line)
    print(line)
    assert ok, line
    assert elapsed_s < limit_s, line


def random_reduced_model(rng, n, m, modulus=(0.5, 0.98)):
    """Random canonical-order reduced model with unit-norm Gaussian modes."""
    n_pairs = int(rng.integers(0, m // 2 + 1))
    n_real = m - 2 * n_pairs
    groups = []
    for _ in range(n_pairs):
        r = rng.uniform(*modulus)
        theta = rng.uniform(0.05, np.pi - 0.05)
        groups.append((r, "pair", r * np.exp(1j * theta)))
    for _ in range(n_real):
        r = rng.uniform(*modulus)
        groups.append((r, "real", float(rng.choice([-1.0, 1.0])) * r))
    groups.sort(key=lambda g: -g[0])
    eig, pm, cols = [], [], []
    for _, kind, lam in groups:
        if kind == "real":
            v = rng.standard_normal(n)
            v = v / np.linalg.norm(v)
            pm.append(("real", -1))
            eig.append(complex(lam))
            cols.append(v.astype(complex))
        else:
            v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            v = v / np.linalg.norm(v)
            i = len(eig)
            pm += [("lead", i + 1), ("follow", i)]
            eig += [lam, np.conj(lam)]
            cols += [v, np.conj(v)]
    return ob.ReducedModel(np.array(eig), np.array(cols).T, tuple(pm))


def random_conjugate_coeffs(rng, pair_map):
    """Random complex coefficient vector respecting a model's pair structure."""
    z = np.zeros(len(pair_map), dtype=complex)
    for i, (kind, _) in enumerate(pair_map):
        if kind == "real":
            z[i] = rng.standard_normal()
        elif kind == "lead":
            z[i] = rng.standard_normal() + 1j * rng.standard_normal()
            z[i + 1] = np.conj(z[i])
    return z


def random_trajectory(rng, n, k, l):
    """Random schedule: k distinct locations per step, no motion structure."""
    rows = []
    for _ in range(l):
        rows.append(tuple(int(i) for i in rng.choice(n, size=k, replace=False)))
    return ob.Trajectory(tuple(rows))


def random_feasible_trajectory(rng, geom, mc, cfg):
    """Uniform random walk through the planner's own admissible move sets."""
    from obsplan.planner import candidate_set

    locs = []
    positions = [int(i) for i in rng.choice(geom.n, size=cfg.k, replace=False)]
    starts = list(positions)
    locs.append(tuple(positions))
    for t in range(1, cfg.period_l):
        chosen = []
        row = []
        for s in range(cfg.k):
            cand = candidate_set(geom, mc, positions[s], t, cfg.period_l,
                                 starts[s], chosen, cfg.enforce_cycle)
            pick = int(cand[rng.integers(cand.size)])
            chosen.append(pick)
            row.append(pick)
        positions = row
        locs.append(tuple(row))
    return ob.Trajectory(tuple(locs))


def spd_matrix(rng, d, scale=1.0):
    W = rng.standard_normal((d, d))
    return scale * (W @ W.T / d + 0.1 * np.eye(d))


def check_plan_edges(traj, geom, speed, enforce_cycle=True):
    """Audit every consecutive move of a periodic plan.

    Returns a list of violation strings; an empty list means every sensor's
    moves (including the wrap from the last step back to the first, when the
    cycle is enforced) stay at finite distance -- i.e. never jump across
    disconnected regions -- and within the speed budget.
    """
    violations = []
    l = traj.period_l
    edges = range(l) if (enforce_cycle and l > 1) else range(l - 1)
    for t in edges:
        row_a = traj.locations[t]
        row_b = traj.locations[(t + 1) % l]
        for j, (a, b) in enumerate(zip(row_a, row_b)):
            d = geom.distance(a, b)
            if not np.isfinite(d):
                violations.append(
                    f"sensor {j} step {t}->{(t + 1) % l}: {a}->{b} crosses a "
                    f"disconnected region")
            elif np.isfinite(speed) and d > speed + 1e-9:
                violations.append(
                    f"sensor {j} step {t}->{(t + 1) % l}: {a}->{b} moves "
                    f"{d:.3g} > speed {speed:.3g}")
    return violations


def limiting_trace(model, traj, noise, steps=3000):
    """Mean prior covariance trace over the last cycle of a long run."""
    run = ob.run_filter(model, traj, None, noise, steps=steps)
    return float(np.mean(run.trace_series[-traj.period_l:]))
