"""Observability assembly, conditioning, and row-selection scores."""

import numpy as np
import pytest

import obsplan as ob
from obsplan.errors import DegenerateRankError
from obsplan.planner import residual_scores, selection_score
from helpers import random_reduced_model, random_trajectory

# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------


def test_assemble_matches_matrix_power_oracle():
    for seed in range(10):
        rng = np.random.default_rng(600 + seed)
        m = int(rng.integers(2, 8))
        n = int(rng.integers(m + 3, 40))
        rb = ob.to_real_blocks(random_reduced_model(rng, n, m))
        k = int(rng.integers(1, 4))
        l = int(rng.integers(1, 9))
        traj = random_trajectory(rng, n, k, l)
        blocks = [rb.modes[list(traj.locations[t]), :]
                  @ np.linalg.matrix_power(rb.dynamics, t) for t in range(l)]
        expected = np.vstack(blocks)
        got = ob.assemble(rb, traj).matrix
        assert got.shape == (l * k, m)
        np.testing.assert_allclose(got, expected, rtol=0, atol=1e-12)


def test_projected_block_is_modes_times_power():
    rng = np.random.default_rng(61)
    rb = ob.to_real_blocks(random_reduced_model(rng, 12, 4))
    np.testing.assert_allclose(ob.projected_block(rb, 0), rb.modes)
    np.testing.assert_allclose(
        ob.projected_block(rb, 3),
        rb.modes @ np.linalg.matrix_power(rb.dynamics, 3), rtol=0, atol=1e-13)
    with pytest.raises(ValueError):
        ob.projected_block(rb, -1)


def test_assemble_rejects_out_of_range_locations():
    rng = np.random.default_rng(67)
    rb = ob.to_real_blocks(random_reduced_model(rng, 10, 4))
    traj = ob.Trajectory(((9, 10),))
    with pytest.raises(ValueError):
        ob.assemble(rb, traj)


# ---------------------------------------------------------------------------
# conditioning and rank
# ---------------------------------------------------------------------------


def test_condition_number_matches_numpy_oracle():
    rng = np.random.default_rng(71)
    for _ in range(10):
        M = rng.standard_normal((12, 5))
        np.testing.assert_allclose(ob.condition_number(M), np.linalg.cond(M),
                                   rtol=1e-12)
    # rank-deficient and wide matrices report +inf
    M = np.outer(rng.standard_normal(8), rng.standard_normal(4))
    assert ob.condition_number(M) == float("inf")
    assert ob.condition_number(rng.standard_normal((3, 5))) == float("inf")
    assert ob.condition_number(np.zeros((4, 4))) == float("inf")


def test_is_observable_rank_oracle():
    rng = np.random.default_rng(73)
    rb = ob.to_real_blocks(random_reduced_model(rng, 20, 4))
    full = random_trajectory(rng, 20, 5, 1)
    report = ob.is_observable(rb, full)
    assert bool(report) and report.rank == 4 == report.required
    # a single fixed sensor cannot observe a rank-4 model in one step
    single = ob.Trajectory(((3,),))
    report = ob.is_observable(rb, single)
    assert not bool(report) and report.rank == 1


# ---------------------------------------------------------------------------
# schedules
# ---------------------------------------------------------------------------


def test_trajectory_validation():
    with pytest.raises(ValueError):
        ob.Trajectory(())
    with pytest.raises(ValueError):
        ob.Trajectory(((0, 0),))  # duplicate within a step
    with pytest.raises(ValueError):
        ob.Trajectory(((0, 1), (2,)))  # inconsistent sensor count
    with pytest.raises(ValueError):
        ob.Trajectory(((-1,),))
    traj = ob.Trajectory([[0, 5], [1, 6]])
    assert traj.period_l == 2 and traj.k == 2
    assert traj.locations == ((0, 5), (1, 6))


def test_trajectory_json_roundtrip(tmp_path):
    traj = ob.Trajectory(((4, 2), (5, 3), (6, 4)))
    path = tmp_path / "traj.json"
    traj.save(path)
    back = ob.Trajectory.load(path)
    assert back.locations == traj.locations
    with pytest.raises(ValueError):
        ob.Trajectory.from_dict({"l": 2, "k": 2, "locations": [1, 2, 3]})


def test_trajectory_csv_includes_coordinates(tmp_path):
    geom = ob.Geometry.grid2d(3, 4)
    traj = ob.Trajectory(((0, 7),))
    path = tmp_path / "traj.csv"
    traj.to_csv(path, geometry=geom)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,sensor_id,index,coord0,coord1"
    assert lines[1] == "0,0,0,0,0"
    assert lines[2] == "0,1,7,1,3"


# ---------------------------------------------------------------------------
# row-selection scores
# ---------------------------------------------------------------------------


def test_qrcp_scores_match_projector_oracle():
    for seed in range(8):
        rng = np.random.default_rng(700 + seed)
        m = int(rng.integers(2, 7))
        p = int(rng.integers(0, m))
        X = rng.standard_normal((15, m))
        O_cur = rng.standard_normal((p, m))
        got = selection_score(X, O_cur, "qrcp")
        if p == 0:
            expected = (X * X).sum(axis=1)
        else:
            # oracle: orthogonal projector onto span(O_cur rows) via pinv
            P = O_cur.T @ np.linalg.pinv(O_cur.T)
            resid = X - X @ P
            expected = (resid * resid).sum(axis=1)
        np.testing.assert_allclose(got, expected, rtol=1e-10, atol=1e-12)


def test_gappy_score_is_sound_lower_bound():
    # the score is a certified lower bound on the smallest squared singular
    # value of the augmented matrix, never below the unaugmented one
    rng = np.random.default_rng(79)
    for _ in range(20):
        X = rng.standard_normal((12, 3))
        O_cur = rng.standard_normal((6, 3))
        scores = selection_score(X, O_cur, "gappy_e")
        base = np.linalg.svd(O_cur, compute_uv=False)[-1] ** 2
        assert np.all(scores >= base - 1e-12)  # appending never hurts
        true_sq = np.array([
            np.linalg.svd(np.vstack([O_cur, X[i]]), compute_uv=False)[-1] ** 2
            for i in range(12)])
        assert np.all(scores <= true_sq + 1e-9)


def test_selection_score_mode_errors():
    rng = np.random.default_rng(83)
    X = rng.standard_normal((6, 3))
    with pytest.raises(ValueError):
        selection_score(X, rng.standard_normal((3, 3)), "qrcp")
    with pytest.raises(ValueError):
        selection_score(X, rng.standard_normal((2, 3)), "gappy_e")
    with pytest.raises(ValueError):
        selection_score(X, rng.standard_normal((2, 3)), "nope")
    # rank-deficient oversampled rows cannot support the gappy bound
    row = rng.standard_normal(3)
    with pytest.raises(DegenerateRankError):
        selection_score(X, np.vstack([row, row, row, row]), "gappy_e")


def test_residual_scores_rank_aware():
    rng = np.random.default_rng(89)
    X = rng.standard_normal((8, 3))
    row = rng.standard_normal(3)
    O_rank1 = np.vstack([row, 2 * row, -row, row])  # rank 1 despite 4 rows
    got = residual_scores(X, O_rank1)
    u = row / np.linalg.norm(row)
    resid = X - np.outer(X @ u, u)
    np.testing.assert_allclose(got, (resid * resid).sum(axis=1),
                               rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(residual_scores(X, np.empty((0, 3))),
                               (X * X).sum(axis=1), rtol=1e-12)


def test_degenerate_oversampling_fallback_is_logged(caplog):
    # a rank-one mode matrix forces the oversampled selection to fall back to
    # residual scores, which must leave a log trail
    n, m = 6, 2
    modes = np.outer(np.arange(1.0, 7.0), [1.0, 0.5])
    rb = ob.RealBlockModel(0.9 * np.eye(m), modes, (("real", -1), ("real", -1)))
    geom = ob.Geometry.line(n, periodic=True)
    with caplog.at_level("WARNING", logger="obsplan.planner"):
        traj = ob.plan(rb, geom, ob.MotionConstraint(float("inf")),
                       ob.PlanConfig(k=1, period_l=4))
    assert traj.period_l == 4
    assert any("residual" in rec.message for rec in caplog.records)
