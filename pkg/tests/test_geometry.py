"""Motion spaces: distances, index lookup, constraint validation."""

import collections

import numpy as np
import pytest

import obsplan as ob


def _bfs_oracle(adjacency, source):
    d = {source: 0.0}
    queue = collections.deque([source])
    while queue:
        i = queue.popleft()
        for j in adjacency[i]:
            if j not in d:
                d[j] = d[i] + 1.0
                queue.append(j)
    n = len(adjacency)
    return np.array([d.get(i, np.inf) for i in range(n)])


def test_line_distances_closed_form():
    n = 11
    path = ob.Geometry.line(n)
    ring = ob.Geometry.line(n, periodic=True)
    for src in (0, 3, 10):
        expected_path = np.abs(np.arange(n) - src).astype(float)
        np.testing.assert_allclose(path.distances_from(src), expected_path)
        delta = np.abs(np.arange(n) - src)
        expected_ring = np.minimum(delta, n - delta).astype(float)
        np.testing.assert_allclose(ring.distances_from(src), expected_ring)


def test_grid2d_distances_closed_form():
    rows, cols = 5, 7
    flat = ob.Geometry.grid2d(rows, cols)
    torus = ob.Geometry.grid2d(rows, cols, periodic=(True, True))
    rr, cc = np.divmod(np.arange(rows * cols), cols)
    for src in (0, 17, 34):
        r0, c0 = divmod(src, cols)
        dr, dc = np.abs(rr - r0), np.abs(cc - c0)
        np.testing.assert_allclose(flat.distances_from(src), np.hypot(dr, dc))
        wr = np.minimum(dr, rows - dr)
        wc = np.minimum(dc, cols - dc)
        np.testing.assert_allclose(torus.distances_from(src), np.hypot(wr, wc))


def test_graph_distances_match_bfs_oracle():
    rng = np.random.default_rng(5)
    n = 30
    adjacency = [set() for _ in range(n)]
    for _ in range(45):
        i, j = rng.choice(n, size=2, replace=False)
        adjacency[i].add(int(j))
        adjacency[j].add(int(i))
    geom = ob.Geometry.graph([sorted(s) for s in adjacency])
    for src in range(0, n, 7):
        np.testing.assert_allclose(geom.distances_from(src),
                                   _bfs_oracle(adjacency, src))


def test_graph_disconnected_components_are_infinite():
    geom = ob.Geometry.graph([(1,), (0,), (3,), (2,)])  # 0-1 and 2-3
    d = geom.distances_from(0)
    assert d[1] == 1.0 and not np.isfinite(d[2]) and not np.isfinite(d[3])


def test_graph_rejects_asymmetric_adjacency():
    with pytest.raises(ValueError):
        ob.Geometry.graph([(1,), ()])
    with pytest.raises(ValueError):
        ob.Geometry.graph([(5,), (0,)])


def test_distances_are_cached_and_read_only():
    geom = ob.Geometry.line(6)
    d1 = geom.distances_from(2)
    assert geom.distances_from(2) is d1
    with pytest.raises(ValueError):
        d1[0] = 99.0


def test_index_of_all_kinds():
    line = ob.Geometry.line(5)
    assert line.index_of(3) == 3
    with pytest.raises(ValueError):
        line.index_of(5)

    grid = ob.Geometry.grid2d(4, 6)
    assert grid.index_of(2, 5) == 17
    np.testing.assert_allclose(grid.coords[17], [2.0, 5.0])
    with pytest.raises(ValueError):
        grid.index_of(4, 0)

    graph = ob.Geometry.graph([(1,), (0, 2), (1,)],
                              coords=[[0, 0], [0, 1], [1, 1]])
    assert graph.index_of(0, 1) == 1
    with pytest.raises(ValueError):
        graph.index_of(9, 9)


def test_source_out_of_range():
    geom = ob.Geometry.line(4)
    with pytest.raises(ValueError):
        geom.distances_from(4)
    with pytest.raises(ValueError):
        geom.distances_from(-1)


def test_motion_constraint_validation():
    assert ob.MotionConstraint(float("inf")).speed == float("inf")
    assert ob.MotionConstraint(0).speed == 0
    with pytest.raises(ValueError):
        ob.MotionConstraint(-1.0)
    with pytest.raises(ValueError):
        ob.MotionConstraint(float("nan"))


def _reach_oracle(geom, source, moves, speed):
    # one-step adjacency from pairwise distances, iterated as a set walk
    dist = np.array([geom.distances_from(i) for i in range(geom.n)])
    step = dist <= speed
    reach = step[source].copy()
    for _ in range(moves - 1):
        reach = step[reach].any(axis=0) | reach
    return reach


def test_reachable_within_matches_set_walk_oracle():
    rng = np.random.default_rng(3)
    geoms = [
        ob.Geometry.line(17, periodic=True),
        ob.Geometry.line(17, periodic=False),
        ob.Geometry.grid2d(7, 9, periodic=(True, True)),
        ob.Geometry.grid2d(7, 9, periodic=(False, True)),
        ob.Geometry.grid2d(6, 6, periodic=(False, False)),
        ob.Geometry.graph([(1,), (0, 2), (1, 3), (2,), ()]),
    ]
    for geom in geoms:
        for speed in (1.0, 2.4):
            for _ in range(4):
                source = int(rng.integers(geom.n))
                moves = int(rng.integers(1, 6))
                got = geom.reachable_within(source, moves, speed)
                want = _reach_oracle(geom, source, moves, speed)
                assert np.array_equal(got, want), (
                    f"{geom} source={source} moves={moves} speed={speed}")


def test_reachable_within_full_speed_and_validation():
    geom = ob.Geometry.grid2d(5, 5, periodic=(True, True))
    assert geom.reachable_within(7, 1, float("inf")).all()
    with pytest.raises(ValueError):
        geom.reachable_within(25, 1, 1.0)
    with pytest.raises(ValueError):
        geom.reachable_within(3, 0, 1.0)


def test_reachable_can_be_smaller_than_distance_budget():
    # two consecutive unit-radius balls on a sparse diagonal need not share
    # a lattice point even when the budgeted distance allows the hop
    geom = ob.Geometry.grid2d(20, 20)
    a = geom.index_of(0, 0)
    b = geom.index_of(13, 9)
    speed = 8.0
    assert geom.distance(a, b) <= 2 * speed
    assert not geom.reachable_within(a, 2, speed)[b]
