"""Masked gridded datasets: file formats and connectivity geometry."""

import struct
from pathlib import Path

import numpy as np
import pytest

from obsplan.cli import two_basin_dataset
from obsplan.errors import FormatError
from obsplan.gridded import (GriddedDataset, load_gridded, mask_geometry,
                             save_gridded)

_HEADER = struct.Struct("<8sIIId")
_GOLDEN = Path(__file__).parent / "data" / "tiny_grid.bin"


def _random_dataset(rng, rows=5, cols=6, T=4, dt=0.25):
    mask = rng.random((rows, cols)) < 0.6
    mask[0, 0] = True  # never empty
    snaps = rng.standard_normal((int(mask.sum()), T)).astype(np.float32)
    return GriddedDataset(mask, snaps, dt=dt)


# ---------------------------------------------------------------------------
# dataset construction
# ---------------------------------------------------------------------------


def test_valid_cells_are_row_major():
    mask = np.array([[True, False, True],
                     [False, True, True]])
    ds = GriddedDataset(mask, np.zeros((4, 2), dtype=np.float32))
    assert ds.valid_cells.tolist() == [[0, 0], [0, 2], [1, 1], [1, 2]]
    assert ds.n_valid == 4 and ds.rows == 2 and ds.cols == 3 and ds.T == 2


def test_cell_coords_use_the_axes():
    mask = np.array([[True, True], [False, True]])
    ds = GriddedDataset(mask, np.zeros((3, 2), dtype=np.float32),
                        lat=np.array([10.0, 20.0]), lon=np.array([-5.0, 5.0]))
    assert ds.cell_coords(0) == (10.0, -5.0)
    assert ds.cell_coords(2) == (20.0, 5.0)


def test_dataset_validation():
    good_mask = np.array([[True, False], [True, True]])
    with pytest.raises(FormatError):
        GriddedDataset(np.array([True, False]), np.zeros((1, 2), dtype=np.float32))
    with pytest.raises(FormatError):
        GriddedDataset(np.zeros((2, 2), dtype=bool), np.zeros((0, 2), dtype=np.float32))
    with pytest.raises(FormatError):
        GriddedDataset(good_mask, np.zeros((2, 2), dtype=np.float32))  # 3 valid
    with pytest.raises(FormatError):
        GriddedDataset(good_mask, np.zeros((3, 1), dtype=np.float32))  # T < 2
    with pytest.raises(FormatError):
        GriddedDataset(good_mask, np.zeros((3, 2), dtype=np.float32),
                       lat=np.zeros(3))
    bad = np.zeros((3, 4), dtype=np.float32)
    bad[1, 2] = np.nan
    with pytest.raises(FormatError, match="block 2, cell 1"):
        GriddedDataset(good_mask, bad)


# ---------------------------------------------------------------------------
# round trips
# ---------------------------------------------------------------------------


def test_binary_roundtrip_is_bit_exact(tmp_path, rng):
    for trial in range(5):
        ds = _random_dataset(rng)
        path = tmp_path / f"grid{trial}.bin"
        save_gridded(ds, path)
        back = load_gridded(path)
        assert back == ds
        assert back.snapshots.dtype == np.float32


def test_csv_roundtrip_is_exact(tmp_path, rng):
    ds = _random_dataset(rng, rows=3, cols=4, T=3, dt=1.5)
    path = tmp_path / "grid.csv"
    save_gridded(ds, path, format="csv_grid")
    back = load_gridded(path, format="csv_grid")
    assert back == ds


def test_unknown_format_is_refused(tmp_path, rng):
    ds = _random_dataset(rng)
    with pytest.raises(FormatError):
        save_gridded(ds, tmp_path / "x", format="npz")
    with pytest.raises(FormatError):
        load_gridded(tmp_path / "x", format="npz")


def test_golden_file_loads_with_expected_contents():
    # fixture written byte-by-byte, independently of the library's writer
    ds = load_gridded(_GOLDEN)
    assert (ds.rows, ds.cols, ds.T, ds.dt) == (3, 4, 2, 0.5)
    expected_mask = np.array([[1, 0, 1, 0],
                              [0, 1, 1, 0],
                              [1, 1, 0, 1]], dtype=bool)
    np.testing.assert_array_equal(ds.mask, expected_mask)
    expected = np.array([[0.5, -1.25, 2.0, 3.5, -0.75, 1.5, 0.25],
                         [1.0, 0.5, -2.5, 0.125, 4.0, -1.0, 2.75]],
                        dtype=np.float32).T
    np.testing.assert_array_equal(ds.snapshots, expected)


def test_writer_reproduces_the_golden_bytes(tmp_path):
    # format stability: saving the loaded dataset recreates the exact file
    ds = load_gridded(_GOLDEN)
    out = tmp_path / "again.bin"
    save_gridded(ds, out)
    assert out.read_bytes() == _GOLDEN.read_bytes()


# ---------------------------------------------------------------------------
# malformed binary files report byte offsets
# ---------------------------------------------------------------------------


def _binary_parts():
    header = _HEADER.pack(b"BGRD0001", 2, 3, 2, 1.0)
    mask = bytes([1, 0, 1, 0, 1, 0])  # 3 valid cells
    snaps = np.arange(6, dtype="<f4").tobytes()  # 2 blocks of 3
    return header, mask, snaps


def _expect_format_error(tmp_path, raw, fragment):
    path = tmp_path / "bad.bin"
    path.write_bytes(raw)
    with pytest.raises(FormatError) as exc:
        load_gridded(path)
    assert fragment in str(exc.value)


def test_binary_error_offsets(tmp_path):
    header, mask, snaps = _binary_parts()
    _expect_format_error(tmp_path, header[:10], "byte offset 0")
    _expect_format_error(
        tmp_path, _HEADER.pack(b"NOTGRID!", 2, 3, 2, 1.0) + mask + snaps,
        "byte offset 0")
    _expect_format_error(
        tmp_path, _HEADER.pack(b"BGRD0001", 0, 3, 2, 1.0), "byte offset 8")
    _expect_format_error(
        tmp_path, _HEADER.pack(b"BGRD0001", 2, 3, 1, 1.0) + mask, "byte offset 16")
    _expect_format_error(tmp_path, header + mask[:4], "byte offset 28")
    bad_mask = bytes([1, 0, 2, 0, 1, 0])
    _expect_format_error(tmp_path, bad_mask.join([header, snaps]),
                         f"byte offset {28 + 2}")
    _expect_format_error(tmp_path, header + mask + snaps[:-4],
                         f"byte offset {28 + 6}")
    corrupt = bytearray(header + mask + snaps)
    corrupt[28 + 6 + 4 * 4:28 + 6 + 4 * 5] = np.array([np.inf], "<f4").tobytes()
    _expect_format_error(tmp_path, bytes(corrupt),
                         f"block 1, cell 1 (byte offset {28 + 6 + 16})")


# ---------------------------------------------------------------------------
# malformed csv files report line numbers
# ---------------------------------------------------------------------------


def _csv_lines():
    return ["2,3,2,1.0", "1,0,1", "0,1,0", "0.0,1.0,2.0", "3.0,4.0,5.0"]


def _expect_csv_error(tmp_path, lines, fragment):
    path = tmp_path / "bad.csv"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(FormatError) as exc:
        load_gridded(path, format="csv_grid")
    assert fragment in str(exc.value)


def test_csv_error_lines(tmp_path):
    good = _csv_lines()
    _expect_csv_error(tmp_path, ["2,3"], "line 1")
    _expect_csv_error(tmp_path, ["two,3,2,1.0"] + good[1:], "line 1")
    _expect_csv_error(tmp_path, good[:-1], "expected 5")
    _expect_csv_error(tmp_path, [good[0], "1,0", *good[2:]], "line 2")
    _expect_csv_error(tmp_path, [good[0], good[1], "0,7,0", *good[3:]], "line 3")
    _expect_csv_error(tmp_path, [*good[:3], "0.0,1.0", good[4]], "line 4")


# ---------------------------------------------------------------------------
# connectivity geometry
# ---------------------------------------------------------------------------


def _oracle_hops(mask, wrap_lon):
    """Hop distances between valid cells, by brute-force BFS."""
    rows, cols = mask.shape
    cells = [tuple(rc) for rc in np.argwhere(mask)]
    index = {rc: i for i, rc in enumerate(cells)}
    n = len(cells)
    dist = np.full((n, n), np.inf)
    for s in range(n):
        dist[s, s] = 0.0
        frontier = [cells[s]]
        d = 0
        while frontier:
            d += 1
            nxt = []
            for (r, c) in frontier:
                steps = [(r - 1, c), (r + 1, c)]
                if wrap_lon:
                    steps += [(r, (c - 1) % cols), (r, (c + 1) % cols)]
                else:
                    steps += [(r, c - 1), (r, c + 1)]
                for (r2, c2) in steps:
                    if 0 <= r2 < rows and 0 <= c2 < cols and mask[r2, c2]:
                        j = index[(r2, c2)]
                        if np.isinf(dist[s, j]):
                            dist[s, j] = d
                            nxt.append((r2, c2))
            frontier = nxt
    return dist


def test_mask_geometry_matches_bfs_oracle(rng):
    for trial in range(6):
        mask = rng.random((5, 7)) < 0.55
        mask[2, 3] = True
        wrap = bool(trial % 2)
        ds = GriddedDataset(mask, np.zeros((int(mask.sum()), 2), dtype=np.float32))
        geom = mask_geometry(ds, wrap_lon=wrap)
        got = np.array([geom.distances_from(i) for i in range(geom.n)])
        np.testing.assert_array_equal(got, _oracle_hops(mask, wrap))


def test_mask_geometry_wraps_only_longitudinally():
    mask = np.ones((3, 5), dtype=bool)
    ds = GriddedDataset(mask, np.zeros((15, 2), dtype=np.float32))
    wrapped = mask_geometry(ds, wrap_lon=True)
    flat = mask_geometry(ds, wrap_lon=False)
    # cells (0, 0) and (0, 4) are indices 0 and 4
    assert wrapped.distance(0, 4) == 1.0
    assert flat.distance(0, 4) == 4.0
    # rows never wrap: (0, 0) to (2, 0) is two hops either way
    assert wrapped.distance(0, 10) == 2.0
    assert flat.distance(0, 10) == 2.0


def test_two_basin_dataset_is_disconnected(two_basin):
    ds, geom = two_basin
    wall = ds.cols // 2
    assert not ds.mask[:, wall].any()
    left = [i for i, (r, c) in enumerate(ds.valid_cells) if c < wall]
    right = [i for i, (r, c) in enumerate(ds.valid_cells) if c > wall]
    assert left and right
    dist = np.array([geom.distances_from(i) for i in left])
    assert np.isinf(dist[:, right]).all()
    assert np.isfinite(dist[:, left]).all()
    rdist = np.array([geom.distances_from(i) for i in right])
    assert np.isfinite(rdist[:, right]).all()


def test_two_basin_dataset_is_reproducible():
    a = two_basin_dataset()
    b = two_basin_dataset()
    assert a == b
    assert a.snapshots.shape == (8 * 16, 120)
