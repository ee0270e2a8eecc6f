"""Masked gridded datasets (e.g. gridded geophysical fields with land masks).

Two on-disk formats are supported:

``binary_grid``
    Little-endian binary: header ``{magic b"BGRD0001", rows u32, cols u32,
    T u32, dt f64}``, then ``rows * cols`` mask bytes row-major (1 = valid),
    then ``T`` blocks of ``n_valid`` float32 snapshot values over the valid
    cells.  Round-trips bit-exactly.

``csv_grid``
    Text: one ``rows,cols,T,dt`` header line, ``rows`` mask lines of
    comma-separated 0/1, then one line per snapshot with ``n_valid``
    comma-separated values.

Valid cells map to contiguous state indices in row-major order; the mapping
back to (row, col) — and through the optional latitude/longitude axes to
physical coordinates — is recorded on the dataset.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError
from .geometry import Geometry

__all__ = ["GriddedDataset", "save_gridded", "load_gridded", "mask_geometry"]

_MAGIC = b"BGRD0001"
_HEADER = struct.Struct("<8sIIId")


@dataclass(eq=False)
class GriddedDataset:
    """Snapshots over the valid (unmasked) cells of a rows x cols grid.

    Attributes
    ----------
    mask : (rows, cols) bool ndarray
        True marks a valid cell (e.g. water); False is masked out (land).
    snapshots : (n_valid, T) float32 ndarray
        One column per time step, rows ordered by row-major valid-cell index.
    dt : float
        Sampling interval.
    lat, lon : optional axis coordinate arrays (len rows / len cols)
        Default to the row/column indices.
    """

    mask: np.ndarray
    snapshots: np.ndarray
    dt: float = 1.0
    lat: np.ndarray | None = None
    lon: np.ndarray | None = None
    valid_cells: np.ndarray = field(init=False)  # (n_valid, 2) int (row, col)

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        snaps = np.asarray(self.snapshots, dtype=np.float32)
        if mask.ndim != 2:
            raise FormatError("mask must be 2-D")
        n_valid = int(mask.sum())
        if n_valid == 0:
            raise FormatError("mask has no valid cells")
        if snaps.ndim != 2 or snaps.shape[0] != n_valid:
            raise FormatError(
                f"snapshots must have shape (n_valid={n_valid}, T), got {snaps.shape}")
        if snaps.shape[1] < 2:
            raise FormatError("need at least 2 snapshots")
        if not np.all(np.isfinite(snaps)):
            bad = int(np.flatnonzero(~np.isfinite(snaps.ravel(order="F")))[0])
            raise FormatError(
                f"non-finite snapshot value at block {bad // n_valid}, "
                f"cell {bad % n_valid}")
        rows, cols = mask.shape
        lat = np.arange(rows, dtype=float) if self.lat is None else np.asarray(self.lat, dtype=float)
        lon = np.arange(cols, dtype=float) if self.lon is None else np.asarray(self.lon, dtype=float)
        if lat.shape != (rows,) or lon.shape != (cols,):
            raise FormatError("lat/lon lengths must match grid shape")
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "snapshots", snaps)
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "lat", lat)
        object.__setattr__(self, "lon", lon)
        object.__setattr__(self, "valid_cells", np.argwhere(mask))

    @property
    def rows(self):
        return self.mask.shape[0]

    @property
    def cols(self):
        return self.mask.shape[1]

    @property
    def n_valid(self):
        return self.valid_cells.shape[0]

    @property
    def T(self):
        return self.snapshots.shape[1]

    def cell_coords(self, index):
        """(lat, lon) of valid-cell state index."""
        r, c = self.valid_cells[index]
        return float(self.lat[r]), float(self.lon[c])

    def __eq__(self, other):
        if not isinstance(other, GriddedDataset):
            return NotImplemented
        return (self.mask.shape == other.mask.shape
                and np.array_equal(self.mask, other.mask)
                and self.snapshots.tobytes() == other.snapshots.tobytes()
                and self.dt == other.dt
                and np.array_equal(self.lat, other.lat)
                and np.array_equal(self.lon, other.lon))


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def save_gridded(ds, path, format="binary_grid"):
    if format == "binary_grid":
        _save_binary(ds, path)
    elif format == "csv_grid":
        _save_csv(ds, path)
    else:
        raise FormatError(f"unknown gridded format {format!r}")


def load_gridded(path, format="binary_grid"):
    """Load a gridded dataset, validating structure as it is read.

    Errors carry the byte offset (binary) or line number (csv) of the first
    inconsistency.
    """
    if format == "binary_grid":
        return _load_binary(path)
    if format == "csv_grid":
        return _load_csv(path)
    raise FormatError(f"unknown gridded format {format!r}")


def _save_binary(ds, path):
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, ds.rows, ds.cols, ds.T, ds.dt))
        fh.write(np.ascontiguousarray(ds.mask, dtype=np.uint8).tobytes())
        # T blocks of n_valid float32 (snapshots stored (n_valid, T))
        fh.write(np.ascontiguousarray(ds.snapshots.T, dtype="<f4").tobytes())


def _load_binary(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise FormatError(
            f"truncated header: {len(raw)} bytes, need {_HEADER.size} (byte offset 0)")
    magic, rows, cols, T, dt = _HEADER.unpack_from(raw, 0)
    if magic != _MAGIC:
        raise FormatError(f"bad magic {magic!r} (byte offset 0)")
    if rows == 0 or cols == 0:
        raise FormatError(f"zero grid dimension {rows}x{cols} (byte offset 8)")
    if T < 2:
        raise FormatError(f"need at least 2 snapshots, header says T={T} (byte offset 16)")
    off = _HEADER.size
    n_cells = rows * cols
    if len(raw) < off + n_cells:
        raise FormatError(
            f"truncated mask: file ends at {len(raw)} inside mask region "
            f"(byte offset {off})")
    mask_bytes = np.frombuffer(raw, dtype=np.uint8, count=n_cells, offset=off)
    bad = np.flatnonzero(mask_bytes > 1)
    if bad.size:
        raise FormatError(
            f"mask byte {int(mask_bytes[bad[0]])} not in {{0, 1}} "
            f"(byte offset {off + int(bad[0])})")
    mask = mask_bytes.astype(bool).reshape(rows, cols)
    n_valid = int(mask.sum())
    if n_valid == 0:
        raise FormatError(f"mask has no valid cells (byte offset {off})")
    off += n_cells
    want = T * n_valid * 4
    if len(raw) != off + want:
        raise FormatError(
            f"snapshot region is {len(raw) - off} bytes, expected {want} "
            f"for T={T} blocks of {n_valid} float32 (byte offset {off})")
    flat = np.frombuffer(raw, dtype="<f4", count=T * n_valid, offset=off)
    nonfin = np.flatnonzero(~np.isfinite(flat))
    if nonfin.size:
        i = int(nonfin[0])
        raise FormatError(
            f"non-finite snapshot value in block {i // n_valid}, cell "
            f"{i % n_valid} (byte offset {off + 4 * i})")
    snaps = flat.reshape(T, n_valid).T.copy()
    return GriddedDataset(mask, snaps, dt=dt)


def _save_csv(ds, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([ds.rows, ds.cols, ds.T, repr(ds.dt)])
        for r in range(ds.rows):
            w.writerow(ds.mask[r].astype(int).tolist())
        for t in range(ds.T):
            w.writerow([repr(float(v)) for v in ds.snapshots[:, t]])


def _load_csv(path):
    with open(path, newline="") as fh:
        lines = list(csv.reader(fh))
    if not lines:
        raise FormatError("empty csv_grid file (line 1)")
    try:
        rows, cols, T, dt = int(lines[0][0]), int(lines[0][1]), int(lines[0][2]), float(lines[0][3])
    except (IndexError, ValueError) as exc:
        raise FormatError(f"bad csv_grid header {lines[0]!r} (line 1): {exc}") from None
    if len(lines) != 1 + rows + T:
        raise FormatError(
            f"csv_grid has {len(lines)} lines, expected {1 + rows + T} "
            f"(header + {rows} mask + {T} snapshot lines)")
    mask = np.zeros((rows, cols), dtype=bool)
    for r in range(rows):
        vals = lines[1 + r]
        if len(vals) != cols:
            raise FormatError(f"mask line has {len(vals)} entries, expected {cols} (line {2 + r})")
        row = np.array([int(v) for v in vals])
        if np.any((row != 0) & (row != 1)):
            raise FormatError(f"mask entries must be 0/1 (line {2 + r})")
        mask[r] = row.astype(bool)
    n_valid = int(mask.sum())
    if n_valid == 0:
        raise FormatError(f"mask has no valid cells (lines 2-{1 + rows})")
    snaps = np.empty((n_valid, T), dtype=np.float32)
    for t in range(T):
        vals = lines[1 + rows + t]
        if len(vals) != n_valid:
            raise FormatError(
                f"snapshot line has {len(vals)} values, expected {n_valid} "
                f"(line {2 + rows + t})")
        snaps[:, t] = [float(v) for v in vals]
    return GriddedDataset(mask, snaps, dt=dt)


# ---------------------------------------------------------------------------
# connectivity
# ---------------------------------------------------------------------------

def mask_geometry(ds, wrap_lon=True):
    """Graph geometry on the valid cells with 4-neighbor adjacency.

    Columns wrap at the longitudinal seam (last column adjacent to first)
    when ``wrap_lon``; rows never wrap.  Sensor motion then uses hop
    distances, so masked-off cells and disconnected basins are unreachable by
    construction.
    """
    mask = ds.mask
    rows, cols = mask.shape
    node = -np.ones((rows, cols), dtype=int)
    node[mask] = np.arange(ds.n_valid)
    neighbors = [set() for _ in range(ds.n_valid)]
    for r, c in ds.valid_cells:
        i = node[r, c]
        if r + 1 < rows and mask[r + 1, c]:
            j = node[r + 1, c]
            neighbors[i].add(j)
            neighbors[j].add(i)
        c_next = (c + 1) % cols if wrap_lon else c + 1
        if c_next < cols and mask[r, c_next] and c_next != c:
            j = node[r, c_next]
            neighbors[i].add(j)
            neighbors[j].add(i)
    coords = ds.valid_cells.astype(float)
    return Geometry.graph([sorted(s) for s in neighbors], coords=coords)
