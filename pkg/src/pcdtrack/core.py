"""Shared domain types and the JSONL file formats used across the package.

Units are meters and seconds. Coordinate convention: x right, y forward
(depth), z up. Spherical points carry (r, azimuth, elevation) with azimuth
measured in the x-y plane from +y and elevation from the x-y plane.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SENSORS = ("lidar", "mmwave", "synthetic")

# Cell edge lengths in meters. "default" is the desk-scale value used by the
# pipeline; the other two are the literal sub-centimeter resolutions reported
# for the two sensor types and are only usable on tiny regions.
RESOLUTION_PRESETS = {
    "default": 0.10,
    "lidar-0.3cm": 0.003,
    "mmwave-0.5cm": 0.005,
}


class FrameParseError(ValueError):
    """Malformed line in a JSONL input file."""

    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


class FrameValidationError(ValueError):
    pass


class SerializationError(ValueError):
    pass


def _as_points(points) -> np.ndarray:
    arr = np.asarray(points, dtype=np.float64)
    if arr.size == 0:
        arr = arr.reshape(0, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise FrameValidationError(f"points must have shape (n, 3), got {arr.shape}")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Frame:
    """One sensor sweep: a timestamped (n, 3) point array.

    When ``spherical`` is true the columns are (r, azimuth, elevation);
    otherwise (x, y, z).
    """

    timestamp: float
    points: np.ndarray
    sensor: str = "synthetic"
    spherical: bool = False

    def __post_init__(self):
        object.__setattr__(self, "points", _as_points(self.points))
        object.__setattr__(self, "timestamp", float(self.timestamp))
        if not math.isfinite(self.timestamp):
            raise FrameValidationError("timestamp must be finite")
        if self.sensor not in SENSORS:
            raise FrameValidationError(f"unknown sensor {self.sensor!r}")
        if not np.all(np.isfinite(self.points)):
            raise FrameValidationError("non-finite point coordinate")
        if self.spherical and np.any(self.points[:, 0] < 0):
            raise FrameValidationError("negative range in spherical frame")

    def __len__(self):
        return len(self.points)

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return (
            self.timestamp == other.timestamp
            and self.sensor == other.sensor
            and self.spherical == other.spherical
            and self.points.shape == other.points.shape
            and bool(np.array_equal(self.points, other.points))
        )

    def with_points(self, points) -> "Frame":
        return Frame(self.timestamp, points, self.sensor, self.spherical)


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned regular grid: ``origin`` is the low corner of cell (0, 0, 0)."""

    origin: tuple
    cell_size: tuple
    dims: tuple

    def __post_init__(self):
        origin = tuple(float(v) for v in self.origin)
        cell = self.cell_size
        if np.isscalar(cell):
            cell = (cell,) * len(origin)
        cell = tuple(float(v) for v in cell)
        dims = tuple(int(v) for v in self.dims)
        if not (len(origin) == len(cell) == len(dims)):
            raise ValueError("origin, cell_size and dims must have equal length")
        if any(c <= 0 for c in cell):
            raise ValueError("cell_size must be positive on every axis")
        if any(d < 1 for d in dims):
            raise ValueError("dims must be >= 1")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "cell_size", cell)
        object.__setattr__(self, "dims", dims)

    @classmethod
    def from_bounds(cls, lo: Sequence[float], hi: Sequence[float], cell_size) -> "GridSpec":
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        cell = np.broadcast_to(np.asarray(cell_size, dtype=float), lo.shape)
        dims = np.maximum(1, np.ceil((hi - lo) / cell - 1e-9).astype(int))
        return cls(tuple(lo), tuple(cell), tuple(dims))

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.dims))

    @property
    def upper(self) -> np.ndarray:
        return np.asarray(self.origin) + np.asarray(self.cell_size) * np.asarray(self.dims)

    def cell_index(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Integer cell coordinates of ``points`` and an in-bounds mask."""
        pts = np.asarray(points, dtype=float).reshape(-1, self.ndim)
        idx = np.floor((pts - np.asarray(self.origin)) / np.asarray(self.cell_size)).astype(np.int64)
        inside = np.all((idx >= 0) & (idx < np.asarray(self.dims)), axis=1)
        return idx, inside

    def flat_index(self, idx) -> np.ndarray:
        return np.ravel_multi_index(np.asarray(idx).T, self.dims)

    def cell_center(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=float)
        return np.asarray(self.origin) + (idx + 0.5) * np.asarray(self.cell_size)

    def drop_axis(self, axis: int = 2) -> "GridSpec":
        keep = [i for i in range(self.ndim) if i != axis]
        return GridSpec(
            tuple(self.origin[i] for i in keep),
            tuple(self.cell_size[i] for i in keep),
            tuple(self.dims[i] for i in keep),
        )


@dataclass(frozen=True)
class PersonState:
    id: int
    centroid: tuple
    activity: str = "unknown"


@dataclass(frozen=True)
class GroundTruthFrame:
    timestamp: float
    persons: tuple = field(default_factory=tuple)

    def by_id(self) -> dict:
        return {p.id: p for p in self.persons}


# -- I/O ---------------------------------------------------------------------


def _dumps(obj) -> str:
    try:
        return json.dumps(obj, separators=(",", ":"), allow_nan=False)
    except ValueError as exc:
        raise SerializationError(str(exc)) from exc


def _iter_json_lines(path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise FrameParseError(lineno, f"invalid JSON ({exc.msg} at column {exc.colno})") from exc


def _check_monotone(times: list, what: str):
    for i in range(1, len(times)):
        if times[i] < times[i - 1]:
            raise FrameValidationError(
                f"{what} timestamps not monotone: {times[i]} after {times[i - 1]} (record {i + 1})"
            )


def read_frames(path) -> list[Frame]:
    """Read a frame JSONL file; raises on malformed lines or time reversal."""
    frames = []
    for lineno, obj in _iter_json_lines(path):
        if not isinstance(obj, dict) or "t" not in obj or "points" not in obj:
            raise FrameParseError(lineno, "expected an object with 't' and 'points'")
        try:
            frames.append(Frame(obj["t"], obj["points"], obj.get("sensor", "synthetic")))
        except (TypeError, ValueError) as exc:
            raise FrameParseError(lineno, str(exc)) from exc
    _check_monotone([f.timestamp for f in frames], "frame")
    return frames


def write_frames(frames: Iterable[Frame], path) -> None:
    lines = []
    for f in frames:
        if f.spherical:
            raise SerializationError("spherical frames are not persisted; convert first")
        lines.append(_dumps({"t": f.timestamp, "sensor": f.sensor, "points": f.points.tolist()}))
    _write_lines(lines, path)


def _write_lines(lines: list[str], path):
    text = "".join(line + "\n" for line in lines)
    Path(path).write_text(text, encoding="utf-8")


def read_ground_truth(path) -> list[GroundTruthFrame]:
    out = []
    for lineno, obj in _iter_json_lines(path):
        try:
            persons = tuple(
                PersonState(int(p["id"]), tuple(float(v) for v in p["c"]), str(p.get("act", "unknown")))
                for p in obj["persons"]
            )
            out.append(GroundTruthFrame(float(obj["t"]), persons))
        except (KeyError, TypeError, ValueError) as exc:
            raise FrameParseError(lineno, f"bad ground-truth record: {exc}") from exc
    _check_monotone([g.timestamp for g in out], "ground-truth")
    return out


def write_ground_truth(records: Iterable[GroundTruthFrame], path) -> None:
    lines = [
        _dumps(
            {
                "t": g.timestamp,
                "persons": [{"id": p.id, "c": list(p.centroid), "act": p.activity} for p in g.persons],
            }
        )
        for g in records
    ]
    _write_lines(lines, path)


def write_track_file(track_rows, path) -> None:
    """``track_rows``: iterable of (t, [(id, (i, j), (x, y)), ...])."""
    lines = [
        _dumps(
            {
                "t": float(t),
                "tracks": [
                    {"id": int(pid), "cell": [int(c) for c in cell], "pos": [float(v) for v in pos]}
                    for pid, cell, pos in entries
                ],
            }
        )
        for t, entries in track_rows
    ]
    _write_lines(lines, path)


def read_track_file(path):
    rows = []
    for lineno, obj in _iter_json_lines(path):
        try:
            rows.append(
                (
                    float(obj["t"]),
                    [(int(e["id"]), tuple(e["cell"]), tuple(e["pos"])) for e in obj["tracks"]],
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FrameParseError(lineno, f"bad track record: {exc}") from exc
    return rows
