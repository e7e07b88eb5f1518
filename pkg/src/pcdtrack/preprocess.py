"""Frame clean-up and voxel fitting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import Frame, FrameValidationError, GridSpec

MAPPING_MODES = ("average", "adm", "axor")

DEFAULT_BACKGROUND_THRESHOLD = 0.8
DEFAULT_MIN_DISTANCE = 0.2
DEFAULT_MAX_DISTANCE = 20.0


def spherical_to_cartesian(frame: Frame) -> Frame:
    """Convert (r, azimuth, elevation) points to (x, y, z)."""
    if not frame.spherical:
        raise FrameValidationError("frame is already Cartesian")
    r, az, el = frame.points.T
    if np.any(r < 0):
        raise FrameValidationError("negative range")
    xyz = np.column_stack(
        [r * np.cos(el) * np.sin(az), r * np.cos(el) * np.cos(az), r * np.sin(el)]
    )
    return Frame(frame.timestamp, xyz, frame.sensor, spherical=False)


@dataclass(frozen=True, eq=False)
class BackgroundModel:
    grid: GridSpec
    frequency: np.ndarray  # shape grid.dims, values in [0, 1]
    n_frames: int


def _occupancy(frame: Frame, grid: GridSpec) -> np.ndarray:
    occ = np.zeros(grid.dims, dtype=bool)
    idx, inside = grid.cell_index(frame.points)
    if inside.any():
        occ[tuple(idx[inside].T)] = True
    return occ


def build_background(frames, grid: GridSpec, dilate: int = 0) -> BackgroundModel:
    """Per-cell fraction of calibration frames in which the cell holds a point.

    With ``dilate`` > 0 each frame's occupancy is first grown by that many
    cells (26-connected), so static structure whose points jitter across a
    cell boundary still reaches a high frequency.
    """
    frames = list(frames)
    if not frames:
        raise ValueError("background needs at least one calibration frame")
    if dilate < 0:
        raise ValueError("dilate must be >= 0")
    counts = np.zeros(grid.dims, dtype=np.int64)
    box = np.ones((3,) * len(grid.dims), dtype=bool)
    for f in frames:
        occ = _occupancy(f, grid)
        if dilate and occ.any():
            occ = ndimage.binary_dilation(occ, box, iterations=dilate)
        counts += occ
    freq = counts / len(frames)
    freq.setflags(write=False)
    return BackgroundModel(grid, freq, len(frames))


def subtract_background(
    frame: Frame,
    model: BackgroundModel | None,
    grid: GridSpec | None = None,
    threshold: float = DEFAULT_BACKGROUND_THRESHOLD,
    min_distance: float = DEFAULT_MIN_DISTANCE,
    max_distance: float = DEFAULT_MAX_DISTANCE,
    sensor_origin=(0.0, 0.0, 0.0),
) -> Frame:
    """Drop static-structure points and points outside the range clamp.

    The returned points are a subset of the input, in input order.
    """
    pts = frame.points
    rng = np.linalg.norm(pts - np.asarray(sensor_origin, dtype=float), axis=1)
    keep = (rng >= min_distance) & (rng <= max_distance)
    if model is not None:
        grid = grid or model.grid
        if grid.dims != model.frequency.shape:
            raise ValueError("background model grid does not match")
        idx, inside = grid.cell_index(pts)
        static = np.zeros(len(pts), dtype=bool)
        if inside.any():
            static[inside] = model.frequency[tuple(idx[inside].T)] >= threshold
        keep &= ~static
    return frame.with_points(pts[keep])


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    grid: GridSpec
    values: np.ndarray
    mapping_mode: str
    counts: np.ndarray
    n_outside: int = 0
    timestamp: float = 0.0

    @property
    def occupied(self) -> np.ndarray:
        return self.counts > 0

    @property
    def n_occupied(self) -> int:
        return int(np.count_nonzero(self.counts))

    def occupied_centers(self) -> np.ndarray:
        """(m, 3) centers of occupied cells, in C (row-major) index order."""
        idx = np.argwhere(self.counts > 0)
        return self.grid.cell_center(idx).reshape(-1, 3)


_SIX_NEIGHBORS = ndimage.generate_binary_structure(3, 1).astype(np.int64)
_SIX_NEIGHBORS[1, 1, 1] = 0


def voxelize(frame: Frame, grid: GridSpec, mapping_mode: str = "average") -> VoxelGrid:
    """Fit points onto ``grid``.

    average: count / max count. adm: mean depth (y) of the cell's points.
    axor: 1.0 for occupied cells whose count parity differs from the majority
    parity of their 6-neighbourhood, 0.5 for other occupied cells.
    Empty cells are 0 in every mode.
    """
    if mapping_mode not in MAPPING_MODES:
        raise ValueError(f"unknown mapping mode {mapping_mode!r}")
    idx, inside = grid.cell_index(frame.points)
    n_outside = int(np.count_nonzero(~inside))
    idx = idx[inside]
    counts = np.zeros(grid.dims, dtype=np.int64)
    np.add.at(counts, tuple(idx.T), 1)
    occupied = counts > 0

    if mapping_mode == "average":
        peak = counts.max() if counts.size else 0
        values = counts / peak if peak > 0 else np.zeros(grid.dims)
    elif mapping_mode == "adm":
        depth_sum = np.zeros(grid.dims)
        np.add.at(depth_sum, tuple(idx.T), frame.points[inside, 1])
        values = np.divide(depth_sum, counts, out=np.zeros(grid.dims), where=occupied)
    else:
        parity = (counts % 2).astype(np.int64)
        odd_neighbors = ndimage.convolve(parity, _SIX_NEIGHBORS, mode="constant", cval=0)
        majority = (odd_neighbors > 3).astype(np.int64)
        values = np.where(occupied, np.where(parity != majority, 1.0, 0.5), 0.0)

    values = values.astype(np.float64)
    return VoxelGrid(grid, values, mapping_mode, counts, n_outside, frame.timestamp)


def largest_cluster_size(voxels: VoxelGrid, eps: float | None = None, min_pts: int = 5, weights=None) -> int:
    from .clustering import DEFAULT_WEIGHTS, dbscan

    if voxels.n_occupied == 0:
        return 0
    eps = eps if eps is not None else 2.5 * min(voxels.grid.cell_size)
    cs = dbscan(voxels.occupied_centers(), eps, min_pts, weights or DEFAULT_WEIGHTS)
    return max((len(c) for c in cs.clusters), default=0)


def trim_indices(voxel_sequence, min_cluster_size: int, **cluster_kw) -> list[int]:
    return [
        i
        for i, v in enumerate(voxel_sequence)
        if largest_cluster_size(v, **cluster_kw) >= min_cluster_size
    ]


def trim_frames(voxel_sequence, min_cluster_size: int, **cluster_kw) -> list[VoxelGrid]:
    """Keep frames whose largest cluster spans at least ``min_cluster_size`` cells."""
    seq = list(voxel_sequence)
    return [seq[i] for i in trim_indices(seq, min_cluster_size, **cluster_kw)]
