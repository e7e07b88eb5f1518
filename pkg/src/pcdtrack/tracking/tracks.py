from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np


class TrackPoint(NamedTuple):
    cell: tuple  # (i, j) grid indices
    pos: tuple  # reported (x, y)
    centroid: tuple | None  # observation that fed this step, if any


@dataclass
class TrackSet:
    """person id -> {frame index -> TrackPoint}."""

    tracks: dict = field(default_factory=dict)
    timestamps: list = field(default_factory=list)

    def ids(self) -> list[int]:
        return sorted(self.tracks)

    def add(self, pid: int, frame: int, point: TrackPoint) -> None:
        self.tracks.setdefault(pid, {})[frame] = point

    def birth(self, pid: int) -> int:
        return min(self.tracks[pid])

    def death(self, pid: int) -> int:
        return max(self.tracks[pid])

    def n_frames(self) -> int:
        last = max((self.death(p) for p in self.tracks if self.tracks[p]), default=-1)
        return max(last + 1, len(self.timestamps))

    def at(self, frame: int) -> dict:
        return {pid: pts[frame] for pid, pts in sorted(self.tracks.items()) if frame in pts}

    def positions(self, frame: int) -> dict:
        return {pid: np.asarray(p.pos, dtype=float) for pid, p in self.at(frame).items()}

    def kinematic_position(self, pid: int, frame: int):
        """Observation centroid when there is one, else the reported position."""
        p = self.tracks.get(pid, {}).get(frame)
        if p is None:
            return None
        return np.asarray(p.centroid if p.centroid is not None else p.pos, dtype=float)

    def copy(self) -> "TrackSet":
        return TrackSet({pid: dict(pts) for pid, pts in self.tracks.items()}, list(self.timestamps))

    def point_multiset(self) -> list:
        """Sorted (frame, cell) pairs regardless of identity."""
        return sorted((f, tuple(p.cell)) for pts in self.tracks.values() for f, p in pts.items())

    def rows(self):
        """(timestamp, [(id, cell, pos), ...]) per frame, for the track file."""
        n = self.n_frames()
        times = self.timestamps if len(self.timestamps) >= n else list(range(n))
        for f in range(n):
            yield times[f], [(pid, p.cell, p.pos) for pid, p in self.at(f).items()]
