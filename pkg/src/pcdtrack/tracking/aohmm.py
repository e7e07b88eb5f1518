"""Observation-to-target assignment and adaptive-order HMM decoding."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .statespace import DecodeError, HmmModel, StateSpace, active_states
from .tracks import TrackPoint, TrackSet
from .viterbi import DecodedPath, viterbi_adaptive


class Observation2D(NamedTuple):
    x: float
    y: float
    cluster: int
    size: int

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])


def project_to_2d(cluster_set) -> list[Observation2D]:
    """Drop z from every cluster centroid, keeping cluster index and size."""
    return [
        Observation2D(float(c[0]), float(c[1]), k, len(m))
        for k, (c, m) in enumerate(zip(cluster_set.centroids, cluster_set.clusters))
    ]


@dataclass
class TrackerConfig:
    window: int = 10
    n_windows: int = 3
    overlap_radius: float = 1.5
    crossover_radius: float = 1.0
    state_cell: float = 0.5
    assign_gate: float = 1.0
    merge_gate: float = 0.75
    lookahead: int | None = None  # frames; None means one window
    decode: bool = True

    def __post_init__(self):
        if self.window < 1 or self.n_windows < 1:
            raise ValueError("window and n_windows must be >= 1")
        if min(self.overlap_radius, self.crossover_radius, self.state_cell, self.assign_gate) <= 0:
            raise ValueError("radii and cell size must be positive")

    @property
    def max_missing(self) -> int:
        return 2 * self.window


@dataclass
class Assignment:
    """Per-target observation streams produced by causal nearest assignment."""

    n_frames: int
    obs: dict = field(default_factory=dict)  # target -> {frame: xy}
    shared: dict = field(default_factory=dict)  # target -> set of frames
    overlap: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    present: list = field(default_factory=list)  # frame -> sorted target ids


def _as_xy(frame_obs) -> np.ndarray:
    pts = [o.xy if isinstance(o, Observation2D) else np.asarray(o, dtype=float)[:2] for o in frame_obs]
    return np.array(pts, dtype=float).reshape(-1, 2)


def assign_targets(obs_per_frame, config: TrackerConfig | None = None, first_id: int = 0) -> Assignment:
    """Causal frame-by-frame assignment of observations to targets.

    Each live target predicts its last observed position; observations are
    matched one-to-one by minimum total distance within ``assign_gate``.
    A target left over while an observation owned by a neighbour within
    ``overlap_radius`` lies inside ``merge_gate`` shares that observation
    (two people seen as one blob); both targets record the frame as shared.
    Unmatched observations start targets; targets unobserved for more than
    ``2 * window`` frames are dropped.
    """
    cfg = config or TrackerConfig()
    n = len(obs_per_frame)
    out = Assignment(n, overlap=np.zeros(n, dtype=bool), present=[[] for _ in range(n)])
    last: dict[int, np.ndarray] = {}
    idle: dict[int, int] = {}
    next_id = first_id
    for t, frame_obs in enumerate(obs_per_frame):
        xy = _as_xy(frame_obs)
        live = sorted(last)
        owner = {}
        if live and len(xy):
            prev = np.array([last[k] for k in live])
            cost = np.linalg.norm(prev[:, None, :] - xy[None, :, :], axis=-1)
            rows, cols = linear_sum_assignment(cost)
            for r, c in zip(rows, cols):
                if cost[r, c] <= cfg.assign_gate:
                    owner[int(c)] = live[r]
        taken = {tid: c for c, tid in owner.items()}
        shared_now = {}
        for tid in live:
            if tid in taken or not len(xy):
                continue
            d = np.linalg.norm(xy - last[tid], axis=1)
            c = int(np.argmin(d))
            host = owner.get(c)
            if (
                host is not None
                and d[c] <= cfg.merge_gate
                and np.linalg.norm(last[host] - last[tid]) <= cfg.overlap_radius
            ):
                shared_now[tid] = c
        for c in range(len(xy)):
            if c not in owner:
                owner[c] = next_id
                taken[next_id] = c
                next_id += 1

        for tid, c in list(taken.items()) + list(shared_now.items()):
            out.obs.setdefault(tid, {})[t] = xy[c].copy()
            out.present[t].append(tid)
        for tid, c in shared_now.items():
            out.shared.setdefault(tid, set()).add(t)
            out.shared.setdefault(owner[c], set()).add(t)
        out.present[t].sort()

        close = False
        if len(xy) > 1:
            d = np.linalg.norm(xy[:, None, :] - xy[None, :, :], axis=-1)
            close = bool(np.any(d[np.triu_indices(len(xy), 1)] < cfg.overlap_radius))
        out.overlap[t] = close or bool(shared_now)

        for tid, c in taken.items():
            last[tid] = xy[c].copy()
            idle[tid] = 0
        for tid, c in shared_now.items():
            last[tid] = xy[c].copy()
            idle[tid] = idle.get(tid, 0) + 1
        for tid in live:
            if tid not in taken and tid not in shared_now:
                idle[tid] = idle.get(tid, 0) + 1
        for tid in list(last):
            if idle.get(tid, 0) > cfg.max_missing:
                del last[tid]
                idle.pop(tid, None)
    return out


def _runs(frames: list[int]) -> list[list[int]]:
    runs, cur = [], []
    for f in frames:
        if cur and f != cur[-1] + 1:
            runs.append(cur)
            cur = []
        cur.append(f)
    if cur:
        runs.append(cur)
    return runs


class AoHmmTracker:
    """Windowed adaptive-order decoding of per-target observation streams.

    Each step is decoded with first-order transitions unless the frame is
    flagged as overlapping, in which case second-order transitions and 2-hop
    active sets are used. Decoding of a window looks ahead ``lookahead``
    frames of the same target and commits only the window's own frames.
    """

    def __init__(self, state_space: StateSpace, model: HmmModel | None = None, config: TrackerConfig | None = None):
        self.ss = state_space
        self.model = model or HmmModel()
        self.config = config or TrackerConfig()

    def _chunks(self, run: list[int], change_points: set) -> list[list[int]]:
        W = self.config.window
        chunks, cur = [], []
        for f in run:
            if cur and (f % W == 0 or f in change_points):
                chunks.append(cur)
                cur = []
            cur.append(f)
        if cur:
            chunks.append(cur)
        return chunks

    def _decode_chunk(self, frames, obs, overlap, init_cell, shared=frozenset()):
        cells_obs = [self.ss.nearest_cell(obs[f]) for f in frames]
        if not self.config.decode:
            return np.array(cells_obs, dtype=np.int64), np.zeros(len(frames))
        sets = []
        for k, f in enumerate(frames):
            seed = {cells_obs[k]}
            if k > 0:
                seed.add(cells_obs[k - 1])
            elif init_cell is not None:
                seed.add(init_cell)
            sets.append(active_states(sorted(seed), self.ss, bool(overlap[f])))
        orders = [bool(overlap[f]) for f in frames]
        try:
            path = viterbi_adaptive(
                [obs[f] for f in frames],
                self.model,
                sets,
                self.ss,
                orders,
                init_cells=None if init_cell is None else [init_cell],
                sigma_scale=[self.model.shared_sigma_scale if f in shared else 1.0 for f in frames],
            )
        except DecodeError:
            # disconnected active sets; fall back to the raw cells
            return np.array(cells_obs, dtype=np.int64), np.zeros(len(frames))
        return path.cells, path.step_loglik

    def decode(self, obs_per_frame, assignment: Assignment | None = None) -> list[list[DecodedPath]]:
        """Decoded paths grouped by window index."""
        cfg = self.config
        asg = assignment or assign_targets(obs_per_frame, cfg)
        W = cfg.window
        L = W if cfg.lookahead is None else cfg.lookahead
        n_win = (asg.n_frames + W - 1) // W
        windows: list[list[DecodedPath]] = [[] for _ in range(n_win)]
        counts = [len(p) for p in asg.present]
        change = {t for t in range(1, len(counts)) if counts[t] != counts[t - 1]}
        for tid in sorted(asg.obs):
            obs = asg.obs[tid]
            for run in _runs(sorted(obs)):
                init_cell = None
                chunks = self._chunks(run, change)
                for ci, chunk in enumerate(chunks):
                    pos_end = run.index(chunk[-1]) + 1
                    ahead = run[pos_end : pos_end + L]
                    frames = chunk + ahead
                    cells, inc = self._decode_chunk(frames, obs, asg.overlap, init_cell, asg.shared.get(tid, set()))
                    n = len(chunk)
                    path = DecodedPath(
                        window=chunk[0] // W,
                        cells=cells[:n].copy(),
                        step_loglik=inc[:n].copy(),
                        frames=np.array(chunk, dtype=np.int64),
                        target=tid,
                        score=float(inc[:n].sum()),
                    )
                    windows[path.window].append(path)
                    init_cell = int(cells[n - 1])
        return windows

    def stitch(self, windows, assignment: Assignment, timestamps=None) -> TrackSet:
        """Join decoded windows into tracks.

        The reported position is the target's own observation; on frames
        where the observation is shared with another target (one blob for
        two people) and decoding is on, the decoded cell center is reported
        instead.
        """
        ts = TrackSet(timestamps=list(timestamps) if timestamps is not None else [])
        for win in windows:
            for path in win:
                obs = assignment.obs[path.target]
                shared = assignment.shared.get(path.target, set())
                for f, c in zip(path.frames, path.cells):
                    f = int(f)
                    ij = tuple(int(v) for v in self.ss.to_ij(c))
                    o = tuple(float(v) for v in obs[f])
                    if self.config.decode and f in shared:
                        pos = tuple(float(v) for v in self.ss.centers[c])
                    else:
                        pos = o
                    ts.add(path.target, f, TrackPoint(ij, pos, o))
        return ts


def aohmm_decode(window_observations, model: HmmModel, state_space: StateSpace, config: TrackerConfig | None = None) -> list[DecodedPath]:
    """Decode one window of per-frame observations into one path per target."""
    tracker = AoHmmTracker(state_space, model, config)
    windows = tracker.decode(window_observations)
    return [p for win in windows for p in win]
