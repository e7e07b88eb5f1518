"""Frames to tracks: background removal, voxels, person clusters, tracking.

Ablations drop one stage at a time:

    full       clusters (DBSCAN + BIRCH) -> AO-HMM -> CPDA
    no-birch   DBSCAN only
    no-aohmm   raw assigned observations instead of decoded paths
    no-cpda    no crossover repair
    tracker1   constant-velocity Kalman filter with per-frame assignment
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .clustering import ClusterConfig, ClusterSet, estimate_person_clusters
from .core import GridSpec
from .preprocess import (
    DEFAULT_BACKGROUND_THRESHOLD,
    DEFAULT_MAX_DISTANCE,
    DEFAULT_MIN_DISTANCE,
    VoxelGrid,
    build_background,
    subtract_background,
    voxelize,
)
from .tracking import (
    AoHmmTracker,
    CpdaParams,
    HmmModel,
    StateSpace,
    TrackerConfig,
    TrackSet,
    assign_targets,
    cpda,
    project_to_2d,
)
from .tracking.extract import split_merged_blob
from .tracking.kalman import KalmanConfig, kalman_track

ABLATIONS = ("tracker1", "no-birch", "no-aohmm", "no-cpda", "full")


@dataclass
class PipelineConfig:
    cell_size: float = 0.10
    mapping_mode: str = "average"
    bounds: list | None = None  # [[x0, x1], [y0, y1], [z0, z1]]; None: from the data
    margin: float = 0.5
    background_frames: int = 10
    background_dilate: int = 1
    background_threshold: float = DEFAULT_BACKGROUND_THRESHOLD
    min_distance: float = DEFAULT_MIN_DISTANCE
    max_distance: float = DEFAULT_MAX_DISTANCE
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    hmm: HmmModel = field(default_factory=HmmModel)
    cpda: CpdaParams = field(default_factory=CpdaParams)
    kalman: KalmanConfig = field(default_factory=KalmanConfig)

    def __post_init__(self):
        for name, cls in (("cluster", ClusterConfig), ("tracker", TrackerConfig), ("hmm", HmmModel),
                          ("cpda", CpdaParams), ("kalman", KalmanConfig)):
            v = getattr(self, name)
            if isinstance(v, dict):
                setattr(self, name, cls(**v))
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        if self.background_frames < 0:
            raise ValueError("background_frames must be >= 0")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown pipeline config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class Detections:
    grid: GridSpec
    voxels: list  # VoxelGrid per frame
    clusters: list  # ClusterSet per frame
    observations: list  # [Observation2D] per frame
    timestamps: list


@dataclass
class PipelineResult:
    config_name: str
    detections: Detections
    tracks: TrackSet
    state_space: StateSpace


def scene_grid(frames, config: PipelineConfig) -> GridSpec:
    if config.bounds is not None:
        b = np.asarray(config.bounds, dtype=float)
        return GridSpec.from_bounds(b[:, 0], b[:, 1], config.cell_size)
    pts = [f.points for f in frames if len(f)]
    if not pts:
        return GridSpec.from_bounds([0, 0, 0], [config.cell_size] * 3, config.cell_size)
    allp = np.concatenate(pts)
    lo = allp.min(axis=0) - config.margin
    hi = allp.max(axis=0) + config.margin
    # snap to the cell lattice so identical scenes give identical grids
    lo = np.floor(lo / config.cell_size) * config.cell_size
    hi = np.ceil(hi / config.cell_size) * config.cell_size
    return GridSpec.from_bounds(lo, hi, config.cell_size)


def preprocess(frames, config: PipelineConfig) -> tuple[GridSpec, list[VoxelGrid]]:
    """Background model from the first ``background_frames`` frames (which
    must be free of people), then subtraction and voxelization of every frame."""
    grid = scene_grid(frames, config)
    n_bg = min(config.background_frames, len(frames))
    model = build_background(frames[:n_bg], grid, config.background_dilate) if n_bg else None
    out = []
    for f in frames:
        clean = subtract_background(
            f, model, grid, config.background_threshold, config.min_distance, config.max_distance
        )
        out.append(voxelize(clean, grid, config.mapping_mode))
    return grid, out


def detect(frames, config: PipelineConfig, use_birch: bool | None = None) -> Detections:
    grid, voxels = preprocess(frames, config)
    ccfg = config.cluster
    if use_birch is not None and use_birch != ccfg.use_birch:
        ccfg = dataclasses.replace(ccfg, use_birch=use_birch)
    clusters: list[ClusterSet] = [estimate_person_clusters(v, ccfg) for v in voxels]
    obs = [project_to_2d(c) for c in clusters]
    return Detections(grid, voxels, clusters, obs, [f.timestamp for f in frames])


def state_space_for(grid: GridSpec, config: PipelineConfig) -> StateSpace:
    g2 = grid.drop_axis(2)
    return StateSpace.from_bounds(g2.origin, g2.upper, config.tracker.state_cell)


def track(detections: Detections, config: PipelineConfig, ablation: str = "full") -> TrackSet:
    if ablation not in ABLATIONS:
        raise ValueError(f"unknown ablation {ablation!r}; expected one of {ABLATIONS}")
    ss = state_space_for(detections.grid, config)
    obs = detections.observations
    if ablation == "tracker1":
        return kalman_track(obs, config.kalman, ss, detections.timestamps)
    tcfg = config.tracker
    if ablation == "no-aohmm":
        tcfg = dataclasses.replace(tcfg, decode=False)
    tracker = AoHmmTracker(ss, config.hmm, tcfg)
    asg = assign_targets(obs, tcfg)
    windows = tracker.decode(obs, asg)
    ts = tracker.stitch(windows, asg, detections.timestamps)
    if tcfg.decode:
        ts = refine_shared_positions(ts, asg, detections)
    if ablation == "no-cpda":
        return ts
    params = dataclasses.replace(config.cpda, window=tcfg.window, n_windows=tcfg.n_windows)
    return cpda(ts, params)


def refine_shared_positions(ts: TrackSet, assignment, detections: Detections) -> TrackSet:
    """On frames where several targets share one blob, split the blob's
    occupied cells among them, seeded by their decoded cells, and report
    the resulting sub-centroids."""
    out = ts.copy()
    by_frame: dict = {}
    for tid, frames in assignment.shared.items():
        for f in frames:
            by_frame.setdefault(f, []).append(tid)
    for f in sorted(by_frame):
        obs = detections.observations[f]
        if not obs:
            continue
        groups: dict = {}
        for tid in sorted(by_frame[f]):
            p = out.tracks.get(tid, {}).get(f)
            if p is None or p.centroid is None:
                continue
            xy = np.asarray(p.centroid)
            k = int(np.argmin([np.hypot(o.x - xy[0], o.y - xy[1]) for o in obs]))
            groups.setdefault(k, []).append(tid)
        centers = detections.voxels[f].occupied_centers()
        members = detections.clusters[f].clusters
        for k, tids in groups.items():
            if len(tids) < 2:
                continue
            blob = centers[members[obs[k].cluster], :2]
            seeds = [out.tracks[t][f].pos for t in tids]
            for t, c in zip(tids, split_merged_blob(blob, seeds)):
                out.tracks[t][f] = out.tracks[t][f]._replace(pos=(float(c[0]), float(c[1])))
    return out


def run_pipeline(frames, config: PipelineConfig | None = None, ablation: str = "full",
                 detections: Detections | None = None) -> PipelineResult:
    """Run one configuration. ``detections`` may be passed in to reuse the
    (expensive) clustering across configurations that share it."""
    config = config or PipelineConfig()
    if detections is None:
        detections = detect(frames, config, use_birch=ablation != "no-birch" and config.cluster.use_birch)
    ts = track(detections, config, ablation)
    return PipelineResult(ablation, detections, ts, state_space_for(detections.grid, config))
