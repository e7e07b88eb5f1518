"""Synthetic multi-walker point-cloud scenes with ground truth.

Each walker is an ellipsoidal shell of points under a head centroid. Points
are drawn in antipodal pairs so the pre-noise centroid of an undisturbed body
is exactly its center; activity signatures move known subsets of points and
the logged body centroid accounts for that.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import Frame, GroundTruthFrame, PersonState

ACTIVITIES = ("walking", "normal_standing", "single_wave", "two_wave", "bending")

WAVE_AMPLITUDE = 0.25  # m
WAVE_HZ = 1.0
BEND_DEPTH = 0.4  # m
BEND_HZ = 0.5
STAND_JITTER = 0.01  # m
HEAD_BELOW_TOP = 0.1  # m


class ScenarioError(ValueError):
    pass


@dataclass
class WalkerConfig:
    """``schedule`` is a list of (activity, seconds); a walking segment with
    ``None`` seconds lasts until the end of the path. The walker advances
    along ``path`` only while walking; with ``pace`` it turns round at each
    end instead of stopping."""

    path: list
    speed: float = 1.0
    entry_delay: float = 0.0
    schedule: list = field(default_factory=lambda: [["walking", None]])
    pace: bool = False


@dataclass
class BackgroundObject:
    center: list
    size: list
    n_points: int = 200


@dataclass
class ScenarioConfig:
    bounds: list = field(default_factory=lambda: [[-4.0, 4.0], [1.0, 9.0]])
    walkers: list = field(default_factory=list)
    body_axes: list = field(default_factory=lambda: [0.4, 0.3, 1.7])
    points_per_person: int = 300
    noise_sigma: float = 0.02
    dropout: float = 0.05
    background: list = field(default_factory=list)
    frame_rate: float = 10.0
    duration: float | None = None
    crossover_threshold: float = 1.0
    crossover_events: int = 0  # how many crossovers the layout is built to produce
    sensor: str = "synthetic"
    seed: int = 0

    def __post_init__(self):
        self.walkers = [w if isinstance(w, WalkerConfig) else WalkerConfig(**w) for w in self.walkers]
        self.background = [b if isinstance(b, BackgroundObject) else BackgroundObject(**b) for b in self.background]
        if not 0.0 <= self.dropout <= 1.0:
            raise ScenarioError("dropout must lie in [0, 1]")
        if self.noise_sigma < 0:
            raise ScenarioError("noise_sigma must be >= 0")
        if self.frame_rate <= 0:
            raise ScenarioError("frame_rate must be positive")
        if self.points_per_person % 2:
            raise ScenarioError("points_per_person must be even (antipodal pairs)")
        for w in self.walkers:
            if w.speed < 0:
                raise ScenarioError("walker speed must be >= 0")
            for act, _ in w.schedule:
                if act not in ACTIVITIES:
                    raise ScenarioError(f"unknown activity {act!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        return cls(**d)

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, path) -> "ScenarioConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class CrossoverEvent:
    ids: tuple
    start_frame: int
    end_frame: int


@dataclass
class ScenarioOutput:
    frames: list
    ground_truth: list
    events: list
    owners: list  # per frame: walker id per point, -1 for background
    body_centroids: list  # per frame: {id: pre-noise body centroid}

    def events_json(self) -> list:
        return [
            {"ids": list(e.ids), "start_frame": e.start_frame, "end_frame": e.end_frame}
            for e in self.events
        ]


# -- kinematics ------------------------------------------------------------------


class _Mover:
    def __init__(self, w: WalkerConfig):
        self.w = w
        pts = np.asarray(w.path, dtype=float).reshape(-1, 2)
        self.pts = pts
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        self.cum = np.concatenate([[0.0], np.cumsum(seg)])
        self.length = float(self.cum[-1])
        segs = []
        t = 0.0
        for act, dur in w.schedule:
            if dur is None:
                if act != "walking" or w.pace:
                    raise ScenarioError("open-ended segments must be non-pacing walking")
                walked = sum(d for a, d in segs_walk(segs))
                remaining = max(self.length - walked * w.speed, 0.0)
                dur = remaining / w.speed if w.speed > 0 else 0.0
            segs.append((act, float(dur), t))
            t += float(dur)
        self.segments = segs
        self.total = t

    def state(self, t_local: float):
        """(xy, activity, seconds into the current segment)."""
        walked = 0.0
        act, into = self.segments[-1][0] if self.segments else "normal_standing", 0.0
        for a, dur, start in self.segments:
            if t_local < start:
                break
            span = min(t_local, start + dur) - start
            if a == "walking":
                walked += span
            act, into = a, t_local - start
        return self._at(walked * self.w.speed), act, into

    def _at(self, s: float) -> np.ndarray:
        if self.length == 0:
            return self.pts[0].copy()
        if self.w.pace:
            period = 2 * self.length
            s = s % period
            if s > self.length:
                s = period - s
        s = min(max(s, 0.0), self.length)
        k = int(np.searchsorted(self.cum, s, side="right") - 1)
        k = min(k, len(self.pts) - 2)
        frac = (s - self.cum[k]) / max(self.cum[k + 1] - self.cum[k], 1e-12)
        return self.pts[k] + frac * (self.pts[k + 1] - self.pts[k])


def segs_walk(segs):
    return [(a, d) for a, d, _ in segs if a == "walking"]


def _ellipsoid_pairs(rng, n_pairs: int, semi) -> np.ndarray:
    """Area-uniform points on an ellipsoid, returned as n_pairs antipodal pairs."""
    a, b, c = semi
    out = []
    gmax = max(b * c, a * c, a * b)
    while sum(len(o) for o in out) < n_pairs:
        u = rng.normal(size=(2 * n_pairs, 3))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        g = np.sqrt((b * c * u[:, 0]) ** 2 + (a * c * u[:, 1]) ** 2 + (a * b * u[:, 2]) ** 2)
        out.append(u[rng.random(len(u)) * gmax < g])
    u = np.concatenate(out)[:n_pairs] * np.array([a, b, c])
    return np.concatenate([u, -u])


def _body(rng, cfg: ScenarioConfig, xy, activity: str, into: float):
    """Pre-noise points, head centroid and body centroid for one walker."""
    w, d, h = cfg.body_axes
    semi = np.array([w / 2, d / 2, h / 2])
    rel = _ellipsoid_pairs(rng, cfg.points_per_person // 2, semi)
    center = np.array([xy[0], xy[1], h / 2])
    head_dz = h / 2 - HEAD_BELOW_TOP
    shift = np.zeros_like(rel)
    head_shift = np.zeros(3)

    if activity == "normal_standing":
        j = rng.normal(scale=STAND_JITTER, size=2)
        center[:2] += j
    elif activity in ("single_wave", "two_wave"):
        disp = WAVE_AMPLITUDE * math.sin(2 * math.pi * WAVE_HZ * into)
        upper = rel[:, 2] > 0.25 * h
        right = upper & (rel[:, 0] > 0)
        shift[right, 0] = disp
        if activity == "two_wave":
            left = upper & (rel[:, 0] < 0)
            shift[left, 0] = -disp
    elif activity == "bending":
        dip = BEND_DEPTH * 0.5 * (1 - math.cos(2 * math.pi * BEND_HZ * into))
        upper = rel[:, 2] > 0
        shift[upper, 2] = -dip * rel[upper, 2] / (h / 2)
        head_shift[2] = -dip * head_dz / (h / 2)

    pts = center + rel + shift
    body_centroid = center + shift.mean(axis=0)
    head = center + np.array([0.0, 0.0, head_dz]) + head_shift
    return pts, head, body_centroid


def _background_points(rng, cfg: ScenarioConfig) -> np.ndarray:
    chunks = []
    for obj in cfg.background:
        c = np.asarray(obj.center, dtype=float)
        s = np.asarray(obj.size, dtype=float)
        chunks.append(c + (rng.random((obj.n_points, 3)) - 0.5) * s)
    return np.concatenate(chunks) if chunks else np.zeros((0, 3))


def _check_paths(cfg: ScenarioConfig):
    (x0, x1), (y0, y1) = cfg.bounds
    for k, w in enumerate(cfg.walkers):
        p = np.asarray(w.path, dtype=float).reshape(-1, 2)
        if np.any(p[:, 0] < x0) or np.any(p[:, 0] > x1) or np.any(p[:, 1] < y0) or np.any(p[:, 1] > y1):
            raise ScenarioError(f"walker {k} path exits the scene bounds")


def generate(config: ScenarioConfig) -> ScenarioOutput:
    """Render a scenario; identical config (including seed) gives identical output."""
    _check_paths(config)
    rng = np.random.default_rng(config.seed)
    movers = [_Mover(w) for w in config.walkers]
    dt = 1.0 / config.frame_rate
    end = config.duration
    if end is None:
        end = max((w.entry_delay + m.total for w, m in zip(config.walkers, movers)), default=0.0) + 0.5
    n_frames = int(round(end * config.frame_rate))
    static = _background_points(rng, config)

    frames, truth, owners, bodies = [], [], [], []
    for f in range(n_frames):
        t = round(f * dt, 9)
        pts, own, persons, cents = [], [], [], {}
        for pid, (w, m) in enumerate(zip(config.walkers, movers)):
            tl = t - w.entry_delay
            if tl < 0 or tl >= m.total:
                continue
            xy, act, into = m.state(tl)
            body, head, cent = _body(rng, config, xy, act, into)
            keep = rng.random(len(body)) >= config.dropout
            pts.append(body[keep])
            own.append(np.full(int(keep.sum()), pid))
            persons.append(PersonState(pid, tuple(float(v) for v in head), act))
            cents[pid] = cent
        pts.append(static)
        own.append(np.full(len(static), -1))
        allp = np.concatenate(pts) if pts else np.zeros((0, 3))
        if config.noise_sigma > 0 and len(allp):
            allp = allp + rng.normal(scale=config.noise_sigma, size=allp.shape)
        frames.append(Frame(t, allp, config.sensor))
        owners.append(np.concatenate(own).astype(np.int64))
        truth.append(GroundTruthFrame(t, tuple(persons)))
        bodies.append(cents)

    return ScenarioOutput(frames, truth, crossover_intervals(truth, config.crossover_threshold), owners, bodies)


def crossover_intervals(truth, threshold: float) -> list[CrossoverEvent]:
    """Maximal frame runs where two ground-truth centroids are within ``threshold`` (2D)."""
    open_runs: dict = {}
    events = []
    for f, g in enumerate(truth):
        ps = sorted(g.persons, key=lambda p: p.id)
        close = set()
        for i in range(len(ps)):
            for j in range(i + 1, len(ps)):
                a, b = np.asarray(ps[i].centroid[:2]), np.asarray(ps[j].centroid[:2])
                if np.linalg.norm(a - b) < threshold:
                    close.add((ps[i].id, ps[j].id))
        for pair in close:
            open_runs.setdefault(pair, f)
        for pair in [p for p in open_runs if p not in close]:
            events.append(CrossoverEvent(pair, open_runs.pop(pair), f - 1))
    for pair, start in open_runs.items():
        events.append(CrossoverEvent(pair, start, len(truth) - 1))
    events.sort(key=lambda e: (e.start_frame, e.ids))
    return events


# -- presets ---------------------------------------------------------------------

_ROOM_FURNITURE = [
    {"center": [3.2, 8.5, 0.9], "size": [1.2, 0.3, 1.8], "n_points": 240},
    {"center": [-3.3, 2.0, 0.4], "size": [0.8, 0.8, 0.8], "n_points": 160},
]

LEAD_IN = 1.0  # s of empty room before the first entry


def x_crossing_scenario(n_crossings: int = 6, seed: int = 0, speed: float = 1.25, **overrides) -> ScenarioConfig:
    """Two walkers pacing the diagonals of a 4 m x 3 m rectangle in step,
    crossing once at its center on every traversal."""
    a = [[-2.0, 3.5], [2.0, 6.5]]
    b = [[-2.0, 6.5], [2.0, 3.5]]
    length = 5.0
    walk = n_crossings * length / speed
    kw = dict(
        walkers=[
            WalkerConfig(a, speed, LEAD_IN, [["walking", walk]], pace=True),
            WalkerConfig(b, speed, LEAD_IN, [["walking", walk]], pace=True),
        ],
        background=_ROOM_FURNITURE,
        crossover_events=n_crossings,
        seed=seed,
    )
    kw.update(overrides)
    return ScenarioConfig(**kw)


def bounce_scenario(seed: int = 0, gap: float = 0.9, speed: float = 1.0) -> ScenarioConfig:
    """Two walkers approach head-on, stop ``gap`` apart and walk back."""
    half = gap / 2
    a = [[-3.0, 5.0], [-half, 5.0], [-3.0, 5.0]]
    b = [[3.0, 5.0], [half, 5.0], [3.0, 5.0]]
    return ScenarioConfig(
        walkers=[WalkerConfig(a, speed, LEAD_IN), WalkerConfig(b, speed, LEAD_IN)],
        background=_ROOM_FURNITURE,
        seed=seed,
    )


def preset_scenarios(seed: int = 0) -> dict:
    """Named scenes: single, two, three, crossover, outdoor."""
    stagger = 2.0
    single = ScenarioConfig(
        walkers=[
            WalkerConfig(
                [[-2.5, 3.0], [2.5, 3.0], [2.5, 7.0], [-2.5, 7.0], [-2.5, 3.0]],
                1.0,
                LEAD_IN,
                [["walking", 6.0], ["normal_standing", 3.0], ["walking", 5.0], ["single_wave", 3.0], ["walking", 5.0]],
            )
        ],
        background=_ROOM_FURNITURE,
        seed=seed,
    )
    two = ScenarioConfig(
        walkers=[
            WalkerConfig([[-3.0, 2.5], [3.0, 2.5], [3.0, 4.0]], 1.0, LEAD_IN,
                         [["walking", 4.0], ["two_wave", 3.0], ["walking", None]]),
            WalkerConfig([[3.0, 7.5], [-3.0, 7.5], [-3.0, 6.0]], 1.0, LEAD_IN + stagger,
                         [["walking", 4.0], ["bending", 4.0], ["walking", None]]),
        ],
        background=_ROOM_FURNITURE,
        seed=seed,
    )
    three = ScenarioConfig(
        walkers=[
            WalkerConfig([[-3.0, 2.5], [3.0, 2.5]], 1.0, LEAD_IN,
                         [["walking", 3.0], ["normal_standing", 4.0], ["walking", None]]),
            WalkerConfig([[3.0, 5.0], [-3.0, 5.0]], 1.0, LEAD_IN + stagger,
                         [["walking", 3.0], ["single_wave", 3.0], ["walking", None]]),
            WalkerConfig([[-3.0, 7.5], [3.0, 7.5]], 1.0, LEAD_IN + 2 * stagger,
                         [["walking", 3.0], ["bending", 2.0], ["walking", None]]),
        ],
        background=_ROOM_FURNITURE,
        seed=seed,
    )
    crossover = x_crossing_scenario(20, seed)
    outdoor = ScenarioConfig(
        bounds=[[-8.0, 8.0], [1.0, 17.0]],
        walkers=[
            WalkerConfig([[-6.0, 4.0], [6.0, 12.0]], 1.3, LEAD_IN),
            WalkerConfig([[-6.0, 12.0], [6.0, 4.0]], 1.3, LEAD_IN),
        ],
        noise_sigma=0.05,
        dropout=0.15,
        background=[{"center": [0.0, 16.0, 1.5], "size": [10.0, 0.4, 3.0], "n_points": 600}],
        crossover_events=1,
        seed=seed,
    )
    return {"single": single, "two": two, "three": three, "crossover": crossover, "outdoor": outdoor}
