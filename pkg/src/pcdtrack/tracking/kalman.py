"""Constant-velocity Kalman tracker with one-to-one assignment per frame."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .statespace import StateSpace
from .tracks import TrackPoint, TrackSet


@dataclass
class KalmanConfig:
    dt: float = 0.1  # s; overridden by timestamps when they are given
    accel_sigma: float = 2.0  # m/s^2, white-noise acceleration
    meas_sigma: float = 0.05  # m
    init_vel_sigma: float = 1.5  # m/s
    gate: float = 1.0  # m, on predicted position
    max_age: int = 5  # frames without a measurement before deletion


class _Track:
    def __init__(self, tid: int, z, cfg: KalmanConfig):
        self.id = tid
        self.x = np.array([z[0], z[1], 0.0, 0.0])
        self.P = np.diag([cfg.meas_sigma**2] * 2 + [cfg.init_vel_sigma**2] * 2)
        self.age = 0


def _transition(dt: float, q: float):
    F = np.eye(4)
    F[0, 2] = F[1, 3] = dt
    g = np.array([[dt**4 / 4, dt**3 / 2], [dt**3 / 2, dt**2]]) * q**2
    Q = np.zeros((4, 4))
    Q[np.ix_([0, 2], [0, 2])] = g
    Q[np.ix_([1, 3], [1, 3])] = g
    return F, Q


_H = np.array([[1.0, 0, 0, 0], [0, 1.0, 0, 0]])


def kalman_track(obs_per_frame, config: KalmanConfig | None = None, state_space: StateSpace | None = None, timestamps=None) -> TrackSet:
    """Track 2D observations; a track is reported on frames where it was updated."""
    cfg = config or KalmanConfig()
    ts = TrackSet(timestamps=list(timestamps) if timestamps is not None else [])
    R = np.eye(2) * cfg.meas_sigma**2
    live: list[_Track] = []
    next_id = 0
    for t, frame_obs in enumerate(obs_per_frame):
        z = np.array([np.asarray(o[:2] if not hasattr(o, "xy") else o.xy, dtype=float) for o in frame_obs]).reshape(-1, 2)
        dt = cfg.dt
        if timestamps is not None and t > 0:
            dt = max(float(timestamps[t]) - float(timestamps[t - 1]), 1e-6)
        F, Q = _transition(dt, cfg.accel_sigma)
        for tr in live:
            tr.x = F @ tr.x
            tr.P = F @ tr.P @ F.T + Q

        matched = {}
        if live and len(z):
            pred = np.array([tr.x[:2] for tr in live])
            cost = np.linalg.norm(pred[:, None, :] - z[None, :, :], axis=-1)
            rows, cols = linear_sum_assignment(cost)
            for r, c in zip(rows, cols):
                if cost[r, c] <= cfg.gate:
                    matched[int(r)] = int(c)

        used = set(matched.values())
        for r, tr in enumerate(live):
            if r in matched:
                zc = z[matched[r]]
                S = _H @ tr.P @ _H.T + R
                K = tr.P @ _H.T @ np.linalg.inv(S)
                tr.x = tr.x + K @ (zc - _H @ tr.x)
                tr.P = (np.eye(4) - K @ _H) @ tr.P
                tr.age = 0
                _report(ts, tr, t, zc, state_space)
            else:
                tr.age += 1
        live = [tr for tr in live if tr.age <= cfg.max_age]
        for c in range(len(z)):
            if c not in used:
                tr = _Track(next_id, z[c], cfg)
                next_id += 1
                live.append(tr)
                _report(ts, tr, t, z[c], state_space)
    return ts


def _report(ts: TrackSet, tr: _Track, t: int, z, ss: StateSpace | None):
    pos = (float(tr.x[0]), float(tr.x[1]))
    cell = (-1, -1)
    if ss is not None:
        xy = np.clip(tr.x[:2], ss.grid.origin, ss.grid.upper - 1e-9)
        cell = tuple(int(v) for v in ss.to_ij(ss.nearest_cell(xy)))
    ts.add(tr.id, t, TrackPoint(cell, pos, (float(z[0]), float(z[1]))))
