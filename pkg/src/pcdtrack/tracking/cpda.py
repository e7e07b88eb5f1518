"""Crossover path disambiguation.

Tracks that come within ``crossover_radius`` of each other form an
interaction. For each interaction the identities leaving it are re-assigned
to the identities entering it by the permutation with the smallest motion
discontinuity: the change in velocity across the interaction plus the jump
implied at the closest-approach frame.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .tracks import TrackSet


@dataclass
class CpdaParams:
    crossover_radius: float = 1.0
    velocity_frames: int = 5
    window: int = 10
    n_windows: int = 3
    jump_weight: float = 1.0
    max_group: int = 4


@dataclass
class Interaction:
    tracks: tuple
    start: int
    end: int


def find_interactions(ts: TrackSet, radius: float) -> list[Interaction]:
    """Interaction graph components: tracks linked when within ``radius``
    at the same frame, merged while their close intervals overlap."""
    n = ts.n_frames()
    runs = {}  # (a, b) -> list of [start, end]
    for f in range(n):
        here = ts.at(f)
        ids = list(here)
        for i, j in itertools.combinations(ids, 2):
            pi = ts.kinematic_position(i, f)
            pj = ts.kinematic_position(j, f)
            if np.linalg.norm(pi - pj) < radius:
                lst = runs.setdefault((i, j), [])
                if lst and lst[-1][1] == f - 1:
                    lst[-1][1] = f
                else:
                    lst.append([f, f])
    pieces = [(set(pair), s, e) for pair, lst in runs.items() for s, e in lst]
    pieces.sort(key=lambda p: (p[1], p[2]))
    merged: list[list] = []
    for ids, s, e in pieces:
        for m in merged:
            if m[0] & ids and s <= m[2] and e >= m[1]:
                m[0] |= ids
                m[1] = min(m[1], s)
                m[2] = max(m[2], e)
                break
        else:
            merged.append([set(ids), s, e])
    out = [Interaction(tuple(sorted(ids)), s, e) for ids, s, e in merged]
    out.sort(key=lambda it: (it.end, it.start, it.tracks))
    return out


def _velocity(ts: TrackSet, pid: int, frames) -> np.ndarray | None:
    pts = [(f, ts.kinematic_position(pid, f)) for f in frames]
    pts = [(f, p) for f, p in pts if p is not None]
    if len(pts) < 2:
        return None
    (f0, p0), (f1, p1) = pts[0], pts[-1]
    return (p1 - p0) / (f1 - f0)


def _split_frame(ts: TrackSet, ids, start: int, end: int) -> int:
    best, cands = np.inf, []
    for f in range(start, end + 1):
        pos = [ts.kinematic_position(i, f) for i in ids]
        if any(p is None for p in pos):
            continue
        spread = sum(np.linalg.norm(a - b) for a, b in itertools.combinations(pos, 2))
        if spread < best - 1e-12:
            best, cands = spread, [f]
        elif abs(spread - best) <= 1e-12:
            cands.append(f)
    return cands[len(cands) // 2] if cands else (start + end) // 2


def permutation_cost(ts: TrackSet, ids, perm, inter: Interaction, params: CpdaParams) -> float | None:
    """Motion-discontinuity cost of continuing track ``ids[k]`` with the
    tail currently labelled ``ids[perm[k]]``; None if kinematics are missing."""
    k = params.velocity_frames
    a, b = inter.start, inter.end
    t_split = _split_frame(ts, ids, a, b)
    cost = 0.0
    for src, dst_idx in zip(ids, perm):
        dst = ids[dst_idx]
        v_in = _velocity(ts, src, range(a - 1 - k, a))
        v_out = _velocity(ts, dst, range(b + 1, b + 2 + k))
        p_here = ts.kinematic_position(src, t_split)
        p_next = ts.kinematic_position(dst, t_split + 1)
        if v_in is None or v_out is None or p_here is None or p_next is None:
            return None
        jump = p_next - p_here - v_in
        cost += float(np.sum((v_out - v_in) ** 2)) + params.jump_weight * float(np.sum(jump**2))
    return cost


def _relabel(ts: TrackSet, ids, perm, after: int) -> TrackSet:
    out = ts.copy()
    tails = {i: {f: p for f, p in ts.tracks[i].items() if f > after} for i in ids}
    for src, dst_idx in zip(ids, perm):
        pts = {f: p for f, p in ts.tracks[src].items() if f <= after}
        pts.update(tails[ids[dst_idx]])
        out.tracks[src] = pts
    return out


def cpda(decoded, params: CpdaParams | None = None, **stitch_kw) -> TrackSet:
    """Resolve identities across crossovers; track geometry is unchanged.

    ``decoded`` is a TrackSet, or decoded windows plus ``tracker`` and
    ``assignment`` keywords to stitch them first. Only interactions whose
    kinematic support fits inside ``n_windows`` windows are considered.
    """
    params = params or CpdaParams()
    if isinstance(decoded, TrackSet):
        ts = decoded.copy()
    else:
        ts = stitch_kw["tracker"].stitch(decoded, stitch_kw["assignment"], stitch_kw.get("timestamps"))
    horizon = params.window * params.n_windows
    k = params.velocity_frames
    for inter in find_interactions(ts, params.crossover_radius):
        ids = list(inter.tracks)
        if len(ids) > params.max_group:
            continue
        if (inter.end + 1 + k) - (inter.start - 1 - k) + 1 > horizon:
            continue
        best, best_cost = None, np.inf
        for perm in itertools.permutations(range(len(ids))):
            c = permutation_cost(ts, ids, perm, inter, params)
            if c is None:
                best = None
                break
            if c < best_cost - 1e-12:
                best, best_cost = perm, c
        if best is None or list(best) == list(range(len(ids))):
            continue
        t_split = _split_frame(ts, ids, inter.start, inter.end)
        ts = _relabel(ts, ids, best, t_split)
    return ts
