from __future__ import annotations

import numpy as np


def extract_person_points(voxel_centers, track_positions: dict, radius: float) -> dict:
    """Assign each occupied voxel to the nearest track (2D) within ``radius``.

    ``voxel_centers`` is an (m, 3) array, ``track_positions`` maps person id to
    (x, y). Returns id -> sorted voxel indices; equidistant voxels go to the
    lower id.
    """
    centers = np.asarray(voxel_centers, dtype=float).reshape(-1, 3)
    ids = sorted(track_positions)
    out = {pid: np.zeros(0, dtype=np.int64) for pid in ids}
    if not ids or not len(centers):
        return out
    pos = np.array([np.asarray(track_positions[p], dtype=float)[:2] for p in ids])
    d = np.linalg.norm(centers[:, None, :2] - pos[None, :, :], axis=-1)
    nearest = np.argmin(d, axis=1)  # first minimum, i.e. lowest id on ties
    ok = d[np.arange(len(centers)), nearest] <= radius
    for k, pid in enumerate(ids):
        out[pid] = np.flatnonzero(ok & (nearest == k))
    return out


def split_merged_blob(points_xy, seeds, iters: int = 10) -> np.ndarray:
    """Split one blob holding several people into sub-centroids.

    Lloyd iterations in 2D started from ``seeds`` (one per person, e.g. the
    decoded cells of the targets sharing the blob). A seed that loses all
    its points keeps its position. Returns (k, 2) centroids in seed order.
    """
    pts = np.asarray(points_xy, dtype=float).reshape(-1, 2)
    cent = np.asarray(seeds, dtype=float).reshape(-1, 2).copy()
    if not len(pts):
        return cent
    for _ in range(iters):
        d = np.linalg.norm(pts[:, None, :] - cent[None, :, :], axis=-1)
        lab = np.argmin(d, axis=1)
        new = cent.copy()
        for k in range(len(cent)):
            m = lab == k
            if m.any():
                new[k] = pts[m].mean(axis=0)
        if np.allclose(new, cent, rtol=0, atol=1e-12):
            break
        cent = new
    return cent
