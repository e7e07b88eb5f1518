"""Z-weighted DBSCAN, a BIRCH CF-tree, and the per-frame person clustering step."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy.spatial import cKDTree

DEFAULT_ALPHA = 0.25


@dataclass(frozen=True)
class WeightVector:
    wx: float = 1.0
    wy: float = 1.0
    wz: float = DEFAULT_ALPHA

    def __post_init__(self):
        if min(self.wx, self.wy, self.wz) < 0:
            raise ValueError("distance weights must be non-negative")

    def as_array(self) -> np.ndarray:
        return np.array([self.wx, self.wy, self.wz], dtype=float)


DEFAULT_WEIGHTS = WeightVector()


def _weights(w) -> np.ndarray:
    if w is None:
        return DEFAULT_WEIGHTS.as_array()
    if isinstance(w, WeightVector):
        return w.as_array()
    arr = np.asarray(w, dtype=float)
    if np.any(arr < 0):
        raise ValueError("distance weights must be non-negative")
    return arr


def weighted_sq_distance(p, q, w=DEFAULT_WEIGHTS) -> float:
    """wx*dx^2 + wy*dy^2 + wz*dz^2."""
    d = np.asarray(p, dtype=float) - np.asarray(q, dtype=float)
    return float(np.dot(_weights(w), d * d))


@dataclass
class ClusterSet:
    """Partition of point indices into clusters plus a noise set."""

    clusters: list = field(default_factory=list)
    noise: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    centroids: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    n_points: int = 0

    def __len__(self):
        return len(self.clusters)

    @property
    def sizes(self) -> list[int]:
        return [len(c) for c in self.clusters]

    def labels(self) -> np.ndarray:
        out = np.full(self.n_points, -1, dtype=np.int64)
        for k, members in enumerate(self.clusters):
            out[members] = k
        return out

    @classmethod
    def from_labels(cls, labels, points) -> "ClusterSet":
        labels = np.asarray(labels, dtype=np.int64)
        points = np.asarray(points, dtype=float).reshape(len(labels), -1)
        k = int(labels.max()) + 1 if len(labels) and labels.max() >= 0 else 0
        clusters = [np.flatnonzero(labels == c) for c in range(k)]
        clusters = [c for c in clusters if len(c)]
        centroids = (
            np.array([points[c].mean(axis=0) for c in clusters])
            if clusters
            else np.zeros((0, points.shape[1] if points.ndim == 2 else 3))
        )
        return cls(clusters, np.flatnonzero(labels < 0), centroids, len(labels))

    def subset(self, keep: list[int]) -> "ClusterSet":
        """Keep the listed clusters; the rest are moved to noise."""
        kept = [self.clusters[i] for i in keep]
        dropped = [self.clusters[i] for i in range(len(self.clusters)) if i not in set(keep)]
        noise = np.sort(np.concatenate([self.noise, *dropped])) if dropped else self.noise
        cents = self.centroids[keep] if keep else np.zeros((0, self.centroids.shape[1]))
        return ClusterSet(kept, noise.astype(np.int64), cents, self.n_points)


def _neighborhoods(points: np.ndarray, eps: float, w: np.ndarray) -> list[np.ndarray]:
    scaled = points * np.sqrt(w)
    tree = cKDTree(scaled)
    # Slightly generous radius, then the exact weighted test decides.
    cand = tree.query_ball_point(scaled, r=eps * (1 + 1e-9) + 1e-12)
    eps2 = eps * eps
    out = []
    for i, nb in enumerate(cand):
        nb = np.asarray(sorted(nb), dtype=np.int64)
        d = points[nb] - points[i]
        out.append(nb[(d * d) @ w <= eps2])
    return out


def dbscan(points, eps: float, min_pts: int, w=DEFAULT_WEIGHTS) -> ClusterSet:
    """DBSCAN with weighted_sq_distance(p, q) <= eps**2 neighbourhoods.

    A neighbourhood includes the point itself, so ``min_pts=1`` makes every
    point a core point. Clusters are numbered in order of their lowest-index
    core point; a border point reachable from several clusters joins the one
    discovered first.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    n = len(pts)
    if n == 0:
        return ClusterSet(n_points=0)
    wv = _weights(w)
    nbrs = _neighborhoods(pts, eps, wv)
    core = np.array([len(nb) >= min_pts for nb in nbrs])
    labels = np.full(n, -1, dtype=np.int64)
    cid = 0
    for i in range(n):
        if labels[i] != -1 or not core[i]:
            continue
        labels[i] = cid
        queue = [i]
        head = 0
        while head < len(queue):
            j = queue[head]
            head += 1
            for k in nbrs[j]:
                if labels[k] == -1:
                    labels[k] = cid
                    if core[k]:
                        queue.append(k)
        cid += 1
    return ClusterSet.from_labels(labels, pts)


# -- BIRCH ---------------------------------------------------------------------


class CFEntry:
    """Cluster feature (N, LS, SS) with an optional child node."""

    __slots__ = ("n", "ls", "ss", "child", "raw_ls", "merged_into")

    def __init__(self, n, ls, ss, raw_ls=None, child=None):
        self.n = n
        self.ls = np.array(ls, dtype=float)
        self.ss = float(ss)
        self.raw_ls = np.array(raw_ls if raw_ls is not None else ls, dtype=float)
        self.child = child
        self.merged_into = None

    @classmethod
    def from_point(cls, x, raw=None) -> "CFEntry":
        x = np.asarray(x, dtype=float)
        return cls(1, x, float(x @ x), raw)

    @property
    def centroid(self) -> np.ndarray:
        return self.ls / self.n

    def radius_with(self, other: "CFEntry") -> float:
        n = self.n + other.n
        ls = self.ls + other.ls
        ss = self.ss + other.ss
        c = ls / n
        return float(np.sqrt(max(ss / n - c @ c, 0.0)))

    def absorb(self, other: "CFEntry") -> None:
        self.n += other.n
        self.ls = self.ls + other.ls
        self.ss += other.ss
        self.raw_ls = self.raw_ls + other.raw_ls


class _Node:
    __slots__ = ("leaf", "entries")

    def __init__(self, leaf: bool, entries=None):
        self.leaf = leaf
        self.entries = entries or []

    def summary(self) -> CFEntry:
        e0 = self.entries[0]
        out = CFEntry(0, np.zeros_like(e0.ls), 0.0, np.zeros_like(e0.raw_ls), child=self)
        for e in self.entries:
            out.absorb(e)
        return out


class CFTree:
    """Height-balanced CF tree; leaf entries have radius <= ``threshold``.

    Inserting a CF entry (rather than a point) is what condensation uses.
    """

    def __init__(self, threshold: float, branching: int = 8, max_leaf_entries: int | None = None):
        if threshold <= 0:
            raise ValueError("threshold must be positive")
        if branching < 2:
            raise ValueError("branching factor must be >= 2")
        self.threshold = float(threshold)
        self.branching = int(branching)
        self.max_leaf_entries = max_leaf_entries
        self.root = _Node(leaf=True)
        self.n_leaf_entries = 0
        self.n_rebuilds = 0

    def insert(self, x, raw=None) -> CFEntry:
        """Insert one point; returns the leaf entry that now holds it."""
        return self.insert_entry(CFEntry.from_point(x, raw))

    def insert_entry(self, entry: CFEntry) -> CFEntry:
        target, split = self._insert(self.root, entry)
        if split is not None:
            a, b = split
            self.root = _Node(leaf=False, entries=[a.summary(), b.summary()])
        if self.max_leaf_entries and self.n_leaf_entries > self.max_leaf_entries:
            self._rebuild()
            target = _resolve(target)
        return target

    def _closest(self, node: _Node, entry: CFEntry) -> int:
        ls = np.array([e.ls for e in node.entries])
        n = np.array([e.n for e in node.entries], dtype=float)
        d = np.sum((ls / n[:, None] - entry.centroid) ** 2, axis=1)
        return int(np.argmin(d))

    def _insert(self, node: _Node, entry: CFEntry):
        if node.leaf:
            target = None
            if node.entries:
                k = self._closest(node, entry)
                if node.entries[k].radius_with(entry) <= self.threshold:
                    node.entries[k].absorb(entry)
                    target = node.entries[k]
            if target is None:
                node.entries.append(entry)
                self.n_leaf_entries += 1
                target = entry
        else:
            k = self._closest(node, entry)
            route = node.entries[k]
            target, split = self._insert(route.child, entry)
            if split is None:
                route.absorb(entry)
            else:
                a, b = split
                node.entries[k : k + 1] = [a.summary(), b.summary()]
        if len(node.entries) > self.branching:
            return target, _split(node)
        return target, None

    def _rebuild(self) -> None:
        old = self.leaf_entries()
        self.threshold *= 2.0
        self.root = _Node(leaf=True)
        self.n_leaf_entries = 0
        self.n_rebuilds += 1
        limit, self.max_leaf_entries = self.max_leaf_entries, None
        for e in old:
            fresh = CFEntry(e.n, e.ls, e.ss, e.raw_ls)
            dest = self.insert_entry(fresh)
            e.merged_into = dest
        self.max_leaf_entries = limit

    def leaf_entries(self) -> list[CFEntry]:
        out = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node.leaf:
                out.extend(node.entries)
            else:
                stack.extend(e.child for e in reversed(node.entries))
        return out

    def root_cf(self) -> tuple[int, np.ndarray, float]:
        entries = self.root.entries
        if not entries:
            return 0, np.zeros(0), 0.0
        s = self.root.summary()
        return s.n, s.ls, s.ss

    def height(self) -> int:
        h, node = 1, self.root
        while not node.leaf:
            node = node.entries[0].child
            h += 1
        return h


def _resolve(entry: CFEntry) -> CFEntry:
    while entry.merged_into is not None:
        entry = entry.merged_into
    return entry


def _split(node: _Node):
    cents = np.array([e.centroid for e in node.entries])
    d = np.sum((cents[:, None, :] - cents[None, :, :]) ** 2, axis=-1)
    i, j = np.unravel_index(int(np.argmax(d)), d.shape)
    if i == j:
        j = (i + 1) % len(node.entries)
    a, b = _Node(node.leaf), _Node(node.leaf)
    for k, e in enumerate(node.entries):
        (a if d[k, i] <= d[k, j] and k != j else b).entries.append(e)
    return a, b


def birch_fit(
    points: Iterable,
    T: float,
    B: int = 8,
    k_hint: int | None = None,
    w=DEFAULT_WEIGHTS,
    eps: float | None = None,
    max_leaf_entries: int | None = 4096,
) -> ClusterSet:
    """Two-phase BIRCH: one pass building a CF tree, then DBSCAN over the
    leaf-entry centroids (every entry is a core point there).

    ``points`` may be any iterable and is consumed exactly once. With
    ``k_hint`` the leaf-merging radius grows in steps of 1.25x (at most four)
    while more than ``k_hint`` clusters remain.
    """
    wv = _weights(w)
    scale = np.sqrt(wv)
    tree = CFTree(T, B, max_leaf_entries)
    owners = []
    for p in points:
        p = np.asarray(p, dtype=float)
        owners.append(tree.insert(p * scale, raw=p))
    n = len(owners)
    if n == 0:
        return ClusterSet(n_points=0)
    owners = [_resolve(e) for e in owners]
    leaves = tree.leaf_entries()
    index = {id(e): k for k, e in enumerate(leaves)}
    cents = np.array([e.centroid for e in leaves])

    radius = eps if eps is not None else 2.0 * tree.threshold
    for _ in range(5):
        # Centroids live in the scaled space, so plain Euclidean here.
        cs = dbscan(cents, radius, 1, w=(1.0, 1.0, 1.0))
        if k_hint is None or len(cs) <= k_hint:
            break
        radius *= 1.25

    entry_label = cs.labels()
    labels = np.array([entry_label[index[id(e)]] for e in owners], dtype=np.int64)
    clusters = [np.flatnonzero(labels == k) for k in range(len(cs))]
    centroids = []
    for members in cs.clusters:
        n_tot = sum(leaves[m].n for m in members)
        raw = sum(leaves[m].raw_ls for m in members)
        centroids.append(raw / n_tot)
    return ClusterSet(clusters, np.zeros(0, dtype=np.int64), np.array(centroids).reshape(-1, 3), n)


# -- per-frame person clustering --------------------------------------------------


@dataclass
class ClusterConfig:
    eps_cells: float = 2.5
    min_pts: int = 5
    alpha: float = DEFAULT_ALPHA
    birch_threshold_cells: float = 1.0
    birch_branching: int = 8
    min_size: int = 30
    max_size: int = 5000
    use_birch: bool = True

    def __post_init__(self):
        if self.eps_cells <= 0 or self.min_pts < 1:
            raise ValueError("eps_cells must be > 0 and min_pts >= 1")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.min_size > self.max_size:
            raise ValueError("min_size exceeds max_size")

    @property
    def weights(self) -> WeightVector:
        return WeightVector(1.0, 1.0, self.alpha)


def estimate_person_clusters(voxel_grid, config: ClusterConfig | None = None) -> ClusterSet:
    """Person clusters over the occupied cells of ``voxel_grid``.

    Indices in the returned set refer to ``voxel_grid.occupied_centers()``.
    """
    config = config or ClusterConfig()
    centers = voxel_grid.occupied_centers()
    if len(centers) == 0:
        return ClusterSet(n_points=0)
    cell = min(voxel_grid.grid.cell_size)
    eps = config.eps_cells * cell
    cs = dbscan(centers, eps, config.min_pts, config.weights)
    if config.use_birch and len(cs) > 2:
        members = np.sort(np.concatenate(cs.clusters))
        refined = birch_fit(
            centers[members],
            T=config.birch_threshold_cells * cell,
            B=config.birch_branching,
            k_hint=len(cs),
            w=config.weights,
            eps=eps,
        )
        labels = np.full(len(centers), -1, dtype=np.int64)
        labels[members] = refined.labels()
        cs = ClusterSet.from_labels(labels, centers)
    keep = [k for k, s in enumerate(cs.sizes) if config.min_size <= s <= config.max_size]
    return cs.subset(keep)
