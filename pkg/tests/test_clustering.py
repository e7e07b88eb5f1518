import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from oracles import brute_dbscan

from pcdtrack.clustering import (
    CFEntry,
    CFTree,
    ClusterConfig,
    ClusterSet,
    WeightVector,
    birch_fit,
    dbscan,
    estimate_person_clusters,
    weighted_sq_distance,
)
from pcdtrack.core import GridSpec
from pcdtrack.pipeline import PipelineConfig, preprocess
from pcdtrack.simulator import ScenarioConfig, WalkerConfig, generate


def test_weighted_distance_examples():
    assert weighted_sq_distance((0, 0, 0), (1, 1, 1), (1, 1, 0.25)) == 2.25
    assert weighted_sq_distance((0, 0, 0), (3, 4, 0), (1, 1, 1)) == 25
    assert weighted_sq_distance((1, 2, 3), (1, 2, 3), (5, 0, 2)) == 0
    with pytest.raises(ValueError):
        WeightVector(1, 1, -0.1)


# "zero iff equal" needs squares that do not underflow
coord = st.floats(-10, 10).filter(lambda v: v == 0 or abs(v) > 1e-100)


@given(arrays(np.float64, 3, elements=coord), arrays(np.float64, 3, elements=coord))
def test_weighted_distance_symmetric(p, q):
    assert weighted_sq_distance(p, q) == weighted_sq_distance(q, p)
    assert (weighted_sq_distance(p, q) == 0) == bool(np.all(p == q))


def _partition_ok(cs: ClusterSet, n: int):
    seen = np.concatenate([*cs.clusters, cs.noise]) if n else np.zeros(0)
    assert len(seen) == n and len(set(seen.tolist())) == n


def test_two_blobs():
    rng = np.random.default_rng(0)
    a = rng.normal(scale=0.05, size=(20, 3))
    b = a + [5.0, 0, 0]
    cs = dbscan(np.vstack([a, b]), eps=0.5, min_pts=3)
    assert len(cs) == 2 and len(cs.noise) == 0
    _partition_ok(cs, 40)


def test_isolated_point_is_noise():
    cs = dbscan([[0, 0, 0]], eps=1.0, min_pts=2)
    assert len(cs) == 0 and cs.noise.tolist() == [0]


def test_centroids_are_member_means():
    rng = np.random.default_rng(1)
    pts = rng.uniform(0, 3, size=(80, 3))
    cs = dbscan(pts, 0.6, 3)
    for c, members in zip(cs.centroids, cs.clusters):
        assert np.allclose(c, pts[members].mean(axis=0))


def test_sixty_points_match_brute_force():
    rng = np.random.default_rng(2)
    pts = rng.uniform(0, 3, size=(60, 3))
    w = (1, 1, 0.25)
    assert np.array_equal(dbscan(pts, 0.5, 4, w).labels(), brute_dbscan(pts, 0.5, 4, w))


@given(st.integers(0, 2**32 - 1))
def test_unit_weights_equal_plain_euclidean(seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 2, size=(int(rng.integers(1, 50)), 3))
    eps = float(rng.uniform(0.1, 0.8))
    labels = dbscan(pts, eps, 3, (1, 1, 1)).labels()
    # plain Euclidean oracle
    assert np.array_equal(labels, brute_dbscan(pts, eps, 3, np.ones(3)))


def test_invalid_parameters():
    with pytest.raises(ValueError):
        dbscan([[0, 0, 0]], 0.0, 2)
    with pytest.raises(ValueError):
        dbscan([[0, 0, 0]], 1.0, 0)
    assert len(dbscan(np.zeros((0, 3)), 1.0, 1)) == 0


# -- CF tree -------------------------------------------------------------------------------


class CountingIterator:
    def __init__(self, data):
        self.data = data
        self.pulls = np.zeros(len(data), dtype=int)
        self.started = 0

    def __iter__(self):
        self.started += 1
        for k, p in enumerate(self.data):
            self.pulls[k] += 1
            yield p


@pytest.mark.parametrize("max_leaf", [None, 8])
def test_cf_tree_streaming_equals_batch(max_leaf):
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(500, 3)) * [2, 2, 0.5] + [10, -4, 1]
    tree = CFTree(threshold=0.3, branching=4, max_leaf_entries=max_leaf)
    for p in pts:
        tree.insert(p)
    n, ls, ss = tree.root_cf()
    assert n == len(pts)
    assert np.allclose(ls, pts.sum(axis=0), rtol=1e-9, atol=0)
    assert ss == pytest.approx(float(np.sum(pts * pts)), rel=1e-9)
    leaves = tree.leaf_entries()
    assert sum(e.n for e in leaves) == len(pts)
    assert np.allclose(sum(e.ls for e in leaves), pts.sum(axis=0), rtol=1e-9)
    for e in leaves:
        assert np.sqrt(max(e.ss / e.n - e.centroid @ e.centroid, 0)) <= tree.threshold + 1e-9
    if max_leaf:
        assert tree.n_rebuilds >= 1


def test_cf_additivity():
    rng = np.random.default_rng(4)
    a, b = rng.normal(size=(7, 3)), rng.normal(size=(5, 3))

    def cf(x):
        e = CFEntry.from_point(x[0])
        for p in x[1:]:
            e.absorb(CFEntry.from_point(p))
        return e

    ea, eb, eab = cf(a), cf(b), cf(np.vstack([a, b]))
    ea.absorb(eb)
    assert ea.n == eab.n
    assert np.allclose(ea.ls, eab.ls, rtol=1e-12)
    assert ea.ss == pytest.approx(eab.ss, rel=1e-12)


def test_birch_consumes_stream_once():
    rng = np.random.default_rng(5)
    pts = rng.normal(size=(300, 3))
    it = CountingIterator(list(pts))
    cs = birch_fit(it, T=0.3, B=5)
    assert it.started == 1 and np.all(it.pulls == 1)
    _partition_ok(cs, 300)


def test_birch_three_blobs_pure():
    rng = np.random.default_rng(6)
    centers = np.array([[0, 0, 0], [10, 0, 0], [0, 10, 0]], dtype=float)
    pts = np.vstack([c + rng.normal(scale=0.2, size=(50, 3)) for c in centers])
    cs = birch_fit(pts, T=0.3, B=6, k_hint=3, w=(1, 1, 1))
    assert len(cs) == 3
    truth = np.repeat(np.arange(3), 50)
    for members in cs.clusters:
        assert len(set(truth[members].tolist())) == 1


def test_birch_identical_points():
    cs = birch_fit(np.ones((40, 3)), T=0.1)
    assert len(cs) == 1 and cs.sizes == [40]


def _best_match_agreement(a: np.ndarray, b: np.ndarray) -> float:
    from scipy.optimize import linear_sum_assignment

    ka, kb = a.max() + 1, b.max() + 1
    m = np.zeros((ka + 1, kb + 1))
    for x, y in zip(a, b):
        m[x, y] += 1
    r, c = linear_sum_assignment(-m[:ka, :kb])
    return m[r, c].sum() / len(a)


def test_birch_agrees_with_dbscan_on_four_gaussians():
    rng = np.random.default_rng(7)
    centers = rng.uniform(0, 20, size=(4, 3))
    centers[:, 2] = 1.0
    pts = np.vstack([c + rng.normal(scale=0.3, size=(50, 3)) for c in centers])
    direct = dbscan(pts, 1.0, 4, (1, 1, 1)).labels()
    refined = birch_fit(pts, T=0.4, B=8, k_hint=4, w=(1, 1, 1), eps=1.0).labels()
    assert _best_match_agreement(direct, refined) >= 0.95


def test_cf_tree_parameter_validation():
    with pytest.raises(ValueError):
        CFTree(0.0)
    with pytest.raises(ValueError):
        CFTree(1.0, branching=1)


# -- person clusters on voxels ------------------------------------------------------------------

BOUNDS = [[-4.5, 4.5], [0.5, 9.5], [-0.5, 2.5]]


def test_empty_grid_no_clusters():
    from pcdtrack.core import Frame
    from pcdtrack.preprocess import voxelize

    g = GridSpec.from_bounds([0, 0, 0], [1, 1, 1], 0.1)
    assert len(estimate_person_clusters(voxelize(Frame(0, []), g))) == 0


def test_single_walker_one_cluster_near_head():
    cfg = ScenarioConfig(walkers=[WalkerConfig([[-2, 4], [2, 4]], 1.0)], seed=2)
    out = generate(cfg)
    _, vox = preprocess(out.frames, PipelineConfig(bounds=BOUNDS, background_frames=0))
    for v, g in list(zip(vox, out.ground_truth))[::5]:
        if not g.persons:
            continue
        cs = estimate_person_clusters(v)
        assert len(cs) == 1
        head = np.asarray(g.persons[0].centroid)
        assert np.linalg.norm(cs.centroids[0][:2] - head[:2]) < 0.5


def test_three_separated_walkers_three_clusters():
    walkers = [WalkerConfig([[-3, y], [3, y]], 1.0) for y in (2.5, 5.0, 7.5)]
    out = generate(ScenarioConfig(walkers=walkers, seed=4))
    _, vox = preprocess(out.frames, PipelineConfig(bounds=BOUNDS, background_frames=0))
    counts = [len(estimate_person_clusters(v)) for v, g in zip(vox, out.ground_truth) if len(g.persons) == 3]
    assert len(counts) > 40 and all(c == 3 for c in counts)


def test_cluster_config_validation():
    with pytest.raises(ValueError):
        ClusterConfig(alpha=0.0)
    with pytest.raises(ValueError):
        ClusterConfig(min_size=10, max_size=5)
