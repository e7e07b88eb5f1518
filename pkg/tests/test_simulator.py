import numpy as np
import pytest

from pcdtrack.simulator import (
    ACTIVITIES,
    HEAD_BELOW_TOP,
    BackgroundObject,
    ScenarioConfig,
    ScenarioError,
    WalkerConfig,
    crossover_intervals,
    generate,
    preset_scenarios,
    x_crossing_scenario,
)


def _two_crossing(**kw):
    return ScenarioConfig(
        walkers=[WalkerConfig([[-3, 5], [3, 5]], 1.0), WalkerConfig([[0, 2], [0, 8]], 1.0)], **kw
    )


def test_same_seed_same_output():
    a, b = generate(_two_crossing(seed=5)), generate(_two_crossing(seed=5))
    assert a.frames == b.frames and a.ground_truth == b.ground_truth
    assert a.events_json() == b.events_json()
    c = generate(_two_crossing(seed=6))
    assert c.frames != a.frames


@pytest.mark.parametrize("activity", ACTIVITIES)
def test_noise_free_centroid_is_exact(activity):
    sched = [[activity, 2.0]] if activity != "walking" else [["walking", None]]
    cfg = ScenarioConfig(walkers=[WalkerConfig([[-1, 4], [1, 4]], 1.0, 0.0, sched)],
                         noise_sigma=0.0, dropout=0.0, seed=1)
    out = generate(cfg)
    assert len(out.frames) > 10
    h = cfg.body_axes[2]
    for f, g, own, cents in zip(out.frames, out.ground_truth, out.owners, out.body_centroids):
        if not g.persons:
            continue
        mean = f.points[own == 0].mean(axis=0)
        assert np.allclose(mean, cents[0], rtol=0, atol=1e-9)
        head = np.asarray(g.persons[0].centroid)
        if activity == "walking":
            expect = np.r_[cents[0][:2], h - HEAD_BELOW_TOP]
            assert np.allclose(head, expect, atol=1e-12)
        assert g.persons[0].activity == activity


def test_walking_speed_matches_config():
    out = generate(ScenarioConfig(walkers=[WalkerConfig([[-3, 4], [3, 4]], 1.5)], noise_sigma=0, seed=0))
    xs = [g.persons[0].centroid[0] for g in out.ground_truth if g.persons]
    steps = np.diff(xs)
    assert np.allclose(steps, 1.5 / 10.0, atol=1e-9)


def test_perpendicular_crossing_single_event():
    out = generate(_two_crossing(seed=0))
    assert len(out.events) == 1
    ev = out.events[0]
    assert ev.ids == (0, 1)
    # every event frame has the pair within the threshold, its neighbours do not
    def dist(f):
        p = {q.id: np.asarray(q.centroid[:2]) for q in out.ground_truth[f].persons}
        return np.linalg.norm(p[0] - p[1])

    assert all(dist(f) < 1.0 for f in range(ev.start_frame, ev.end_frame + 1))
    assert dist(ev.start_frame - 1) >= 1.0 and dist(ev.end_frame + 1) >= 1.0


def test_events_are_sound_on_crossover_preset():
    out = generate(preset_scenarios(0)["crossover"])
    assert len(out.events) == 20
    assert crossover_intervals(out.ground_truth, 1.0) == out.events
    for a, b in zip(out.events, out.events[1:]):
        assert a.end_frame < b.start_frame


def test_full_dropout_leaves_background_only():
    cfg = ScenarioConfig(walkers=[WalkerConfig([[-1, 4], [1, 4]], 1.0)], dropout=1.0,
                         background=[BackgroundObject([0, 8, 1], [2, 0.3, 2], 50)], seed=0)
    out = generate(cfg)
    for f, own in zip(out.frames, out.owners):
        assert len(f) == 50 and np.all(own == -1)
    assert any(g.persons for g in out.ground_truth)


def test_presets():
    p = preset_scenarios(0)
    assert set(p) == {"single", "two", "three", "crossover", "outdoor"}
    assert len(p["single"].walkers) == 1
    assert len(p["three"].walkers) == 3
    delays = [w.entry_delay for w in p["three"].walkers]
    assert np.allclose(np.diff(delays), 2.0)
    assert p["crossover"].crossover_events == 20
    three = generate(p["three"])
    counts = [len(g.persons) for g in three.ground_truth]
    assert max(counts) == 3 and counts[0] == 0


def test_x_crossing_counts():
    out = generate(x_crossing_scenario(3, seed=0))
    assert len(out.events) == 3


def test_path_outside_bounds_rejected():
    with pytest.raises(ScenarioError):
        generate(ScenarioConfig(walkers=[WalkerConfig([[0, 0], [10, 10]], 1.0)]))


def test_config_validation():
    with pytest.raises(ScenarioError):
        ScenarioConfig(dropout=1.5)
    with pytest.raises(ScenarioError):
        ScenarioConfig(points_per_person=301)
    with pytest.raises(ScenarioError):
        ScenarioConfig(walkers=[WalkerConfig([[0, 2], [1, 2]], 1.0, 0.0, [["running", 1.0]])])


def test_config_json_round_trip(tmp_path):
    cfg = _two_crossing(seed=3)
    cfg.to_json(tmp_path / "s.json")
    back = ScenarioConfig.from_json(tmp_path / "s.json")
    assert generate(back).frames == generate(cfg).frames
