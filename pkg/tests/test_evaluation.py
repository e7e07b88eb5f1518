import csv
import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import brute_matching_cost

from pcdtrack.core import GroundTruthFrame, PersonState
from pcdtrack.evaluation import (
    CSV_FIELDS,
    euclidean_error,
    identity_mapping,
    kalman_baseline,
    match_frame,
    recognition_report,
    reports_to_csv,
    run_ablation,
)
from pcdtrack.pipeline import ABLATIONS, PipelineConfig, run_pipeline
from pcdtrack.simulator import ScenarioConfig, WalkerConfig, generate, preset_scenarios
from pcdtrack.tracking import TrackPoint, TrackSet


def _gt(seq):
    """seq: list of {id: (x, y)} per frame."""
    return [
        GroundTruthFrame(0.1 * f, tuple(PersonState(i, (float(x), float(y), 1.6), "walking") for i, (x, y) in sorted(d.items())))
        for f, d in enumerate(seq)
    ]


def _tracks(seq):
    ts = TrackSet()
    for f, d in enumerate(seq):
        for i, xy in d.items():
            ts.add(i, f, TrackPoint((0, 0), tuple(map(float, xy)), tuple(map(float, xy))))
    return ts


def _walk(n=20):
    return [{0: (1.0 + 0.1 * f, 2.0), 1: (1.0 + 0.1 * f, 5.0)} for f in range(n)]


def test_perfect_tracks_zero_error():
    rep = euclidean_error(_tracks(_walk()), _gt(_walk()))
    assert rep.mean_ed == 0.0 and rep.frame_ed == 0.0
    assert rep.switches == 0 and rep.misses == 0 and rep.id_accuracy == 1.0
    assert rep.n_frames == 20 and rep.n_matched == 40


def test_one_meter_offset():
    shifted = [{k: (x + 1.0, y) for k, (x, y) in d.items()} for d in _walk()]
    rep = euclidean_error(_tracks(shifted), _gt(_walk()))
    assert rep.mean_ed == pytest.approx(1.0) and rep.max_ed == pytest.approx(1.0)


def test_track_ids_need_not_match_gt_ids():
    relabeled = [{7 + k: xy for k, xy in d.items()} for d in _walk()]
    rep = euclidean_error(_tracks(relabeled), _gt(_walk()))
    assert rep.mean_ed == 0.0 and rep.id_accuracy == 1.0


def test_swap_counts_two_switches():
    gt = _walk(20)
    pred = [dict(d) for d in gt]
    for f in range(10, 20):
        pred[f] = {0: gt[f][1], 1: gt[f][0]}
    rep = euclidean_error(_tracks(pred), _gt(gt))
    assert rep.switches == 2
    # the sequence-level mapping sticks to one labelling: half the frames are wrong
    assert rep.id_accuracy == pytest.approx(0.5)
    assert rep.frame_ed == 0.0
    assert rep.mean_ed == pytest.approx(1.5)


def test_missing_track_counts_misses():
    gt = _walk(10)
    pred = [{0: d[0]} for d in gt]
    rep = euclidean_error(_tracks(pred), _gt(gt), miss_penalty=2.0)
    assert rep.misses == 10 and rep.miss_penalty == 20.0
    assert rep.id_accuracy == 0.0 and rep.mean_ed == 0.0


def test_coincident_people_count_as_correct():
    gt = [{0: (1.0, 1.0), 1: (1.0, 1.0)}] * 3
    pred = [{5: (1.0, 1.0), 6: (1.0, 1.0)}] * 3
    rep = euclidean_error(_tracks(pred), _gt(gt))
    assert rep.id_accuracy == 1.0 and rep.switches == 0


def test_identity_mapping_prefers_longest_overlap():
    gt = _walk(10)
    pred = [{3: d[0], 4: d[1]} if f < 7 else {4: d[0], 3: d[1]} for f, d in enumerate(gt)]
    assert identity_mapping(_tracks(pred), _gt(gt)) == {0: 3, 1: 4}


@given(st.integers(0, 2**32 - 1))
def test_match_frame_is_minimum_cost(seed):
    rng = np.random.default_rng(seed)
    g, p = int(rng.integers(0, 5)), int(rng.integers(0, 5))
    gt = {k: rng.uniform(0, 5, 2) for k in range(g)}
    pred = {10 + k: rng.uniform(0, 5, 2) for k in range(p)}
    m = match_frame(gt, pred)
    assert len(m) == min(g, p)
    if g and p:
        cost = np.array([[np.linalg.norm(gt[a] - pred[b]) for b in sorted(pred)] for a in sorted(gt)])
        assert sum(d for _, _, d in m) == pytest.approx(brute_matching_cost(cost), rel=1e-12, abs=1e-12)
        assert len({a for a, _, _ in m}) == len(m) == len({b for _, b, _ in m})


def test_match_frame_tie_keeps_previous_pairs():
    gt = {0: np.array([0.0, 0.0]), 1: np.array([0.0, 0.0])}
    pred = {5: np.array([0.0, 0.0]), 6: np.array([0.0, 0.0])}
    assert {(a, b) for a, b, _ in match_frame(gt, pred, {0: 6, 1: 5})} == {(0, 6), (1, 5)}
    assert {(a, b) for a, b, _ in match_frame(gt, pred, {0: 5, 1: 6})} == {(0, 5), (1, 6)}


def test_csv_columns_and_float_format():
    rep = euclidean_error(_tracks(_walk(5)), _gt(_walk(5)), scenario="s", config="full")
    rows = list(csv.DictReader(io.StringIO(reports_to_csv([rep]))))
    assert list(rows[0]) == CSV_FIELDS
    assert rows[0]["id_accuracy"] == "1.0" and rows[0]["scenario"] == "s"


# -- recognition -------------------------------------------------------------------------------


def test_recognition_report_example():
    rep = recognition_report([0, 1, 1, 2], [0, 1, 2, 2], classes=[0, 1, 2])
    assert rep.accuracy == 0.75
    assert rep.precision == [1.0, 0.5, 1.0]
    assert rep.recall == [1.0, 1.0, 0.5]
    assert rep.confusion.tolist() == [[1, 0, 0], [0, 1, 0], [0, 1, 1]]


def test_recognition_report_never_predicted_class():
    rep = recognition_report([0, 0], [0, 1], classes=[0, 1])
    assert rep.precision == [0.5, 0.0] and rep.recall == [1.0, 0.0]


def test_recognition_report_errors():
    with pytest.raises(ValueError):
        recognition_report([0], [0, 1])
    with pytest.raises(ValueError):
        recognition_report([3], [0], classes=[0, 1])


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=50))
def test_confusion_totals(pairs):
    preds, labels = zip(*pairs)
    rep = recognition_report(preds, labels, classes=[0, 1, 2, 3])
    assert rep.confusion.sum() == len(pairs)
    assert rep.confusion.sum(axis=1).tolist() == [labels.count(c) for c in range(4)]
    assert rep.accuracy == pytest.approx(np.mean(np.array(preds) == np.array(labels)))


# -- ablation runs -------------------------------------------------------------------------------


def test_run_ablation_rows(tmp_path):
    scen = generate(ScenarioConfig(walkers=[WalkerConfig([[-2, 4], [2, 4]], 1.0, 1.0)], seed=0))
    out = tmp_path / "r.csv"
    reports = run_ablation({"a": scen, "b": scen}, out_csv=out)
    assert len(reports) == 2 * len(ABLATIONS)
    assert [(r.scenario, r.config) for r in reports[:5]] == [("a", c) for c in ABLATIONS]
    assert len(out.read_text().splitlines()) == 1 + 2 * len(ABLATIONS)


def test_single_preset_error_small():
    scen = generate(preset_scenarios(0)["single"])
    rep = euclidean_error(run_pipeline(scen.frames).tracks, scen.ground_truth)
    # head (ground truth) and upper-body blob centroid differ by a few cm
    assert rep.mean_ed < 0.2 and rep.id_accuracy > 0.95


def test_kalman_stationary_noise_reduced():
    from pcdtrack.clustering import ClusterSet

    rng = np.random.default_rng(0)
    truth = np.array([2.0, 3.0])
    seq = []
    for _ in range(60):
        c = np.r_[truth + rng.normal(scale=0.05, size=2), 1.0]
        seq.append(ClusterSet([np.arange(10)], np.zeros(0, dtype=np.int64), [c], 10))
    ts = kalman_baseline(seq)
    assert ts.ids() == [0]
    raw = np.mean([np.linalg.norm(np.asarray(cs.centroids[0][:2]) - truth) for cs in seq[20:]])
    est = np.mean([np.linalg.norm(ts.positions(f)[0] - truth) for f in range(20, 60)])
    assert est < raw


def test_pipeline_config_round_trip():
    cfg = PipelineConfig(cell_size=0.2)
    back = PipelineConfig.from_dict(cfg.to_dict())
    assert back == cfg
    with pytest.raises(ValueError):
        PipelineConfig.from_dict({"nope": 1})
