"""Tracking and recognition metrics, the Kalman baseline and the ablation harness.

Tracking error is reported two ways. ``mean_ed`` is identity-consistent:
ground-truth people are mapped to track ids once for the whole sequence
(the mapping that maximizes the number of frames the pair is within
``id_radius``), and a person's error on a frame is the distance to their
mapped track. An identity swap therefore shows up as error. ``frame_ed`` is
the per-frame version that re-matches people to tracks on every frame and
is blind to identity.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy.optimize import linear_sum_assignment

from .pipeline import ABLATIONS, PipelineConfig, detect, run_pipeline
from .tracking import TrackSet, project_to_2d
from .tracking.kalman import KalmanConfig, kalman_track


@dataclass
class TrackingReport:
    scenario: str = ""
    config: str = ""
    mean_ed: float = float("nan")
    min_ed: float = float("nan")
    max_ed: float = float("nan")
    frame_ed: float = float("nan")
    switches: int = 0
    misses: int = 0
    miss_penalty: float = 0.0
    id_accuracy: float = float("nan")
    n_frames: int = 0
    n_matched: int = 0
    per_frame_ed: list = field(default_factory=list, repr=False)

    def row(self) -> dict:
        d = asdict(self)
        d.pop("per_frame_ed")
        return d


CSV_FIELDS = [f.name for f in fields(TrackingReport) if f.name != "per_frame_ed"]


def _gt_xy(gt_frame) -> dict:
    return {p.id: np.asarray(p.centroid[:2], dtype=float) for p in gt_frame.persons}


TIE_EPS = 1e-9


def match_frame(gt: dict, pred: dict, prefer: dict | None = None):
    """Minimum-total-distance one-to-one matching: list of (gt id, track id, distance).

    Among equal-cost matchings the one keeping the pairs in ``prefer``
    (gt id -> track id, e.g. the previous frame's matches) wins.
    """
    g_ids, p_ids = sorted(gt), sorted(pred)
    if not g_ids or not p_ids:
        return []
    cost = np.array([[np.linalg.norm(gt[g] - pred[p]) for p in p_ids] for g in g_ids])
    biased = cost.copy()
    if prefer:
        for r, g in enumerate(g_ids):
            for c, p in enumerate(p_ids):
                if g in prefer and prefer[g] != p:
                    biased[r, c] += TIE_EPS
    rows, cols = linear_sum_assignment(biased)
    return [(g_ids[r], p_ids[c], float(cost[r, c])) for r, c in zip(rows, cols)]


def identity_mapping(tracks: TrackSet, ground_truth, id_radius: float = 1.0) -> dict:
    """Sequence-level one-to-one map gt id -> track id maximizing the number
    of frames where the pair lies within ``id_radius``."""
    g_ids = sorted({p.id for g in ground_truth for p in g.persons})
    p_ids = tracks.ids()
    if not g_ids or not p_ids:
        return {}
    gi = {g: k for k, g in enumerate(g_ids)}
    pi = {p: k for k, p in enumerate(p_ids)}
    score = np.zeros((len(g_ids), len(p_ids)))
    for f, g in enumerate(ground_truth):
        gt = _gt_xy(g)
        pred = tracks.positions(f)
        for a, xa in gt.items():
            for b, xb in pred.items():
                if np.linalg.norm(xa - xb) <= id_radius:
                    score[gi[a], pi[b]] += 1
    rows, cols = linear_sum_assignment(-score)
    return {g_ids[r]: p_ids[c] for r, c in zip(rows, cols) if score[r, c] > 0}


def euclidean_error(tracks: TrackSet, ground_truth, id_radius: float = 1.0, miss_penalty: float = 1.0,
                    scenario: str = "", config: str = "") -> TrackingReport:
    """ED between tracks and ground-truth centroids (2D, meters).

    A person-frame with no mapped track counts as a miss (``miss_penalty``
    per miss in its own column). A frame is identity-correct when every
    person on it has their mapped track present and that labelling is a
    minimum-cost per-frame matching. Switches count changes of a person's
    per-frame matched track id between frames where they are matched; ties
    in the matching keep the previous pairs.
    """
    mapping = identity_mapping(tracks, ground_truth, id_radius)
    eds, frame_eds, per_frame = [], [], []
    misses = switches = 0
    correct = counted = 0
    last_match: dict = {}
    for f, g in enumerate(ground_truth):
        gt = _gt_xy(g)
        pred = tracks.positions(f)
        here = []
        for pid, xy in gt.items():
            tid = mapping.get(pid)
            if tid is None or tid not in pred:
                misses += 1
                continue
            here.append(float(np.linalg.norm(xy - pred[tid])))
        eds.extend(here)
        per_frame.append(float(np.mean(here)) if here else float("nan"))

        matches = match_frame(gt, pred, last_match)
        frame_eds.extend(d for _, _, d in matches)
        matched = {a: b for a, b, _ in matches}
        for a, b in matched.items():
            if a in last_match and last_match[a] != b:
                switches += 1
            last_match[a] = b
        if gt:
            counted += 1
            mapped = [mapping.get(a) for a in gt]
            if all(t is not None and t in pred for t in mapped) and len(matches) == len(gt):
                # correct when the mapped labelling is itself a minimum-cost
                # matching (coincident people make either labelling optimal)
                cost = sum(np.linalg.norm(gt[a] - pred[mapping[a]]) for a in gt)
                correct += int(cost <= sum(d for _, _, d in matches) + len(gt) * TIE_EPS)

    rep = TrackingReport(
        scenario=scenario,
        config=config,
        switches=switches,
        misses=misses,
        miss_penalty=misses * miss_penalty,
        n_frames=len(ground_truth),
        n_matched=len(eds),
        per_frame_ed=per_frame,
    )
    if eds:
        rep.mean_ed, rep.min_ed, rep.max_ed = float(np.mean(eds)), float(np.min(eds)), float(np.max(eds))
    if frame_eds:
        rep.frame_ed = float(np.mean(frame_eds))
    if counted:
        rep.id_accuracy = float(correct / counted)
    return rep


def kalman_baseline(cluster_sequence, config: KalmanConfig | None = None, state_space=None, timestamps=None) -> TrackSet:
    """Constant-velocity Kalman tracks over per-frame ClusterSets."""
    obs = [project_to_2d(cs) for cs in cluster_sequence]
    return kalman_track(obs, config, state_space, timestamps)


def run_ablation(scenarios: dict, configs=ABLATIONS, pipeline_config: PipelineConfig | None = None,
                 out_csv=None, miss_penalty: float = 1.0) -> list[TrackingReport]:
    """One report per (scenario, config).

    ``scenarios`` maps a name to a simulator ScenarioOutput (or anything with
    ``frames`` and ``ground_truth``). Clustering is computed once per scenario
    and shared by all configs except no-birch.
    """
    pcfg = pipeline_config or PipelineConfig()
    reports = []
    for name, scen in scenarios.items():
        cache = {}
        for cfg_name in configs:
            use_birch = cfg_name != "no-birch" and pcfg.cluster.use_birch
            if use_birch not in cache:
                cache[use_birch] = detect(scen.frames, pcfg, use_birch)
            res = run_pipeline(scen.frames, pcfg, cfg_name, cache[use_birch])
            reports.append(euclidean_error(res.tracks, scen.ground_truth, miss_penalty=miss_penalty,
                                           scenario=name, config=cfg_name))
    if out_csv is not None:
        write_reports_csv(reports, out_csv)
    return reports


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        row = r.row()
        w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in row.items()})
    return buf.getvalue()


def write_reports_csv(reports, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(reports_to_csv(reports))


@dataclass
class RecognitionReport:
    classes: list
    accuracy: float
    precision: list
    recall: list
    confusion: np.ndarray  # rows: true class, columns: predicted


def recognition_report(predictions, labels, classes=None) -> RecognitionReport:
    """Accuracy, per-class precision/recall and confusion matrix.

    ``classes`` is the label set (defaults to the sorted union of both inputs);
    any label outside it raises ValueError. Precision of a never-predicted
    class is reported as 0.
    """
    predictions = list(predictions)
    labels = list(labels)
    if len(predictions) != len(labels):
        raise ValueError("predictions and labels differ in length")
    if classes is None:
        classes = sorted(set(labels) | set(predictions))
    classes = list(classes)
    index = {c: k for k, c in enumerate(classes)}
    for v in labels + predictions:
        if v not in index:
            raise ValueError(f"label {v!r} is outside the class set")
    k = len(classes)
    cm = np.zeros((k, k), dtype=np.int64)
    for y, p in zip(labels, predictions):
        cm[index[y], index[p]] += 1
    n = len(labels)
    acc = float(np.trace(cm) / n) if n else float("nan")
    col = cm.sum(axis=0)
    row = cm.sum(axis=1)
    diag = np.diag(cm)
    precision = [float(diag[i] / col[i]) if col[i] else 0.0 for i in range(k)]
    recall = [float(diag[i] / row[i]) if row[i] else 0.0 for i in range(k)]
    return RecognitionReport(classes, acc, precision, recall, cm)
