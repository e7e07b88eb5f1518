"""Command-line entry point: ``pcdtrack <subcommand> [--config FILE] [flags]``.

Subcommands: simulate, track, train, adapt, eval, plot. Each reads an
optional JSON config; flags given on the command line win over config
values. The output directory comes from ``--out``, else the
``PCDTRACK_OUT`` environment variable, else the config's ``out`` key, else
``./out``.

Exit codes: 0 success, 2 usage or config error, 3 runtime or numeric failure.

Seeds: one ``seed`` per run. Scene generation uses it as is; other
stages that need their own stream use
``stage_seed(seed, stage)``, the first word of
``numpy.random.SeedSequence([seed, stage])``, with stages numbered in
``STAGES``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

log = logging.getLogger("pcdtrack")

OUT_ENV = "PCDTRACK_OUT"
STAGES = {"train_data": 1, "test_data": 2, "model_init": 3, "train_shuffle": 4}
DISABLE_TO_ABLATION = {"cpda": "no-cpda", "aohmm": "no-aohmm", "birch": "no-birch"}
PRESETS = ("single", "two", "three", "crossover", "outdoor", "x-crossing")


class ConfigError(Exception):
    """Bad arguments or config; exit code 2."""


def stage_seed(seed: int, stage: str) -> int:
    return int(np.random.SeedSequence([int(seed), STAGES[stage]]).generate_state(1)[0])


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc.msg} at line {exc.lineno}, column {exc.colno}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return cfg


def _pick(args, cfg: dict, name: str, default=None):
    v = getattr(args, name, None)
    if v is not None:
        return v
    return cfg.get(name, default)


def output_dir(args, cfg: dict) -> Path:
    out = args.out or os.environ.get(OUT_ENV) or cfg.get("out") or "out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _require_file(path, what: str) -> Path:
    if path is None:
        raise ConfigError(f"no {what} given")
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{what} not found: {p}")
    return p


def _pipeline_config(cfg: dict):
    from .pipeline import PipelineConfig

    try:
        return PipelineConfig.from_dict(cfg.get("pipeline", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad pipeline config: {exc}") from exc


# -- subcommands ----------------------------------------------------------------------


def cmd_simulate(args, cfg: dict) -> int:
    from .core import write_frames, write_ground_truth
    from .simulator import ScenarioConfig, generate, preset_scenarios, x_crossing_scenario

    seed = int(_pick(args, cfg, "seed", 0))
    scenario = cfg.get("scenario")
    if args.preset is None and scenario is not None:
        if "preset" in cfg:
            raise ConfigError("config gives both 'preset' and 'scenario'")
        try:
            sc = ScenarioConfig.from_dict({**scenario, "seed": seed})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad scenario config: {exc}") from exc
    else:
        preset = _pick(args, cfg, "preset", "crossover")
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; expected one of {', '.join(PRESETS)}")
        sc = x_crossing_scenario(6, seed) if preset == "x-crossing" else preset_scenarios(seed)[preset]
    try:
        out = generate(sc)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    d = output_dir(args, cfg)
    write_frames(out.frames, d / "frames.jsonl")
    write_ground_truth(out.ground_truth, d / "gt.jsonl")
    (d / "events.json").write_text(json.dumps(out.events_json(), indent=1) + "\n", encoding="utf-8")
    print(f"wrote {len(out.frames)} frames, {len(out.events)} crossover events to {d}")
    return 0


def _ablation(args, cfg: dict) -> str:
    from .pipeline import ABLATIONS

    disable = args.disable or cfg.get("disable") or []
    if isinstance(disable, str):
        disable = [disable]
    ablation = _pick(args, cfg, "ablation")
    if disable:
        if len(disable) > 1 or ablation is not None:
            raise ConfigError("give at most one of --disable / --ablation")
        if disable[0] not in DISABLE_TO_ABLATION:
            raise ConfigError(f"cannot disable {disable[0]!r}; expected one of {sorted(DISABLE_TO_ABLATION)}")
        return DISABLE_TO_ABLATION[disable[0]]
    ablation = ablation or "full"
    if ablation not in ABLATIONS:
        raise ConfigError(f"unknown ablation {ablation!r}; expected one of {', '.join(ABLATIONS)}")
    return ablation


def cmd_track(args, cfg: dict) -> int:
    from .core import read_frames, read_ground_truth, write_track_file
    from .evaluation import euclidean_error, write_reports_csv
    from .pipeline import run_pipeline

    frames_path = _require_file(_pick(args, cfg, "frames"), "frame file")
    gt_path = _pick(args, cfg, "ground_truth")
    if gt_path is not None:
        gt_path = _require_file(gt_path, "ground-truth file")
    ablation = _ablation(args, cfg)
    pcfg = _pipeline_config(cfg)
    try:
        frames = read_frames(frames_path)
        gt = read_ground_truth(gt_path) if gt_path is not None else None
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    d = output_dir(args, cfg)
    if not frames:
        log.warning("frame file %s is empty; writing an empty track file", frames_path)
        write_track_file([], d / "tracks.jsonl")
        return 0
    res = run_pipeline(frames, pcfg, ablation)
    write_track_file(res.tracks.rows(), d / "tracks.jsonl")
    msg = f"{ablation}: {len(res.tracks.ids())} tracks over {len(frames)} frames"
    if gt is not None:
        if len(gt) != len(frames):
            raise ConfigError(f"ground truth has {len(gt)} records for {len(frames)} frames")
        rep = euclidean_error(res.tracks, gt, scenario=frames_path.stem, config=ablation)
        write_reports_csv([rep], d / "report.csv")
        msg += f", mean ED {rep.mean_ed:.4f} m, id accuracy {rep.id_accuracy:.3f}"
    print(msg)
    return 0


def cmd_train(args, cfg: dict) -> int:
    from .evaluation import recognition_report
    from .recognizer import RecognizerConfig, TrainConfig, predict, simulated_dataset, train

    seed = int(_pick(args, cfg, "seed", 0))
    data_cfg = dict(cfg.get("dataset", {}))
    try:
        train_cfg = TrainConfig(**{**cfg.get("train", {}), "seed": stage_seed(seed, "train_shuffle")})
        if args.epochs is not None:
            train_cfg.epochs = args.epochs
        x, y, classes = simulated_dataset(seed=stage_seed(seed, "train_data"), **data_cfg)
        x_te, y_te, _ = simulated_dataset(seed=stage_seed(seed, "test_data"), **data_cfg)
        model_cfg = RecognizerConfig(
            **{
                "frames": x.shape[1], "height": x.shape[2], "width": x.shape[3], "n_classes": len(classes),
                **cfg.get("model", {}),
                "seed": stage_seed(seed, "model_init"),
            }
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad train config: {exc}") from exc
    res = train(x, y, train_cfg, model_cfg)
    d = output_dir(args, cfg)
    res.model.save(d / "model.json")
    with open(d / "train_history.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss", "accuracy"])
        for k, (loss, acc) in enumerate(zip(res.loss_history, res.accuracy_history), start=1):
            w.writerow([k, repr(float(loss)), repr(float(acc))])
    pred, _ = predict(res.model, x_te)
    rep = recognition_report([classes[p] for p in pred], [classes[t] for t in y_te], classes)
    with open(d / "recognition.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class", "precision", "recall", *[f"pred_{c}" for c in classes]])
        for k, c in enumerate(classes):
            w.writerow([c, repr(rep.precision[k]), repr(rep.recall[k]), *rep.confusion[k].tolist()])
    print(f"trained on {len(x)} windows; test accuracy {rep.accuracy:.3f} on {len(x_te)} windows")
    return 0


def cmd_adapt(args, cfg: dict) -> int:
    from .adaptation import BenchmarkSpec, run_benchmark

    spec_dict = dict(cfg.get("benchmark", {}))
    if args.spec is not None:
        spec_dict.update(load_config(_require_file(args.spec, "benchmark spec")))
    if args.seeds is not None:
        spec_dict["seeds"] = list(range(args.seeds))
    try:
        spec = BenchmarkSpec(**spec_dict)
    except TypeError as exc:
        raise ConfigError(f"bad benchmark spec: {exc}") from exc
    d = output_dir(args, cfg)
    try:
        rows = run_benchmark(spec, d / "adapt_results.csv")
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad adaptation config: {exc}") from exc
    so = np.mean([r.source_only_accuracy for r in rows])
    ad = np.mean([r.adapted_accuracy for r in rows])
    print(f"{len(rows)} seeds: source-only {so:.3f}, adapted {ad:.3f}")
    return 0


def cmd_eval(args, cfg: dict) -> int:
    from .evaluation import run_ablation
    from .pipeline import ABLATIONS
    from .simulator import generate, preset_scenarios, x_crossing_scenario

    seed = int(_pick(args, cfg, "seed", 0))
    presets = args.presets or cfg.get("presets") or ["single", "two", "three", "crossover", "outdoor"]
    configs = args.configs or cfg.get("configs") or list(ABLATIONS)
    bad = [p for p in presets if p not in PRESETS]
    if bad:
        raise ConfigError(f"unknown presets {bad}; expected from {', '.join(PRESETS)}")
    bad = [c for c in configs if c not in ABLATIONS]
    if bad:
        raise ConfigError(f"unknown configs {bad}; expected from {', '.join(ABLATIONS)}")
    pcfg = _pipeline_config(cfg)
    table = preset_scenarios(seed)
    scenarios = {}
    for p in presets:
        sc = x_crossing_scenario(6, seed) if p == "x-crossing" else table[p]
        scenarios[p] = generate(sc)
    d = output_dir(args, cfg)
    reports = run_ablation(scenarios, configs, pcfg, d / "eval.csv", float(cfg.get("miss_penalty", 1.0)))
    for r in reports:
        print(f"{r.scenario:10s} {r.config:9s} mean ED {r.mean_ed:.4f}  switches {r.switches}")
    return 0


def _svg_lines(series: dict, title: str, xlabel: str, ylabel: str, w=640, h=360) -> str:
    """Minimal line chart; ``series`` maps a label to (x, y) arrays."""
    pad = 50
    xs = np.concatenate([np.asarray(x, float) for x, _ in series.values()]) if series else np.zeros(1)
    ys = np.concatenate([np.asarray(y, float) for _, y in series.values()]) if series else np.zeros(1)
    fin = np.isfinite(ys)
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = (0.0, float(ys[fin].max())) if fin.any() else (0.0, 1.0)
    x1 = x1 if x1 > x0 else x0 + 1
    y1 = y1 if y1 > y0 else y0 + 1

    def sx(v):
        return pad + (v - x0) / (x1 - x0) * (w - 2 * pad)

    def sy(v):
        return h - pad - (v - y0) / (y1 - y0) * (h - 2 * pad)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">',
        f'<text x="{w / 2}" y="20" text-anchor="middle">{title}</text>',
        f'<line x1="{pad}" y1="{h - pad}" x2="{w - pad}" y2="{h - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{h - pad}" stroke="black"/>',
        f'<text x="{w / 2}" y="{h - 12}" text-anchor="middle">{xlabel}</text>',
        f'<text x="14" y="{h / 2}" transform="rotate(-90 14 {h / 2})" text-anchor="middle">{ylabel}</text>',
        f'<text x="{pad - 4}" y="{h - pad}" text-anchor="end">{y0:.3g}</text>',
        f'<text x="{pad - 4}" y="{pad + 4}" text-anchor="end">{y1:.3g}</text>',
        f'<text x="{pad}" y="{h - pad + 16}" text-anchor="middle">{x0:.3g}</text>',
        f'<text x="{w - pad}" y="{h - pad + 16}" text-anchor="middle">{x1:.3g}</text>',
    ]
    for k, (label, (x, y)) in enumerate(series.items()):
        color = colors[k % len(colors)]
        # gaps (NaN) split the line
        runs, cur = [], []
        for a, b in zip(x, y):
            if np.isfinite(b):
                cur.append(f"{sx(a):.2f},{sy(b):.2f}")
            elif cur:
                runs.append(cur)
                cur = []
        if cur:
            runs.append(cur)
        for run in runs:
            parts.append(f'<polyline fill="none" stroke="{color}" points="{" ".join(run)}"/>')
        parts.append(f'<text x="{w - pad - 4}" y="{pad + 14 * (k + 1)}" text-anchor="end" fill="{color}">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _trackset_from_file(path):
    from .core import read_track_file
    from .tracking import TrackPoint, TrackSet

    ts = TrackSet()
    for f, (t, entries) in enumerate(read_track_file(path)):
        ts.timestamps.append(t)
        for pid, cell, pos in entries:
            ts.add(pid, f, TrackPoint(tuple(cell), tuple(pos), None))
    return ts


def cmd_plot(args, cfg: dict) -> int:
    """ED per frame (``--tracks`` with ``--ground-truth``) or loss curves
    (``--history``, a train_history.csv)."""
    from .core import read_ground_truth
    from .evaluation import euclidean_error

    d = output_dir(args, cfg)
    tracks = _pick(args, cfg, "tracks")
    history = _pick(args, cfg, "history")
    if tracks is None and history is None:
        raise ConfigError("plot needs --tracks (with --ground-truth) or --history")
    written = []
    if tracks is not None:
        gt_path = _require_file(_pick(args, cfg, "ground_truth"), "ground-truth file")
        try:
            ts = _trackset_from_file(_require_file(tracks, "track file"))
            gt = read_ground_truth(gt_path)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        rep = euclidean_error(ts, gt)
        series = {"ED": (np.arange(len(rep.per_frame_ed)), np.asarray(rep.per_frame_ed))}
        (d / "ed_per_frame.svg").write_text(_svg_lines(series, "Tracking error per frame", "frame", "ED (m)"),
                                            encoding="utf-8")
        written.append("ed_per_frame.svg")
    if history is not None:
        path = _require_file(history, "history file")
        with open(path, "r", encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows or "loss" not in rows[0]:
            raise ConfigError(f"{path} has no 'loss' column")
        ep = np.array([float(r.get("epoch", k + 1)) for k, r in enumerate(rows)])
        series = {"loss": (ep, np.array([float(r["loss"]) for r in rows]))}
        if "accuracy" in rows[0]:
            series["accuracy"] = (ep, np.array([float(r["accuracy"]) for r in rows]))
        (d / "loss_curve.svg").write_text(_svg_lines(series, "Training", "epoch", "value"), encoding="utf-8")
        written.append("loss_curve.svg")
    print("wrote " + ", ".join(written))
    return 0


# -- parser ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pcdtrack", description="Point-cloud multi-person tracking toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--out", help=f"output directory (else ${OUT_ENV}, else config 'out', else ./out)")
        sp.set_defaults(func=fn)
        return sp

    sp = add("simulate", cmd_simulate, "generate a synthetic scene")
    sp.add_argument("--preset", help=f"one of {', '.join(PRESETS)}")
    sp.add_argument("--seed", type=int)

    sp = add("track", cmd_track, "run the tracking pipeline on a frame file")
    sp.add_argument("--frames")
    sp.add_argument("--ground-truth", dest="ground_truth")
    sp.add_argument("--disable", action="append", help="stage to drop: cpda, aohmm or birch")
    sp.add_argument("--ablation", help="tracker1, no-birch, no-aohmm, no-cpda or full")

    sp = add("train", cmd_train, "train the activity recognizer on simulated windows")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--epochs", type=int)

    sp = add("adapt", cmd_adapt, "run the domain-adaptation benchmark")
    sp.add_argument("--spec", help="benchmark spec JSON")
    sp.add_argument("--seeds", type=int, help="use seeds 0..N-1")

    sp = add("eval", cmd_eval, "ablation table over simulated presets")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--presets", nargs="+")
    sp.add_argument("--configs", nargs="+")

    sp = add("plot", cmd_plot, "SVG plots of ED per frame or training curves")
    sp.add_argument("--tracks")
    sp.add_argument("--ground-truth", dest="ground_truth")
    sp.add_argument("--history")
    return p


def main(argv=None) -> int:
    from .adaptation import AdaptationError
    from .recognizer import TrainingError
    from .tracking import DecodeError

    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s", stream=sys.stderr)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (TrainingError, AdaptationError, DecodeError, FloatingPointError, ArithmeticError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3
    except (RuntimeError, ValueError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
