"""Per-person activity classifier over short windows of voxel crops.

Input is a (T, H, W) stack of top-down occupancy crops, one channel per
frame. Network: conv3x3 -> ReLU -> maxpool2 -> conv3x3 -> ReLU -> maxpool2
-> dense -> ReLU -> dense -> ReLU -> dense -> softmax.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .nn import SGD, Conv2D, Dense, Flatten, MaxPool2D, ReLU, Sequential, cross_entropy, softmax

CHECKPOINT_VERSION = 1


class TrainingError(RuntimeError):
    pass


class UntrainedModelError(RuntimeError):
    pass


@dataclass
class RecognizerConfig:
    frames: int = 8
    height: int = 24
    width: int = 24
    n_classes: int = 2
    channels: tuple = (8, 16)
    dense: tuple = (64, 32)
    kernel: int = 3
    seed: int = 0

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        self.dense = tuple(int(d) for d in self.dense)
        if self.height % 4 or self.width % 4:
            raise ValueError("crop height and width must be multiples of 4")
        if self.n_classes < 2:
            raise ValueError("need at least two classes")


@dataclass
class TrainConfig:
    epochs: int = 30
    lr: float = 0.01
    momentum: float = 0.9
    batch_size: int = 16
    seed: int = 0


@dataclass
class TrainResult:
    model: "Recognizer"
    loss_history: list = field(default_factory=list)
    accuracy_history: list = field(default_factory=list)


class Recognizer:
    def __init__(self, config: RecognizerConfig | None = None):
        self.config = cfg = config or RecognizerConfig()
        rng = np.random.default_rng(cfg.seed)
        c1, c2 = cfg.channels
        d1, d2 = cfg.dense
        flat = c2 * (cfg.height // 4) * (cfg.width // 4)
        self.net = Sequential(
            [
                Conv2D(cfg.frames, c1, cfg.kernel, rng),
                ReLU(),
                MaxPool2D(2),
                Conv2D(c1, c2, cfg.kernel, rng),
                ReLU(),
                MaxPool2D(2),
                Flatten(),
                Dense(flat, d1, rng),
                ReLU(),
                Dense(d1, d2, rng),
                ReLU(),
                Dense(d2, cfg.n_classes, rng),
            ]
        )
        self.trained = False

    @property
    def input_shape(self) -> tuple:
        c = self.config
        return (c.frames, c.height, c.width)

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 3:
            x = x[None]
        if x.shape[1:] != self.input_shape:
            raise ValueError(f"expected input shape (n, {self.input_shape}), got {x.shape}")
        return x

    def logits(self, x) -> np.ndarray:
        return self.net.forward(self._check(x))

    def forward(self, x) -> np.ndarray:
        """Class probabilities, shape (n, n_classes)."""
        return softmax(self.logits(x))

    def loss_and_grads(self, x, y) -> float:
        """Mean cross-entropy; leaves parameter gradients in the layers."""
        loss, g = cross_entropy(self.logits(x), y)
        self.net.backward(g)
        return loss

    def params(self):
        return list(self.net.named_params())

    def grads(self):
        return list(self.net.named_grads())

    # -- checkpoint ---------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "version": CHECKPOINT_VERSION,
            "config": asdict(self.config),
            "trained": self.trained,
            "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in self.net.named_params()},
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "Recognizer":
        if d.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {d.get('version')!r}")
        model = cls(RecognizerConfig(**d["config"]))
        state = {}
        for k, v in d["params"].items():
            arr = np.asarray(v["data"], dtype=float)
            if arr.size != int(np.prod(v["shape"])):
                raise ValueError(f"parameter {k}: data length does not match its shape")
            state[k] = arr.reshape(v["shape"])
        model.net.load_state(state)
        model.trained = bool(d.get("trained", True))
        return model

    @classmethod
    def load(cls, path) -> "Recognizer":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def train(samples, labels, config: TrainConfig | None = None, model_config: RecognizerConfig | None = None,
          model: Recognizer | None = None) -> TrainResult:
    """Minibatch SGD with momentum on mean cross-entropy.

    The shuffle order comes from ``config.seed`` alone, so identical inputs
    give identical parameters.
    """
    cfg = config or TrainConfig()
    x = np.asarray(samples, dtype=float)
    y = np.asarray(labels, dtype=np.int64)
    if len(x) != len(y) or len(x) == 0:
        raise ValueError("need equal, non-zero numbers of samples and labels")
    if model is None:
        mc = model_config or RecognizerConfig(frames=x.shape[1], height=x.shape[2], width=x.shape[3],
                                             n_classes=int(y.max()) + 1)
        model = Recognizer(mc)
    missing = set(range(model.config.n_classes)) - set(y.tolist())
    if missing:
        raise ValueError(f"no samples for classes {sorted(missing)}")
    opt = SGD(cfg.lr, cfg.momentum)
    rng = np.random.default_rng(cfg.seed)
    result = TrainResult(model)
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(x))
        total = 0.0
        for s in range(0, len(x), cfg.batch_size):
            b = order[s : s + cfg.batch_size]
            loss = model.loss_and_grads(x[b], y[b])
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch starting {s}")
            opt.step(model.params(), model.grads())
            total += loss * len(b)
        result.loss_history.append(total / len(x))
        result.accuracy_history.append(float(np.mean(predict(model, x)[0] == y)))
    model.trained = True
    return result


def predict(model: Recognizer, x) -> tuple[np.ndarray, np.ndarray]:
    """(labels, confidences) for a batch; ties go to the lowest class index."""
    p = model.forward(x)
    return np.argmax(p, axis=1), p.max(axis=1)


def predict_activity(track_window, model: Recognizer) -> tuple[int, float]:
    """Label and confidence for one (T, H, W) window."""
    if model is None or not model.trained:
        raise UntrainedModelError("model has not been trained")
    lab, conf = predict(model, track_window)
    return int(lab[0]), float(conf[0])


# -- windows from voxel sequences ---------------------------------------------------


def topdown_crop(voxels, center_xy, height: int, width: int) -> np.ndarray:
    """(height, width) top-down occupancy of a VoxelGrid around ``center_xy``;
    cells outside the grid are empty."""
    occ = voxels.counts.any(axis=2) if voxels.counts.ndim == 3 else voxels.counts > 0
    grid = voxels.grid
    ci = int(np.floor((center_xy[0] - grid.origin[0]) / grid.cell_size[0]))
    cj = int(np.floor((center_xy[1] - grid.origin[1]) / grid.cell_size[1]))
    i0, j0 = ci - height // 2, cj - width // 2
    out = np.zeros((height, width))
    si0, sj0 = max(i0, 0), max(j0, 0)
    si1, sj1 = min(i0 + height, occ.shape[0]), min(j0 + width, occ.shape[1])
    if si1 > si0 and sj1 > sj0:
        out[si0 - i0 : si1 - i0, sj0 - j0 : sj1 - j0] = occ[si0:si1, sj0:sj1]
    return out


def window_from_voxels(voxel_seq, center_xy, height: int = 24, width: int = 24) -> np.ndarray:
    """Stack crops of consecutive frames, all centered on one position so
    that motion within the window stays visible."""
    return np.stack([topdown_crop(v, center_xy, height, width) for v in voxel_seq])


def simulated_dataset(n_scenes: int = 4, seed: int = 0, frames: int = 8, size: int = 24,
                      stride: int = 4, classes=("walking", "normal_standing")):
    """Labeled windows for one walker alternating the given activities.

    Each window is centered on the walker's ground-truth position at its
    middle frame and labeled when the activity is constant over the window.
    Returns (x, y, class names).
    """
    from .pipeline import PipelineConfig, preprocess
    from .simulator import LEAD_IN, ScenarioConfig, WalkerConfig, generate

    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for s in range(n_scenes):
        sched = []
        for k in range(6):
            sched.append([classes[k % len(classes)], float(rng.uniform(2.0, 3.5))])
        y0 = float(rng.uniform(3.0, 7.0))
        cfg = ScenarioConfig(
            walkers=[WalkerConfig([[-3.5, y0], [3.5, y0]], 1.0, LEAD_IN, sched, pace=True)],
            seed=int(rng.integers(2**31)),
        )
        out = generate(cfg)
        _, voxels = preprocess(out.frames, PipelineConfig(bounds=[[-4.5, 4.5], [0.5, 9.5], [-0.5, 2.5]]))
        for start in range(0, len(out.frames) - frames + 1, stride):
            gts = out.ground_truth[start : start + frames]
            if any(len(g.persons) != 1 for g in gts):
                continue
            acts = {g.persons[0].activity for g in gts}
            if len(acts) != 1:
                continue
            mid = gts[frames // 2].persons[0].centroid
            xs.append(window_from_voxels(voxels[start : start + frames], mid[:2], size, size))
            ys.append(classes.index(acts.pop()))
    return np.array(xs), np.array(ys, dtype=np.int64), list(classes)
