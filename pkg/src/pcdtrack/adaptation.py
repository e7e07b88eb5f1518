"""Domain adaptation with paired variational autoencoders.

Stage 1 trains a source VAE (reconstruction + prior KL), freezes it, then
trains a target VAE whose latent batch distribution is pulled towards the
source one by a closed-form Gaussian KL. Stage 2 trains a classifier on
source latents; target samples are classified through the target encoder.

Inputs to both VAEs must lie in [0, 1] (binary cross-entropy
reconstruction); ``squash`` maps real features there.
"""

from __future__ import annotations

import copy
import csv
import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .nn import Adam, Dense, ReLU, Sequential, Softplus, cross_entropy, softmax

BCE_EPS = 1e-7


class AdaptationError(RuntimeError):
    pass


class UntrainedModelError(RuntimeError):
    pass


def squash(x):
    """Elementwise logistic map into (0, 1)."""
    x = np.asarray(x, dtype=float)
    return 0.5 * (1 + np.tanh(0.5 * x))


@dataclass
class DomainData:
    x_s: np.ndarray
    y_s: np.ndarray
    x_l: np.ndarray
    y_l: np.ndarray
    x_u: np.ndarray

    def __post_init__(self):
        self.x_s = np.asarray(self.x_s, dtype=float)
        self.y_s = np.asarray(self.y_s, dtype=np.int64)
        self.x_u = np.asarray(self.x_u, dtype=float)
        self.x_l = np.asarray(self.x_l, dtype=float).reshape(-1, self.x_u.shape[1])
        self.y_l = np.asarray(self.y_l, dtype=np.int64)
        if len(self.x_s) != len(self.y_s) or len(self.x_l) != len(self.y_l):
            raise ValueError("feature and label counts differ")
        if len(self.x_l) and set(self.y_l.tolist()) - set(self.y_s.tolist()):
            raise ValueError("target labels outside the source label set")
        n_l = max(len(self.x_l), 1)
        if len(self.x_s) < 5 * n_l or len(self.x_u) < 5 * n_l:
            warnings.warn("labeled target set is not much smaller than the source/unlabeled sets", stacklevel=2)

    @property
    def x_t(self) -> np.ndarray:
        """All target features (labeled then unlabeled)."""
        return np.concatenate([self.x_l, self.x_u]) if len(self.x_l) else self.x_u


# -- VAE ------------------------------------------------------------------------------


class Vae:
    """x -> ReLU(hidden) -> (mu, softplus -> sigma); z -> ReLU(hidden) -> sigmoid(x')."""

    def __init__(self, d_in: int, d_z: int = 4, hidden: int = 64, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.d_in, self.d_z, self.hidden = d_in, d_z, hidden
        self.enc = Sequential([Dense(d_in, hidden, rng), ReLU()])
        self.mu_head = Dense(hidden, d_z, rng)
        self.sig_head = Sequential([Dense(hidden, d_z, rng), Softplus()])
        self.dec = Sequential([Dense(d_z, hidden, rng), ReLU(), Dense(hidden, d_in, rng)])
        self.frozen = False

    def named_params(self):
        yield from (("enc." + k, v) for k, v in self.enc.named_params())
        yield from (("mu." + k, v) for k, v in self.mu_head.params.items())
        yield from (("sig." + k, v) for k, v in self.sig_head.named_params())
        yield from (("dec." + k, v) for k, v in self.dec.named_params())

    def named_grads(self):
        yield from (("enc." + k, v) for k, v in self.enc.named_grads())
        yield from (("mu." + k, self.mu_head.grads[k]) for k in self.mu_head.params)
        yield from (("sig." + k, v) for k, v in self.sig_head.named_grads())
        yield from (("dec." + k, v) for k, v in self.dec.named_grads())

    def state(self) -> dict:
        return {k: v.copy() for k, v in self.named_params()}

    def load_state(self, state: dict) -> None:
        for k, v in self.named_params():
            src = np.asarray(state[k], dtype=float)
            if src.shape != v.shape:
                raise ValueError(f"shape mismatch for {k}")
            v[...] = src

    def encode_params(self, x) -> tuple[np.ndarray, np.ndarray]:
        h = self.enc.forward(np.asarray(x, dtype=float))
        return self.mu_head.forward(h), self.sig_head.forward(h)

    def decode(self, z) -> np.ndarray:
        return squash(self.dec.forward(z))


def encode(x, vae: Vae, rng=None, eps=None, sigma_override=None):
    """(mu, sigma, z) with z = mu + sigma * eps, eps ~ N(0, I) from ``rng``.

    ``eps`` may be given explicitly; ``sigma_override`` replaces sigma (e.g. 0
    for z = mu).
    """
    mu, sigma = vae.encode_params(x)
    if sigma_override is not None:
        sigma = np.broadcast_to(np.asarray(sigma_override, dtype=float), mu.shape).copy()
    if eps is None:
        rng = rng if rng is not None else np.random.default_rng(0)
        eps = rng.standard_normal(mu.shape)
    return mu, sigma, mu + sigma * eps


# -- divergences -----------------------------------------------------------------------


def kld(mu_p, sigma_p, mu_q, sigma_q) -> float:
    """KL(N(mu_p, sigma_p^2) || N(mu_q, sigma_q^2)) per dimension, summed over
    dimensions and averaged over rows."""
    mu_p, sigma_p, mu_q, sigma_q = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (mu_p, sigma_p, mu_q, sigma_q))
    if np.any(sigma_p <= 0) or np.any(sigma_q <= 0):
        raise ValueError("sigma must be positive")
    vp, vq = sigma_p**2, sigma_q**2
    k = 0.5 * (np.log(vq / vp) + (vp + (mu_p - mu_q) ** 2) / vq - 1.0)
    return float(np.mean(np.sum(k, axis=-1)))


def batch_moments(mu, sigma) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard deviation of the latent mixture sum_i N(mu_i, sigma_i^2)/n."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    m = mu.mean(axis=0)
    v = np.mean(sigma**2 + mu**2, axis=0) - m**2
    return m, np.sqrt(np.maximum(v, 1e-12))


def latent_kld(mu_t, sigma_t, mu_s, sigma_s) -> float:
    """Divergence between two latent batches via their Gaussian moments:
    KL(target moments || source moments)."""
    mt, st = batch_moments(mu_t, sigma_t)
    ms, ss = batch_moments(mu_s, sigma_s)
    return kld(mt, st, ms, ss)


def prior_kl(mu, sigma) -> float:
    """Mean over rows of KL(N(mu, sigma^2) || N(0, I))."""
    return kld(mu, sigma, np.zeros_like(mu), np.ones_like(sigma))


def bce(x, p) -> float:
    """Binary cross-entropy summed over features, averaged over rows; p is
    clamped to [1e-7, 1 - 1e-7]."""
    p = np.clip(p, BCE_EPS, 1 - BCE_EPS)
    return float(-np.mean(np.sum(x * np.log(p) + (1 - x) * np.log(1 - p), axis=1)))


# -- losses with gradients -------------------------------------------------------------


def vae_loss_and_grads(vae: Vae, x, eps, alpha: float = 0.0, beta: float = 0.0, ref=None, backward: bool = True):
    """Reconstruction BCE + alpha * prior KL + beta * latent KL to ``ref``.

    ``ref`` is a (mean, std) pair of source latent moments. Returns
    (total, parts dict); with ``backward`` the gradients are left in the
    VAE layers.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    h = vae.enc.forward(x)
    mu = vae.mu_head.forward(h)
    sigma = vae.sig_head.forward(h)
    z = mu + sigma * eps
    logits = vae.dec.forward(z)
    p = squash(logits)
    parts = {"recon": bce(x, p)}
    total = parts["recon"]
    if alpha:
        parts["prior"] = prior_kl(mu, sigma)
        total += alpha * parts["prior"]
    if beta:
        if ref is None:
            raise ValueError("beta > 0 needs reference source moments")
        mt, st = batch_moments(mu, sigma)
        parts["align"] = kld(mt, st, ref[0], ref[1])
        total += beta * parts["align"]
    if not backward:
        return total, parts

    pc = np.clip(p, BCE_EPS, 1 - BCE_EPS)
    inside = (p > BCE_EPS) & (p < 1 - BCE_EPS)
    dp = -(x / pc - (1 - x) / (1 - pc)) / n * inside
    dz = vae.dec.backward(dp * p * (1 - p))
    dmu = dz.copy()
    dsig = dz * eps
    if alpha:
        dmu += alpha * mu / n
        dsig += alpha * (sigma - 1 / sigma) / n
    if beta:
        ms, ss = ref
        m = mu.mean(axis=0)
        var = np.mean(sigma**2 + mu**2, axis=0) - m**2
        vt = np.maximum(var, 1e-12)
        d_m = (m - ms) / ss**2
        d_v = 0.5 * (1 / ss**2 - 1 / vt) * (var > 1e-12)
        dmu += beta * (d_m / n + d_v * (2 * mu / n - 2 * m / n))
        dsig += beta * d_v * 2 * sigma / n
    dh = vae.mu_head.backward(dmu) + vae.sig_head.backward(dsig)
    vae.enc.backward(dh)
    return total, parts


def source_loss(x_s, vae_s: Vae, alpha: float = 1.0, rng=None) -> float:
    """BCE reconstruction + alpha * KL(q(z|x) || N(0, I))."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    rng = rng if rng is not None else np.random.default_rng(0)
    eps = rng.standard_normal((len(x_s), vae_s.d_z))
    return vae_loss_and_grads(vae_s, x_s, eps, alpha=alpha, backward=False)[0]


def target_loss(x_t, vae_t: Vae, vae_s: Vae, x_s_ref, beta: float = 1.0, rng=None) -> float:
    """BCE reconstruction of x_t + beta * KL between the target latent batch
    and the (frozen) source encoder's latent batch on ``x_s_ref``."""
    if beta < 0:
        raise ValueError("beta must be >= 0")
    rng = rng if rng is not None else np.random.default_rng(0)
    ref = batch_moments(*vae_s.encode_params(x_s_ref))
    eps = rng.standard_normal((len(x_t), vae_t.d_z))
    return vae_loss_and_grads(vae_t, x_t, eps, beta=beta, ref=ref, backward=False)[0]


# -- classifier ------------------------------------------------------------------------


class Classifier:
    def __init__(self, d_z: int, n_classes: int, hidden: int = 32, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.net = Sequential([Dense(d_z, hidden, rng), ReLU(), Dense(hidden, n_classes, rng)])
        self.n_classes = n_classes

    def loss_and_grads(self, z, y) -> float:
        loss, g = cross_entropy(self.net.forward(z), y)
        self.net.backward(g)
        return loss

    def proba(self, z) -> np.ndarray:
        return softmax(self.net.forward(np.asarray(z, dtype=float)))

    def predict(self, z) -> np.ndarray:
        return np.argmax(self.proba(z), axis=1)


# -- training --------------------------------------------------------------------------


@dataclass
class AdaptConfig:
    d_z: int = 4
    hidden: int = 64
    alpha: float = 1.0
    beta: float = 1.0
    vae_epochs: int = 60
    clf_epochs: int = 60
    batch_size: int = 64
    lr: float = 3e-3
    clf_hidden: int = 32
    init_target_from_source: bool = True
    clf_on_mean: bool = True  # train on the encoder mean, as used at prediction time
    ref_batch: int | None = None  # source rows per alignment reference; None: all (exact, the encoder is frozen)


@dataclass
class AdaptationModel:
    source: Vae
    target: Vae
    classifier: Classifier
    history: dict = field(default_factory=dict)
    trained: bool = False


def _batches(n, size, rng):
    order = rng.permutation(n)
    for s in range(0, n, size):
        yield order[s : s + size]


def _check(loss, stage):
    if not np.isfinite(loss):
        raise AdaptationError(f"non-finite loss during {stage}")


def train_vae(vae: Vae, x, config: AdaptConfig, rng, alpha=0.0, beta=0.0, ref_fn=None, stage="vae") -> list:
    opt = Adam(config.lr)
    hist = []
    for _ in range(config.vae_epochs):
        tot = 0.0
        for b in _batches(len(x), config.batch_size, rng):
            eps = rng.standard_normal((len(b), vae.d_z))
            ref = ref_fn(len(b)) if ref_fn is not None else None
            loss, _ = vae_loss_and_grads(vae, x[b], eps, alpha=alpha, beta=beta, ref=ref)
            _check(loss, stage)
            opt.step(list(vae.named_params()), list(vae.named_grads()))
            tot += loss * len(b)
        hist.append(tot / len(x))
    return hist


def train_classifier(clf: Classifier, vae: Vae, x, y, config: AdaptConfig, rng) -> list:
    opt = Adam(config.lr)
    hist = []
    for _ in range(config.clf_epochs):
        tot = 0.0
        for b in _batches(len(x), config.batch_size, rng):
            if config.clf_on_mean:
                z, _ = vae.encode_params(x[b])
            else:
                _, _, z = encode(x[b], vae, rng)
            loss = clf.loss_and_grads(z, y[b])
            _check(loss, "classifier")
            opt.step(list(clf.net.named_params()), list(clf.net.named_grads()))
            tot += loss * len(b)
        hist.append(tot / len(x))
    return hist


def train_adaptation(data: DomainData, config: AdaptConfig | None = None, rng=None) -> AdaptationModel:
    """Source VAE, then frozen source + target VAE alignment, then the
    classifier on source latents."""
    cfg = config or AdaptConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    x_s, y_s, x_t = data.x_s, data.y_s, data.x_t
    d_s, d_t = x_s.shape[1], x_t.shape[1]
    n_classes = int(max(y_s.max(), data.y_l.max() if len(data.y_l) else 0)) + 1

    src = Vae(d_s, cfg.d_z, cfg.hidden, rng)
    hist = {"source": train_vae(src, x_s, cfg, rng, alpha=cfg.alpha, stage="source VAE")}
    src.frozen = True
    frozen = src.state()

    if cfg.init_target_from_source and d_s == d_t:
        tgt = copy.deepcopy(src)
        tgt.frozen = False
    else:
        tgt = Vae(d_t, cfg.d_z, cfg.hidden, rng)

    full_ref = batch_moments(*src.encode_params(x_s))

    def ref_fn(n):
        if cfg.ref_batch is None:
            return full_ref
        idx = rng.choice(len(x_s), size=min(cfg.ref_batch, len(x_s)), replace=False)
        return batch_moments(*src.encode_params(x_s[idx]))

    hist["kld_before"] = latent_kld(*tgt.encode_params(x_t), *src.encode_params(x_s))
    hist["target"] = train_vae(tgt, x_t, cfg, rng, beta=cfg.beta, ref_fn=ref_fn, stage="target VAE")
    hist["kld_after"] = latent_kld(*tgt.encode_params(x_t), *src.encode_params(x_s))

    clf = Classifier(cfg.d_z, n_classes, cfg.clf_hidden, rng)
    hist["classifier"] = train_classifier(clf, src, x_s, y_s, cfg, rng)
    for k, v in src.named_params():
        if not np.array_equal(v, frozen[k]):
            raise AdaptationError("source encoder changed after freezing")
    return AdaptationModel(src, tgt, clf, hist, trained=True)


def adapt_predict(x_u, model: AdaptationModel) -> np.ndarray:
    """Labels for target samples: classifier on the target encoder's mean
    (no sampling). Ties go to the lowest class index."""
    if model is None or not model.trained:
        raise UntrainedModelError("adaptation model has not been trained")
    mu, _ = model.target.encode_params(x_u)
    return model.classifier.predict(mu)


def source_only_predict(x, model: AdaptationModel) -> np.ndarray:
    """Baseline without adaptation: target samples through the source encoder."""
    if model is None or not model.trained:
        raise UntrainedModelError("adaptation model has not been trained")
    mu, _ = model.source.encode_params(x)
    return model.classifier.predict(mu)


# -- synthetic benchmark ------------------------------------------------------------------


@dataclass
class BenchmarkSpec:
    dim: int = 8
    n_source: int = 1000
    n_labeled: int = 20
    n_unlabeled: int = 1000
    n_test: int = 1000
    separation: float = 3.0  # distance between class means
    offset: float = 3.0  # common offset of both classes along every axis
    angle_deg: float = 30.0
    scale: float = 1.5
    seeds: list = field(default_factory=lambda: list(range(10)))
    # two classes need one latent axis, where moment matching is a full affine
    # alignment; a small prior-KL weight keeps that axis informative
    config: dict = field(default_factory=lambda: {"alpha": 0.1, "beta": 1.0, "d_z": 1})

    @classmethod
    def from_json(cls, path) -> "BenchmarkSpec":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(**json.load(fh))

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)


def rotation_matrix(dim: int, angle_deg: float) -> np.ndarray:
    """Rotation by ``angle_deg`` in each consecutive coordinate plane (0,1), (2,3), ..."""
    a = np.deg2rad(angle_deg)
    R = np.eye(dim)
    c, s = np.cos(a), np.sin(a)
    for i in range(0, dim - 1, 2):
        R[i : i + 2, i : i + 2] = [[c, -s], [s, c]]
    return R


def make_domains(spec: BenchmarkSpec, seed: int):
    """Two-class Gaussian source; target = the same generator rotated and
    rescaled. Returns (DomainData, x_test, y_test) with squashed features."""
    rng = np.random.default_rng(seed)
    d = spec.dim
    direction = rng.normal(size=d)
    direction /= np.linalg.norm(direction)
    means = np.stack([-direction, direction]) * spec.separation / 2 + spec.offset
    R = rotation_matrix(d, spec.angle_deg) * spec.scale

    def draw(n, target):
        y = rng.integers(0, 2, size=n)
        x = means[y] + rng.normal(size=(n, d))
        if target:
            x = x @ R.T
        return squash(x), y

    x_s, y_s = draw(spec.n_source, False)
    x_l, y_l = draw(spec.n_labeled, True)
    x_u, _ = draw(spec.n_unlabeled, True)
    x_te, y_te = draw(spec.n_test, True)
    return DomainData(x_s, y_s, x_l, y_l, x_u), x_te, y_te


@dataclass
class BenchmarkRow:
    seed: int
    method: str
    source_only_accuracy: float
    adapted_accuracy: float
    kld_before: float
    kld_after: float


def run_benchmark(spec: BenchmarkSpec, out_csv=None) -> list[BenchmarkRow]:
    cfg = AdaptConfig(**spec.config)
    rows = []
    for seed in spec.seeds:
        data, x_te, y_te = make_domains(spec, seed)
        model = train_adaptation(data, cfg, np.random.default_rng(seed + 10_000))
        rows.append(
            BenchmarkRow(
                seed,
                "vae-kld",
                float(np.mean(source_only_predict(x_te, model) == y_te)),
                float(np.mean(adapt_predict(x_te, model) == y_te)),
                float(model.history["kld_before"]),
                float(model.history["kld_after"]),
            )
        )
    if out_csv is not None:
        with open(out_csv, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["seed", "method", "source_only_accuracy", "adapted_accuracy", "kld_before", "kld_after"])
            for r in rows:
                w.writerow([r.seed, r.method, repr(r.source_only_accuracy), repr(r.adapted_accuracy),
                            repr(r.kld_before), repr(r.kld_after)])
    return rows
