"""Small numpy layers with hand-written backward passes.

Every layer caches what it needs in ``forward`` and returns the input
gradient from ``backward``; parameter gradients land in ``grads`` under the
same keys as ``params``. Float64 throughout so finite-difference checks are
meaningful.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Layer:
    def __init__(self):
        self.params: dict = {}
        self.grads: dict = {}

    def forward(self, x):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, scale: float | None = None):
        super().__init__()
        s = np.sqrt(2.0 / n_in) if scale is None else scale
        self.params = {"W": rng.normal(scale=s, size=(n_in, n_out)), "b": np.zeros(n_out)}

    def forward(self, x):
        self.x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dy):
        self.grads["W"] = self.x.T @ dy
        self.grads["b"] = dy.sum(axis=0)
        return dy @ self.params["W"].T


class ReLU(Layer):
    def forward(self, x):
        self.mask = x > 0
        return np.where(self.mask, x, 0.0)

    def backward(self, dy):
        return dy * self.mask


class Sigmoid(Layer):
    def forward(self, x):
        self.y = sigmoid(x)
        return self.y

    def backward(self, dy):
        return dy * self.y * (1 - self.y)


class Softplus(Layer):
    def forward(self, x):
        self.x = x
        return softplus(x)

    def backward(self, dy):
        return dy * sigmoid(self.x)


class Flatten(Layer):
    def forward(self, x):
        self.shape = x.shape
        return x.reshape(len(x), -1)

    def backward(self, dy):
        return dy.reshape(self.shape)


class Conv2D(Layer):
    """Stride-1 convolution (cross-correlation) with zero padding ``pad``.

    Input (n, c_in, h, w), kernels (c_out, c_in, k, k).
    """

    def __init__(self, c_in: int, c_out: int, k: int, rng: np.random.Generator, pad: int | None = None):
        super().__init__()
        self.k = k
        self.pad = k // 2 if pad is None else pad
        s = np.sqrt(2.0 / (c_in * k * k))
        self.params = {"W": rng.normal(scale=s, size=(c_out, c_in, k, k)), "b": np.zeros(c_out)}

    def forward(self, x):
        p = self.pad
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        self.xshape = x.shape
        # (n, c_in, h_out, w_out, k, k)
        self.cols = sliding_window_view(xp, (self.k, self.k), axis=(2, 3))
        return np.einsum("nchwij,ocij->nohw", self.cols, self.params["W"], optimize=True) + self.params["b"][
            None, :, None, None
        ]

    def backward(self, dy):
        W = self.params["W"]
        self.grads["W"] = np.einsum("nohw,nchwij->ocij", dy, self.cols, optimize=True)
        self.grads["b"] = dy.sum(axis=(0, 2, 3))
        # full correlation of dy with the flipped kernels
        k, p = self.k, self.pad
        q = k - 1 - p
        dyp = np.pad(dy, ((0, 0), (0, 0), (q, q), (q, q)))
        win = sliding_window_view(dyp, (k, k), axis=(2, 3))
        dx = np.einsum("nohwij,ocij->nchw", win, W[:, :, ::-1, ::-1], optimize=True)
        return dx[:, :, : self.xshape[2], : self.xshape[3]]


class MaxPool2D(Layer):
    """Non-overlapping ``size`` x ``size`` max pooling; trailing rows/columns
    that do not fill a window are dropped. The gradient goes to the first
    maximum of each window (row-major)."""

    def __init__(self, size: int = 2):
        super().__init__()
        self.size = size

    def forward(self, x):
        s = self.size
        n, c, h, w = x.shape
        ho, wo = h // s, w // s
        self.xshape = x.shape
        blocks = x[:, :, : ho * s, : wo * s].reshape(n, c, ho, s, wo, s).transpose(0, 1, 2, 4, 3, 5)
        blocks = blocks.reshape(n, c, ho, wo, s * s)
        self.arg = np.argmax(blocks, axis=-1)
        return np.take_along_axis(blocks, self.arg[..., None], axis=-1)[..., 0]

    def backward(self, dy):
        s = self.size
        n, c, h, w = self.xshape
        ho, wo = dy.shape[2], dy.shape[3]
        blocks = np.zeros((n, c, ho, wo, s * s))
        np.put_along_axis(blocks, self.arg[..., None], dy[..., None], axis=-1)
        blocks = blocks.reshape(n, c, ho, wo, s, s).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho * s, wo * s)
        dx = np.zeros(self.xshape)
        dx[:, :, : ho * s, : wo * s] = blocks
        return dx


class Sequential(Layer):
    def __init__(self, layers: list):
        super().__init__()
        self.layers = layers

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def named_params(self):
        """(name, array) pairs, e.g. ``"0.W"``; arrays are the live parameters."""
        for k, layer in enumerate(self.layers):
            for name, arr in layer.params.items():
                yield f"{k}.{name}", arr

    def named_grads(self):
        for k, layer in enumerate(self.layers):
            for name in layer.params:
                yield f"{k}.{name}", layer.grads[name]

    def state(self) -> dict:
        return {name: arr.copy() for name, arr in self.named_params()}

    def load_state(self, state: dict) -> None:
        for name, arr in self.named_params():
            if name not in state:
                raise ValueError(f"missing parameter {name}")
            src = np.asarray(state[name], dtype=float)
            if src.shape != arr.shape:
                raise ValueError(f"shape mismatch for {name}: {src.shape} vs {arr.shape}")
            arr[...] = src


def sigmoid(x):
    return np.where(x >= 0, 1 / (1 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1 + np.exp(-np.abs(x))))


def softplus(x):
    return np.maximum(x, 0) + np.log1p(np.exp(-np.abs(x)))


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def cross_entropy(logits, y):
    """Mean categorical cross-entropy of integer labels ``y`` and its logit gradient."""
    y = np.asarray(y, dtype=np.int64)
    n = len(y)
    lp = log_softmax(logits)
    loss = -lp[np.arange(n), y].mean()
    g = np.exp(lp)
    g[np.arange(n), y] -= 1
    return float(loss), g / n


class SGD:
    """Plain SGD with momentum: v <- m v - lr g; p <- p + v."""

    def __init__(self, lr: float = 0.01, momentum: float = 0.9):
        self.lr = lr
        self.momentum = momentum
        self.v: dict = {}

    def step(self, params, grads) -> None:
        for (name, p), (_, g) in zip(params, grads):
            v = self.v.get(name)
            if v is None:
                v = np.zeros_like(p)
            v = self.momentum * v - self.lr * g
            self.v[name] = v
            p += v


class Adam:
    def __init__(self, lr: float = 1e-3, b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m: dict = {}
        self.s: dict = {}
        self.t = 0

    def step(self, params, grads) -> None:
        self.t += 1
        for (name, p), (_, g) in zip(params, grads):
            m = self.b1 * self.m.get(name, 0.0) + (1 - self.b1) * g
            s = self.b2 * self.s.get(name, 0.0) + (1 - self.b2) * g * g
            self.m[name], self.s[name] = m, s
            mh = m / (1 - self.b1**self.t)
            sh = s / (1 - self.b2**self.t)
            p -= self.lr * mh / (np.sqrt(sh) + self.eps)


def numeric_grad(f, arr: np.ndarray, idx, h: float = 1e-5) -> float:
    """Central difference of scalar ``f()`` w.r.t. ``arr[idx]`` (perturbed in place)."""
    old = arr[idx]
    arr[idx] = old + h
    fp = f()
    arr[idx] = old - h
    fm = f()
    arr[idx] = old
    return (fp - fm) / (2 * h)


def relative_error(a, b) -> float:
    a, b = float(a), float(b)
    den = max(abs(a), abs(b))
    return 0.0 if den == 0 else abs(a - b) / den
