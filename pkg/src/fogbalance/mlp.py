"""Fully connected Q-network with manual backprop, Huber loss and Adam.

Weights are stored as ``(fan_in, fan_out)`` matrices so a batch ``x`` of
shape ``(n, fan_in)`` maps through ``x @ W + b``. Hidden layers use ReLU and
the output head is linear, one unit per action.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = ["MLP", "Adam", "huber", "save_checkpoint", "load_checkpoint", "CheckpointError"]

MAGIC = "FOGBAL-CKPT 1"


class MLP:
    def __init__(self, weights: Sequence[np.ndarray], biases: Sequence[np.ndarray]):
        if len(weights) != len(biases) or not weights:
            raise ValueError("need one bias per weight matrix")
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i}: weight {w.shape} / bias {b.shape} mismatch")
            if i and weights[i - 1].shape[1] != w.shape[0]:
                raise ValueError(f"layer {i}: fan-in {w.shape[0]} != previous fan-out "
                                 f"{weights[i - 1].shape[1]}")
        self.weights = list(weights)
        self.biases = list(biases)

    @classmethod
    def create(cls, sizes: Sequence[int], rng: np.random.Generator | int = 0,
               dtype=np.float32) -> "MLP":
        """He-uniform weights (limit sqrt(6 / fan_in)), zero biases."""
        rng = np.random.default_rng(rng)
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = np.sqrt(6.0 / fan_in)
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype))
            biases.append(np.zeros(fan_out, dtype=dtype))
        return cls(weights, biases)

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def dtype(self):
        return self.weights[0].dtype

    def params(self) -> list[np.ndarray]:
        """Parameter arrays in checkpoint order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.forward_cache(x)[0]

    def forward_cache(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        x = np.asarray(x, dtype=self.dtype)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.shape[1] != self.weights[0].shape[0]:
            raise ValueError(f"input dim {h.shape[1]} != {self.weights[0].shape[0]}")
        acts = [h]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0)
            acts.append(h)
        out = h[0] if single else h
        return out, acts

    def backward(self, acts: list[np.ndarray], action: np.ndarray | int,
                 dloss_dq: np.ndarray | float) -> tuple[list[np.ndarray], list[np.ndarray]]:
        """Gradients of a loss that depends on the chosen action's Q-value only."""
        out = acts[-1]
        n = out.shape[0]
        action = np.broadcast_to(np.asarray(action), (n,))
        g = np.zeros_like(out)
        g[np.arange(n), action] = np.broadcast_to(np.asarray(dloss_dq, dtype=out.dtype), (n,))
        dws = [None] * len(self.weights)
        dbs = [None] * len(self.weights)
        for i in range(len(self.weights) - 1, -1, -1):
            dws[i] = acts[i].T @ g
            dbs[i] = g.sum(axis=0)
            if i:
                g = (g @ self.weights[i].T) * (acts[i] > 0)
        return dws, dbs

    def copy(self) -> "MLP":
        return MLP([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def load_from(self, other: "MLP") -> None:
        for dst, src in zip(self.params(), other.params()):
            dst[...] = src

    def same_as(self, other: "MLP") -> bool:
        """Bitwise parameter equality."""
        return all(a.shape == b.shape and a.tobytes() == b.tobytes()
                   for a, b in zip(self.params(), other.params()))

    def all_finite(self) -> bool:
        return all(np.isfinite(p).all() for p in self.params())


def huber(pred, target, delta: float = 1.0):
    """Huber loss and its derivative with respect to ``pred``."""
    e = np.asarray(pred) - np.asarray(target)
    a = np.abs(e)
    loss = np.where(a <= delta, 0.5 * e * e, delta * (a - 0.5 * delta))
    grad = np.clip(e, -delta, delta)
    if loss.ndim == 0:
        return float(loss), float(grad)
    return loss, grad


class Adam:
    """Bias-corrected Adam acting in place on a list of arrays."""

    def __init__(self, params: Sequence[np.ndarray], lr: float = 2.5e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, nets: dict[str, MLP], meta: dict | None = None) -> None:
    """Text header then little-endian float32 parameters.

    Header lines are ``key: value`` between the magic line and ``END``.
    ``networks`` lists the stored nets in order; each net contributes
    W0 (row-major, fan_in x fan_out), b0, W1, b1, ... as float32.
    """
    names = list(nets)
    sizes = nets[names[0]].sizes
    for name in names:
        if nets[name].sizes != sizes:
            raise CheckpointError("all networks in a checkpoint share one architecture")
    header = {"layer_sizes": ",".join(map(str, sizes)), "networks": ",".join(names),
              "dtype": "float32-le"}
    for k, v in (meta or {}).items():
        if k in header:
            raise CheckpointError(f"reserved header key {k!r}")
        header[k] = v
    lines = [MAGIC] + [f"{k}: {v}" for k, v in header.items()] + ["END"]
    with Path(path).open("wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        for name in names:
            for p in nets[name].params():
                fh.write(np.ascontiguousarray(p, dtype="<f4").tobytes())


def load_checkpoint(path) -> tuple[dict[str, MLP], dict[str, str]]:
    data = Path(path).read_bytes()
    end = data.find(b"\nEND\n")
    if not data.startswith(MAGIC.encode()) or end < 0:
        raise CheckpointError(f"{path}: not a checkpoint")
    header = {}
    for line in data[:end].decode("ascii").splitlines()[1:]:
        key, _, value = line.partition(": ")
        header[key] = value
    body = data[end + len(b"\nEND\n"):]
    sizes = [int(s) for s in header["layer_sizes"].split(",")]
    names = header["networks"].split(",")
    per_net = sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))
    if len(body) != 4 * per_net * len(names):
        raise CheckpointError(f"{path}: expected {4 * per_net * len(names)} payload bytes, "
                              f"found {len(body)}")
    flat = np.frombuffer(body, dtype="<f4").astype(np.float32)
    nets, pos = {}, 0
    for name in names:
        ws, bs = [], []
        for a, b in zip(sizes[:-1], sizes[1:]):
            ws.append(flat[pos:pos + a * b].reshape(a, b).copy())
            pos += a * b
            bs.append(flat[pos:pos + b].copy())
            pos += b
        nets[name] = MLP(ws, bs)
    meta = {k: v for k, v in header.items() if k not in ("layer_sizes", "networks", "dtype")}
    return nets, meta
