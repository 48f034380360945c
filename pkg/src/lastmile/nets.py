"""Minimal dense-network kernel: forward, backward, Adam, replay, checkpoints.

Deliberately free of autograd frameworks so the analytic gradients can be
checked against central finite differences (see `gradient_check`). Weights are
Glorot-uniform initialized, biases zero; hidden layers use tanh or relu, the
output layer is always linear; training minimizes mean squared error over all
output elements with one Adam step per batch.
"""
from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass

import numpy as np

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

_ACTIVATIONS = ("tanh", "relu")


def _act(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "tanh":
        return np.tanh(z)
    return np.maximum(z, 0.0)


def _act_grad(z: np.ndarray, a: np.ndarray, kind: str) -> np.ndarray:
    if kind == "tanh":
        return 1.0 - a * a
    return (z > 0.0).astype(z.dtype)


class DenseNet:
    """Fully connected net defined by its layer sizes, e.g. [19, 76, 38, 5]."""

    def __init__(self, layer_sizes: list[int], activation: str = "tanh", rng: np.random.Generator | None = None):
        if len(layer_sizes) < 2 or any(n <= 0 for n in layer_sizes):
            raise ValueError(f"layer_sizes needs >= 2 positive entries, got {layer_sizes}")
        if activation not in _ACTIVATIONS:
            raise ValueError(f"activation must be one of {_ACTIVATIONS}, got {activation!r}")
        rng = rng or np.random.default_rng()
        self.layer_sizes = list(layer_sizes)
        self.activation = activation
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))
        self._adam_step = 0
        self._m = [np.zeros_like(p) for p in self._params()]
        self._v = [np.zeros_like(p) for p in self._params()]

    # ----- forward / backward -----

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Network output; accepts a single input vector or a (batch, in) matrix."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        out = self._forward_cached(np.atleast_2d(x))[0][-1]
        return out[0] if single else out

    def _forward_cached(self, x: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
        activations = [x]
        pre = []
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            pre.append(z)
            h = z if i == last else _act(z, self.activation)
            activations.append(h)
        return activations, pre

    def loss(self, inputs: np.ndarray, targets: np.ndarray) -> float:
        out = self.forward(np.atleast_2d(np.asarray(inputs, dtype=float)))
        diff = out - np.atleast_2d(np.asarray(targets, dtype=float))
        return float(np.mean(diff * diff))

    def gradients(self, inputs: np.ndarray, targets: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray], float]:
        """Analytic MSE gradients for every weight and bias; returns loss too."""
        x = np.atleast_2d(np.asarray(inputs, dtype=float))
        y = np.atleast_2d(np.asarray(targets, dtype=float))
        activations, pre = self._forward_cached(x)
        out = activations[-1]
        diff = out - y
        loss = float(np.mean(diff * diff))

        grad_w = [np.zeros_like(w) for w in self.weights]
        grad_b = [np.zeros_like(b) for b in self.biases]
        delta = 2.0 * diff / diff.size  # d(mean square)/d(out)
        for i in range(len(self.weights) - 1, -1, -1):
            grad_w[i] = activations[i].T @ delta
            grad_b[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * _act_grad(pre[i - 1], activations[i], self.activation)
        return grad_w, grad_b, loss

    # ----- training -----

    def train_batch(self, inputs: np.ndarray, targets: np.ndarray, lr: float = 1e-3) -> float:
        """One Adam step on the batch MSE; returns the pre-step loss."""
        grad_w, grad_b, loss = self.gradients(inputs, targets)
        self._adam_update(grad_w + grad_b, lr)
        return loss

    def _params(self) -> list[np.ndarray]:
        return self.weights + self.biases

    def _adam_update(self, grads: list[np.ndarray], lr: float) -> None:
        self._adam_step += 1
        t = self._adam_step
        for p, g, m, v in zip(self._params(), grads, self._m, self._v):
            m *= ADAM_BETA1
            m += (1 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1 - ADAM_BETA2) * g * g
            m_hat = m / (1 - ADAM_BETA1**t)
            v_hat = v / (1 - ADAM_BETA2**t)
            p -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)

    # ----- persistence / identity -----

    def params_digest(self) -> str:
        """SHA-256 over raw parameter bytes; equal iff parameters are bit-equal."""
        h = hashlib.sha256()
        for p in self._params():
            h.update(str(p.shape).encode())
            h.update(np.ascontiguousarray(p, dtype=np.float64).tobytes())
        return h.hexdigest()

    def save(self, path: str) -> None:
        tensors = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            tensors[f"W{i}"] = w
            tensors[f"b{i}"] = b
        meta = {
            "kind": "dense",
            "activation": self.activation,
            "layer_sizes": ",".join(str(n) for n in self.layer_sizes),
        }
        save_tensors(path, tensors, meta)

    @classmethod
    def load(cls, path: str) -> "DenseNet":
        tensors, meta = load_tensors(path)
        sizes = [int(s) for s in meta["layer_sizes"].split(",")]
        net = cls(sizes, activation=meta["activation"], rng=np.random.default_rng(0))
        for i in range(len(net.weights)):
            net.weights[i] = tensors[f"W{i}"]
            net.biases[i] = tensors[f"b{i}"]
        return net


def gradient_check(net: DenseNet, inputs: np.ndarray, targets: np.ndarray, step: float = 1e-5) -> float:
    """Max relative error between analytic and central-finite-difference grads.

    The relative error is |ga - gfd| / max(|ga| + |gfd|, 1e-8), maximized over
    every parameter; healthy implementations land far below 1e-4.
    """
    grad_w, grad_b, _ = net.gradients(inputs, targets)
    analytic = grad_w + grad_b
    worst = 0.0
    for p, g in zip(net._params(), analytic):
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            up = net.loss(inputs, targets)
            flat[i] = keep - step
            down = net.loss(inputs, targets)
            flat[i] = keep
            fd = (up - down) / (2 * step)
            err = abs(gflat[i] - fd) / max(abs(gflat[i]) + abs(fd), 1e-8)
            worst = max(worst, err)
    return worst


class ReplayBuffer:
    """Fixed-capacity FIFO transition store with uniform sampling."""

    def __init__(self, capacity: int = 100_000):
        if capacity <= 0:
            raise ValueError(f"capacity must be positive, got {capacity}")
        self.capacity = capacity
        self._items: list = []
        self._next = 0  # overwrite cursor once full

    def push(self, item) -> None:
        if len(self._items) < self.capacity:
            self._items.append(item)
        else:
            self._items[self._next] = item
        self._next = (self._next + 1) % self.capacity

    def sample(self, rng: np.random.Generator, n: int = 512) -> list:
        """Uniform sample of n items without replacement (all, shuffled, if fewer)."""
        k = min(n, len(self._items))
        idx = rng.choice(len(self._items), size=k, replace=False)
        return [self._items[i] for i in idx]

    def __len__(self) -> int:
        return len(self._items)


# ----- tensor file format -----
#
# Text header, then raw little-endian float64 data:
#   lastmile-tensors v1
#   meta <key>=<value>
#   tensor <name> <dim0>x<dim1>...
#   data
#   <blob>
# Byte-deterministic for identical tensors (no container metadata), which the
# frozen-checkpoint checks rely on.

_MAGIC = b"lastmile-tensors v1\n"


def save_tensors(path: str, tensors: dict[str, np.ndarray], meta: dict[str, str]) -> None:
    buf = io.BytesIO()
    buf.write(_MAGIC)
    for key in sorted(meta):
        value = str(meta[key])
        if "\n" in key or "\n" in value or "=" in key:
            raise ValueError(f"bad meta entry {key!r}")
        buf.write(f"meta {key}={value}\n".encode())
    blob = io.BytesIO()
    for name, tensor in tensors.items():
        arr = np.asarray(tensor, dtype="<f8", order="C")  # keeps 0-d shape
        dims = "x".join(str(d) for d in arr.shape) or "scalar"
        buf.write(f"tensor {name} {dims}\n".encode())
        blob.write(arr.tobytes())
    buf.write(b"data\n")
    buf.write(blob.getvalue())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_tensors(path: str) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(_MAGIC):
        raise ValueError(f"{path}: not a lastmile tensor file")
    header_end = raw.index(b"data\n", len(_MAGIC))
    header = raw[len(_MAGIC):header_end].decode().splitlines()
    blob = raw[header_end + len(b"data\n"):]

    meta: dict[str, str] = {}
    shapes: list[tuple[str, tuple[int, ...]]] = []
    for line in header:
        if line.startswith("meta "):
            key, value = line[len("meta "):].split("=", 1)
            meta[key] = value
        elif line.startswith("tensor "):
            _, name, dims = line.split(" ", 2)
            shape = () if dims == "scalar" else tuple(int(d) for d in dims.split("x"))
            shapes.append((name, shape))
        else:
            raise ValueError(f"{path}: bad header line {line!r}")

    tensors: dict[str, np.ndarray] = {}
    offset = 0
    for name, shape in shapes:
        count = int(np.prod(shape)) if shape else 1
        end = offset + count * 8
        tensors[name] = np.frombuffer(blob[offset:end], dtype="<f8").reshape(shape).copy()
        offset = end
    if offset != len(blob):
        raise ValueError(f"{path}: trailing bytes in tensor blob")
    return tensors, meta


# ----- shared TD target construction (used by the order-assignment DQN) -----

@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray | None = None
    terminal: bool = True


def td_targets(net: DenseNet, batch: list[Transition], discount: float) -> tuple[np.ndarray, np.ndarray]:
    """Regression targets for Q-learning: r, or r + discount * max Q(next)."""
    states = np.stack([tr.state for tr in batch])
    targets = net.forward(states).copy()
    bootstrap = [i for i, tr in enumerate(batch) if not tr.terminal]
    if bootstrap:
        nxt = np.stack([batch[i].next_state for i in bootstrap])
        future = net.forward(nxt).max(axis=1)
        for j, i in enumerate(bootstrap):
            targets[i, batch[i].action] = batch[i].reward + discount * future[j]
    for i, tr in enumerate(batch):
        if tr.terminal:
            targets[i, tr.action] = tr.reward
    return states, targets
