"""Small feed-forward networks in float64 numpy, with Adam and a binary checkpoint format.

Parameters live in one flat vector; per-layer weight and bias arrays are views
into it, so optimizers and checkpoints operate on the flat vector directly.
Layout per layer: weights (in, out) row-major, then bias (out,).
"""
from __future__ import annotations

import struct
from typing import Callable, Optional, Sequence

import numpy as np

ACTIVATIONS = ("relu", "tanh", "identity")
_MAGIC = b"LCNN"
_VERSION = 1


class TrainingError(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


def param_count(layer_dims: Sequence[int]) -> int:
    return sum((a + 1) * b for a, b in zip(layer_dims[:-1], layer_dims[1:]))


class Network:
    """Fully connected network; ``activations[i]`` follows layer ``i``."""

    def __init__(self, layer_dims: Sequence[int], activations: Sequence[str],
                 params: Optional[np.ndarray] = None, seed: Optional[int] = None):
        self.layer_dims = [int(d) for d in layer_dims]
        self.activations = list(activations)
        if len(self.layer_dims) < 2 or any(d <= 0 for d in self.layer_dims):
            raise ValueError(f"bad layer_dims {layer_dims}")
        if len(self.activations) != len(self.layer_dims) - 1:
            raise ValueError("need one activation per layer")
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        n = param_count(self.layer_dims)
        if params is None:
            self.params = np.zeros(n)
            self._bind()
            rng = np.random.default_rng(seed)
            for w in self.weights:
                limit = np.sqrt(6.0 / (w.shape[0] + w.shape[1]))
                w[...] = rng.uniform(-limit, limit, size=w.shape)
        else:
            params = np.asarray(params, dtype=np.float64)
            if params.shape != (n,):
                raise ValueError(f"expected {n} parameters, got shape {params.shape}")
            self.params = params.copy()
            self._bind()

    def _bind(self):
        self.weights, self.biases = [], []
        off = 0
        for a, b in zip(self.layer_dims[:-1], self.layer_dims[1:]):
            self.weights.append(self.params[off:off + a * b].reshape(a, b))
            off += a * b
            self.biases.append(self.params[off:off + b])
            off += b

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]

    def copy(self) -> "Network":
        return Network(self.layer_dims, self.activations, self.params)

    def _check_input(self, x) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ValueError(f"input width {x.shape[-1]} does not match network input {self.input_dim}")
        return x, single

    def forward(self, x) -> np.ndarray:
        x, single = self._check_input(x)
        h = x
        for w, b, act in zip(self.weights, self.biases, self.activations):
            h = _apply(h @ w + b, act)
        return h[0] if single else h

    __call__ = forward

    def forward_cache(self, x) -> tuple[np.ndarray, list]:
        x, single = self._check_input(x)
        cache = [x]
        h = x
        for w, b, act in zip(self.weights, self.biases, self.activations):
            h = _apply(h @ w + b, act)
            cache.append(h)
        return (h[0] if single else h), cache

    def backward(self, cache: list, grad_out) -> tuple[np.ndarray, np.ndarray]:
        """Gradients of ``sum(grad_out * output)`` w.r.t. the flat parameters and the input."""
        g = np.asarray(grad_out, dtype=np.float64)
        single = g.ndim == 1
        if single:
            g = g[None, :]
        if g.shape != cache[-1].shape:
            raise ValueError(f"upstream gradient shape {g.shape} != output shape {cache[-1].shape}")
        grad = np.empty_like(self.params)
        off_end = len(self.params)
        for i in range(len(self.weights) - 1, -1, -1):
            w = self.weights[i]
            g = g * _derivative(cache[i + 1], self.activations[i])
            a, b = w.shape
            grad[off_end - b:off_end] = g.sum(axis=0)
            grad[off_end - b - a * b:off_end - b] = (cache[i].T @ g).reshape(-1)
            off_end -= a * b + b
            g = g @ w.T
        return grad, (g[0] if single else g)


def _apply(z: np.ndarray, act: str) -> np.ndarray:
    if act == "relu":
        return np.maximum(z, 0.0)
    if act == "tanh":
        return np.tanh(z)
    return z


def _derivative(out: np.ndarray, act: str) -> np.ndarray:
    # expressed through the activation output, which the cache keeps
    if act == "relu":
        return (out > 0).astype(np.float64)
    if act == "tanh":
        return 1.0 - out * out
    return np.ones_like(out)


def mlp(dims: Sequence[int], hidden: str, seed: Optional[int] = None) -> Network:
    """Network with ``hidden`` activation on inner layers and identity output."""
    return Network(dims, [hidden] * (len(dims) - 2) + ["identity"], seed=seed)


class Adam:
    """Bias-corrected adaptive-moment optimizer operating in place on a flat vector."""

    def __init__(self, n_params: int, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != params.shape or params.shape != self.m.shape:
            raise ValueError("gradient, parameters and optimizer state must have the same length")
        if not np.all(np.isfinite(grad)):
            bad = np.flatnonzero(~np.isfinite(grad))
            raise TrainingError(f"non-finite gradient at {len(bad)} entries (first index {bad[0]}) "
                                f"on optimizer step {self.t + 1}")
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        params -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return params


# ---------------------------------------------------------------- persistence

def save_params(net: Network) -> bytes:
    header = _MAGIC + struct.pack("<HH", _VERSION, len(net.layer_dims))
    header += struct.pack(f"<{len(net.layer_dims)}I", *net.layer_dims)
    header += bytes(ACTIVATIONS.index(a) for a in net.activations)
    header += struct.pack("<Q", len(net.params))
    return header + net.params.astype("<f8").tobytes()


def _parse(blob: bytes) -> tuple[list[int], list[str], np.ndarray, int]:
    try:
        if blob[:4] != _MAGIC:
            raise CheckpointError("not a network checkpoint (bad magic)")
        version, n_dims = struct.unpack_from("<HH", blob, 4)
        if version != _VERSION:
            raise CheckpointError(f"checkpoint format version {version}, expected {_VERSION}")
        off = 8
        dims = list(struct.unpack_from(f"<{n_dims}I", blob, off))
        off += 4 * n_dims
        acts = [ACTIVATIONS[i] for i in blob[off:off + n_dims - 1]]
        if len(acts) != n_dims - 1:
            raise CheckpointError("truncated checkpoint header")
        off += n_dims - 1
        (n,) = struct.unpack_from("<Q", blob, off)
        off += 8
    except (struct.error, IndexError) as exc:
        raise CheckpointError(f"truncated or corrupt checkpoint header: {exc}") from exc
    if n != param_count(dims):
        raise CheckpointError(f"parameter count {n} inconsistent with layer dims {dims}")
    end = off + 8 * n
    if len(blob) < end:
        raise CheckpointError(f"truncated checkpoint: need {end} bytes, have {len(blob)}")
    params = np.frombuffer(blob, dtype="<f8", count=n, offset=off).astype(np.float64)
    return dims, acts, params, end


def load_params(net: Network, blob: bytes) -> Network:
    """Load ``blob`` into ``net`` in place; architecture must match."""
    dims, acts, params, _ = _parse(blob)
    if dims != net.layer_dims or acts != net.activations:
        raise CheckpointError(f"checkpoint architecture {dims}/{acts} does not match "
                              f"{net.layer_dims}/{net.activations}")
    net.params[...] = params
    return net


def network_from_bytes(blob: bytes) -> Network:
    dims, acts, params, _ = _parse(blob)
    return Network(dims, acts, params)


# ---------------------------------------------------------------- gradient checks

def numerical_gradient(fn: Callable[[np.ndarray], float], x: np.ndarray,
                       eps: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``fn`` at ``x``; ``x`` is perturbed in place and restored."""
    grad = np.zeros_like(x)
    flat_x, flat_g = x.reshape(-1), grad.reshape(-1)
    for i in range(flat_x.size):
        old = flat_x[i]
        flat_x[i] = old + eps
        hi = fn(x)
        flat_x[i] = old - eps
        lo = fn(x)
        flat_x[i] = old
        flat_g[i] = (hi - lo) / (2 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``|a - n| / max(|a|, |n|)`` in the Euclidean norm; 0 when both vanish."""
    a, n = np.ravel(analytic), np.ravel(numeric)
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    if scale < 1e-12:
        return 0.0
    return float(np.linalg.norm(a - n) / scale)
