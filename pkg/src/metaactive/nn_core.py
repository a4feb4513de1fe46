"""
Minimal reverse-mode automatic differentiation on top of numpy.

A :class:`Tensor` wraps a float64 array and records the operation that
produced it. Calling :meth:`Tensor.backward` on a scalar walks the recorded
graph in reverse topological order and accumulates ``.grad`` on every tensor
that requires it.

Only the building blocks needed by the selector / predictor stack are
provided: affine maps, pointwise nonlinearities, a fused LSTM cell, a
bidirectional scan, softmax with temperature and a few reductions.
"""

from __future__ import annotations

import json
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np


class DimensionError(ValueError):
    """Raised when operand shapes are inconsistent."""


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    # sum out broadcast dimensions so that grad matches `shape`
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_prev", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, _prev: tuple = (), name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._prev = _prev
        self._backward: Callable[[np.ndarray], None] | None = None
        self.name = name

    # -- bookkeeping -------------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __len__(self) -> int:
        return len(self.data)

    def __float__(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor({self.data!r}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _accum(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def backward(self, grad=None) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``.grad``."""
        if grad is None:
            if self.data.size != 1:
                raise DimensionError("backward() without a seed needs a scalar tensor")
            grad = np.ones_like(self.data)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._prev:
                if id(p) not in seen:
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node._accum(g)
                continue
            for parent, pg in node._backward(g):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # -- operators ---------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, reciprocal(other))
        return mul(self, 1.0 / np.asarray(other, dtype=np.float64))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def sum(self, axis=None) -> "Tensor":
        return tsum(self, axis)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


_GRAD_ENABLED = True


class no_grad:
    """Context manager that stops graph recording (forward-only evaluation)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev


def _node(data, parents: Sequence[Tensor], backward) -> Tensor:
    parents = tuple(parents)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out = Tensor(data, requires_grad=True, _prev=parents)
        out._backward = backward
        return out
    return Tensor(data)


# -- elementary ops ---------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _node(a.data + b.data, (a, b),
                 lambda g: ((a, _unbroadcast(g, sa)), (b, _unbroadcast(g, sb))))


def neg(a: Tensor) -> Tensor:
    return _node(-a.data, (a,), lambda g: ((a, -g),))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _node(a.data * b.data, (a, b),
                 lambda g: ((a, _unbroadcast(g * b.data, sa)), (b, _unbroadcast(g * a.data, sb))))


def reciprocal(a: Tensor) -> Tensor:
    out = 1.0 / a.data
    return _node(out, (a,), lambda g: ((a, -g * out * out),))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul: {a.shape} @ {b.shape}")

    def backward(g):
        if a.ndim == 1 and b.ndim == 1:
            return (a, g * b.data), (b, g * a.data)
        if a.ndim == 1:
            return (a, b.data @ g), (b, np.outer(a.data, g))
        if b.ndim == 1:
            return (a, np.outer(g, b.data)), (b, a.data.T @ g)
        return (a, g @ b.data.T), (b, a.data.T @ g)

    return _node(a.data @ b.data, (a, b), backward)


def transpose(a: Tensor) -> Tensor:
    return _node(a.data.T, (a,), lambda g: ((a, g.T),))


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    return _node(a.data.reshape(shape), (a,), lambda g: ((a, g.reshape(old)),))


def take(a: Tensor, idx) -> Tensor:
    """Basic or fancy indexing; repeated fancy indices accumulate gradient."""
    if isinstance(idx, Tensor):
        idx = idx.data.astype(int)

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return ((a, full),)

    return _node(a.data[idx], (a,), backward)


def tsum(a: Tensor, axis=None) -> Tensor:
    shape = a.shape

    def backward(g):
        if axis is None:
            return ((a, np.broadcast_to(g, shape).copy()),)
        return ((a, np.broadcast_to(np.expand_dims(g, axis), shape).copy()),)

    return _node(a.data.sum(axis=axis), (a,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(zip(tensors, np.split(g, cuts, axis=axis)))

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]

    def backward(g):
        return tuple((t, np.take(g, i, axis=axis)) for i, t in enumerate(tensors))

    return _node(np.stack([t.data for t in tensors], axis=axis), tensors, backward)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _node(out, (a,), lambda g: ((a, g * (1.0 - out * out)),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid(a.data)
    return _node(out, (a,), lambda g: ((a, g * out * (1.0 - out)),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _node(a.data * mask, (a,), lambda g: ((a, g * mask),))


def identity(a: Tensor) -> Tensor:
    return a


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _node(out, (a,), lambda g: ((a, g * out),))


def log(a: Tensor) -> Tensor:
    return _node(np.log(a.data), (a,), lambda g: ((a, g / a.data),))


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values; gradient is zero where the clamp is active."""
    inside = (a.data >= lo) & (a.data <= hi)
    return _node(np.clip(a.data, lo, hi), (a,), lambda g: ((a, g * inside),))


ACTIVATIONS = {"tanh": tanh, "sigmoid": sigmoid, "relu": relu, "linear": identity}


# -- softmax family ----------------------------------------------------------

def softmax(z, temperature: float = 1.0, axis: int = -1) -> Tensor:
    """exp(t*z_i) / sum_j exp(t*z_j); larger temperature -> sharper output."""
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    z = as_tensor(z)
    s = temperature * z.data
    s = s - s.max(axis=axis, keepdims=True)
    e = np.exp(s)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return ((z, temperature * out * (g - (g * out).sum(axis=axis, keepdims=True))),)

    return _node(out, (z,), backward)


def log_softmax(z, axis: int = -1) -> Tensor:
    z = as_tensor(z)
    s = z.data - z.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(s).sum(axis=axis, keepdims=True))
    out = s - lse
    p = np.exp(out)

    def backward(g):
        return ((z, g - p * g.sum(axis=axis, keepdims=True)),)

    return _node(out, (z,), backward)


def logsumexp(z, axis: int = -1) -> Tensor:
    z = as_tensor(z)
    m = z.data.max(axis=axis, keepdims=True)
    e = np.exp(z.data - m)
    se = e.sum(axis=axis, keepdims=True)
    out = (np.log(se) + m).squeeze(axis)
    p = e / se

    def backward(g):
        return ((z, np.expand_dims(g, axis) * p),)

    return _node(out, (z,), backward)


# -- geometry ----------------------------------------------------------------

def normalize_rows(a: Tensor) -> Tensor:
    """Scale each row to unit L2 norm; zero rows stay zero with zero gradient."""
    data = a.data
    norms = np.sqrt((data * data).sum(axis=-1, keepdims=True))
    safe = norms > 0
    inv = np.where(safe, 1.0 / np.where(safe, norms, 1.0), 0.0)
    out = data * inv

    def backward(g):
        # d(x/|x|) = (g - u (u.g)) / |x|
        return ((a, (g - out * (g * out).sum(axis=-1, keepdims=True)) * inv),)

    return _node(out, (a,), backward)


def pairwise_distance(a: Tensor, b: Tensor) -> Tensor:
    """Euclidean distances between rows of ``a`` (m, d) and rows of ``b`` (n, d).

    Coincident points get the zero subgradient.
    """
    if a.shape[-1] != b.shape[-1]:
        raise DimensionError(f"pairwise_distance: {a.shape} vs {b.shape}")
    diff = a.data[:, None, :] - b.data[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=-1))
    nz = dist > 0
    inv = np.where(nz, 1.0 / np.where(nz, dist, 1.0), 0.0)

    def backward(g):
        w = (g * inv)[:, :, None] * diff
        return (a, w.sum(axis=1)), (b, -w.sum(axis=0))

    return _node(dist, (a, b), backward)


# -- parameters --------------------------------------------------------------

class ParamStore:
    """Ordered collection of named parameter tensors."""

    def __init__(self):
        self._params: "OrderedDict[str, Tensor]" = OrderedDict()

    def add(self, name: str, value) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self):
        return iter(self._params.items())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    @property
    def size(self) -> int:
        return int(sum(t.data.size for t in self._params.values()))

    def shapes(self) -> dict[str, list[int]]:
        return {k: list(t.shape) for k, t in self._params.items()}

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def flatten(self) -> np.ndarray:
        if not self._params:
            return np.zeros(0)
        return np.concatenate([t.data.ravel() for t in self._params.values()])

    def restore(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.size:
            raise DimensionError(f"restore: expected {self.size} values, got {flat.size}")
        pos = 0
        for t in self._params.values():
            n = t.data.size
            t.data = flat[pos:pos + n].reshape(t.shape).copy()
            pos += n

    def grads(self) -> dict[str, np.ndarray]:
        return {k: (np.zeros_like(t.data) if t.grad is None else t.grad.copy())
                for k, t in self._params.items()}

    def flat_grad(self) -> np.ndarray:
        if not self._params:
            return np.zeros(0)
        return np.concatenate([(np.zeros(t.data.size) if t.grad is None else t.grad.ravel())
                               for t in self._params.values()])

    def copy(self) -> "ParamStore":
        new = ParamStore()
        for k, t in self._params.items():
            new.add(k, t.data.copy())
        return new

    def all_finite(self) -> bool:
        return all(np.isfinite(t.data).all() for t in self._params.values())


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


# -- layers ------------------------------------------------------------------

def linear_forward(x, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """W x + b for a vector x, or row-wise x W^T + b for a matrix of rows."""
    x = as_tensor(x)
    if x.shape[-1] != weight.shape[1]:
        raise DimensionError(f"linear: input dim {x.shape[-1]} != weight in-dim {weight.shape[1]}")
    out = matmul(x, transpose(weight)) if x.ndim == 2 else matmul(weight, x)
    return out if bias is None else add(out, bias)


def add_linear(store: ParamStore, prefix: str, n_in: int, n_out: int, rng: np.random.Generator) -> None:
    store.add(f"{prefix}.W", uniform_init(rng, (n_out, n_in), n_in))
    store.add(f"{prefix}.b", uniform_init(rng, (n_out,), n_in))


@dataclass(frozen=True)
class MlpSpec:
    """Layer sizes ``[K, h1, ..., L]`` and the hidden/output activations."""

    sizes: tuple
    activation: str = "tanh"
    output_activation: str = "linear"

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]


def init_mlp(store: ParamStore, prefix: str, spec: MlpSpec, rng: np.random.Generator) -> None:
    for i, (a, b) in enumerate(zip(spec.sizes[:-1], spec.sizes[1:])):
        add_linear(store, f"{prefix}.{i}", a, b, rng)


def mlp_embed(x, store: ParamStore, prefix: str, spec: MlpSpec) -> Tensor:
    """Embed a vector (K,) or a batch of rows (n, K) into R^L."""
    x = as_tensor(x)
    if x.shape[-1] != spec.in_dim:
        raise DimensionError(f"mlp_embed: expected {spec.in_dim} features, got {x.shape[-1]}")
    h = x
    n_layers = len(spec.sizes) - 1
    for i in range(n_layers):
        h = linear_forward(h, store[f"{prefix}.{i}.W"], store[f"{prefix}.{i}.b"])
        act = spec.output_activation if i == n_layers - 1 else spec.activation
        h = ACTIVATIONS[act](h)
    return h


@dataclass
class LstmCellParams:
    """Gate weights stacked in (input, forget, output, candidate) order."""

    w_x: Tensor  # (4H, D)
    w_h: Tensor  # (4H, H)
    b: Tensor  # (4H,)

    def __post_init__(self):
        four_h, d = self.w_x.shape
        if four_h % 4 or self.w_h.shape != (four_h, four_h // 4) or self.b.shape != (four_h,):
            raise DimensionError(
                f"inconsistent LSTM shapes: w_x {self.w_x.shape}, w_h {self.w_h.shape}, b {self.b.shape}")

    @property
    def input_dim(self) -> int:
        return self.w_x.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w_h.shape[1]

    @classmethod
    def from_store(cls, store: ParamStore, prefix: str) -> "LstmCellParams":
        return cls(store[f"{prefix}.w_x"], store[f"{prefix}.w_h"], store[f"{prefix}.b"])


def init_lstm(store: ParamStore, prefix: str, input_dim: int, hidden_dim: int,
              rng: np.random.Generator) -> None:
    store.add(f"{prefix}.w_x", uniform_init(rng, (4 * hidden_dim, input_dim), hidden_dim))
    store.add(f"{prefix}.w_h", uniform_init(rng, (4 * hidden_dim, hidden_dim), hidden_dim))
    store.add(f"{prefix}.b", uniform_init(rng, (4 * hidden_dim,), hidden_dim))


def _lstm_gates(z: Tensor, c_prev: Tensor) -> Tensor:
    # fused gate nonlinearity; returns concat(h, c)
    H = c_prev.shape[0]
    zd = z.data
    i = _sigmoid(zd[:H])
    f = _sigmoid(zd[H:2 * H])
    o = _sigmoid(zd[2 * H:3 * H])
    gg = np.tanh(zd[3 * H:])
    c = f * c_prev.data + i * gg
    tc = np.tanh(c)
    h = o * tc

    def backward(g):
        gh, gc = g[:H], g[H:]
        gc = gc + gh * o * (1.0 - tc * tc)
        dz = np.concatenate([
            gc * gg * i * (1.0 - i),
            gc * c_prev.data * f * (1.0 - f),
            gh * tc * o * (1.0 - o),
            gc * i * (1.0 - gg * gg),
        ])
        return (z, dz), (c_prev, gc * f)

    return _node(np.concatenate([h, c]), (z, c_prev), backward)


def lstm_cell_step(x, h_prev, c_prev, p: LstmCellParams, x_proj: Tensor | None = None):
    """One LSTM step.

    ``x_proj`` may carry a precomputed ``W_x x + b`` so a scan can project
    the whole sequence with one matmul.
    """
    h_prev, c_prev = as_tensor(h_prev), as_tensor(c_prev)
    H = p.hidden_dim
    if h_prev.shape != (H,) or c_prev.shape != (H,):
        raise DimensionError(f"lstm state shapes {h_prev.shape}, {c_prev.shape}; expected ({H},)")
    if x_proj is None:
        x = as_tensor(x)
        if x.shape != (p.input_dim,):
            raise DimensionError(f"lstm input shape {x.shape}; expected ({p.input_dim},)")
        x_proj = add(matmul(p.w_x, x), p.b)
    z = add(x_proj, matmul(p.w_h, h_prev))
    hc = _lstm_gates(z, c_prev)
    return take(hc, slice(0, H)), take(hc, slice(H, 2 * H))


def _run_direction(proj: Tensor, order: Iterable[int], p: LstmCellParams) -> dict[int, Tensor]:
    H = p.hidden_dim
    h = Tensor(np.zeros(H))
    c = Tensor(np.zeros(H))
    outs = {}
    for t in order:
        h, c = lstm_cell_step(None, h, c, p, x_proj=take(proj, t))
        outs[t] = h
    return outs


def bidirectional_scan(seq, fwd: LstmCellParams, bwd: LstmCellParams) -> Tensor:
    """Run a forward and a backward LSTM over ``seq`` (n, D).

    Row i of the result is concat(forward hidden at i, backward hidden at i).
    """
    if isinstance(seq, (list, tuple)):
        if not seq:
            raise ValueError("bidirectional_scan: empty sequence")
        seq = stack(seq)
    seq = as_tensor(seq)
    if seq.ndim != 2 or seq.shape[0] == 0:
        raise ValueError(f"bidirectional_scan: need a non-empty (n, D) sequence, got {seq.shape}")
    if seq.shape[1] != fwd.input_dim or seq.shape[1] != bwd.input_dim:
        raise DimensionError(f"sequence dim {seq.shape[1]} vs LSTM input dims {fwd.input_dim}/{bwd.input_dim}")
    n = seq.shape[0]
    proj_f = add(matmul(seq, transpose(fwd.w_x)), fwd.b)
    proj_b = add(matmul(seq, transpose(bwd.w_x)), bwd.b)
    hf = _run_direction(proj_f, range(n), fwd)
    hb = _run_direction(proj_b, range(n - 1, -1, -1), bwd)
    return stack([concat([hf[t], hb[t]]) for t in range(n)])


# -- losses ------------------------------------------------------------------

PROB_FLOOR = 1e-12


def cross_entropy(probs: Tensor, targets) -> Tensor:
    """Summed -log p[target] over rows, with probabilities clamped to [1e-12, 1-1e-12]."""
    targets = np.asarray(targets, dtype=int)
    if probs.ndim == 1:
        picked = take(probs, int(targets))
    else:
        picked = take(probs, (np.arange(len(targets)), targets))
    return neg(tsum(log(clip(picked, PROB_FLOOR, 1.0 - PROB_FLOOR))))


# -- gradient checking ---------------------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_error: float
    tol: float
    worst: str = ""
    per_input: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_rel_error) and self.max_rel_error < self.tol)


def grad_check(fn: Callable[[], Tensor], inputs: Sequence[Tensor], eps: float = 1e-5,
               tol: float = 1e-4, floor: float = 1e-6) -> GradCheckReport:
    """Compare reverse-mode gradients of a scalar ``fn()`` against central differences.

    ``inputs`` are tensors read by ``fn``; they are perturbed in place.
    The relative error per coordinate is ``|a - n| / max(|a|, |n|, floor)``,
    where the part of ``|a - n|`` below the rounding resolution of the
    central difference (a few ulps of ``|f|`` divided by ``eps``) is not counted.
    """
    for t in inputs:
        t.requires_grad = True
        t.grad = None
    out = fn()
    out.backward()
    resolution = 4 * np.finfo(np.float64).eps * max(1.0, abs(float(out.data))) / eps
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]

    worst, worst_name, per_input = 0.0, "", {}
    for k, (t, a) in enumerate(zip(inputs, analytic)):
        num = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        for j in range(flat.size):
            old = flat[j]
            flat[j] = old + eps
            fp = float(fn().data)
            flat[j] = old - eps
            fm = float(fn().data)
            flat[j] = old
            num.reshape(-1)[j] = (fp - fm) / (2 * eps)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(num)), floor)
        excess = np.maximum(np.abs(a - num) - resolution, 0.0)
        err = float((excess / denom).max()) if a.size else 0.0
        if not np.isfinite(a).all():
            err = float("inf")
        name = t.name or f"input{k}"
        per_input[name] = err
        if err > worst or not np.isfinite(err):
            worst, worst_name = err, name
    return GradCheckReport(worst, tol, worst_name, per_input)


# -- checkpoints -----------------------------------------------------------------

CHECKPOINT_MAGIC = b"MPCK"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, store: ParamStore, header: dict | None = None) -> None:
    """Write ``MPCK | u32 version | u32 len | JSON header | float64 LE params``."""
    meta = dict(header or {})
    meta["params"] = [[name, list(t.shape)] for name, t in store]
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(store.flatten().astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[ParamStore, dict]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    (hlen,) = struct.unpack_from("<I", raw, 8)
    meta = json.loads(raw[12:12 + hlen].decode("utf-8"))
    values = np.frombuffer(raw[12 + hlen:], dtype="<f8")
    store = ParamStore()
    pos = 0
    for name, shape in meta["params"]:
        n = int(np.prod(shape)) if shape else 1
        if pos + n > values.size:
            raise ValueError(f"{path}: truncated parameter block")
        store.add(name, values[pos:pos + n].reshape(shape))
        pos += n
    if pos != values.size:
        raise ValueError(f"{path}: {values.size - pos} trailing values")
    return store, meta
