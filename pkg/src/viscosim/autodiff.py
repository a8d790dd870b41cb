"""Minimal dense neural-network substrate with trace-based reverse mode.

Everything is float64 numpy.  A :class:`Tensor` wraps an array plus the
recorded parents/backward closure of the op that produced it; calling
:func:`backward` walks the trace once and accumulates gradients on leaves
with ``requires_grad``.  A trace is single-use: reusing it raises
:class:`~viscosim.errors.StaleTraceError`.

The op set is intentionally small (affine, tanh, add/sub/mul/scale, column
concat/matmul-by-constant, row gather, sorted segment sum) - exactly what
the graph network and its losses need.

Segment sums are performed in fixed-point (power-of-two scaling of the
current magnitude) so the reduction is a pure function of the *multiset* of
addends: summing a node's incoming messages gives bit-identical results no
matter how the nodes were labeled.  The quantization granularity is ~2^-41
of the largest magnitude, far below training noise.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import StaleTraceError, TrainingDivergenceError


def assert_finite(data: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(data)):
        raise TrainingDivergenceError(f"non-finite values in {what}")


class Tensor:
    """Array value plus (for op results) the recorded backward closure."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_bwd", "_consumed")

    def __init__(self, data, requires_grad=False, name=None, parents=(), bwd=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = parents
        self._bwd = bwd
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        tag = self.name or "tensor"
        return f"Tensor({tag}, shape={self.data.shape})"

    # small operator surface so numeric formulas run unchanged on arrays
    # or tensors (matmul only against constant ndarrays)
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul_const(self, other)


def _make(data, parents, bwd):
    return Tensor(data, parents=parents, bwd=bwd)


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """y = x @ w.T + b with w of shape (out, in)."""
    if x.data.shape[-1] != w.data.shape[1]:
        raise ValueError(f"affine shape mismatch: input {x.data.shape} vs weight {w.data.shape}")
    y = x.data @ w.data.T + b.data

    def bwd(u):
        return (u @ w.data, u.T @ x.data, u.sum(axis=0))

    return _make(y, (x, w, b), bwd)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def bwd(u):
        return (u * (1.0 - y * y),)

    return _make(y, (x,), bwd)


def add(a: Tensor, b: Tensor) -> Tensor:
    return _make(a.data + b.data, (a, b), lambda u: (u, u))


def sub(a: Tensor, b: Tensor) -> Tensor:
    return _make(a.data - b.data, (a, b), lambda u: (u, -u))


def mul(a: Tensor, b: Tensor) -> Tensor:
    return _make(a.data * b.data, (a, b), lambda u: (u * b.data, u * a.data))


def scale(x: Tensor, c: float) -> Tensor:
    return _make(x.data * c, (x,), lambda u: (u * c,))


def matmul_const(x: Tensor, a: np.ndarray) -> Tensor:
    """y = x @ a for a constant (non-learned) matrix a."""
    return _make(x.data @ a, (x,), lambda u: (u @ a.T,))


def concat_cols(parts: list[Tensor]) -> Tensor:
    widths = [p.data.shape[1] for p in parts]
    y = np.concatenate([p.data for p in parts], axis=1)
    offsets = np.cumsum([0] + widths)

    def bwd(u):
        return tuple(u[:, offsets[i]:offsets[i + 1]] for i in range(len(parts)))

    return _make(y, tuple(parts), bwd)


def sum_all(x: Tensor) -> Tensor:
    def bwd(u):
        return (np.full_like(x.data, float(u)),)

    return _make(np.sum(x.data), (x,), bwd)


def mean_all(x: Tensor) -> Tensor:
    n = x.data.size

    def bwd(u):
        return (np.full_like(x.data, float(u) / n),)

    return _make(np.sum(x.data) / n, (x,), bwd)


class SegmentPlan:
    """Row-to-segment scatter operators for one fixed index layout.

    ``sum_i`` is an int64 0/1 matrix used by the exact fixed-point forward
    aggregation; ``sum_f`` is its float twin for gradient scatters (which
    only need per-layout determinism, not multiset invariance).
    """

    def __init__(self, idx: np.ndarray, n_out: int):
        from scipy.sparse import csr_matrix

        idx = np.asarray(idx, dtype=np.int64)
        self.idx = idx
        self.n_out = n_out
        self.n_rows = idx.size
        cols = np.arange(idx.size)
        self.sum_f = csr_matrix((np.ones(idx.size), (idx, cols)),
                                shape=(n_out, idx.size))
        self.sum_i = self.sum_f.astype(np.int64)


def exact_segment_sum(values: np.ndarray, plan: SegmentPlan) -> np.ndarray:
    """Order-independent segment sum: scale by a power of two (exact), round
    to int64, add exactly, scale back.  The result depends only on the
    multiset of addends per segment, so relabeling rows cannot change bits.
    Quantization granularity is 2^-41 of the largest magnitude."""
    if values.shape[0] >= (1 << 21):
        # keeps scaled prefix-free sums within int64
        raise ValueError("segment sum input too large for exact fixed point")
    amax = float(np.max(np.abs(values))) if values.size else 0.0
    if not np.isfinite(amax):
        raise TrainingDivergenceError("non-finite values in segment sum")
    if amax == 0.0:
        return np.zeros((plan.n_out,) + values.shape[1:])
    _, exp = np.frexp(amax)
    q = np.rint(values * 2.0 ** (41 - exp)).astype(np.int64)
    return (plan.sum_i @ q).astype(np.float64) * 2.0 ** (exp - 41)


def fixed_point_segment_sum(values: np.ndarray, starts: np.ndarray, n_out: int) -> np.ndarray:
    """Reference implementation of :func:`exact_segment_sum` for contiguous
    segments given by their start offsets (rows sorted by segment id)."""
    n_rows = values.shape[0]
    if n_rows == 0:
        return np.zeros((n_out,) + values.shape[1:])
    bounds = np.append(starts, n_rows)
    idx = np.repeat(np.arange(n_out), np.diff(bounds))
    return exact_segment_sum(values, SegmentPlan(idx, n_out))


def gather_rows(x: Tensor, idx: np.ndarray, scatter: SegmentPlan) -> Tensor:
    """y[r] = x[idx[r]]; the backward pass scatter-adds through ``scatter``."""

    def bwd(u):
        return (scatter.sum_f @ u,)

    return _make(x.data[idx], (x,), bwd)


def segment_sum(x: Tensor, plan: SegmentPlan) -> Tensor:
    """Sum rows of x per segment (order-independent fixed-point forward);
    the backward pass gathers the upstream rows back out."""

    def bwd(u):
        return (u[plan.idx],)

    return _make(exact_segment_sum(x.data, plan), (x,), bwd)


def backward(output: Tensor, upstream: np.ndarray | None = None) -> None:
    """Reverse accumulation from ``output``; gradients land on ``.grad`` of
    every reachable leaf with ``requires_grad``.  Single use per trace."""
    if upstream is None:
        if output.data.ndim != 0:
            raise ValueError("non-scalar output needs an explicit upstream gradient")
        upstream = np.asarray(1.0)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != output.data.shape:
        raise ValueError(f"upstream shape {upstream.shape} != output shape {output.data.shape}")

    # iterative topological order over op nodes
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(output, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen or node._bwd is None:
            continue
        seen.add(id(node))
        if node._consumed:
            raise StaleTraceError("computation trace was already consumed by backward()")
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))

    pending: dict[int, np.ndarray] = {id(output): upstream}
    for node in reversed(topo):
        u = pending.pop(id(node), None)
        node._consumed = True
        if u is None:
            continue
        grads = node._bwd(u)
        for parent, g in zip(node._parents, grads):
            if parent._bwd is None:
                if parent.requires_grad:
                    parent.grad = g if parent.grad is None else parent.grad + g
            else:
                key = id(parent)
                pending[key] = g if key not in pending else pending[key] + g


# ---------------------------------------------------------------------------
# multilayer perceptrons


@dataclass
class Mlp:
    """Dense layers (weight (out, in), bias (out,)); tanh between layers,
    identity output."""

    layers: list[tuple[Tensor, Tensor]]

    @property
    def in_width(self) -> int:
        return self.layers[0][0].data.shape[1]

    @property
    def out_width(self) -> int:
        return self.layers[-1][0].data.shape[0]

    def params(self) -> list[Tensor]:
        return [t for pair in self.layers for t in pair]

    def sizes(self) -> list[int]:
        return [self.in_width] + [w.data.shape[0] for w, _ in self.layers]


def init_mlp(sizes: list[int], rng: np.random.Generator, name: str = "mlp") -> Mlp:
    """Xavier-uniform weights, zero biases."""
    layers = []
    for i in range(len(sizes) - 1):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = Tensor(rng.uniform(-bound, bound, size=(fan_out, fan_in)),
                   requires_grad=True, name=f"{name}.w{i}")
        b = Tensor(np.zeros(fan_out), requires_grad=True, name=f"{name}.b{i}")
        layers.append((w, b))
    return Mlp(layers)


def mlp_forward(net: Mlp, x: Tensor) -> Tensor:
    if x.data.shape[-1] != net.in_width:
        raise ValueError(f"input width {x.data.shape[-1]} != first layer width {net.in_width}")
    h = x
    last = len(net.layers) - 1
    for i, (w, b) in enumerate(net.layers):
        h = affine(h, w, b)
        if i != last:
            h = tanh(h)
    return h


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: list[Tensor], lr: float, **kw) -> "AdamState":
        return cls(m=[np.zeros_like(p.data) for p in params],
                   v=[np.zeros_like(p.data) for p in params],
                   step=0, lr=lr, **kw)


def adam_step(params: list[Tensor], grads: list[np.ndarray], state: AdamState):
    """One bias-corrected Adam update, in place on the parameter tensors."""
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise TrainingDivergenceError(f"non-finite gradient for parameter {p.name or i}")
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * (g * g)
        mhat = state.m[i] / c1
        vhat = state.v[i] / c2
        p.data = p.data - state.lr * mhat / (np.sqrt(vhat) + state.eps)
    return params, state
