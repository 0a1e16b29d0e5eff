"""Reverse-mode differentiation over the small op set the matching objective needs.

Eager tape: each operation computes its value immediately and records a
closure that scatters the incoming gradient back to its parents. The op set
is fixed on purpose (matmul, transpose, add, sub, scale-by-constant, concat,
slice, relu, row softmax, instance norm, exp, Frobenius norms, trace, row
norms): the objective uses nothing else, and every backward rule stays small
enough to hand-check against finite differences.

All tape compute is float64. Parameters optimized with Adam are stored
float32 between steps and upcast when the next tape is built.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError


class Node:
    """One tape entry: an eagerly computed value plus its backward closure."""

    __slots__ = ("value", "parents", "vjp", "grad")

    def __init__(self, value: np.ndarray, parents: tuple = (), vjp=None):
        self.value = value
        self.parents = parents
        self.vjp = vjp
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum grad down to ``shape``, undoing numpy broadcasting in a binary op."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _as64(value) -> np.ndarray:
    out = np.asarray(value, dtype=np.float64)
    if not np.all(np.isfinite(out)):
        raise ValidationError("non-finite value entering the tape")
    return out


class Tape:
    """Records nodes in construction order, which is already topological."""

    def __init__(self) -> None:
        self._nodes: list[Node] = []

    def _record(self, value: np.ndarray, parents: tuple = (), vjp=None) -> Node:
        node = Node(value, parents, vjp)
        self._nodes.append(node)
        return node

    def leaf(self, value) -> Node:
        """A differentiable input; read its .grad after backward."""
        return self._record(_as64(value).copy())

    def constant(self, value) -> Node:
        """A non-differentiable input (gradients still flow through, unused)."""
        return self._record(_as64(value))

    # -- ops ----------------------------------------------------------------

    def matmul(self, a: Node, b: Node) -> Node:
        if a.value.ndim != 2 or b.value.ndim != 2:
            raise ValidationError("matmul expects 2-D operands")
        av, bv = a.value, b.value

        def vjp(g):
            return g @ bv.T, av.T @ g

        return self._record(av @ bv, (a, b), vjp)

    def transpose(self, a: Node) -> Node:
        return self._record(a.value.T.copy(), (a,), lambda g: (g.T,))

    def add(self, a: Node, b: Node) -> Node:
        sa, sb = a.value.shape, b.value.shape

        def vjp(g):
            return _unbroadcast(g, sa), _unbroadcast(g, sb)

        return self._record(a.value + b.value, (a, b), vjp)

    def sub(self, a: Node, b: Node) -> Node:
        sa, sb = a.value.shape, b.value.shape

        def vjp(g):
            return _unbroadcast(g, sa), _unbroadcast(-g, sb)

        return self._record(a.value - b.value, (a, b), vjp)

    def scale(self, a: Node, c) -> Node:
        """Multiply elementwise by a constant scalar or array (not a Node)."""
        cv = np.asarray(c, dtype=np.float64)
        return self._record(a.value * cv, (a,), lambda g: (_unbroadcast(g * cv, a.value.shape),))

    def concat(self, parts: list[Node], axis: int = 0) -> Node:
        sizes = [p.value.shape[axis] for p in parts]
        offsets = np.cumsum(sizes)[:-1]

        def vjp(g):
            return tuple(np.split(g, offsets, axis=axis))

        return self._record(np.concatenate([p.value for p in parts], axis=axis), tuple(parts), vjp)

    def take_slice(self, a: Node, axis: int, start: int, stop: int) -> Node:
        key = [slice(None)] * a.value.ndim
        key[axis] = slice(start, stop)
        key = tuple(key)

        def vjp(g):
            out = np.zeros_like(a.value)
            out[key] = g
            return (out,)

        return self._record(a.value[key].copy(), (a,), vjp)

    def relu(self, a: Node) -> Node:
        mask = a.value > 0  # subgradient at 0 is 0
        return self._record(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))

    def softmax(self, a: Node) -> Node:
        """Row-wise softmax of a 2-D array."""
        if a.value.ndim != 2:
            raise ValidationError("softmax expects a 2-D array of row logits")
        shifted = a.value - a.value.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        y = e / e.sum(axis=1, keepdims=True)

        def vjp(g):
            return (y * (g - (g * y).sum(axis=1, keepdims=True)),)

        return self._record(y, (a,), vjp)

    def instance_norm(self, x: Node, gamma: Node, beta: Node, eps: float = 1e-5) -> Node:
        """Normalize each row to zero mean/unit variance over channels, then
        apply the learnable per-channel affine (gamma, beta)."""
        if x.value.ndim != 2:
            raise ValidationError("instance_norm expects a 2-D (nodes, channels) array")
        mu = x.value.mean(axis=1, keepdims=True)
        xc = x.value - mu
        inv = 1.0 / np.sqrt((xc * xc).mean(axis=1, keepdims=True) + eps)
        xhat = xc * inv
        gv = gamma.value

        def vjp(g):
            dxhat = g * gv
            dx = inv * (
                dxhat
                - dxhat.mean(axis=1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=1, keepdims=True)
            )
            return dx, (g * xhat).sum(axis=0), g.sum(axis=0)

        return self._record(gv * xhat + beta.value, (x, gamma, beta), vjp)

    def exp(self, a: Node) -> Node:
        y = np.exp(a.value)
        return self._record(y, (a,), lambda g: (g * y,))

    def frobenius_sq(self, a: Node) -> Node:
        av = a.value
        return self._record(np.asarray((av * av).sum()), (a,), lambda g: (2.0 * g * av,))

    def frobenius(self, a: Node) -> Node:
        av = a.value
        norm = float(np.sqrt((av * av).sum()))

        def vjp(g):
            if norm == 0.0:  # subgradient at the kink
                return (np.zeros_like(av),)
            return (g * av / norm,)

        return self._record(np.asarray(norm), (a,), vjp)

    def trace(self, a: Node) -> Node:
        if a.value.ndim != 2 or a.value.shape[0] != a.value.shape[1]:
            raise ValidationError("trace expects a square matrix")
        n = a.value.shape[0]
        return self._record(np.asarray(np.trace(a.value)), (a,), lambda g: (g * np.eye(n),))

    def row_norms(self, a: Node) -> Node:
        """Euclidean norm of each row of a 2-D array."""
        av = a.value
        norms = np.sqrt((av * av).sum(axis=1))

        def vjp(g):
            safe = np.where(norms > 0.0, norms, 1.0)
            return (g[:, None] * av / safe[:, None] * (norms > 0.0)[:, None],)

        return self._record(norms, (a,), vjp)

    # -- backward -----------------------------------------------------------

    def backward(self, sink: Node) -> None:
        """Populate .grad on every node that the scalar sink depends on."""
        if sink.value.ndim != 0:
            raise ValidationError(f"backward needs a scalar sink, got shape {sink.value.shape}")
        for node in self._nodes:
            node.grad = None
        sink.grad = np.asarray(1.0)
        for node in reversed(self._nodes):
            if node.grad is None or node.vjp is None:
                continue
            for parent, g in zip(node.parents, node.vjp(node.grad)):
                if g is None:
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g


# ---------------------------------------------------------------------------
# optimizer

@dataclass
class AdamState:
    """Bias-corrected Adam moments, one pair of tensors per parameter."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr: float = 1e-3


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One Adam update; returns new parameters (input dtypes preserved)."""
    state.step += 1
    t = state.step
    out: dict[str, np.ndarray] = {}
    for name, p in params.items():
        g = np.asarray(grads.get(name, 0.0), dtype=np.float64)
        if g.ndim and g.shape != p.shape:
            raise ValidationError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name!r}")
        g = np.broadcast_to(g, p.shape)
        if name not in state.m:
            state.m[name] = np.zeros(p.shape, dtype=np.float64)
            state.v[name] = np.zeros(p.shape, dtype=np.float64)
        m = state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        v = state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * g * g
        m_hat = m / (1.0 - state.beta1 ** t)
        v_hat = v / (1.0 - state.beta2 ** t)
        new = p.astype(np.float64) - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        out[name] = new.astype(p.dtype)
    return out, state


# ---------------------------------------------------------------------------
# finite-difference harness

def grad_check(builder, params: dict[str, np.ndarray], eps: float = 1e-5) -> float:
    """Max relative error between tape gradients and central differences.

    ``builder(tape, leaves)`` must construct the scalar sink from the leaf
    dict. Error per element is |a - n| / max(1, |a|, |n|), so tiny gradients
    are compared absolutely.
    """

    def evaluate(values: dict[str, np.ndarray]) -> float:
        tape = Tape()
        leaves = {k: tape.leaf(v) for k, v in values.items()}
        return float(builder(tape, leaves).value)

    tape = Tape()
    leaves = {k: tape.leaf(v) for k, v in params.items()}
    tape.backward(builder(tape, leaves))
    analytic = {
        k: (leaves[k].grad if leaves[k].grad is not None else np.zeros_like(leaves[k].value))
        for k in params
    }

    worst = 0.0
    for name, base in params.items():
        base = np.asarray(base, dtype=np.float64)
        flat = base.reshape(-1)
        for i in range(flat.size):
            hi = dict(params)
            lo = dict(params)
            bumped = flat.copy()
            bumped[i] += eps
            hi[name] = bumped.reshape(base.shape)
            bumped = flat.copy()
            bumped[i] -= eps
            lo[name] = bumped.reshape(base.shape)
            numeric = (evaluate(hi) - evaluate(lo)) / (2.0 * eps)
            a = float(np.asarray(analytic[name]).reshape(-1)[i])
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            worst = max(worst, err)
    return worst
