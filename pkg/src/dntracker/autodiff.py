"""Dense float64 tensors with tape-based reverse-mode differentiation.

Only the operations the tracker needs are implemented. All arithmetic is
64-bit and every op is pure: identical inputs give bit-identical outputs.
Reductions go through numpy's fixed deterministic kernels, so results do
not depend on thread count.

Broadcasting is deliberately restricted to two cases: scalar-with-tensor
and row-vector-with-matrix on the last axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class ShapeError(ValueError):
    """Operand shapes violate an op's contract."""


class GraphError(RuntimeError):
    """Backward pass invoked on something that is not a recorded scalar."""


class Tensor:
    """A dense float64 array, optionally tracked for gradients.

    Tensors without gradient buffers are treated as immutable after
    construction; parameters (requires_grad=True) are mutated only by the
    optimizer.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _check_broadcast(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape == b.shape:
        return
    if a.ndim == 0 or b.ndim == 0:
        return
    # row vector against the last axis of a matrix
    if a.ndim == 1 and b.ndim >= 1 and b.shape[-1] == a.shape[0]:
        return
    if b.ndim == 1 and a.ndim >= 1 and a.shape[-1] == b.shape[0]:
        return
    raise ShapeError(f"unsupported broadcast between shapes {a.shape} and {b.shape}")


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


class Tape:
    """Ordered record of forward operations with their backward rules.

    Replaying the records in reverse from a scalar loss yields gradients
    for every leaf reached by the forward pass. A tape is single-threaded;
    backward() is a pure function of the records and may be called more
    than once with identical results.
    """

    def __init__(self):
        self._records: list[tuple[Tensor, tuple[Tensor, ...], object]] = []

    def __len__(self) -> int:
        return len(self._records)

    def _emit(self, data: np.ndarray, parents: tuple[Tensor, ...], vjp) -> Tensor:
        out = Tensor(data)
        self._records.append((out, parents, vjp))
        return out

    # ---- elementwise / structural ops ----

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        _check_broadcast(a.data, b.data)
        A, B = a.data, b.data

        def vjp(g):
            return _unbroadcast(g, A.shape), _unbroadcast(g, B.shape)

        return self._emit(A + B, (a, b), vjp)

    def sub(self, a: Tensor, b: Tensor) -> Tensor:
        _check_broadcast(a.data, b.data)
        A, B = a.data, b.data

        def vjp(g):
            return _unbroadcast(g, A.shape), _unbroadcast(-g, B.shape)

        return self._emit(A - B, (a, b), vjp)

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        _check_broadcast(a.data, b.data)
        A, B = a.data, b.data

        def vjp(g):
            return _unbroadcast(g * B, A.shape), _unbroadcast(g * A, B.shape)

        return self._emit(A * B, (a, b), vjp)

    def scale(self, a: Tensor, s: float) -> Tensor:
        s = float(s)

        def vjp(g):
            return (g * s,)

        return self._emit(a.data * s, (a,), vjp)

    def transpose(self, a: Tensor) -> Tensor:
        if a.data.ndim != 2:
            raise ShapeError(f"transpose expects a matrix, got shape {a.data.shape}")

        def vjp(g):
            return (g.T.copy(),)

        return self._emit(a.data.T.copy(), (a,), vjp)

    def concat(self, tensors: list[Tensor], axis: int) -> Tensor:
        if axis not in (0, -1):
            raise ShapeError(f"concat supports axis 0 or -1, got {axis}")
        datas = [t.data for t in tensors]
        if any(d.ndim != datas[0].ndim for d in datas):
            raise ShapeError("concat operands must share rank")
        out = np.concatenate(datas, axis=axis)
        sizes = [d.shape[axis] for d in datas]
        offsets = np.cumsum([0] + sizes)

        def vjp(g):
            g = np.moveaxis(g, axis, 0)
            return tuple(
                np.moveaxis(g[offsets[i] : offsets[i + 1]], 0, axis)
                for i in range(len(datas))
            )

        return self._emit(out, tuple(tensors), vjp)

    def slice_last(self, a: Tensor, start: int, stop: int) -> Tensor:
        C = a.data.shape[-1]
        if not (0 <= start <= stop <= C):
            raise ShapeError(f"slice [{start}:{stop}] invalid for last axis of size {C}")

        def vjp(g):
            full = np.zeros_like(a.data)
            full[..., start:stop] = g
            return (full,)

        return self._emit(a.data[..., start:stop].copy(), (a,), vjp)

    # ---- linear algebra ----

    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        A, B = a.data, b.data
        if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[0]:
            raise ShapeError(f"matmul shape mismatch: {A.shape} x {B.shape}")

        def vjp(g):
            return g @ B.T, A.T @ g

        return self._emit(A @ B, (a, b), vjp)

    # ---- nonlinearities ----

    def relu(self, a: Tensor) -> Tensor:
        mask = a.data > 0.0

        def vjp(g):
            return (g * mask,)

        return self._emit(a.data * mask, (a,), vjp)

    def gelu(self, a: Tensor) -> Tensor:
        x = a.data
        cdf = 0.5 * (1.0 + erf(x / _SQRT2))

        def vjp(g):
            pdf = np.exp(-0.5 * x * x) * _INV_SQRT_2PI
            return (g * (cdf + x * pdf),)

        return self._emit(x * cdf, (a,), vjp)

    def softmax(self, a: Tensor, axis: int) -> Tensor:
        nd = a.data.ndim
        if not (-nd <= axis < nd):
            raise ShapeError(f"softmax axis {axis} invalid for shape {a.data.shape}")
        z = a.data - a.data.max(axis=axis, keepdims=True)
        e = np.exp(z)
        y = e / e.sum(axis=axis, keepdims=True)

        def vjp(g):
            return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

        return self._emit(y, (a,), vjp)

    def layer_norm(self, a: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
        x, gm, bt = a.data, gamma.data, beta.data
        if eps <= 0.0:
            raise ShapeError("layer_norm requires eps > 0")
        C = x.shape[-1]
        if gm.shape != (C,) or bt.shape != (C,):
            raise ShapeError(
                f"layer_norm parameter shapes {gm.shape}/{bt.shape} do not match last axis {C}"
            )
        mu = x.mean(axis=-1, keepdims=True)
        xc = x - mu
        var = (xc * xc).mean(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = xc * inv

        def vjp(g):
            dgamma = _unbroadcast(g * xhat, gm.shape)
            dbeta = _unbroadcast(g, bt.shape)
            dxhat = g * gm
            dx = inv * (
                dxhat
                - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
            )
            return dx, dgamma, dbeta

        return self._emit(gm * xhat + bt, (a, gamma, beta), vjp)

    # ---- reductions / losses ----

    def sum(self, a: Tensor) -> Tensor:
        shape = a.data.shape

        def vjp(g):
            return (np.full(shape, float(g), dtype=np.float64),)

        return self._emit(np.asarray(a.data.sum()), (a,), vjp)

    def mean(self, a: Tensor) -> Tensor:
        shape = a.data.shape
        n = a.data.size

        def vjp(g):
            return (np.full(shape, float(g) / n, dtype=np.float64),)

        return self._emit(np.asarray(a.data.mean()), (a,), vjp)

    def add_n(self, tensors: list[Tensor]) -> Tensor:
        out = tensors[0]
        for t in tensors[1:]:
            out = self.add(out, t)
        return out

    def cross_entropy(self, logits: Tensor, targets) -> Tensor:
        t = np.asarray(targets, dtype=np.int64)
        if logits.data.ndim != 2:
            raise ShapeError(f"cross_entropy expects a B x K matrix, got {logits.data.shape}")
        B, K = logits.data.shape
        if t.shape != (B,):
            raise ShapeError(f"targets length {t.shape} does not match batch {B}")
        if np.any(t < 0) or np.any(t >= K):
            bad = int(t[(t < 0) | (t >= K)][0])
            raise IndexError(f"target {bad} out of range [0, {K})")
        z = logits.data - logits.data.max(axis=1, keepdims=True)
        logz = np.log(np.exp(z).sum(axis=1, keepdims=True))
        logp = z - logz
        rows = np.arange(B)
        loss = -logp[rows, t].mean()

        def vjp(g):
            p = np.exp(logp)
            p[rows, t] -= 1.0
            return (p * (float(g) / B),)

        return self._emit(np.asarray(loss), (logits,), vjp)

    # ---- backward ----

    def backward(self, loss: Tensor, leaves=None) -> dict[int, np.ndarray]:
        """Accumulate gradients from a scalar loss back to every reached leaf.

        Returns a map from id(tensor) to gradient array and writes .grad on
        every requires_grad tensor encountered (overwriting, not adding).
        Leaves passed explicitly but not reached get zero gradients.
        """
        if loss.data.size != 1:
            raise GraphError(f"backward requires a scalar loss, got shape {loss.data.shape}")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        seen: dict[int, Tensor] = {id(loss): loss}
        for out, parents, vjp in reversed(self._records):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for p, pg in zip(parents, vjp(g)):
                if pg is None:
                    continue
                key = id(p)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
                    seen[key] = p
        for key, t in seen.items():
            if t.requires_grad:
                t.grad = grads[key].reshape(t.data.shape).copy()
        if leaves is not None:
            for t in leaves:
                if id(t) not in seen:
                    t.grad = np.zeros_like(t.data)
        return grads


# ---- optimizer ----


@dataclass
class AdamState:
    """Adam moments plus hyperparameters, keyed by parameter name."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: AdamState) -> AdamState:
    """One bias-corrected Adam update, in place on the parameter tensors."""
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter {name} shape {p.data.shape}")
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        state.m[name] = m
        state.v[name] = v
        p.data = p.data - state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return state
