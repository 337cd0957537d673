"""Dense 2-D tensors with reverse-mode differentiation.

Every op produces a :class:`Tensor` that remembers its parents and a local
backward rule; :func:`backward` walks that record in reverse topological
order. Values are float64 numpy arrays and every op result is checked for
NaN/Inf. Row/column broadcasting (numpy rules, 2-D only) is supported by
``add`` and ``hadamard``.
"""

from __future__ import annotations

from typing import Callable, Iterable, Optional, Sequence

import numpy as np

__all__ = [
    "ShapeMismatch",
    "NonFiniteValue",
    "NotAScalar",
    "Tensor",
    "Param",
    "constant",
    "matmul",
    "transpose",
    "add",
    "sub",
    "hadamard",
    "scale",
    "relu",
    "sigmoid",
    "row_sum",
    "total",
    "concat_rows",
    "mse",
    "bce",
    "bce_with_logits",
    "backward",
    "zero_grad",
    "grad_check",
    "SGD",
    "Adam",
    "sgd_step",
    "adam_step",
]


class ShapeMismatch(ValueError):
    pass


class NonFiniteValue(FloatingPointError):
    pass


class NotAScalar(ValueError):
    pass


class Tensor:
    __slots__ = ("value", "grad", "_parents", "_backward", "name")

    def __init__(self, value, parents=(), backward_fn=None, name=""):
        arr = np.asarray(value, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2:
            raise ShapeMismatch(f"tensors are 2-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteValue(f"non-finite value produced{' by ' + name if name else ''}")
        self.value = arr
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple[Tensor, ...] = tuple(parents)
        self._backward: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]] = backward_fn
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape  # type: ignore[return-value]

    @property
    def rows(self) -> int:
        return self.value.shape[0]

    @property
    def cols(self) -> int:
        return self.value.shape[1]

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def __add__(self, other):
        return add(self, _wrap(other))

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return hadamard(self, _wrap(other))

    __rmul__ = __mul__

    def item(self) -> float:
        if self.shape != (1, 1):
            raise NotAScalar(f"item() on shape {self.shape}")
        return float(self.value[0, 0])

    def numpy(self) -> np.ndarray:
        return self.value.copy()

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape})"


class Param(Tensor):
    """A leaf tensor that receives gradients and optimiser updates."""

    __slots__ = ("state",)

    def __init__(self, value, name=""):
        super().__init__(np.array(value, dtype=np.float64, copy=True), name=name)
        self.grad = np.zeros_like(self.value)
        self.state: dict = {}


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(value, name="") -> Tensor:
    return Tensor(value, name=name)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    if grad.shape == shape:
        return grad
    out = grad
    for axis, (g, s) in enumerate(zip(grad.shape, shape)):
        if s == 1 and g != 1:
            out = out.sum(axis=axis, keepdims=True)
    return out


def _broadcast_shape(a: Tensor, b: Tensor, op: str):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")
    av, bv = a.value, b.value
    return Tensor(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g), "matmul")


def transpose(a: Tensor) -> Tensor:
    return Tensor(a.value.T, (a,), lambda g: (g.T,), "transpose")


def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b, "add")
    sa, sb = a.shape, b.shape
    return Tensor(a.value + b.value, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b, "sub")
    sa, sb = a.shape, b.shape
    return Tensor(a.value - b.value, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)), "sub")


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b, "hadamard")
    av, bv = a.value, b.value
    return Tensor(
        av * bv,
        (a, b),
        lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
        "hadamard",
    )


def scale(a: Tensor, c: float) -> Tensor:
    return Tensor(a.value * c, (a,), lambda g: (g * c,), "scale")


def relu(a: Tensor) -> Tensor:
    mask = a.value > 0
    return Tensor(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,), "relu")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid(a.value)
    return Tensor(s, (a,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def row_sum(a: Tensor) -> Tensor:
    """Sum across columns: (n, m) -> (n, 1)."""
    shape = a.shape
    return Tensor(a.value.sum(axis=1, keepdims=True), (a,), lambda g: (np.broadcast_to(g, shape).copy(),), "row_sum")


def total(a: Tensor) -> Tensor:
    shape = a.shape
    return Tensor(a.value.sum(), (a,), lambda g: (np.full(shape, g[0, 0]),), "total")


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise ShapeMismatch("concat_rows needs at least one tensor")
    cols = {p.cols for p in parts}
    if len(cols) != 1:
        raise ShapeMismatch(f"concat_rows: column counts {sorted(cols)} differ")
    bounds = np.cumsum([0] + [p.rows for p in parts])

    def back(g):
        return tuple(g[bounds[i] : bounds[i + 1]] for i in range(len(parts)))

    return Tensor(np.vstack([p.value for p in parts]), tuple(parts), back, "concat_rows")


def mse(pred: Tensor, target) -> Tensor:
    """Mean squared error over all entries."""
    t = _wrap(target).value
    if pred.shape != t.shape:
        raise ShapeMismatch(f"mse: {pred.shape} vs {t.shape}")
    diff = pred.value - t
    n = diff.size
    return Tensor((diff**2).sum() / n, (pred,), lambda g: (g[0, 0] * 2.0 * diff / n,), "mse")


def bce(prob: Tensor, target) -> Tensor:
    """Mean binary cross-entropy of probabilities against 0/1 targets."""
    t = _wrap(target).value
    if prob.shape != t.shape:
        raise ShapeMismatch(f"bce: {prob.shape} vs {t.shape}")
    p = np.clip(prob.value, 1e-12, 1 - 1e-12)
    n = p.size
    loss = -(t * np.log(p) + (1 - t) * np.log(1 - p)).sum() / n
    return Tensor(loss, (prob,), lambda g: (g[0, 0] * (p - t) / (p * (1 - p)) / n,), "bce")


def bce_with_logits(logits: Tensor, target) -> Tensor:
    """``bce(sigmoid(logits), target)`` computed stably from the logits."""
    t = _wrap(target).value
    if logits.shape != t.shape:
        raise ShapeMismatch(f"bce_with_logits: {logits.shape} vs {t.shape}")
    x = logits.value
    n = x.size
    loss = (np.maximum(x, 0) - x * t + np.log1p(np.exp(-np.abs(x)))).sum() / n
    s = _sigmoid(x)
    return Tensor(loss, (logits,), lambda g: (g[0, 0] * (s - t) / n,), "bce_with_logits")


def _topological(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(param) into every reachable Param's ``grad``.

    Intermediate gradients are discarded and the recorded graph is released
    afterwards, so a loss can only be differentiated once.
    """
    if loss.shape != (1, 1):
        raise NotAScalar(f"backward needs a 1x1 loss, got {loss.shape}")
    order = _topological(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if isinstance(node, Param):
            node.grad = node.grad + g
            continue
        if node._backward is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None:
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg
    for node in order:
        if not isinstance(node, Param):
            node._parents = ()
            node._backward = None


def zero_grad(params: Iterable[Param]) -> None:
    for p in params:
        p.grad = np.zeros_like(p.value)


def grad_check(f: Callable[[], Tensor], params: Sequence[Param], eps: float = 1e-5) -> float:
    """Max relative error between taped and central-difference gradients.

    ``f`` rebuilds the loss from the current parameter values each call.
    """
    params = list(params)
    if not params:
        return 0.0
    zero_grad(params)
    backward(f())
    analytic = [p.grad.copy() for p in params]
    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.value.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = f().item()
            flat[i] = orig - eps
            down = f().item()
            flat[i] = orig
            numeric = (up - down) / (2 * eps)
            ana = a.reshape(-1)[i]
            err = abs(ana - numeric) / max(1e-8, abs(ana) + abs(numeric))
            worst = max(worst, err)
    zero_grad(params)
    return worst


class SGD:
    def __init__(self, params: Sequence[Param], lr: float = 1e-2):
        self.params = list(params)
        self.lr = lr

    def step(self):
        sgd_step(self.params, self.lr)

    def zero_grad(self):
        zero_grad(self.params)


class Adam:
    def __init__(self, params: Sequence[Param], lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps

    def step(self):
        adam_step(self.params, self.lr, self.beta1, self.beta2, self.eps)

    def zero_grad(self):
        zero_grad(self.params)


def sgd_step(params: Sequence[Param], lr: float) -> None:
    for p in params:
        p.value -= lr * p.grad


def adam_step(params: Sequence[Param], lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One Adam update with bias correction; moments are stored on each Param."""
    for p in params:
        t, m, v = p.state.get("adam", (0, np.zeros_like(p.value), np.zeros_like(p.value)))
        t += 1
        g = p.grad
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        p.value -= lr * m_hat / (np.sqrt(v_hat) + eps)
        if not np.all(np.isfinite(p.value)):
            raise NonFiniteValue(f"parameter {p.name!r} diverged")
        p.state["adam"] = (t, m, v)
