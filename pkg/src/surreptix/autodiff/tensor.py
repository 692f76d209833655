"""Dense float64 tensors and the gradient tape that records operations on them."""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when an op receives inputs whose shapes do not fit its signature."""

    def __init__(self, op: str, message: str):
        super().__init__(f"{op}: {message}")
        self.op = op


class Tensor:
    """Immutable n-dimensional array of 64-bit floats.

    A tensor with ``requires_grad=True`` is a leaf whose gradient can be
    requested from a :class:`Tape`. Tensors produced by recorded ops carry
    ``requires_grad=True`` as well.
    """

    __slots__ = ("data", "requires_grad", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        arr.flags.writeable = False
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.name = name

    @classmethod
    def wrap(cls, arr: np.ndarray, requires_grad: bool = False) -> "Tensor":
        # internal constructor; takes ownership of arr without copying
        t = cls.__new__(cls)
        arr = np.asarray(arr, dtype=np.float64)
        arr.flags.writeable = False
        t.data = arr
        t.requires_grad = requires_grad
        t.name = None
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar; the ops module does the work
    def __add__(self, other):
        from . import ops
        return ops.add(self, _as_tensor(other, self))

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, _as_tensor(other, self))

    def __mul__(self, other):
        from . import ops
        if np.isscalar(other):
            return ops.scale(self, float(other))
        return ops.mul(self, _as_tensor(other, self))

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def sum(self):
        from . import ops
        return ops.sum(self)


def _as_tensor(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        arr = np.full(like.shape, float(arr))
    return Tensor(arr)


@dataclass(eq=False)
class Node:
    op: str
    output: Tensor
    inputs: tuple[Tensor, ...]
    vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]]


_state = threading.local()


def _stack() -> list["Tape"]:
    if not hasattr(_state, "tapes"):
        _state.tapes = []
    return _state.tapes


def active_tape() -> "Tape | None":
    stack = _stack()
    return stack[-1] if stack else None


class Tape:
    """Records ops on grad-requiring tensors, in execution order.

    Use as a context manager::

        with Tape() as tape:
            y = ops.l2_norm(x)
        grads = backward(tape, y)
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self._entered = False

    def __enter__(self) -> "Tape":
        if self._entered:
            raise RuntimeError("a Tape cannot be re-entered")
        self._entered = True
        _stack().append(self)
        return self

    def __exit__(self, *exc):
        stack = _stack()
        if not stack or stack[-1] is not self:
            raise RuntimeError("tape stack corrupted: exit order does not match enter order")
        stack.pop()
        return False

    def record(self, node: Node) -> None:
        self.nodes.append(node)

    def gradient(self, output: Tensor, sources: Sequence[Tensor]) -> list[np.ndarray]:
        grads = backward(self, output)
        return [grads.get(s, np.zeros(s.shape)) for s in sources]


def record(op: str, out: np.ndarray, inputs: tuple[Tensor, ...],
           vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]]) -> Tensor:
    """Wrap ``out`` in a Tensor and record it if any input needs a gradient."""
    tape = active_tape()
    needs = tape is not None and any(t.requires_grad for t in inputs)
    result = Tensor.wrap(out, needs)
    if needs:
        tape.record(Node(op, result, inputs, vjp))
    return result


def backward(tape: Tape, output: Tensor) -> dict[Tensor, np.ndarray]:
    """Reverse pass over ``tape`` seeded at the scalar ``output``.

    Returns a mapping from every grad-requiring leaf that influenced
    ``output`` to d(output)/d(leaf).
    """
    if output.size != 1:
        raise ShapeError("backward", f"output must be scalar, got shape {output.shape}")
    grads: dict[int, np.ndarray] = {id(output): np.ones(output.shape)}
    produced = set()
    keep: dict[int, Tensor] = {}
    for node in reversed(tape.nodes):
        produced.add(id(node.output))
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        in_grads = node.vjp(g)
        for t, gi in zip(node.inputs, in_grads):
            if gi is None or not t.requires_grad:
                continue
            if gi.shape != t.shape:
                raise ShapeError(node.op, f"gradient shape {gi.shape} != input shape {t.shape}")
            key = id(t)
            keep[key] = t
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
    if id(output) in grads and output.requires_grad and id(output) not in produced:
        keep[id(output)] = output
    return {keep[k]: v for k, v in grads.items() if k in keep and k not in produced}
