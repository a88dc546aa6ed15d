"""Dense float64 tensors, named parameters, and a reverse-mode tape.

Tensors are immutable values: the wrapped array is frozen at construction
and every operation returns a fresh Tensor. Gradients accumulate on Param
objects when `backward` replays a Tape in reverse order. Operations record
themselves only while a Tape is active (`with Tape() as tape:`); outside a
tape the same calls are plain numerics, which is how teacher forwards run
without any gradient bookkeeping.
"""

import numpy as np


class ShapeError(ValueError):
    """Operand shapes violate an operation's contract."""


class Tensor:
    """Immutable dense array of float64 values."""

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.array(data, dtype=np.float64, order="C")
        arr.flags.writeable = False
        self.data = arr

    @classmethod
    def _wrap(cls, arr):
        # adopt a freshly computed array without copying
        arr = np.asarray(arr, dtype=np.float64)
        if not arr.flags.c_contiguous:  # ascontiguousarray would promote 0-d
            arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        t = cls.__new__(cls)
        t.data = arr
        return t

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        if self.data.size != 1:
            raise ShapeError(f"item() needs a scalar, got shape {self.data.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"


class Param:
    """Named trainable tensor with a gradient accumulator."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name, value):
        self.name = name
        self.value = value if isinstance(value, Tensor) else Tensor(value)
        self.grad = Tensor._wrap(np.zeros(self.value.data.shape))

    def zero_grad(self):
        self.grad = Tensor._wrap(np.zeros(self.value.data.shape))

    def assign(self, arr):
        """Replace the value between steps; never call mid-forward."""
        self.value = Tensor._wrap(np.array(arr, dtype=np.float64))

    def __repr__(self):
        return f"Param({self.name!r}, shape={self.value.data.shape})"


_active = None


def active_tape():
    return _active


class Tape:
    """Ordered record of executed differentiable operations.

    Each record holds the output tensor, the input tensors, and a closure
    computing vector-Jacobian products. Strong references keep every tensor
    alive for the tape's lifetime, so id() keys are stable.
    """

    __slots__ = ("_records", "_outputs", "_params")

    def __init__(self):
        self._records = []
        self._outputs = set()
        self._params = {}

    def __enter__(self):
        global _active
        if _active is not None:
            raise RuntimeError("a tape is already recording; tapes do not nest")
        _active = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _active
        _active = None
        return False

    def record(self, output, inputs, vjp):
        self._records.append((output, inputs, vjp))
        self._outputs.add(id(output))

    def watch(self, param):
        self._params[id(param.value)] = param

    def __len__(self):
        return len(self._records)


def backward(tape, loss):
    """Accumulate d(loss)/d(param) into every participating Param's grad.

    Repeated calls keep accumulating until grads are zeroed. The loss must
    be a scalar produced by an operation recorded on this tape.
    """
    if loss.data.size != 1:
        raise ShapeError(f"loss must be scalar, got shape {loss.data.shape}")
    if id(loss) not in tape._outputs:
        raise ValueError("loss was not produced on this tape")

    grads = {id(loss): np.ones_like(loss.data)}
    for output, inputs, vjp in reversed(tape._records):
        g = grads.pop(id(output), None)
        if g is None:
            continue
        for inp, gi in zip(inputs, vjp(g)):
            if gi is None:
                continue
            acc = grads.get(id(inp))
            grads[id(inp)] = gi if acc is None else acc + gi

    for tid, param in tape._params.items():
        g = grads.get(tid)
        if g is not None:
            param.grad = Tensor._wrap(param.grad.data + g)
