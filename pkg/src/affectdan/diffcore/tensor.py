# affectdan diffcore: Tensor, Tape and the elementwise / reduction operations.
#
# A Tensor wraps a numpy buffer. While a Tape is active (``with Tape() as tape:``),
# every op whose inputs require gradients appends a Node to that tape. ``backward``
# walks the tape in exact reverse recording order, summing the contributions of all
# consumers of a tensor before passing its gradient on to its parents.

import contextlib
import logging
import os
import threading
from typing import Callable, Sequence

import numpy as np

from ..errors import DimensionError, NumericalError, RankError

logger = logging.getLogger(__name__)

MAX_RANK = 4
TRAIN_DTYPE = np.float32   # training precision
CHECK_DTYPE = np.float64   # gradient-check precision

_thread_state = threading.local()
_debug = os.environ.get("AFFECTDAN_DEBUG", "").strip().lower() in ("1", "true", "yes", "on")


def _state():
    if not hasattr(_thread_state, "tapes"):
        _thread_state.tapes = []
        _thread_state.dtype = np.dtype(TRAIN_DTYPE)
    return _thread_state


def set_debug(enabled: bool) -> None:
    """Toggle the NaN/Inf check performed after every forward op."""
    global _debug
    _debug = bool(enabled)


def debug_enabled() -> bool:
    return _debug


def get_default_dtype() -> np.dtype:
    return _state().dtype


@contextlib.contextmanager
def default_dtype(dtype):
    """Temporarily change the element type used for new tensors on this thread."""
    st = _state()
    previous = st.dtype
    st.dtype = np.dtype(dtype)
    try:
        yield st.dtype
    finally:
        st.dtype = previous


@contextlib.contextmanager
def no_grad():
    """Suspend recording: ops inside run eagerly and build no graph."""
    st = _state()
    st.tapes.append(None)
    try:
        yield
    finally:
        st.tapes.pop()


class Node:
    """One recorded operation: its output, its parents and the local backward rule."""

    __slots__ = ("tape", "index", "op", "output", "parents", "backward_fn")

    def __init__(self, tape: "Tape", index: int, op: str, output: "Tensor",
                 parents: tuple, backward_fn: Callable):
        self.tape = tape
        self.index = index
        self.op = op
        self.output = output
        self.parents = parents
        self.backward_fn = backward_fn

    def __repr__(self) -> str:
        return f"Node({self.op}#{self.index})"


class Tape:
    """Ordered record of differentiable operations.

    A tape belongs to the thread that entered it. Distinct tapes may be used on
    distinct threads at the same time.
    """

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self) -> "Tape":
        _state().tapes.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _state().tapes.pop()
        return False

    def __len__(self) -> int:
        return len(self.nodes)

    @staticmethod
    def active() -> "Tape | None":
        tapes = _state().tapes
        return tapes[-1] if tapes else None

    def record(self, op: str, output: "Tensor", parents: tuple, backward_fn: Callable) -> Node:
        node = Node(self, len(self.nodes), op, output, parents, backward_fn)
        self.nodes.append(node)
        output.node = node
        return node

    def backward(self, root: "Tensor") -> None:
        if root.size != 1:
            raise RankError(f"backward needs a scalar root, got shape {root.shape}")
        if root.node is None or root.node.tape is not self:
            raise RankError("backward root was not recorded on this tape")

        pending: dict[int, np.ndarray] = {id(root): np.ones_like(root.data)}
        for node in reversed(self.nodes[: root.node.index + 1]):
            grad = pending.pop(id(node.output), None)
            if grad is None:
                continue
            parent_grads = node.backward_fn(grad)
            for parent, pgrad in zip(node.parents, parent_grads):
                if pgrad is None or not parent.requires_grad:
                    continue
                if parent.node is None:
                    # leaf: accumulate until explicitly zeroed
                    pgrad = np.asarray(pgrad, dtype=parent.dtype)
                    parent.grad = pgrad.copy() if parent.grad is None else parent.grad + pgrad
                else:
                    key = id(parent)
                    pending[key] = pending[key] + pgrad if key in pending else pgrad


def backward(root: "Tensor") -> None:
    """Fill ``.grad`` of every requires_grad leaf reachable from the scalar ``root``.

    Repeated calls without ``zero_grad`` accumulate into the leaves.
    """
    if root.node is None:
        raise RankError("backward root is not on a tape (was it computed inside `with Tape():`?)")
    root.node.tape.backward(root)


class Tensor:
    """N-dimensional numeric array (rank <= 4) with a gradient slot and a tape handle."""

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is not None:
            arr = np.asarray(data, dtype=dtype)
        elif isinstance(data, np.ndarray) and np.issubdtype(data.dtype, np.floating):
            arr = data
        else:
            arr = np.asarray(data, dtype=get_default_dtype())
        if arr.ndim > MAX_RANK:
            raise RankError(f"tensor rank {arr.ndim} exceeds the supported maximum of {MAX_RANK}")
        self.data: np.ndarray = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.node: Node | None = None

    # --- introspection ---
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def __len__(self) -> int:
        return self.data.shape[0]

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.size == 1 else float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def backward(self) -> None:
        backward(self)

    # --- operator sugar ---
    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __truediv__(self, other): return div(self, other)
    def __rtruediv__(self, other): return div(other, self)
    def __neg__(self): return neg(self)
    def __pow__(self, exponent: float): return power(self, exponent)
    def __getitem__(self, key): return index(self, key)

    def sum(self, axis=None, keepdims: bool = False): return tsum(self, axis, keepdims)
    def mean(self, axis=None, keepdims: bool = False): return mean(self, axis, keepdims)
    def reshape(self, *shape): return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)
    def exp(self): return exp(self)
    def log(self): return log(self)


# --- plumbing ---------------------------------------------------------------

def as_tensor(value, like: Tensor | None = None) -> Tensor:
    """Wrap scalars / arrays as constant tensors, matching ``like``'s element type."""
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(value, dtype=dtype) if dtype is not None else value)


def make_result(op: str, data: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    """Wrap an op's output and record it when a tape is active and a parent needs gradients."""
    if _debug and not np.all(np.isfinite(data)):
        if all(np.all(np.isfinite(p.data)) for p in parents):
            raise NumericalError(f"{op} produced NaN/Inf from finite inputs")
    out = Tensor(data)
    tape = Tape.active()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        tape.record(op, out, tuple(parents), backward_fn)
    return out


def unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    b = as_tensor(b)
    return as_tensor(a, like=b), b


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as e:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from e


# --- elementwise ops ---------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast("add", a, b)
    return make_result("add", a.data + b.data, (a, b),
                       lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast("sub", a, b)
    return make_result("sub", a.data - b.data, (a, b),
                       lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast("mul", a, b)
    return make_result("mul", a.data * b.data, (a, b),
                       lambda g: (unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast("div", a, b)
    return make_result(
        "div", a.data / b.data, (a, b),
        lambda g: (unbroadcast(g / b.data, a.shape),
                   unbroadcast(-g * a.data / (b.data * b.data), b.shape)),
    )


def neg(x: Tensor) -> Tensor:
    return make_result("neg", -x.data, (x,), lambda g: (-g,))


def power(x: Tensor, exponent: float) -> Tensor:
    exponent = float(exponent)
    return make_result("pow", np.power(x.data, exponent), (x,),
                       lambda g: (g * exponent * np.power(x.data, exponent - 1.0),))


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)
    return make_result("exp", y, (x,), lambda g: (g * y,))


def log(x: Tensor) -> Tensor:
    return make_result("log", np.log(x.data), (x,), lambda g: (g / x.data,))


def clamp_min(x: Tensor, floor: float) -> Tensor:
    """max(x, floor); gradient passes where x >= floor."""
    keep = x.data >= floor
    return make_result("clamp_min", np.maximum(x.data, floor).astype(x.dtype, copy=False), (x,),
                       lambda g: (g * keep,))


# --- shape / reduction ops ---------------------------------------------------

def _normalize_axes(axis, ndim: int):
    if axis is None:
        return None
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    out = []
    for a in axes:
        if not -ndim <= a < ndim:
            raise DimensionError(f"axis {a} is invalid for rank {ndim}")
        out.append(a % ndim)
    return tuple(out)


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, x.ndim)
    data = np.sum(x.data, axis=axes, keepdims=keepdims)

    def _bw(g):
        if axes is not None and not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return make_result("sum", np.asarray(data, dtype=x.dtype), (x,), _bw)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, x.ndim)
    count = x.size if axes is None else int(np.prod([x.shape[a] for a in axes]))
    return tsum(x, axes, keepdims) * (1.0 / count)


def reshape(x: Tensor, shape) -> Tensor:
    try:
        data = x.data.reshape(shape)
    except ValueError as e:
        raise DimensionError(f"cannot reshape {x.shape} into {tuple(shape)}") from e
    return make_result("reshape", data, (x,), lambda g: (g.reshape(x.shape),))


def index(x: Tensor, key) -> Tensor:
    """Basic or advanced indexing; gradient scatters back with ``np.add.at``."""
    data = x.data[key]

    def _bw(g):
        full = np.zeros_like(x.data)
        np.add.at(full, key, g)
        return (full,)

    return make_result("index", np.array(data, dtype=x.dtype), (x,), _bw)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise DimensionError("stack needs at least one tensor")
    shape = tensors[0].shape
    for i, t in enumerate(tensors):
        if t.shape != shape:
            raise DimensionError(f"stack: tensor {i} has shape {t.shape}, expected {shape}")
    data = np.stack([t.data for t in tensors], axis=axis)
    axis = axis % data.ndim
    return make_result("stack", data, tuple(tensors),
                       lambda g: tuple(np.take(g, i, axis=axis) for i in range(len(tensors))))
