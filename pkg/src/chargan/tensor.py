"""Dense float tensors with tape-based reverse-mode automatic differentiation.

A Tensor wraps a numpy array (float32 by default, float64 allowed so the
finite-difference oracle can run a 64-bit reference pass). Every op that
participates in differentiation records its parents and a backward closure;
``backward`` on a scalar loss walks the recorded graph once in reverse
topological order and accumulates ``grad`` buffers.
"""

import contextlib
import os

import numpy as np

from .errors import NumericsError, ShapeError, UsageError

_grad_enabled = True
_debug_checks = os.environ.get("CHARGAN_DEBUG_CHECKS", "") == "1"


def set_debug_checks(flag):
    """Enable NaN/Inf detection after every forward op (off by default)."""
    global _debug_checks
    _debug_checks = bool(flag)


def debug_checks_enabled():
    return _debug_checks


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (inference / frozen passes)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled():
    return _grad_enabled


def _as_array(data, dtype=None):
    arr = np.asarray(data)
    if dtype is not None:
        return np.ascontiguousarray(arr, dtype=dtype)
    if arr.dtype in (np.float32, np.float64):
        return np.ascontiguousarray(arr)
    return np.ascontiguousarray(arr, dtype=np.float32)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad=False, dtype=None):
        self.data = _as_array(data, dtype)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self._op = ""

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        """Populate ``grad`` on every tensor this scalar depends on."""
        if self.data.size != 1:
            raise UsageError(f"backward requires a scalar loss, got shape {self.data.shape}")
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            t, processed = stack.pop()
            if processed:
                topo.append(t)
                continue
            if id(t) in visited:
                continue
            visited.add(id(t))
            stack.append((t, True))
            for p in t._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for t in reversed(topo):
            if t._backward is not None:
                t._backward(t.grad)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


def make_result(data, op, parents, backward):
    """Wrap an op output, recording the tape edge when gradients are on.

    ``backward`` takes the output gradient array and pushes contributions
    into the parents via ``accumulate_grad``.
    """
    if _debug_checks and not np.all(np.isfinite(data)):
        raise NumericsError(f"non-finite values produced by op '{op}'")
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
        out._op = op
    return out


def check_same_dtype(*tensors):
    dt = tensors[0].data.dtype
    for t in tensors[1:]:
        if t.data.dtype != dt:
            raise ShapeError(f"mixed tensor dtypes: {dt} vs {t.data.dtype}")
    return dt
