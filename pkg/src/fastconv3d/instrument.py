"""Instrumented scalar for counting data-by-data multiplications.

Wrap operands in :class:`Counted` and run any kernel on object arrays. A
product of two ``Counted`` values is a real multiplication and is recorded.
A product with a plain number is scaling by a transform constant, which
hardware realizes with shifts and adds, and is not recorded.
"""

import threading
from contextlib import contextmanager

import numpy as np

_state = threading.local()


def _bump():
    _state.count = getattr(_state, "count", 0) + 1


def _val(o):
    return o.value if isinstance(o, Counted) else o


class Counted:
    __slots__ = ("value",)

    def __init__(self, value):
        self.value = value

    def __mul__(self, other):
        if isinstance(other, Counted):
            _bump()
        return Counted(self.value * _val(other))

    def __rmul__(self, other):
        return Counted(_val(other) * self.value)

    def __truediv__(self, other):
        if isinstance(other, Counted):
            raise TypeError("division between data values is not modelled")
        return Counted(self.value / other)

    def __add__(self, other):
        return Counted(self.value + _val(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Counted(self.value - _val(other))

    def __rsub__(self, other):
        return Counted(_val(other) - self.value)

    def __neg__(self):
        return Counted(-self.value)

    def __repr__(self):
        return f"Counted({self.value!r})"


@contextmanager
def count_multiplications():
    """Yield a one-element list that holds the count once the block exits."""
    result = [0]
    previous = getattr(_state, "count", 0)
    _state.count = 0
    try:
        yield result
    finally:
        result[0] = _state.count
        _state.count = previous


def wrap(a):
    """Object array of Counted mirroring ``a``."""
    a = np.asarray(a, dtype=np.float64)
    out = np.empty(a.shape, dtype=object)
    for idx, v in np.ndenumerate(a):
        out[idx] = Counted(float(v))
    return out


def unwrap(a):
    a = np.asarray(a, dtype=object)
    out = np.empty(a.shape, dtype=np.float64)
    for idx, v in np.ndenumerate(a):
        out[idx] = float(_val(v))
    return out
