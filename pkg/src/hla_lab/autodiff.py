"""Nestable forward-mode differentiation with tagged perturbations.

A :class:`Dual` carries one perturbation tag. Its primal and tangent parts may
themselves be duals of *older* tags, which is how derivatives of derivatives
are represented. Every call to :func:`derivative` draws a fresh tag from a
monotone counter, so two differentiation scopes can never confuse their
perturbations.

Primal values may be floats or numpy arrays; arrays are treated elementwise,
which lets a whole batch of independent runs share one pass through the
arithmetic.
"""

from __future__ import annotations

import itertools
import threading
from typing import Any, Callable, Sequence

import numpy as np

_tag_counter = itertools.count(1)
_local = threading.local()


class DiffError(ArithmeticError):
    """A derivative evaluated to a non-finite value."""


def _scope_stack() -> list[int]:
    stack = getattr(_local, "scopes", None)
    if stack is None:
        stack = _local.scopes = []
    return stack


def _new_tag() -> int:
    # next() on itertools.count is atomic under the GIL
    return next(_tag_counter)


def _tag(x) -> int:
    return x.tag if isinstance(x, Dual) else 0


def _split(x, tag):
    if isinstance(x, Dual) and x.tag == tag:
        return x.primal, x.tangent
    return x, None


def _make(tag, primal, tangent):
    if tangent is None:
        return primal
    return Dual(tag, primal, tangent)


def _add_tangents(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return a + b


class Dual:
    """Scalar ``primal + tangent * eps_tag`` with ``eps_tag**2 == 0``."""

    __slots__ = ("tag", "primal", "tangent")
    # make numpy hand mixed ndarray/Dual arithmetic back to us
    __array_ufunc__ = None

    def __init__(self, tag: int, primal, tangent):
        self.tag = tag
        self.primal = primal
        self.tangent = tangent

    def __repr__(self):
        return f"Dual(tag={self.tag}, primal={self.primal!r}, tangent={self.tangent!r})"

    def __add__(self, other):
        tag = max(self.tag, _tag(other))
        ap, at = _split(self, tag)
        bp, bt = _split(other, tag)
        return _make(tag, ap + bp, _add_tangents(at, bt))

    __radd__ = __add__

    def __neg__(self):
        return Dual(self.tag, -self.primal, -self.tangent)

    def __pos__(self):
        return self

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        tag = max(self.tag, _tag(other))
        ap, at = _split(self, tag)
        bp, bt = _split(other, tag)
        t1 = None if bt is None else ap * bt
        t2 = None if at is None else at * bp
        return _make(tag, ap * bp, _add_tangents(t1, t2))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Dual):
            return Dual(self.tag, self.primal / other, self.tangent / other)
        return self * _reciprocal(other)

    def __rtruediv__(self, other):
        return other * _reciprocal(self)


def _reciprocal(x: Dual) -> Dual:
    inv = 1.0 / x.primal
    return Dual(x.tag, inv, -x.tangent * inv * inv)


def primal(x):
    """Strip every perturbation and return the underlying real value."""
    while isinstance(x, Dual):
        x = x.primal
    return x


def _leaves(x):
    if isinstance(x, (list, tuple)):
        for item in x:
            yield from _leaves(item)
    elif isinstance(x, Dual):
        yield from _leaves(x.primal)
        yield from _leaves(x.tangent)
    else:
        yield x


def _check_finite(x, what: str):
    for leaf in _leaves(x):
        if not np.all(np.isfinite(leaf)):
            raise DiffError(f"non-finite {what}: {leaf!r}")


def _zero_like(x):
    leaf = primal(x)
    if isinstance(leaf, np.ndarray):
        return np.zeros_like(leaf, dtype=float)
    return 0.0


def stop_gradient(x):
    """Hide ``x`` from the innermost active differentiation scope.

    The primal passes through unchanged. Perturbations belonging to enclosing
    (older) scopes are kept, so a quantity frozen for one derivative can still
    be differentiated by a caller further out. Outside any scope this is the
    identity.
    """
    stack = _scope_stack()
    if not stack or not isinstance(x, Dual):
        return x
    if x.tag == stack[-1]:
        return x.primal
    return x


def _extract(y, tag):
    if isinstance(y, Dual) and y.tag == tag:
        return y.tangent
    return _zero_like(y)


def jvp(f: Callable[[Any], Any], at):
    """Directional derivative of ``f`` at ``at`` along a unit seed.

    ``f`` may return a scalar or a (possibly nested) list of scalars; the
    result mirrors that structure.
    """
    tag = _new_tag()
    stack = _scope_stack()
    stack.append(tag)
    try:
        out = f(Dual(tag, at, 1.0))
    finally:
        stack.pop()
    return _map_structure(lambda y: _extract(y, tag), out)


def _map_structure(fn, out):
    if isinstance(out, (list, tuple)):
        return [_map_structure(fn, o) for o in out]
    return fn(out)


def derivative(f: Callable[[Any], Any], at):
    """df/dx at ``at`` for a scalar function of one scalar."""
    d = jvp(f, at)
    _check_finite(d, "derivative")
    return d


def gradient_block(f: Callable[[list], Any], at: Sequence) -> list:
    """Per-coordinate derivatives of ``f`` over a parameter block."""
    at = list(at)
    grad = []
    for k in range(len(at)):
        def along_k(x, k=k):
            return f(at[:k] + [x] + at[k + 1:])
        grad.append(derivative(along_k, at[k]))
    return grad


def nested_gradient(inner: Callable[[list], Any], at: Sequence) -> list:
    """Differentiate a procedure that itself takes gradients.

    ``inner`` maps the outer block to a scalar or a list of scalars (for
    instance an anticipated update step). The inner procedure draws its own
    tags, so outer derivatives flow through its dependence on ``at``. For a
    list-valued ``inner`` the result is indexed ``[output][coordinate]``.
    """
    at = list(at)
    cols = []
    for k in range(len(at)):
        def along_k(x, k=k):
            return inner(at[:k] + [x] + at[k + 1:])
        col = jvp(along_k, at[k])
        _check_finite(col, "nested derivative")
        cols.append(col)
    if cols and isinstance(cols[0], list):
        return [[cols[k][r] for k in range(len(at))] for r in range(len(cols[0]))]
    return cols
