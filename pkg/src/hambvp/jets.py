"""Second-order forward-mode jets.

A :class:`Jet2` carries a value together with its gradient and Hessian with
respect to a fixed set of ``s`` seed directions.  Values may be scalars or
numpy arrays of any batch shape ``B``; then ``grad`` has shape ``B + (s,)`` and
``hess`` has shape ``B + (s, s)``.  Batching lets one flow computation cover a
whole parameter grid.

``hess`` may be ``None``, in which case only first derivatives are propagated.
This is the cheap mode used by Newton iterations that never look at second
derivatives.

The module-level functions (:func:`exp`, :func:`sin`, ...) dispatch on their
argument so that model code written once works for floats, numpy arrays and
jets alike.
"""

from __future__ import annotations

import math

import numpy as np


class JetDomainError(ArithmeticError):
    """Operation outside the domain of the underlying real function."""


def _col(v):
    # value broadcast against grad
    return np.asarray(v)[..., None]


def _col2(v):
    return np.asarray(v)[..., None, None]


def _outer(a, b):
    return a[..., :, None] * b[..., None, :]


class Jet2:
    """Truncated second-order Taylor polynomial in ``s`` seed directions."""

    __slots__ = ("value", "grad", "hess")
    __array_priority__ = 100.0

    def __init__(self, value, grad, hess=None):
        self.value = value
        self.grad = grad
        self.hess = hess

    # -- construction -----------------------------------------------------
    @classmethod
    def constant(cls, value, s, order=2):
        value = _as_real(value)
        shape = np.shape(value)
        dtype = np.result_type(value, np.float64)
        grad = np.zeros(shape + (s,), dtype=dtype)
        hess = np.zeros(shape + (s, s), dtype=dtype) if order == 2 else None
        return cls(value, grad, hess)

    @classmethod
    def variable(cls, value, index, s, order=2):
        jet = cls.constant(value, s, order)
        jet.grad[..., index] = 1.0
        return jet

    @property
    def s(self):
        return self.grad.shape[-1]

    @property
    def order(self):
        return 1 if self.hess is None else 2

    def __repr__(self):
        return f"Jet2(value={self.value!r}, grad={self.grad!r}, hess={self.hess!r})"

    def __float__(self):
        return float(self.value)

    # -- algebra -----------------------------------------------------------
    def _chain(self, f0, f1, f2):
        """Compose with a scalar function given its value and two derivatives."""
        if np.ndim(f0) == 0:
            grad = f1 * self.grad
            hess = None
            if self.hess is not None:
                hess = f1 * self.hess + f2 * _outer(self.grad, self.grad)
            return Jet2(f0, grad, hess)
        grad = _col(f1) * self.grad
        hess = None
        if self.hess is not None:
            hess = _col2(f1) * self.hess + _col2(f2) * _outer(self.grad, self.grad)
        return Jet2(f0, grad, hess)

    def __neg__(self):
        return Jet2(-self.value, -self.grad, None if self.hess is None else -self.hess)

    def __pos__(self):
        return self

    def __add__(self, other):
        if isinstance(other, Jet2):
            hess = None
            if self.hess is not None and other.hess is not None:
                hess = self.hess + other.hess
            return Jet2(self.value + other.value, self.grad + other.grad, hess)
        if np.ndim(other) > np.ndim(self.value):
            return self + _lift(other, self)
        return Jet2(self.value + other, self.grad, self.hess)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Jet2):
            hess = None
            if self.hess is not None and other.hess is not None:
                hess = self.hess - other.hess
            return Jet2(self.value - other.value, self.grad - other.grad, hess)
        if np.ndim(other) > np.ndim(self.value):
            return self - _lift(other, self)
        return Jet2(self.value - other, self.grad, self.hess)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet2):
            a, b = self, other
            if np.ndim(a.value) == 0 and np.ndim(b.value) == 0:
                grad = a.value * b.grad + b.value * a.grad
                hess = None
                if a.hess is not None and b.hess is not None:
                    cross = _outer(a.grad, b.grad)
                    hess = a.value * b.hess + b.value * a.hess + cross + cross.T
                return Jet2(a.value * b.value, grad, hess)
            grad = _col(a.value) * b.grad + _col(b.value) * a.grad
            hess = None
            if a.hess is not None and b.hess is not None:
                cross = _outer(a.grad, b.grad)
                hess = (_col2(a.value) * b.hess + _col2(b.value) * a.hess
                        + cross + np.swapaxes(cross, -1, -2))
            return Jet2(a.value * b.value, grad, hess)
        if np.ndim(other) == 0:
            return Jet2(self.value * other, self.grad * other,
                        None if self.hess is None else self.hess * other)
        if np.ndim(other) > np.ndim(self.value):
            return self * _lift(other, self)
        return Jet2(self.value * other, self.grad * _col(other),
                    None if self.hess is None else self.hess * _col2(other))

    __rmul__ = __mul__

    def reciprocal(self):
        v = self.value
        if np.any(np.asarray(v) == 0.0):
            raise JetDomainError("division by a jet with zero value")
        r = 1.0 / v
        return self._chain(r, -r * r, 2.0 * r * r * r)

    def __truediv__(self, other):
        if isinstance(other, Jet2):
            return self * other.reciprocal()
        if np.any(np.asarray(other) == 0.0):
            raise JetDomainError("division by zero")
        return self * (1.0 / np.asarray(other) if np.ndim(other) else 1.0 / other)

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, n):
        if isinstance(n, Jet2):
            return exp(n * log(self))
        v = self.value
        if float(n).is_integer():
            n = int(n)
            if n == 0:
                return Jet2.constant(np.ones_like(v) if np.ndim(v) else 1.0, self.s, self.order)
            if n == 1:
                return self
            if n == 2:
                return self * self
            if n < 0 and np.any(np.asarray(v) == 0.0):
                raise JetDomainError("negative power of a zero jet")
            return self._chain(v ** n, n * v ** (n - 1), n * (n - 1) * v ** (n - 2))
        if np.any(np.asarray(v) <= 0.0):
            raise JetDomainError("non-integer power of a non-positive jet")
        return self._chain(v ** n, n * v ** (n - 1), n * (n - 1) * v ** (n - 2))

    def __rpow__(self, base):
        return exp(self * math.log(base))

    # -- elementary functions ---------------------------------------------
    def exp(self):
        e = np.exp(self.value)
        return self._chain(e, e, e)

    def log(self):
        v = self.value
        if np.any(np.asarray(v) <= 0.0):
            raise JetDomainError("log of a non-positive jet")
        r = 1.0 / v
        return self._chain(np.log(v), r, -r * r)

    def sqrt(self):
        v = self.value
        if np.any(np.asarray(v) <= 0.0):
            raise JetDomainError("sqrt of a non-positive jet")
        r = np.sqrt(v)
        return self._chain(r, 0.5 / r, -0.25 / (r * v))

    def sin(self):
        sv, cv = np.sin(self.value), np.cos(self.value)
        return self._chain(sv, cv, -sv)

    def cos(self):
        sv, cv = np.sin(self.value), np.cos(self.value)
        return self._chain(cv, -sv, -cv)

    def sinh(self):
        sv, cv = np.sinh(self.value), np.cosh(self.value)
        return self._chain(sv, cv, sv)

    def cosh(self):
        sv, cv = np.sinh(self.value), np.cosh(self.value)
        return self._chain(cv, sv, cv)

    def tanh(self):
        t = np.tanh(self.value)
        d = 1.0 - t * t
        return self._chain(t, d, -2.0 * t * d)


def _as_real(value):
    """Float array or scalar, keeping extended precision (``longdouble``) if given."""
    arr = np.asarray(value)
    if arr.dtype != np.longdouble:
        arr = arr.astype(float)
    if arr.ndim:
        return arr
    return float(arr) if arr.dtype == np.float64 else arr[()]


def _lift(x, like):
    """Constant jet with the batch shape of ``x`` and the seed count of ``like``."""
    x = np.asarray(_as_real(x))
    dtype = np.result_type(x, like.grad)
    hess = None if like.hess is None else np.zeros(x.shape + (like.s, like.s), dtype=dtype)
    return Jet2(x, np.zeros(x.shape + (like.s,), dtype=dtype), hess)


def _dispatch(name, npfunc):
    def f(x):
        if isinstance(x, Jet2):
            return getattr(x, name)()
        if isinstance(x, (int, float)):
            return getattr(math, name)(x)
        return npfunc(x)
    f.__name__ = name
    f.__doc__ = f"{name} for floats, arrays and jets."
    return f


exp = _dispatch("exp", np.exp)
log = _dispatch("log", np.log)
sqrt = _dispatch("sqrt", np.sqrt)
sin = _dispatch("sin", np.sin)
cos = _dispatch("cos", np.cos)
sinh = _dispatch("sinh", np.sinh)
cosh = _dispatch("cosh", np.cosh)
tanh = _dispatch("tanh", np.tanh)


def primal(x):
    """Value part of a jet; identity on plain numbers."""
    return x.value if isinstance(x, Jet2) else x


def seed(values, order=2, extra=0):
    """Independent variables for ``values``, one seed direction each.

    ``extra`` reserves additional trailing seed slots (for parameters seeded
    separately by the caller).
    """
    values = list(values)
    s = len(values) + extra
    return [Jet2.variable(v, i, s, order) for i, v in enumerate(values)]


def as_jet(x, s, order=2):
    return x if isinstance(x, Jet2) else Jet2.constant(x, s, order)


def stack(jets):
    """Arrays ``(value, grad, hess)`` with the component index first."""
    value = np.stack([np.asarray(_as_real(j.value)) for j in jets])
    grad = np.stack([j.grad for j in jets])
    hess = None
    if all(j.hess is not None for j in jets):
        hess = np.stack([j.hess for j in jets])
    return value, grad, hess


def unstack(value, grad, hess):
    k = value.shape[0]
    out = []
    for i in range(k):
        v = value[i]
        out.append(Jet2(v if np.ndim(v) else float(v), grad[i],
                        None if hess is None else hess[i]))
    return out


def matvec(matrix, jets):
    """Apply a float matrix to a vector of jets.

    ``matrix`` has shape ``(k, k)`` or ``B + (k, k)`` for batched jets.
    """
    value, grad, hess = stack(jets)
    m = np.asarray(matrix)
    if m.ndim == 2:
        value = np.tensordot(m, value, axes=(1, 0))
        grad = np.tensordot(m, grad, axes=(1, 0))
        if hess is not None:
            hess = np.tensordot(m, hess, axes=(1, 0))
    else:
        # batch axes of m lead; components lead in the jet arrays
        value = np.einsum("...ij,j...->i...", m, value)
        grad = np.einsum("...ij,j...s->i...s", m, grad)
        if hess is not None:
            hess = np.einsum("...ij,j...st->i...st", m, hess)
    return unstack(value, grad, hess)
