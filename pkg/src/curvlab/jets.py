"""Truncated multivariate Taylor arithmetic (jets).

A Jet stores the Taylor coefficients of a smooth function around an
evaluation point, densely indexed by multi-index in graded-lex order,
up to a fixed truncation order.  Every partial derivative extracted
from a jet is exact: no finite differencing happens anywhere downstream.

Coefficient storage is a numpy array whose last axis runs over the
multi-index enumeration.  Leading axes are allowed and broadcast, so a
single Jet can carry the expansion of the same expression at a batch of
points at once.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

MAX_DIMS = 8
MAX_ORDER = 5


class JetError(ValueError):
    """Raised on domain violations or mixed dims/order arithmetic."""


def _compositions(total, slots):
    # graded-lex within one degree level: first variable weakly decreasing
    if slots == 1:
        yield (total,)
        return
    for head in range(total, -1, -1):
        for rest in _compositions(total - head, slots - 1):
            yield (head,) + rest


@lru_cache(maxsize=None)
def _table(dims, order):
    return _Table(dims, order)


class _Table:
    """Enumeration and multiplication tables for one (dims, order) pair."""

    def __init__(self, dims, order):
        if not 1 <= dims <= MAX_DIMS:
            raise JetError(f"dims must be in 1..{MAX_DIMS}, got {dims}")
        if not 0 <= order <= MAX_ORDER:
            raise JetError(f"order must be in 0..{MAX_ORDER}, got {order}")
        alphas = []
        for deg in range(order + 1):
            alphas.extend(_compositions(deg, dims))
        self.dims = dims
        self.order = order
        self.alphas = alphas
        self.size = len(alphas)
        self.index = {a: i for i, a in enumerate(alphas)}
        self.degree = np.array([sum(a) for a in alphas])
        self.fact = np.array([float(math.prod(math.factorial(k) for k in a))
                              for a in alphas])
        # convolution triples (ia, ib) -> iout, sorted by iout so that
        # np.add.reduceat over contiguous segments performs the product
        trips = []
        for ib, b in enumerate(alphas):
            db = sum(b)
            for ia, a in enumerate(alphas):
                if sum(a) + db > order:
                    continue
                out = tuple(x + y for x, y in zip(a, b))
                trips.append((self.index[out], ia, ib))
        trips.sort()
        iout = np.array([t[0] for t in trips])
        self.mul_ia = np.array([t[1] for t in trips])
        self.mul_ib = np.array([t[2] for t in trips])
        self.mul_segs = np.searchsorted(iout, np.arange(self.size))


@lru_cache(maxsize=None)
def _deriv_map(dims, order, axis):
    hi = _table(dims, order)
    lo = _table(dims, order - 1)
    src = np.empty(lo.size, dtype=np.intp)
    mult = np.empty(lo.size)
    for j, beta in enumerate(lo.alphas):
        gamma = beta[:axis] + (beta[axis] + 1,) + beta[axis + 1:]
        src[j] = hi.index[gamma]
        mult[j] = beta[axis] + 1
    return src, mult


def multi_indices(dims, order):
    """All multi-indices with |alpha| <= order, in storage order."""
    return list(_table(dims, order).alphas)


def index_of(alpha, dims, order):
    return _table(dims, order).index[tuple(alpha)]


class Jet:
    __slots__ = ("dims", "order", "c")

    def __init__(self, dims, order, coeffs):
        tab = _table(dims, order)
        c = np.asarray(coeffs, dtype=np.float64)
        if c.shape[-1:] != (tab.size,):
            raise JetError(f"coefficient axis must have length {tab.size}, "
                           f"got shape {c.shape}")
        self.dims = dims
        self.order = order
        self.c = c

    # -- constructors ------------------------------------------------------

    @classmethod
    def constant(cls, value, dims, order):
        tab = _table(dims, order)
        value = np.asarray(value, dtype=np.float64)
        c = np.zeros(value.shape + (tab.size,))
        c[..., 0] = value
        return cls(dims, order, c)

    @classmethod
    def variable(cls, i, value, dims, order):
        """Seed coordinate variable i at the given value."""
        if order < 1:
            raise JetError("seeding a variable needs order >= 1")
        if not 0 <= i < dims:
            raise JetError(f"variable index {i} out of range for dims={dims}")
        tab = _table(dims, order)
        value = np.asarray(value, dtype=np.float64)
        c = np.zeros(value.shape + (tab.size,))
        c[..., 0] = value
        unit = tuple(1 if k == i else 0 for k in range(dims))
        c[..., tab.index[unit]] = 1.0
        return cls(dims, order, c)

    # -- bookkeeping -------------------------------------------------------

    def _check(self, other):
        if self.dims != other.dims or self.order != other.order:
            raise JetError(f"mixed jets: ({self.dims},{self.order}) vs "
                           f"({other.dims},{other.order})")

    @property
    def value(self):
        return self.c[..., 0]

    def coeffs_dict(self):
        tab = _table(self.dims, self.order)
        return {a: self.c[..., i] for i, a in enumerate(tab.alphas)}

    def truncated(self, order):
        if order > self.order:
            raise JetError("cannot truncate upward")
        if order == self.order:
            return self
        lo = _table(self.dims, order)
        return Jet(self.dims, order, self.c[..., :lo.size])

    def derivative(self, axis):
        """Partial derivative along one variable, as a jet of order-1."""
        if self.order < 1:
            raise JetError("derivative of an order-0 jet")
        src, mult = _deriv_map(self.dims, self.order, axis)
        return Jet(self.dims, self.order - 1, self.c[..., src] * mult)

    def partial(self, alpha):
        """Exact partial derivative for the given multi-index."""
        alpha = tuple(alpha)
        if len(alpha) != self.dims:
            raise JetError("multi-index length does not match dims")
        if sum(alpha) > self.order:
            raise JetError(f"|alpha|={sum(alpha)} exceeds order {self.order}")
        tab = _table(self.dims, self.order)
        i = tab.index[alpha]
        return tab.fact[i] * self.c[..., i]

    # -- ring operations ---------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            return Jet(self.dims, self.order, self.c + other.c)
        c = self.c.copy()
        c[..., 0] += other
        return Jet(self.dims, self.order, c)

    __radd__ = __add__

    def __neg__(self):
        return Jet(self.dims, self.order, -self.c)

    def __sub__(self, other):
        return self + (-other if isinstance(other, Jet) else -float(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            tab = _table(self.dims, self.order)
            prod = self.c[..., tab.mul_ia] * other.c[..., tab.mul_ib]
            return Jet(self.dims, self.order,
                       np.add.reduceat(prod, tab.mul_segs, axis=-1))
        return Jet(self.dims, self.order, self.c * float(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return Jet(self.dims, self.order, self.c / float(other))

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, r):
        return self.pow(r)

    # -- analytic primitives -----------------------------------------------

    def _compose(self, taylor):
        """Sum_k taylor[k] * (self - self0)^k; taylor[k] = f^(k)(a0)/k!."""
        out = np.zeros_like(self.c)
        out[..., 0] = taylor[0]
        h = self.c.copy()
        h[..., 0] = 0.0
        hj = Jet(self.dims, self.order, h)
        power = hj
        for k in range(1, self.order + 1):
            out = out + np.asarray(taylor[k])[..., None] * power.c
            if k < self.order:
                power = power * hj
        return Jet(self.dims, self.order, out)

    def exp(self):
        a0 = self.c[..., 0]
        e = np.exp(a0)
        return self._compose([e / math.factorial(k)
                              for k in range(self.order + 1)])

    def log(self):
        a0 = self.c[..., 0]
        if np.any(a0 <= 0.0):
            raise JetError("log of a jet with non-positive constant term")
        taylor = [np.log(a0)]
        for k in range(1, self.order + 1):
            taylor.append((-1.0) ** (k - 1) / (k * a0 ** k))
        return self._compose(taylor)

    def reciprocal(self):
        a0 = self.c[..., 0]
        if np.any(a0 == 0.0):
            raise JetError("division by a jet with zero constant term")
        taylor = [(-1.0) ** k / a0 ** (k + 1) for k in range(self.order + 1)]
        return self._compose(taylor)

    def pow(self, r):
        if float(r) == int(r) and int(r) >= 0:
            n = int(r)
            out = Jet.constant(np.ones(self.c.shape[:-1]), self.dims, self.order)
            base = self
            while n:
                if n & 1:
                    out = out * base
                n >>= 1
                if n:
                    base = base * base
            return out
        a0 = self.c[..., 0]
        if np.any(a0 <= 0.0):
            raise JetError("fractional power of a jet with non-positive "
                           "constant term")
        taylor = []
        coef = 1.0
        for k in range(self.order + 1):
            taylor.append(coef * a0 ** (r - k))
            coef *= (r - k) / (k + 1)
        return self._compose(taylor)

    def sqrt(self):
        return self.pow(0.5)

    def sin(self):
        a0 = self.c[..., 0]
        cycle = [np.sin(a0), np.cos(a0), -np.sin(a0), -np.cos(a0)]
        return self._compose([cycle[k % 4] / math.factorial(k)
                              for k in range(self.order + 1)])

    def cos(self):
        a0 = self.c[..., 0]
        cycle = [np.cos(a0), -np.sin(a0), -np.cos(a0), np.sin(a0)]
        return self._compose([cycle[k % 4] / math.factorial(k)
                              for k in range(self.order + 1)])

    def tanh(self):
        # f^(k) is a polynomial in u = tanh(a0): p0 = u, p' -> p'(u)(1-u^2)
        u = np.tanh(self.c[..., 0])
        poly = [0.0, 1.0]  # coefficients of p(u) = u
        taylor = [u]
        for k in range(1, self.order + 1):
            dp = [i * poly[i] for i in range(1, len(poly))]
            # multiply dp by (1 - u^2)
            new = [0.0] * (len(dp) + 2)
            for i, ci in enumerate(dp):
                new[i] += ci
                new[i + 2] -= ci
            poly = new
            val = np.zeros_like(u)
            for ci in reversed(poly):
                val = val * u + ci
            taylor.append(val / math.factorial(k))
        return self._compose(taylor)

    def __repr__(self):
        return (f"Jet(dims={self.dims}, order={self.order}, "
                f"value={self.value!r})")


def seed_point(point, order):
    """Seed all coordinates of a point (or batch of points) as jets.

    point: array-like (dims,) or (batch, dims).  Returns a list of dims
    jets whose batch shape matches the leading axes of `point`.
    """
    p = np.asarray(point, dtype=np.float64)
    dims = p.shape[-1]
    return [Jet.variable(i, p[..., i], dims, order) for i in range(dims)]
