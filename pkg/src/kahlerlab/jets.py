"""Truncated multivariate Taylor arithmetic.

A Jet stores the Taylor coefficients, up to a fixed total degree, of a smooth
function at one implicit base point: ``coeffs[alpha] = d^alpha f / alpha!``.
Arithmetic on jets is exact truncated-series arithmetic, so the second, third
and fourth derivatives of anything assembled from a potential come out to
machine precision, with no finite-difference noise.

Orders above 4 are rejected rather than truncated: curvature needs four
derivatives of a potential and nothing downstream needs more, while the dense
product tables grow quickly with the order.
"""

import itertools
import math

import numpy as np

MAX_ORDER = 4
MAX_MATRIX = 8


class JetSpace:
    """Shared combinatorial tables for all jets with one (num_vars, order).

    Multi-indices are stored in a single canonical form: graded by total
    degree, lexicographic within a degree (the order produced by
    ``itertools.combinations_with_replacement``). Coefficients live in a flat
    dense array indexed by that rank.
    """

    _cache = {}

    def __new__(cls, num_vars, order):
        key = (int(num_vars), int(order))
        hit = cls._cache.get(key)
        if hit is not None:
            return hit
        if num_vars < 1:
            raise ValueError("need at least one variable")
        if not 0 <= order <= MAX_ORDER:
            raise ValueError("jet order must be in 0..%d, got %r" % (MAX_ORDER, order))
        self = super().__new__(cls)
        self.num_vars = int(num_vars)
        self.order = int(order)
        self._build()
        cls._cache[key] = self
        return self

    def _build(self):
        n, order = self.num_vars, self.order
        indices = []
        for deg in range(order + 1):
            for combo in itertools.combinations_with_replacement(range(n), deg):
                alpha = [0] * n
                for i in combo:
                    alpha[i] += 1
                indices.append(tuple(alpha))
        self.indices = indices
        self.size = len(indices)
        self.rank = {alpha: r for r, alpha in enumerate(indices)}
        self.degree = np.array([sum(a) for a in indices], dtype=np.intp)
        fact = [float(np.prod([math.factorial(k) for k in a])) for a in indices]
        self.factorial = np.array(fact)
        ii, jj, kk = [], [], []
        for i, a in enumerate(indices):
            da = self.degree[i]
            for j, b in enumerate(indices):
                if da + self.degree[j] > order:
                    continue
                ii.append(i)
                jj.append(j)
                kk.append(self.rank[tuple(x + y for x, y in zip(a, b))])
        self._pi = np.array(ii, dtype=np.intp)
        self._pj = np.array(jj, dtype=np.intp)
        self._pk = np.array(kk, dtype=np.intp)

    def zeros(self):
        return np.zeros(self.size)


class Jet:
    """One truncated Taylor expansion. Immutable by convention."""

    __slots__ = ("space", "coeffs")

    def __init__(self, space, coeffs):
        self.space = space
        self.coeffs = np.asarray(coeffs, dtype=float)
        if self.coeffs.shape != (space.size,):
            raise ValueError("coefficient array has wrong length")

    @classmethod
    def constant(cls, space, value):
        c = space.zeros()
        c[0] = value
        return cls(space, c)

    @property
    def num_vars(self):
        return self.space.num_vars

    @property
    def order(self):
        return self.space.order

    @property
    def value(self):
        return float(self.coeffs[0])

    def derivative(self, alpha):
        """Raw partial derivative d^alpha f for a multi-index tuple."""
        alpha = tuple(alpha)
        r = self.space.rank[alpha]
        return float(self.coeffs[r] * self.space.factorial[r])

    def grad(self):
        """First partials as a vector."""
        n = self.num_vars
        # degree-1 ranks sit right after the constant, in variable order
        return self.coeffs[1:1 + n].copy()

    def hess(self):
        """Second partials as a symmetric matrix."""
        n = self.num_vars
        h = np.empty((n, n))
        for a in range(n):
            for b in range(a, n):
                alpha = [0] * n
                alpha[a] += 1
                alpha[b] += 1
                h[a, b] = h[b, a] = self.derivative(alpha)
        return h

    def partial(self, var):
        """d/dx_var as a jet of one order lower."""
        if self.order == 0:
            raise ValueError("cannot differentiate an order-0 jet")
        tgt = JetSpace(self.num_vars, self.order - 1)
        out = tgt.zeros()
        for r, beta in enumerate(tgt.indices):
            alpha = list(beta)
            alpha[var] += 1
            out[r] = self.coeffs[self.space.rank[tuple(alpha)]] * (beta[var] + 1)
        return Jet(tgt, out)

    def _coerce(self, other):
        if isinstance(other, Jet):
            if other.space is not self.space:
                raise ValueError("jets from different spaces")
            return other
        return Jet.constant(self.space, float(other))

    def __add__(self, other):
        other = self._coerce(other)
        return Jet(self.space, self.coeffs + other.coeffs)

    __radd__ = __add__

    def __neg__(self):
        return Jet(self.space, -self.coeffs)

    def __sub__(self, other):
        other = self._coerce(other)
        return Jet(self.space, self.coeffs - other.coeffs)

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.space, self.coeffs * float(other))
        if other.space is not self.space:
            raise ValueError("jets from different spaces")
        sp = self.space
        w = self.coeffs[sp._pi] * other.coeffs[sp._pj]
        return Jet(sp, np.bincount(sp._pk, weights=w, minlength=sp.size))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * jet_reciprocal(other)
        return Jet(self.space, self.coeffs / float(other))

    def __rtruediv__(self, other):
        return jet_reciprocal(self) * float(other)

    def __pow__(self, k):
        if not isinstance(k, (int, np.integer)):
            raise TypeError("jet powers must be integers")
        if k < 0:
            return jet_reciprocal(self) ** (-k)
        out = Jet.constant(self.space, 1.0)
        base = self
        k = int(k)
        while k:
            if k & 1:
                out = out * base
            base = base * base if k > 1 else base
            k >>= 1
        return out

    def compose(self, derivs):
        """Apply a univariate function h by its derivatives at self.value.

        derivs[k] must be the raw k-th derivative of h at the base value,
        for k = 0..order.
        """
        if len(derivs) < self.order + 1:
            raise ValueError("need order+1 derivatives for composition")
        nilp = Jet(self.space, self.coeffs.copy())
        nilp.coeffs[0] = 0.0
        out = Jet.constant(self.space, derivs[0])
        power = None
        for k in range(1, self.order + 1):
            power = nilp if power is None else power * nilp
            out = out + power * (derivs[k] / math.factorial(k))
        return out

    def __repr__(self):
        return "Jet(n=%d, order=%d, value=%g)" % (self.num_vars, self.order, self.value)


def jet_seed(point, order, space=None):
    """Seed coordinate jets at a base point.

    Returns one jet per coordinate, with the coordinate value in degree zero
    and a unit first-order coefficient in its own slot.
    """
    point = np.atleast_1d(np.asarray(point, dtype=float))
    if space is None:
        space = JetSpace(len(point), order)
    elif space.num_vars != len(point) or space.order != order:
        raise ValueError("space does not match point/order")
    out = []
    for a, x in enumerate(point):
        c = space.zeros()
        c[0] = x
        if order >= 1:
            c[1 + a] = 1.0
        out.append(Jet(space, c))
    return out


def jet_reciprocal(j):
    u0 = j.value
    if u0 == 0.0:
        raise ZeroDivisionError("division by a jet with value 0")
    derivs = [(-1.0) ** k * math.factorial(k) / u0 ** (k + 1) for k in range(j.order + 1)]
    return j.compose(derivs)


def jet_log(j):
    u0 = j.value
    if u0 <= 0.0:
        raise ValueError("log of a jet with non-positive value")
    derivs = [math.log(u0)]
    derivs += [(-1.0) ** (k - 1) * math.factorial(k - 1) / u0 ** k for k in range(1, j.order + 1)]
    return j.compose(derivs)


def jet_exp(j):
    e = math.exp(j.value)
    return j.compose([e] * (j.order + 1))


def jet_sqrt(j):
    u0 = j.value
    if u0 <= 0.0:
        raise ValueError("sqrt of a jet with non-positive value")
    derivs = [math.sqrt(u0)]
    c = 0.5
    for k in range(1, j.order + 1):
        derivs.append(c * u0 ** (0.5 - k))
        c *= 0.5 - k
    return j.compose(derivs)


def jet_atan(j):
    """arctangent, used by a few narrative demos and tests."""
    u0 = j.value
    d1 = 1.0 / (1.0 + u0 * u0)
    d2 = -2.0 * u0 * d1 * d1
    d3 = (6.0 * u0 * u0 - 2.0) * d1 ** 3
    d4 = 24.0 * u0 * (1.0 - u0 * u0) * d1 ** 4
    return j.compose([math.atan(u0), d1, d2, d3, d4][: j.order + 1])


class CJet:
    """Complex jet: a (real, imaginary) pair of Jets.

    Supports the holomorphic-coordinate bookkeeping needed by potentials such
    as log det(I + Z*Z) without complexifying the underlying real jet space.
    """

    __slots__ = ("re", "im")

    def __init__(self, re, im=None):
        if im is None:
            im = Jet.constant(re.space, 0.0)
        if re.space is not im.space:
            raise ValueError("mismatched jet spaces in complex jet")
        self.re = re
        self.im = im

    @classmethod
    def constant(cls, space, z):
        z = complex(z)
        return cls(Jet.constant(space, z.real), Jet.constant(space, z.imag))

    @property
    def value(self):
        return complex(self.re.value, self.im.value)

    def conj(self):
        return CJet(self.re, -self.im)

    def abs2(self):
        return self.re * self.re + self.im * self.im

    def _coerce(self, other):
        if isinstance(other, CJet):
            return other
        if isinstance(other, Jet):
            return CJet(other)
        return CJet.constant(self.re.space, other)

    def __add__(self, other):
        other = self._coerce(other)
        return CJet(self.re + other.re, self.im + other.im)

    __radd__ = __add__

    def __neg__(self):
        return CJet(-self.re, -self.im)

    def __sub__(self, other):
        other = self._coerce(other)
        return CJet(self.re - other.re, self.im - other.im)

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __mul__(self, other):
        other = self._coerce(other)
        return CJet(self.re * other.re - self.im * other.im,
                    self.re * other.im + self.im * other.re)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        inv = jet_reciprocal(other.abs2())
        num = self * other.conj()
        return CJet(num.re * inv, num.im * inv)

    def __rtruediv__(self, other):
        return self._coerce(other).__truediv__(self)

    def __repr__(self):
        return "CJet(value=%r)" % (self.value,)


def _is_cjet(x):
    return isinstance(x, CJet)


def _like_zero(x):
    sp = x.re.space if _is_cjet(x) else x.space
    return CJet.constant(sp, 0.0) if _is_cjet(x) else Jet.constant(sp, 0.0)


def _like_one(x):
    sp = x.re.space if _is_cjet(x) else x.space
    return CJet.constant(sp, 1.0) if _is_cjet(x) else Jet.constant(sp, 1.0)


def _pivot_size(x):
    return abs(x.value)


def _check_matrix(m):
    m = np.asarray(m, dtype=object)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("need a square matrix of jets")
    if m.shape[0] > MAX_MATRIX:
        raise ValueError("jet matrices are limited to %dx%d" % (MAX_MATRIX, MAX_MATRIX))
    return m


def jet_mat_det(m):
    """Determinant by elimination with jet scalars, partial pivoting."""
    m = _check_matrix(m).copy()
    n = m.shape[0]
    if n == 1:
        return m[0, 0]
    det = _like_one(m[0, 0])
    sign = 1.0
    for col in range(n):
        piv = max(range(col, n), key=lambda r: _pivot_size(m[r, col]))
        if _pivot_size(m[piv, col]) == 0.0:
            return _like_zero(m[0, 0])
        if piv != col:
            m[[col, piv]] = m[[piv, col]]
            sign = -sign
        det = det * m[col, col]
        inv = _like_one(m[col, col]) / m[col, col]
        for r in range(col + 1, n):
            f = m[r, col] * inv
            for c in range(col + 1, n):
                m[r, c] = m[r, c] - f * m[col, c]
    return det * sign


def jet_mat_inverse(m):
    """Inverse by Gauss-Jordan elimination with jet scalars."""
    m = _check_matrix(m).copy()
    n = m.shape[0]
    aug = np.empty((n, 2 * n), dtype=object)
    aug[:, :n] = m
    for r in range(n):
        for c in range(n):
            aug[r, n + c] = _like_one(m[0, 0]) if r == c else _like_zero(m[0, 0])
    for col in range(n):
        piv = max(range(col, n), key=lambda r: _pivot_size(aug[r, col]))
        if _pivot_size(aug[piv, col]) == 0.0:
            raise ZeroDivisionError("jet matrix is singular at its base value")
        if piv != col:
            aug[[col, piv]] = aug[[piv, col]]
        inv = _like_one(aug[col, col]) / aug[col, col]
        for c in range(col, 2 * n):
            aug[col, c] = aug[col, c] * inv
        for r in range(n):
            if r == col:
                continue
            f = aug[r, col]
            if _pivot_size(f) == 0.0 and not _nonzero_tail(f):
                continue
            for c in range(col, 2 * n):
                aug[r, c] = aug[r, c] - f * aug[col, c]
    return aug[:, n:]


def _nonzero_tail(x):
    if _is_cjet(x):
        return np.any(x.re.coeffs) or np.any(x.im.coeffs)
    return bool(np.any(x.coeffs))


_UNARY = {"log": jet_log, "exp": jet_exp, "sqrt": jet_sqrt}


def jet_arith(op, *args):
    """Single dispatch point over the supported jet operations."""
    if op == "add":
        out = args[0]
        for a in args[1:]:
            out = out + a
        return out
    if op == "mul":
        out = args[0]
        for a in args[1:]:
            out = out * a
        return out
    if op == "div":
        if len(args) != 2:
            raise ValueError("div takes two arguments")
        return args[0] / args[1]
    if op in _UNARY:
        (j,) = args
        return _UNARY[op](j)
    if op == "matrix-det":
        return jet_mat_det(args[0])
    if op == "matrix-inverse":
        return jet_mat_inverse(args[0])
    raise ValueError("unknown jet operation %r" % (op,))
