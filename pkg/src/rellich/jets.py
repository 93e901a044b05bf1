"""
Forward-mode jets for exact first and second derivatives of closed-form fields

Values are numpy arrays over a batch of points. ``Jet2`` stores the gradient
and the full symmetric Hessian on trailing axes. ``Jet1`` keeps its gradient
as a tuple of scalars so that it nests: a ``Jet1`` whose scalars are ``Jet2``
carries the Hessian of every first partial.
"""

import functools
import logging
import math
import operator
from dataclasses import dataclass

import numpy as np

from src.utils.errors import EvaluationError

logger = logging.getLogger("rellich-lab")

_CONSTANT_TYPES = (int, float, np.ndarray, np.floating, np.integer)

# Integer exponents up to this size use repeated multiplication
_MAX_INTEGER_POWER = 32


def primal(a):
    """Innermost numeric value of a (possibly nested) jet."""
    while isinstance(a, (Jet1, Jet2)):
        a = a.value
    return np.asarray(a, dtype=float)


def _trail(c, extra):
    """Append ``extra`` broadcast axes to a batch-shaped constant."""
    c = np.asarray(c, dtype=float)
    return c[(...,) + (None,) * extra]


def _outer(a, b):
    return a[..., :, None] * b[..., None, :]


class Jet2:
    """
    Value, gradient and Hessian of a scalar field over a batch of points.

    The Hessian is symmetric bit for bit: every update adds symmetric
    matrices or pairs ``outer(a, b) + outer(b, a)``.
    """

    __slots__ = ("value", "gradient", "hessian")
    __array_ufunc__ = None

    def __init__(self, value, gradient, hessian):
        self.value = np.asarray(value, dtype=float)
        self.gradient = np.asarray(gradient, dtype=float)
        self.hessian = np.asarray(hessian, dtype=float)

    @property
    def dim(self):
        return self.gradient.shape[-1]

    @property
    def laplacian(self):
        return np.trace(self.hessian, axis1=-2, axis2=-1)

    def __repr__(self):
        return f"Jet2(value={self.value!r})"

    def _lift(self, f0, f1, f2):
        g = self.gradient
        return Jet2(
            f0,
            _trail(f1, 1) * g,
            _trail(f1, 2) * self.hessian + _trail(f2, 2) * _outer(g, g),
        )

    def _scale(self, c):
        return Jet2(
            self.value * c,
            self.gradient * _trail(c, 1),
            self.hessian * _trail(c, 2),
        )

    def __add__(self, other):
        if isinstance(other, Jet2):
            return Jet2(
                self.value + other.value,
                self.gradient + other.gradient,
                self.hessian + other.hessian,
            )
        if isinstance(other, _CONSTANT_TYPES):
            return Jet2(self.value + other, self.gradient, self.hessian)
        return NotImplemented

    __radd__ = __add__

    def __neg__(self):
        return Jet2(-self.value, -self.gradient, -self.hessian)

    def __sub__(self, other):
        if isinstance(other, (Jet2,) + _CONSTANT_TYPES):
            return self + (-other)
        return NotImplemented

    def __rsub__(self, other):
        if isinstance(other, _CONSTANT_TYPES):
            return (-self) + other
        return NotImplemented

    def __mul__(self, other):
        if isinstance(other, Jet2):
            a, b = self, other
            ga, gb = a.gradient, b.gradient
            return Jet2(
                a.value * b.value,
                _trail(a.value, 1) * gb + _trail(b.value, 1) * ga,
                _trail(a.value, 2) * b.hessian
                + _trail(b.value, 2) * a.hessian
                + (_outer(ga, gb) + _outer(gb, ga)),
            )
        if isinstance(other, _CONSTANT_TYPES):
            return self._scale(other)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet2):
            return self * reciprocal(other)
        if isinstance(other, _CONSTANT_TYPES):
            _require_nonzero(other)
            return self._scale(1.0 / np.asarray(other, dtype=float))
        return NotImplemented

    def __rtruediv__(self, other):
        if isinstance(other, _CONSTANT_TYPES):
            return reciprocal(self) * other
        return NotImplemented

    def __pow__(self, exponent):
        return power(self, exponent)


class Jet1:
    """
    Value and gradient of a scalar field; the gradient is a tuple of scalars.

    Scalars may be floats, arrays, ``Jet2`` or ``Jet1`` instances, which is
    what makes nested evaluation possible.
    """

    __slots__ = ("value", "gradient")
    __array_ufunc__ = None

    def __init__(self, value, gradient):
        self.value = value
        self.gradient = tuple(gradient)

    @property
    def dim(self):
        return len(self.gradient)

    def __repr__(self):
        return f"Jet1(value={self.value!r})"

    def gradient_array(self):
        """Stack a first-level gradient into an array with a trailing axis."""
        shape = np.shape(primal(self.value))
        return np.stack(
            [np.broadcast_to(primal(g), shape) for g in self.gradient], axis=-1
        )

    def __add__(self, other):
        if isinstance(other, Jet1):
            return Jet1(
                self.value + other.value,
                (a + b for a, b in zip(self.gradient, other.gradient)),
            )
        return Jet1(self.value + other, self.gradient)

    __radd__ = __add__

    def __neg__(self):
        return Jet1(-self.value, (-a for a in self.gradient))

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet1):
            v, w = self.value, other.value
            return Jet1(
                v * w,
                (v * b + w * a for a, b in zip(self.gradient, other.gradient)),
            )
        return Jet1(self.value * other, (a * other for a in self.gradient))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * reciprocal(other)

    def __rtruediv__(self, other):
        return reciprocal(self) * other

    def __pow__(self, exponent):
        return power(self, exponent)


class _Elementary:
    """
    A smooth scalar function described by its derivatives of every order.

    ``derivative(t, k)`` returns the k-th derivative at ``t``. Applying the
    function to a ``Jet1`` applies the shifted function to its value, so any
    nesting depth is served by the same table.
    """

    def __init__(self, name, derivative, domain=None, shift=0):
        self.name = name
        self._derivative = derivative
        self._domain = domain
        self._shift = shift

    def shifted(self):
        return _Elementary(self.name, self._derivative, self._domain, self._shift + 1)

    def _check(self, a):
        if self._domain is None:
            return
        t = primal(a)
        ok = self._domain(t)
        if not np.all(ok):
            bad = np.ravel(t[~ok] if t.ndim else t)[0]
            raise EvaluationError(
                f"{self.name} outside its domain (argument {bad!r})",
                operation=self.name,
            )

    def __call__(self, a):
        self._check(a)
        k = self._shift
        if isinstance(a, Jet2):
            t = a.value
            return a._lift(
                self._derivative(t, k),
                self._derivative(t, k + 1),
                self._derivative(t, k + 2),
            )
        if isinstance(a, Jet1):
            slope = self.shifted()(a.value)
            return Jet1(self(a.value), (slope * g for g in a.gradient))
        return self._derivative(np.asarray(a, dtype=float), k)


def _falling(lam, k):
    out = 1.0
    for i in range(k):
        out *= lam - i
    return out


def _power_table(lam):
    def derivative(t, k):
        return _falling(lam, k) * np.power(t, lam - k)

    return derivative


def _log_table(t, k):
    if k == 0:
        return np.log(t)
    return (-1.0) ** (k - 1) * math.factorial(k - 1) * np.power(t, -float(k))


def _cutoff_table(t, k):
    """Derivatives of exp(-1/t) for t > 0, extended by zero."""
    positive = t > 0
    s = np.where(positive, t, 1.0)
    phi = np.where(positive, np.exp(-1.0 / s), 0.0)
    if k == 0:
        return phi
    if k == 1:
        return phi / s**2
    if k == 2:
        return phi * (1.0 - 2.0 * s) / s**4
    if k == 3:
        return phi * (6.0 * s**2 - 6.0 * s + 1.0) / s**6
    raise EvaluationError(
        "smooth cutoff derivatives are tabulated up to order 3",
        operation="smooth_cutoff",
    )


exp = _Elementary("exp", lambda t, k: np.exp(t))
log = _Elementary("ln", _log_table, domain=lambda t: t > 0)
sqrt = _Elementary("sqrt", _power_table(0.5), domain=lambda t: t > 0)
reciprocal = _Elementary("div", _power_table(-1.0), domain=lambda t: t != 0)
smooth_cutoff = _Elementary("smooth_cutoff", _cutoff_table)


def _require_nonzero(c):
    if np.any(primal(c) == 0):
        raise EvaluationError("division by zero", operation="div")


def power(a, exponent):
    """
    Raise a jet (or number) to a real power.

    Integer exponents use repeated multiplication; any other exponent needs a
    positive base and is evaluated as exp(exponent * ln a).
    """
    exponent = float(exponent)
    if exponent.is_integer() and abs(exponent) <= _MAX_INTEGER_POWER:
        k = int(exponent)
        if k == 0:
            return a * 0.0 + 1.0
        base = a if k > 0 else reciprocal(a)
        result = base
        for _ in range(abs(k) - 1):
            result = result * base
        return result
    if not np.all(primal(a) > 0):
        raise EvaluationError(
            f"non-integer power {exponent} of a non-positive base", operation="pow"
        )
    return exp(exponent * log(a))


def radius_squared(coords):
    return functools.reduce(operator.add, (c * c for c in coords))


def radius(coords):
    return sqrt(radius_squared(coords))


@dataclass(frozen=True, eq=False)
class Points:
    """
    A batch of points of R^n with the origin excluded.

    Args:
        coordinates (np.ndarray): Array of shape (m, n) or (n,)
    """

    coordinates: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.coordinates, dtype=float))
        if not np.all(np.isfinite(x)):
            raise EvaluationError("non-finite coordinates", operation="point")
        r = np.sqrt(np.sum(x * x, axis=-1))
        if not np.all(r > 0):
            raise EvaluationError(
                "the origin is excluded from the evaluation domain", operation="point"
            )
        object.__setattr__(self, "coordinates", x)
        object.__setattr__(self, "radius", r)

    @property
    def dim(self):
        return self.coordinates.shape[-1]

    @property
    def count(self):
        return self.coordinates.shape[0]

    @property
    def direction(self):
        return self.coordinates / self.radius[:, None]


def as_points(x):
    return x if isinstance(x, Points) else Points(x)


def seed_jet2(x):
    """Coordinate jets x_i with gradient e_i and zero Hessian."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    batch = x.shape[:-1]
    eye = np.eye(n)
    zeros = np.zeros(batch + (n, n))
    return [
        Jet2(x[..., i], np.broadcast_to(eye[i], batch + (n,)), zeros)
        for i in range(n)
    ]


def seed_jet1(x):
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    return [
        Jet1(x[..., i], tuple(1.0 if k == i else 0.0 for k in range(n)))
        for i in range(n)
    ]


def seed_nested(x):
    """Jet1 coordinates whose scalars are Jet2 coordinates."""
    n = np.shape(x)[-1]
    return [
        Jet1(s, tuple(1.0 if k == i else 0.0 for k in range(n)))
        for i, s in enumerate(seed_jet2(x))
    ]


def as_jet2(a, batch, n):
    """Promote a constant produced by a field to a Jet2 of the batch shape."""
    if isinstance(a, Jet2):
        return a
    value = np.broadcast_to(np.asarray(a, dtype=float), batch)
    return Jet2(value, np.zeros(batch + (n,)), np.zeros(batch + (n, n)))


def require_finite(jet, operation):
    parts = [jet.value, jet.gradient, jet.hessian] if isinstance(jet, Jet2) else [
        primal(jet.value)
    ] + [primal(g) for g in jet.gradient]
    for part in parts:
        if not np.all(np.isfinite(part)):
            raise EvaluationError(f"non-finite value in {operation}", operation=operation)
    return jet


def evaluate_jet2(field, x):
    """
    Evaluate value, gradient and Hessian of ``field`` at points ``x``.

    Args:
        field (callable): Maps a list of coordinate jets to a jet
        x (Points | np.ndarray): Evaluation points, origin excluded

    Returns:
        Jet2: Batched derivatives
    """
    pts = as_points(x)
    out = field(seed_jet2(pts.coordinates))
    out = as_jet2(out, (pts.count,), pts.dim)
    return require_finite(out, "evaluate_jet2")


def evaluate_jet1(field, x):
    pts = as_points(x)
    out = field(seed_jet1(pts.coordinates))
    if not isinstance(out, Jet1):
        out = Jet1(np.broadcast_to(np.asarray(out, float), (pts.count,)), (0.0,) * pts.dim)
    return require_finite(out, "evaluate_jet1")


def evaluate_partials_jet2(field, x):
    """
    Jet2 of every first partial of ``field`` from one nested pass.

    Returns:
        list[Jet2]: Entry k holds d_k f with its gradient and Hessian
    """
    pts = as_points(x)
    batch, n = (pts.count,), pts.dim
    out = field(seed_nested(pts.coordinates))
    gradient = out.gradient if isinstance(out, Jet1) else (0.0,) * n
    partials = [as_jet2(g, batch, n) for g in gradient]
    for p in partials:
        require_finite(p, "evaluate_partials_jet2")
    return partials
